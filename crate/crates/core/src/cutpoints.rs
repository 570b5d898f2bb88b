//! Inverse-normal method-of-moments cut point estimates.
//!
//! For item `j`, cut `k` and occasion `t`:
//! `z_jkt = Phi^-1((#{i : Y_ijt <= k} + 1) / (n + 2))`, pooled over
//! occasions by an unweighted mean. The `+1 / +2` adjustment keeps every
//! estimate finite.

use crate::error::Result;
use crate::model::{CutPointSet, LikertDataset};
use crate::stats::quantile_unchecked;

/// Separation imposed on tied pooled cut points.
pub const TIE_GAP: f64 = 1e-6;

/// A pooled cut point that had to be moved to keep its row strictly
/// increasing (the category below it is empty at every occasion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieRepair {
    /// 1-based item.
    pub item: usize,
    /// 1-based cut index.
    pub cut: usize,
    pub original: f64,
    pub repaired: f64,
}

#[derive(Debug, Clone)]
pub struct CutPointEstimate {
    per_time: Vec<Vec<Vec<f64>>>,
    pooled: CutPointSet,
    repairs: Vec<TieRepair>,
}

impl CutPointEstimate {
    /// `z_jkt` with 0-based `j`, `k`, `t`.
    pub fn per_time(&self, j: usize, k: usize, t: usize) -> f64 {
        self.per_time[j][k][t]
    }

    pub fn pooled(&self) -> &CutPointSet {
        &self.pooled
    }

    pub fn into_pooled(self) -> CutPointSet {
        self.pooled
    }

    pub fn repairs(&self) -> &[TieRepair] {
        &self.repairs
    }
}

pub fn estimate_cuts(data: &LikertDataset) -> Result<CutPointEstimate> {
    let (n, items, times) = (data.subjects(), data.items(), data.times());
    let cuts_per_item = data.num_categories() - 1;
    let denom = (n + 2) as f64;

    // counts[j][t][c] = #{i : Y_ijt = c + 1}
    let mut counts = vec![vec![vec![0usize; data.num_categories()]; times]; items];
    for i in 0..n {
        for t in 0..times {
            for j in 0..items {
                counts[j][t][data.response(i, j, t) as usize - 1] += 1;
            }
        }
    }

    let mut per_time = vec![vec![vec![0.0; times]; cuts_per_item]; items];
    let mut rows = Vec::with_capacity(items);
    let mut repairs = Vec::new();
    for j in 0..items {
        for t in 0..times {
            let mut below = 0usize;
            for k in 0..cuts_per_item {
                below += counts[j][t][k];
                per_time[j][k][t] = quantile_unchecked((below + 1) as f64 / denom);
            }
        }
        let mut row: Vec<f64> = (0..cuts_per_item)
            .map(|k| per_time[j][k].iter().sum::<f64>() / times as f64)
            .collect();
        for k in 1..cuts_per_item {
            if row[k] <= row[k - 1] {
                let repaired = row[k - 1] + TIE_GAP;
                log::warn!(
                    "item {} cut {}: tied pooled estimate {} moved to {} (empty category)",
                    j + 1,
                    k + 1,
                    row[k],
                    repaired
                );
                repairs.push(TieRepair {
                    item: j + 1,
                    cut: k + 1,
                    original: row[k],
                    repaired,
                });
                row[k] = repaired;
            }
        }
        rows.push(row);
    }
    let pooled = CutPointSet::new(rows, data.num_categories())?;
    Ok(CutPointEstimate {
        per_time,
        pooled,
        repairs,
    })
}
