//! Chain autocorrelation summaries.

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::Trace;
use crate::stem::StemChain;

/// Shortest trace accepted by [`acf_table`].
pub const MIN_ITERATIONS: usize = 10;

/// Sample autocorrelations for lags `0..=max_lag`:
/// `r_k = sum_t (x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2`.
///
/// Lag 0 is always 1. Lags are `None` when the series has zero variance or
/// when the lag is not shorter than the series.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<Option<f64>> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n.max(1) as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    (0..=max_lag)
        .map(|lag| {
            if lag == 0 {
                Some(1.0)
            } else if denom <= 0.0 || lag >= n {
                None
            } else {
                let num: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
                Some(num / denom)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfRow {
    pub parameter: String,
    pub lag: usize,
    pub acf: Option<f64>,
}

pub fn acf_table(trace: &Trace, max_lag: usize) -> Result<Vec<AcfRow>> {
    if trace.names.is_empty() {
        return Err(Error::InvalidData("trace is empty".into()));
    }
    let mut rows = Vec::new();
    for (name, series) in trace.names.iter().zip(&trace.series) {
        if series.len() < MIN_ITERATIONS {
            return Err(Error::InvalidData(format!(
                "parameter {name} has {} iterations; at least {MIN_ITERATIONS} are required",
                series.len()
            )));
        }
        for (lag, acf) in autocorrelation(series, max_lag).into_iter().enumerate() {
            rows.push(AcfRow {
                parameter: name.clone(),
                lag,
                acf,
            });
        }
    }
    Ok(rows)
}

/// Writes `parameter,lag,acf` with `NA` for undefined values.
pub fn write_acf_csv<W: Write>(writer: W, rows: &[AcfRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["parameter", "lag", "acf"])?;
    for row in rows {
        let acf = row.acf.map_or_else(|| "NA".to_string(), |v| format!("{v:?}"));
        w.write_record([row.parameter.clone(), row.lag.to_string(), acf])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean autocorrelation at one lag over the post-burn-in traces of each
/// parameter family. Undefined (constant) series are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagSummary {
    pub sigma: f64,
    pub tau: f64,
    pub cuts: f64,
}

pub fn lag_summary(chain: &StemChain, lag: usize) -> LagSummary {
    let kept = chain.burn_in..chain.iterations();
    let mean_acf = |columns: Vec<Vec<f64>>| -> f64 {
        let values: Vec<f64> = columns
            .iter()
            .filter_map(|s| autocorrelation(s, lag)[lag])
            .collect();
        values.iter().sum::<f64>() / values.len().max(1) as f64
    };
    let column = |trace: &[Vec<f64>], j: usize| -> Vec<f64> { trace[kept.clone()].iter().map(|r| r[j]).collect() };
    let items = chain.final_params.items();
    let cuts_per_item = chain.final_cuts.num_categories() - 1;
    LagSummary {
        sigma: mean_acf((0..items).map(|j| column(&chain.sigma_trace, j)).collect()),
        tau: mean_acf((0..items).map(|j| column(&chain.tau_trace, j)).collect()),
        cuts: mean_acf(
            (0..items)
                .flat_map(|j| (0..cuts_per_item).map(move |k| (j, k)))
                .map(|(j, k)| chain.cut_trace[kept.clone()].iter().map(|r| r[j][k]).collect())
                .collect(),
        ),
    }
}
