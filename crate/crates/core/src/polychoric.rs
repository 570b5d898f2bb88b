//! Polychoric correlation of two ordinal variables by marginal plug-in
//! maximum likelihood: cut points are fixed at their method-of-moments
//! estimates and only the latent correlation is fitted.

use crate::error::{Error, Result};
use crate::optim::brent_maximize;
use crate::stats::bivariate_norm_cdf_unchecked;

/// Admissible correlation range is `[-RHO_BOUND, RHO_BOUND]`.
pub const RHO_BOUND: f64 = 1.0 - 1e-6;
/// Floor applied to cell probabilities inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-300;
pub const RHO_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 200;

/// Contingency table of two ordinal variables with the same number of
/// categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTable {
    num_categories: usize,
    counts: Vec<u64>,
    total: u64,
}

impl PairTable {
    pub fn new(num_categories: usize) -> Self {
        Self {
            num_categories,
            counts: vec![0; num_categories * num_categories],
            total: 0,
        }
    }

    /// Builds from a row-major `K x K` count matrix.
    pub fn from_counts(num_categories: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_categories * num_categories {
            return Err(Error::Dimension(format!(
                "{} counts for a {num_categories}x{num_categories} table",
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidData("contingency table is empty".into()));
        }
        Ok(Self {
            num_categories,
            counts,
            total,
        })
    }

    /// Adds one observation with 1-based categories.
    pub fn add(&mut self, y1: u16, y2: u16) {
        let k = self.num_categories;
        self.counts[(y1 as usize - 1) * k + (y2 as usize - 1)] += 1;
        self.total += 1;
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    /// Count of the 1-based cell `(y1, y2)`.
    pub fn count(&self, y1: usize, y2: usize) -> u64 {
        self.counts[(y1 - 1) * self.num_categories + (y2 - 1)]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn transpose(&self) -> Self {
        let k = self.num_categories;
        let mut counts = vec![0; k * k];
        for a in 0..k {
            for b in 0..k {
                counts[b * k + a] = self.counts[a * k + b];
            }
        }
        Self {
            num_categories: k,
            counts,
            total: self.total,
        }
    }

    fn is_degenerate(&self) -> bool {
        let k = self.num_categories;
        let rows = (0..k)
            .filter(|&a| (0..k).any(|b| self.counts[a * k + b] > 0))
            .count();
        let cols = (0..k)
            .filter(|&b| (0..k).any(|a| self.counts[a * k + b] > 0))
            .count();
        rows < 2 || cols < 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolychoricFit {
    pub rho: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn check_cuts(table: &PairTable, cuts: &[f64]) -> Result<()> {
    if cuts.len() + 1 != table.num_categories {
        return Err(Error::Dimension(format!(
            "{} cut points for {} categories",
            cuts.len(),
            table.num_categories
        )));
    }
    if cuts.iter().any(|z| z.is_nan()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCuts("cut points are not strictly increasing".into()));
    }
    Ok(())
}

fn extended(cuts: &[f64]) -> Vec<f64> {
    std::iter::once(f64::NEG_INFINITY)
        .chain(cuts.iter().copied())
        .chain(std::iter::once(f64::INFINITY))
        .collect()
}

/// Log-likelihood over the already-validated, infinity-padded cut vectors.
fn log_likelihood(table: &PairTable, ext1: &[f64], ext2: &[f64], rho: f64) -> f64 {
    let k = table.num_categories;
    // grid[a][b] = Phi2(ext1[a], ext2[b]; rho)
    let mut grid = vec![0.0; (k + 1) * (k + 1)];
    for a in 0..=k {
        for b in 0..=k {
            grid[a * (k + 1) + b] = bivariate_norm_cdf_unchecked(ext1[a], ext2[b], rho);
        }
    }
    let at = |a: usize, b: usize| grid[a * (k + 1) + b];
    let mut ll = 0.0;
    for y1 in 1..=k {
        for y2 in 1..=k {
            let c = table.count(y1, y2);
            if c == 0 {
                continue;
            }
            let p = at(y1, y2) - at(y1, y2 - 1) - at(y1 - 1, y2) + at(y1 - 1, y2 - 1);
            ll += c as f64 * p.max(PROB_FLOOR).ln();
        }
    }
    ll
}

/// `sum_{y1,y2} n_{y1 y2} log p_{y1 y2}(rho)` with cell probabilities from
/// the four-term bivariate CDF difference.
pub fn pair_log_likelihood(table: &PairTable, cuts1: &[f64], cuts2: &[f64], rho: f64) -> Result<f64> {
    check_cuts(table, cuts1)?;
    check_cuts(table, cuts2)?;
    if !(rho.abs() <= RHO_BOUND) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    Ok(log_likelihood(table, &extended(cuts1), &extended(cuts2), rho))
}

/// Maximizes [`pair_log_likelihood`] over `rho`.
///
/// A coarse scan over `-0.95, -0.90, ..., 0.95` seeds a bracket around the
/// best grid point, which Brent's method refines to [`RHO_TOL`].
pub fn fit_pair(table: &PairTable, cuts1: &[f64], cuts2: &[f64]) -> Result<PolychoricFit> {
    check_cuts(table, cuts1)?;
    check_cuts(table, cuts2)?;
    if table.total == 0 || table.is_degenerate() {
        return Err(Error::UndefinedCorrelation);
    }
    let (ext1, ext2) = (extended(cuts1), extended(cuts2));
    let ll = |rho: f64| log_likelihood(table, &ext1, &ext2, rho);

    let grid: Vec<f64> = (-19..=19).map(|k| k as f64 * 0.05).collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &r)| (i, ll(r)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = if best == 0 { -RHO_BOUND } else { grid[best - 1] };
    let hi = if best + 1 == grid.len() { RHO_BOUND } else { grid[best + 1] };

    let found = brent_maximize(ll, lo, hi, RHO_TOL, MAX_ITER);
    Ok(PolychoricFit {
        rho: found.x,
        log_likelihood: found.value,
        converged: found.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::norm_cdf;
    use approx::assert_abs_diff_eq;

    #[test]
    fn independence_factorizes_cells() {
        let cuts1 = [-0.5, 0.7];
        let cuts2 = [-1.0, 0.2];
        let mut table = PairTable::new(3);
        for a in 1..=3u16 {
            for b in 1..=3u16 {
                table.add(a, b);
            }
        }
        let band = |c: &[f64], y: usize| {
            let e = extended(c);
            norm_cdf(e[y]) - norm_cdf(e[y - 1])
        };
        let mut expected = 0.0;
        for a in 1..=3 {
            for b in 1..=3 {
                expected += (band(&cuts1, a) * band(&cuts2, b)).ln();
            }
        }
        let got = pair_log_likelihood(&table, &cuts1, &cuts2, 0.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn quadrant_cell_probability() {
        let table = PairTable::from_counts(2, vec![1, 0, 0, 0]).unwrap();
        let ll = pair_log_likelihood(&table, &[0.0], &[0.0], 0.5).unwrap();
        assert_abs_diff_eq!(ll.exp(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_cell_likelihood_tracks_cell_probability() {
        // all mass in the lower-left cell: p_11 = Phi2(0, 0; rho) increases in rho
        let table = PairTable::from_counts(2, vec![5, 0, 0, 0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in -9..=9 {
            let v = pair_log_likelihood(&table, &[0.0], &[0.0], k as f64 / 10.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn concordant_table_hits_upper_bound() {
        let counts: Vec<u64> = (0..25).map(|i| if i % 6 == 0 { 40 } else { 0 }).collect();
        let table = PairTable::from_counts(5, counts).unwrap();
        let cuts = [-0.84, -0.25, 0.25, 0.84];
        let fit = fit_pair(&table, &cuts, &cuts).unwrap();
        assert!(fit.rho >= 0.99, "rho = {}", fit.rho);
    }

    #[test]
    fn constant_variable_is_undefined() {
        let table = PairTable::from_counts(3, vec![3, 4, 5, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!(matches!(
            fit_pair(&table, &[-0.5, 0.5], &[-0.5, 0.5]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    #[test]
    fn rejects_non_monotone_cuts() {
        let table = PairTable::from_counts(3, vec![1; 9]).unwrap();
        assert!(pair_log_likelihood(&table, &[0.5, -0.5], &[-0.5, 0.5], 0.0).is_err());
        assert!(pair_log_likelihood(&table, &[-0.5, 0.5], &[-0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn transpose_and_reflection() {
        let counts = vec![12, 5, 2, 1, 7, 14, 6, 2, 1, 4, 9, 3, 0, 2, 5, 11];
        let table = PairTable::from_counts(4, counts.clone()).unwrap();
        let c1 = [-0.9, 0.0, 0.8];
        let c2 = [-0.6, 0.1, 1.1];
        let base = fit_pair(&table, &c1, &c2).unwrap().rho;
        let swapped = fit_pair(&table.transpose(), &c2, &c1).unwrap().rho;
        assert_abs_diff_eq!(base, swapped, epsilon = 1e-6);

        let rev = |c: &[f64]| c.iter().rev().map(|z| -z).collect::<Vec<_>>();
        let k = 4;
        let both: Vec<u64> = (0..16).map(|idx| counts[(k - 1 - idx / k) * k + (k - 1 - idx % k)]).collect();
        let one: Vec<u64> = (0..16).map(|idx| counts[(k - 1 - idx / k) * k + idx % k]).collect();
        let r_both = fit_pair(&PairTable::from_counts(4, both).unwrap(), &rev(&c1), &rev(&c2)).unwrap().rho;
        let r_one = fit_pair(&PairTable::from_counts(4, one).unwrap(), &rev(&c1), &c2).unwrap().rho;
        assert_abs_diff_eq!(r_both, base, epsilon = 1e-6);
        assert_abs_diff_eq!(r_one, -base, epsilon = 1e-6);
    }
}
