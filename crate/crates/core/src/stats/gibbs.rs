use nalgebra::DMatrix;
use rand::Rng;

use super::truncated::sample_standard_truncated;
use crate::error::{Error, Result};

/// Minimum eigenvalue below which a covariance is treated as singular.
pub const MIN_EIGENVALUE: f64 = 1e-10;

/// Per-coordinate bounds `(lower_d, upper_d)`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TruncationBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box has {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo < hi) {
                return Err(Error::EmptyInterval { lo: *lo, hi: *hi });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Half-open membership `lower <= x < upper`, matching the coarsening rule.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v < hi)
    }
}

/// Single-site Gibbs kernel for a zero-mean multivariate normal.
///
/// Conditional of coordinate `d` given the rest:
/// mean `-sum_{e != d} P_de x_e / P_dd`, variance `1 / P_dd`, with `P` the
/// precision matrix. The factorization is done once per covariance.
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    dim: usize,
    // row-major -P_de / P_dd, zero diagonal
    coef: Vec<f64>,
    cond_sd: Vec<f64>,
}

impl GibbsKernel {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let dim = sigma.nrows();
        if sigma.ncols() != dim {
            return Err(Error::Dimension("covariance must be square".into()));
        }
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if !(min_eig > MIN_EIGENVALUE) {
            return Err(Error::NotPositiveDefinite(min_eig));
        }
        let precision = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(min_eig))?
            .inverse();
        let mut coef = vec![0.0; dim * dim];
        let mut cond_sd = vec![0.0; dim];
        for d in 0..dim {
            let pdd = precision[(d, d)];
            cond_sd[d] = (1.0 / pdd).sqrt();
            for e in 0..dim {
                if e != d {
                    coef[d * dim + e] = -precision[(d, e)] / pdd;
                }
            }
        }
        Ok(Self { dim, coef, cond_sd })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One systematic scan over all coordinates, updating `state` in place.
    /// `state` must lie inside `bounds`.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut [f64], bounds: &TruncationBox, rng: &mut R) {
        for d in 0..self.dim {
            let row = &self.coef[d * self.dim..(d + 1) * self.dim];
            let mean: f64 = row.iter().zip(state.iter()).map(|(c, x)| c * x).sum();
            let sd = self.cond_sd[d];
            let a = (bounds.lower[d] - mean) / sd;
            let b = (bounds.upper[d] - mean) / sd;
            let z = sample_standard_truncated(a, b, rng);
            let x = mean + sd * z;
            // keep the half-open box invariant after rescaling
            state[d] = if x < bounds.lower[d] {
                bounds.lower[d]
            } else if x >= bounds.upper[d] {
                bounds.upper[d].next_down().max(bounds.lower[d])
            } else {
                x
            };
        }
    }
}

/// Runs `sweeps` Gibbs scans from `start` and returns the final state.
pub fn gibbs_truncated_mvn<R: Rng + ?Sized>(
    sigma: &DMatrix<f64>,
    bounds: &TruncationBox,
    start: &[f64],
    sweeps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let kernel = GibbsKernel::new(sigma)?;
    if bounds.dim() != kernel.dim() || start.len() != kernel.dim() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0}, box has {1} and start {2} coordinates",
            kernel.dim(),
            bounds.dim(),
            start.len()
        )));
    }
    if let Some(d) = (0..start.len()).find(|&d| !(bounds.lower[d] <= start[d] && start[d] < bounds.upper[d])) {
        return Err(Error::StartOutsideBox(d));
    }
    if sweeps < 1 {
        return Err(Error::InvalidConfig("at least one Gibbs sweep is required".into()));
    }
    let mut state = start.to_vec();
    for _ in 0..sweeps {
        kernel.sweep(&mut state, bounds, rng);
    }
    Ok(state)
}
