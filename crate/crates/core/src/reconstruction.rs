//! Correlation reconstruction: pairwise polychoric correlations assembled
//! into a `JT x JT` matrix, then fitted to the block-patterned model
//! covariance by Frobenius minimum distance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cutpoints::CutPointEstimate;
use crate::error::{Coordinate, Error, Result};
use crate::model::{LikertDataset, ModelParams};
use crate::optim::{spg_minimize, SpgOptions};
use crate::polychoric::{fit_pair, PairTable};

pub const MAX_ITER: usize = 10_000;
pub const GRADIENT_TOL: f64 = 1e-10;

/// Matrix of pairwise polychoric estimates, layout as in [`crate::model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedCorrelation {
    matrix: DMatrix<f64>,
    items: usize,
    times: usize,
}

impl ReconstructedCorrelation {
    /// Wraps an existing matrix; it must be square of size `items * times`,
    /// symmetric, with unit diagonal and entries in `[-1, 1]`.
    pub fn from_matrix(matrix: DMatrix<f64>, items: usize, times: usize) -> Result<Self> {
        let dim = items * times;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "expected a {dim}x{dim} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for a in 0..dim {
            if matrix[(a, a)] != 1.0 {
                return Err(Error::InvalidData("diagonal must be 1".into()));
            }
            for b in 0..a {
                let v = matrix[(a, b)];
                if v != matrix[(b, a)] || !(v.abs() <= 1.0) {
                    return Err(Error::InvalidData(format!(
                        "entry ({a}, {b}) is asymmetric or outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(Self { matrix, items, times })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn times(&self) -> usize {
        self.times
    }

    /// Within-occasion block for 0-based occasion `t`.
    pub fn within(&self, t: usize) -> DMatrix<f64> {
        self.block(t, t)
    }

    /// Cross-occasion block for 0-based occasions `s != t`.
    pub fn across(&self, s: usize, t: usize) -> DMatrix<f64> {
        self.block(s, t)
    }

    fn block(&self, s: usize, t: usize) -> DMatrix<f64> {
        let j = self.items;
        self.matrix.view((s * j, t * j), (j, j)).into_owned()
    }
}

/// Fits every pair of latent coordinates with the pooled plug-in cuts.
pub fn reconstruct(data: &LikertDataset, cuts: &CutPointEstimate) -> Result<ReconstructedCorrelation> {
    let (items, times) = (data.items(), data.times());
    let pooled = cuts.pooled();
    if pooled.items() != items || pooled.num_categories() != data.num_categories() {
        return Err(Error::Dimension(
            "cut point estimate does not match the dataset".into(),
        ));
    }
    let dim = items * times;
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|a| (a + 1..dim).map(move |b| (a, b))).collect();
    let coord = |a: usize| Coordinate {
        item: a % items + 1,
        time: a / items + 1,
    };
    let fitted: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut table = PairTable::new(data.num_categories());
            for i in 0..data.subjects() {
                let y = data.subject(i);
                table.add(y[a], y[b]);
            }
            fit_pair(&table, pooled.item(a % items), pooled.item(b % items))
                .map(|fit| fit.rho)
                .map_err(|e| match e {
                    Error::UndefinedCorrelation => Error::UndefinedPairCorrelation(coord(a), coord(b)),
                    other => other,
                })
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::identity(dim, dim);
    for (&(a, b), &rho) in pairs.iter().zip(&fitted) {
        matrix[(a, b)] = rho;
        matrix[(b, a)] = rho;
    }
    Ok(ReconstructedCorrelation { matrix, items, times })
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Canonicalized estimates.
    pub params: ModelParams,
    /// Frobenius distance `H` at the optimum.
    pub objective: f64,
    pub gamma_sq: Vec<f64>,
    pub converged: bool,
}

/// Squared Frobenius distance `H^2` between `target` and the model
/// covariance of `params`.
pub fn frobenius_objective(target: &DMatrix<f64>, params: &ModelParams, times: usize) -> f64 {
    (target - params.build_covariance(times)).norm_squared()
}

/// `H^2` and its gradient with respect to the packed parameters
/// `[sigma_1, .., sigma_J, tau_1, .., tau_J]`.
pub fn frobenius_value_grad(target: &DMatrix<f64>, params: &ModelParams, times: usize) -> (f64, Vec<f64>) {
    let residual = target - params.build_covariance(times);
    let grad = params.covariance_gradient(&(&residual * -2.0), times);
    (residual.norm_squared(), grad)
}

/// Deterministic starting points: all 0.5; sigma from the cross-occasion
/// diagonals with tau = 0, +0.3 and alternating +/-0.3; all zeros.
fn starting_points(recon: &ReconstructedCorrelation) -> Vec<Vec<f64>> {
    let (items, times) = (recon.items, recon.times);
    let m = &recon.matrix;
    let sigma0: Vec<f64> = (0..items)
        .map(|j| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for s in 0..times {
                for t in 0..times {
                    if s != t {
                        sum += m[(s * items + j, t * items + j)];
                        count += 1;
                    }
                }
            }
            (sum / count.max(1) as f64).clamp(0.0, 1.0).sqrt()
        })
        .collect();
    let with_tau = |tau: &dyn Fn(usize) -> f64| -> Vec<f64> {
        sigma0.iter().copied().chain((0..items).map(tau)).collect()
    };
    vec![
        vec![0.5; 2 * items],
        with_tau(&|_| 0.0),
        with_tau(&|_| 0.3),
        with_tau(&|j| if j % 2 == 0 { 0.3 } else { -0.3 }),
        vec![0.0; 2 * items],
    ]
}

/// Minimizes `H^2 = ||recon - Sigma(sigma, tau)||_F^2` under
/// `sigma_j^2 + tau_j^2 <= 1` from five starting points and keeps the best.
pub fn fit_frobenius(recon: &ReconstructedCorrelation, items: usize, times: usize) -> Result<FitResult> {
    if recon.items != items || recon.times != times {
        return Err(Error::Dimension(format!(
            "reconstructed matrix is for {} items x {} occasions, asked for {items} x {times}",
            recon.items, recon.times
        )));
    }
    let opts = SpgOptions {
        max_iter: MAX_ITER,
        tol: GRADIENT_TOL,
    };
    let target = &recon.matrix;
    let outcomes: Vec<_> = starting_points(recon)
        .into_par_iter()
        .map(|x0| {
            spg_minimize(
                |x| Some(frobenius_value_grad(target, &ModelParams::from_packed(x), times)),
                &x0,
                opts,
            )
        })
        .collect();
    let converged = outcomes.iter().any(|o| o.converged);
    let best = outcomes
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("at least one start");
    if !converged {
        log::warn!("Frobenius fit did not converge within {MAX_ITER} iterations from any start");
    }
    let params = ModelParams::from_packed(&best.x).canonicalize();
    Ok(FitResult {
        gamma_sq: params.gamma_sq(),
        objective: best.value.max(0.0).sqrt(),
        params,
        converged,
    })
}

/// Method-of-moments cuts, reconstruction and Frobenius fit in one call.
pub fn estimate(data: &LikertDataset) -> Result<(FitResult, CutPointEstimate)> {
    let cuts = crate::cutpoints::estimate_cuts(data)?;
    let recon = reconstruct(data, &cuts)?;
    let fit = fit_frobenius(&recon, data.items(), data.times())?;
    Ok((fit, cuts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_configuration;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_residual_recovery_reference() {
        let (p, _) = reference_configuration();
        let recon = ReconstructedCorrelation::from_matrix(p.build_covariance(2), 5, 2).unwrap();
        let fit = fit_frobenius(&recon, 5, 2).unwrap();
        assert!(fit.converged);
        assert!(fit.objective <= 1e-6, "H = {}", fit.objective);
        let truth = p.canonicalize();
        for (a, b) in fit.params.packed().iter().zip(truth.packed()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn objective_ignores_tau_sign() {
        let (p, _) = reference_configuration();
        let target = DMatrix::from_fn(10, 10, |a, b| if a == b { 1.0 } else { 0.3 });
        let neg = ModelParams::new(p.sigma().to_vec(), p.tau().iter().map(|t| -t).collect()).unwrap();
        assert_eq!(frobenius_objective(&target, &p, 2), frobenius_objective(&target, &neg, 2));
    }

    #[test]
    fn descent_is_monotone_from_every_start() {
        let (p, cuts) = reference_configuration();
        let (_, data) = crate::model::simulate(&p, &cuts, 150, 2, 3).unwrap();
        let recon = reconstruct(&data, &crate::cutpoints::estimate_cuts(&data).unwrap()).unwrap();
        let opts = SpgOptions {
            max_iter: MAX_ITER,
            tol: GRADIENT_TOL,
        };
        for x0 in starting_points(&recon) {
            let out = spg_minimize(
                |x| Some(frobenius_value_grad(&recon.matrix, &ModelParams::from_packed(x), 2)),
                &x0,
                opts,
            );
            assert!(out.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn blocks_views() {
        let (p, _) = reference_configuration();
        let recon = ReconstructedCorrelation::from_matrix(p.build_covariance(3), 5, 3).unwrap();
        assert_eq!(recon.within(1)[(0, 0)], 1.0);
        assert_abs_diff_eq!(recon.across(0, 2)[(0, 0)], 0.8, epsilon = 1e-15);
        assert_eq!(recon.across(0, 2), recon.across(2, 0).transpose());
    }

    #[test]
    fn rejects_malformed_matrix() {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 1)] = 0.5;
        assert!(ReconstructedCorrelation::from_matrix(m, 2, 2).is_err());
        assert!(ReconstructedCorrelation::from_matrix(DMatrix::identity(4, 4), 2, 3).is_err());
    }
}
