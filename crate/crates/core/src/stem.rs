//! Stochastic EM maximum-likelihood estimation.
//!
//! Each iteration draws one latent vector per subject from `[X | Y]` under
//! the current parameters (Gibbs sampling inside the subject's truncation
//! box, warm-started at the previous draw), maximizes the completed-data
//! log-likelihood in `(sigma, tau)`, and places every cut point at the
//! midpoint of the gap between the latent draws of the two categories it
//! separates. Final estimates average the post-burn-in iterates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CutPointSet, LatentDataset, LikertDataset, ModelParams};
use crate::optim::{spg_minimize, SpgOptions};
use crate::rng;
use crate::stats::{norm_cdf, norm_pdf, GibbsKernel, TruncationBox};

/// Eigenvalue floor used when a model covariance has to be repaired.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;
/// Margin used when moving a previous draw back inside a shifted box.
pub const BOX_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct StemConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub gibbs_sweeps: usize,
    pub seed: u64,
    /// Starting parameters and cuts; correlation reconstruction and
    /// method-of-moments cuts when `None`.
    pub init: Option<(ModelParams, CutPointSet)>,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
}

impl StemConfig {
    /// `iterations` iterations with 10% burn-in and 10 Gibbs sweeps each.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 10,
            gibbs_sweeps: 10,
            seed,
            init: None,
            inner_max_iter: 500,
            inner_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("at least one iteration is required".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.gibbs_sweeps < 1 {
            return Err(Error::InvalidConfig("at least one Gibbs sweep is required".into()));
        }
        if self.inner_max_iter < 1 || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidConfig("inner optimizer settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StemChain {
    /// `sigma_trace[r][j]`, canonicalized per iteration.
    pub sigma_trace: Vec<Vec<f64>>,
    pub tau_trace: Vec<Vec<f64>>,
    /// `cut_trace[r][j][k]`.
    pub cut_trace: Vec<Vec<Vec<f64>>>,
    pub burn_in: usize,
    pub final_params: ModelParams,
    pub final_cuts: CutPointSet,
    pub initial_params: ModelParams,
    pub initial_cuts: CutPointSet,
    /// Completed-data log-likelihood per subject of the last imputation,
    /// evaluated at the final estimates.
    pub mean_loglik: f64,
    /// Warnings raised during the run, in order.
    pub diagnostics: Vec<String>,
}

impl StemChain {
    pub fn iterations(&self) -> usize {
        self.sigma_trace.len()
    }

    /// Long-format trace rows `(iteration, parameter, value)` with 1-based
    /// iterations and parameter names `sigma_j`, `tau_j`, `z_j_k`.
    pub fn trace_rows(&self) -> Vec<(usize, String, f64)> {
        let mut rows = Vec::new();
        for (r, ((s, t), z)) in self
            .sigma_trace
            .iter()
            .zip(&self.tau_trace)
            .zip(&self.cut_trace)
            .enumerate()
        {
            for (j, v) in s.iter().enumerate() {
                rows.push((r + 1, format!("sigma_{}", j + 1), *v));
            }
            for (j, v) in t.iter().enumerate() {
                rows.push((r + 1, format!("tau_{}", j + 1), *v));
            }
            for (j, row) in z.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    rows.push((r + 1, format!("z_{}_{}", j + 1, k + 1), *v));
                }
            }
        }
        rows
    }
}

/// Settings of one imputation step.
#[derive(Debug, Clone, Copy)]
pub struct ImputeOptions {
    pub sweeps: usize,
    /// Seed of the whole StEM run.
    pub seed: u64,
    /// 0-based iteration; together with the subject index it selects the
    /// subject's random stream.
    pub iteration: u64,
}

#[derive(Debug, Clone)]
pub struct Imputation {
    pub latent: LatentDataset,
    /// Set when the model covariance needed an eigenvalue repair.
    pub repaired: bool,
}

fn subject_box(data: &LikertDataset, cuts: &CutPointSet, i: usize) -> (Vec<f64>, Vec<f64>) {
    let items = data.items();
    data.subject(i)
        .iter()
        .enumerate()
        .map(|(a, &y)| cuts.interval(a % items, y))
        .unzip()
}

/// Clips eigenvalues at [`EIGENVALUE_FLOOR`] and rescales to unit diagonal.
pub fn repair_covariance(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(EIGENVALUE_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let scale: Vec<f64> = (0..rebuilt.nrows()).map(|a| rebuilt[(a, a)].sqrt()).collect();
    DMatrix::from_fn(rebuilt.nrows(), rebuilt.ncols(), |a, b| {
        if a == b {
            1.0
        } else {
            0.5 * (rebuilt[(a, b)] + rebuilt[(b, a)]) / (scale[a] * scale[b])
        }
    })
}

fn gibbs_kernel(params: &ModelParams, times: usize) -> Result<(GibbsKernel, bool)> {
    let sigma = params.build_covariance(times);
    match GibbsKernel::new(&sigma) {
        Ok(k) => Ok((k, false)),
        Err(Error::NotPositiveDefinite(min)) => {
            log::warn!("model covariance not positive definite (min eigenvalue {min:e}); flooring eigenvalues");
            Ok((GibbsKernel::new(&repair_covariance(&sigma))?, true))
        }
        Err(e) => Err(e),
    }
}

fn clamp_into(x: f64, lo: f64, hi: f64) -> f64 {
    if lo <= x && x < hi {
        return x;
    }
    if hi - lo <= 2.0 * BOX_MARGIN {
        return 0.5 * (lo + hi);
    }
    if x < lo {
        lo + BOX_MARGIN
    } else {
        hi - BOX_MARGIN
    }
}

/// Draws one latent vector per subject from `[X | Y = y_i]`.
pub fn impute_latent(
    data: &LikertDataset,
    params: &ModelParams,
    cuts: &CutPointSet,
    prev: &LatentDataset,
    opts: ImputeOptions,
) -> Result<Imputation> {
    check_shapes(data, params, cuts)?;
    if prev.subjects() != data.subjects() || prev.dim() != data.dim() {
        return Err(Error::Dimension("previous latent draw does not match the data".into()));
    }
    if opts.sweeps < 1 {
        return Err(Error::InvalidConfig("at least one Gibbs sweep is required".into()));
    }
    let (kernel, repaired) = gibbs_kernel(params, data.times())?;
    let draws: Vec<Vec<f64>> = (0..data.subjects())
        .into_par_iter()
        .map(|i| {
            let (lower, upper) = subject_box(data, cuts, i);
            let mut state: Vec<f64> = prev
                .subject(i)
                .iter()
                .zip(lower.iter().zip(&upper))
                .map(|(&x, (&lo, &hi))| clamp_into(x, lo, hi))
                .collect();
            let bounds = TruncationBox::new(lower, upper)?;
            let mut stream = rng::stream(rng::derive_seed(opts.seed, &[opts.iteration, i as u64]));
            for _ in 0..opts.sweeps {
                kernel.sweep(&mut state, &bounds, &mut stream);
            }
            Ok(state)
        })
        .collect::<Result<_>>()?;
    let latent = LatentDataset::new(data.subjects(), data.items(), data.times(), draws.concat())?;
    Ok(Imputation { latent, repaired })
}

fn check_shapes(data: &LikertDataset, params: &ModelParams, cuts: &CutPointSet) -> Result<()> {
    if params.items() != data.items() || cuts.items() != data.items() {
        return Err(Error::Dimension(format!(
            "data has {} items, parameters {} and cut points {}",
            data.items(),
            params.items(),
            cuts.items()
        )));
    }
    if cuts.num_categories() != data.num_categories() {
        return Err(Error::Dimension(format!(
            "data has {} categories, cut points {}",
            data.num_categories(),
            cuts.num_categories()
        )));
    }
    Ok(())
}

/// Mean of the imputed truncated normal of each coordinate under
/// independent standard normal marginals; a starting point inside every box.
pub fn initial_latent(data: &LikertDataset, cuts: &CutPointSet) -> Result<LatentDataset> {
    let items = data.items();
    let values = data
        .responses()
        .iter()
        .enumerate()
        .map(|(idx, &y)| {
            let (lo, hi) = cuts.interval(idx % items, y);
            let mass = norm_cdf(hi) - norm_cdf(lo);
            let mean = if mass > 1e-12 {
                (norm_pdf(lo) - norm_pdf(hi)) / mass
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
            clamp_into(mean, lo, hi)
        })
        .collect();
    LatentDataset::new(data.subjects(), items, data.times(), values)
}

/// Sufficient statistic of the completed-data likelihood.
#[derive(Debug, Clone)]
struct Scatter {
    mean_outer: DMatrix<f64>,
    subjects: usize,
    times: usize,
}

impl Scatter {
    fn new(latent: &LatentDataset) -> Self {
        Self {
            mean_outer: latent.scatter() / latent.subjects() as f64,
            subjects: latent.subjects(),
            times: latent.times(),
        }
    }

    /// `0.5 * (log|Sigma| + tr(Sigma^-1 S / n))` and its packed gradient;
    /// `None` when `Sigma` is not positive definite.
    fn neg_loglik(&self, params: &ModelParams) -> Option<(f64, Vec<f64>)> {
        let sigma = params.build_covariance(self.times);
        let chol = sigma.cholesky()?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let inv_s = &inv * &self.mean_outer;
        let value = 0.5 * (log_det + inv_s.trace());
        if !value.is_finite() {
            return None;
        }
        let entry_grad = (&inv - &inv_s * &inv) * 0.5;
        Some((value, params.covariance_gradient(&entry_grad, self.times)))
    }
}

/// Completed-data log-likelihood
/// `-(n/2) log|Sigma| - (1/2) sum_i x_i' Sigma^-1 x_i`; `-inf` when the
/// model covariance is singular.
pub fn q1_value(latent: &LatentDataset, params: &ModelParams) -> f64 {
    let s = Scatter::new(latent);
    match s.neg_loglik(params) {
        Some((v, _)) => -(s.subjects as f64) * v,
        None => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone)]
pub struct Q1Outcome {
    /// Canonicalized maximizer.
    pub params: ModelParams,
    /// Completed-data log-likelihood at `params`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximizes the completed-data log-likelihood over `(sigma, tau)` by
/// projected spectral gradient, starting from `warm`.
pub fn maximize_q1(latent: &LatentDataset, warm: &ModelParams, max_iter: usize, tol: f64) -> Result<Q1Outcome> {
    if warm.items() != latent.items() {
        return Err(Error::Dimension(format!(
            "latent data has {} items, parameters {}",
            latent.items(),
            warm.items()
        )));
    }
    let s = Scatter::new(latent);
    let out = spg_minimize(
        |x| s.neg_loglik(&ModelParams::from_packed(x)),
        &warm.packed(),
        SpgOptions { max_iter, tol },
    );
    if !out.converged {
        log::warn!("completed-data maximization stopped after {} iterations", out.iterations);
    }
    Ok(Q1Outcome {
        params: ModelParams::from_packed(&out.x).canonicalize(),
        value: -(s.subjects as f64) * out.value,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Midpoint cut update: cut `k` of item `j` moves to the middle of
/// `[max latent in category k, min latent in category k + 1]`. A cut whose
/// adjacent categories are not both occupied keeps its value from
/// `previous`.
pub fn update_cuts(latent: &LatentDataset, data: &LikertDataset, previous: &CutPointSet) -> Result<CutPointSet> {
    if latent.subjects() != data.subjects() || latent.dim() != data.dim() {
        return Err(Error::Dimension("latent draw does not match the data".into()));
    }
    if previous.items() != data.items() || previous.num_categories() != data.num_categories() {
        return Err(Error::Dimension("previous cut points do not match the data".into()));
    }
    let (items, categories) = (data.items(), data.num_categories());
    let mut max_in = vec![vec![f64::NEG_INFINITY; categories]; items];
    let mut min_in = vec![vec![f64::INFINITY; categories]; items];
    for (idx, (&y, &x)) in data.responses().iter().zip(latent.values()).enumerate() {
        let (j, c) = (idx % items, y as usize - 1);
        max_in[j][c] = max_in[j][c].max(x);
        min_in[j][c] = min_in[j][c].min(x);
    }
    let rows = (0..items)
        .map(|j| {
            let mut row: Vec<f64> = (0..categories - 1)
                .map(|k| {
                    let (below, above) = (max_in[j][k], min_in[j][k + 1]);
                    if below.is_finite() && above.is_finite() {
                        0.5 * (below + above)
                    } else {
                        previous.item(j)[k]
                    }
                })
                .collect();
            for k in 1..row.len() {
                if row[k] <= row[k - 1] {
                    log::warn!("item {} cut {}: midpoint update not increasing; nudged", j + 1, k + 1);
                    row[k] = row[k - 1] + crate::cutpoints::TIE_GAP;
                }
            }
            row
        })
        .collect();
    CutPointSet::new(rows, categories)
}

/// True when every latent value satisfies
/// `z_{j, y-1} <= x < z_{j, y}`, i.e. the cut part of the completed-data
/// log-likelihood is zero rather than `-inf`.
pub fn q2_satisfied(latent: &LatentDataset, data: &LikertDataset, cuts: &CutPointSet) -> bool {
    first_outside(latent, data, cuts).is_none()
}

fn first_outside(latent: &LatentDataset, data: &LikertDataset, cuts: &CutPointSet) -> Option<(usize, usize)> {
    let (items, dim) = (data.items(), data.dim());
    data.responses()
        .iter()
        .zip(latent.values())
        .enumerate()
        .find(|(idx, (&y, &x))| {
            let (lo, hi) = cuts.interval(idx % items, y);
            !(lo <= x && x < hi)
        })
        .map(|(idx, _)| (idx / dim, idx % dim))
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut acc = vec![0.0; rows[0].len()];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / n).collect()
}

/// Runs the full stochastic EM chain.
pub fn run_stem(data: &LikertDataset, config: &StemConfig) -> Result<StemChain> {
    config.validate()?;
    let (initial_params, initial_cuts) = match &config.init {
        Some((p, c)) => (p.clone(), c.clone()),
        None => {
            let (fit, cuts) = crate::reconstruction::estimate(data)?;
            (fit.params, cuts.into_pooled())
        }
    };
    check_shapes(data, &initial_params, &initial_cuts)?;

    let mut params = initial_params.clone();
    let mut cuts = initial_cuts.clone();
    let mut latent = initial_latent(data, &cuts)?;
    let mut diagnostics = Vec::new();
    let mut sigma_trace = Vec::with_capacity(config.iterations);
    let mut tau_trace = Vec::with_capacity(config.iterations);
    let mut cut_trace = Vec::with_capacity(config.iterations);

    for r in 0..config.iterations {
        let imputed = impute_latent(
            data,
            &params,
            &cuts,
            &latent,
            ImputeOptions {
                sweeps: config.gibbs_sweeps,
                seed: config.seed,
                iteration: r as u64,
            },
        )?;
        if imputed.repaired {
            diagnostics.push(format!("iteration {}: model covariance repaired by eigenvalue flooring", r + 1));
        }
        latent = imputed.latent;
        if let Some((subject, coordinate)) = first_outside(&latent, data, &cuts) {
            return Err(Error::LatentOutsideBox { subject, coordinate });
        }

        let q1 = maximize_q1(&latent, &params, config.inner_max_iter, config.inner_tol)?;
        if !q1.converged {
            diagnostics.push(format!(
                "iteration {}: completed-data maximization stopped after {} iterations",
                r + 1,
                q1.iterations
            ));
        }
        params = q1.params;
        cuts = update_cuts(&latent, data, &cuts)?;

        sigma_trace.push(params.sigma().to_vec());
        tau_trace.push(params.tau().to_vec());
        cut_trace.push(cuts.rows().to_vec());
    }

    let kept = config.burn_in..config.iterations;
    let sigma = mean_rows(&sigma_trace[kept.clone()]);
    let tau = mean_rows(&tau_trace[kept.clone()]);
    let cut_rows = (0..data.items())
        .map(|j| {
            let per_iter: Vec<Vec<f64>> = cut_trace[kept.clone()].iter().map(|c| c[j].clone()).collect();
            mean_rows(&per_iter)
        })
        .collect();
    let final_params = ModelParams::new(sigma, tau)?;
    let mean_loglik = q1_value(&latent, &final_params) / data.subjects() as f64;
    Ok(StemChain {
        final_params,
        mean_loglik,
        final_cuts: CutPointSet::new(cut_rows, data.num_categories())?,
        sigma_trace,
        tau_trace,
        cut_trace,
        burn_in: config.burn_in,
        initial_params,
        initial_cuts,
        diagnostics,
    })
}
