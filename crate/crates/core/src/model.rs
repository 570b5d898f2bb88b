//! Latent variable model: parameters, cut points, data containers, the
//! block-patterned covariance and data simulation.
//!
//! Latent coordinates of one subject are laid out item-major within time:
//! coordinate `(j, t)` (0-based) sits at position `t * J + j`. The same layout
//! is used for covariance matrices and for the per-subject slices of
//! [`LikertDataset`] and [`LatentDataset`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on `sigma_j^2 + tau_j^2 <= 1`.
pub const DISK_TOLERANCE: f64 = 1e-12;

/// Per-item loadings on the latent trait (`sigma`) and the transient error
/// (`tau`). The measurement-error loading is implied:
/// `gamma_j^2 = 1 - sigma_j^2 - tau_j^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    sigma: Vec<f64>,
    tau: Vec<f64>,
}

impl ModelParams {
    pub fn new(sigma: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if sigma.len() != tau.len() {
            return Err(Error::InvalidParams(format!(
                "sigma has {} entries but tau has {}",
                sigma.len(),
                tau.len()
            )));
        }
        if sigma.len() < 2 {
            return Err(Error::InvalidParams("at least two items are required".into()));
        }
        for (j, (s, t)) in sigma.iter().zip(&tau).enumerate() {
            if !s.is_finite() || !t.is_finite() {
                return Err(Error::InvalidParams(format!("item {} has a non-finite loading", j + 1)));
            }
            if s * s + t * t > 1.0 + DISK_TOLERANCE {
                return Err(Error::InvalidParams(format!(
                    "item {}: sigma^2 + tau^2 = {} exceeds 1",
                    j + 1,
                    s * s + t * t
                )));
            }
        }
        Ok(Self { sigma, tau })
    }

    /// Builds from a packed `[sigma_1..sigma_J, tau_1..tau_J]` vector that is
    /// already known to satisfy the disk constraints.
    pub(crate) fn from_packed(x: &[f64]) -> Self {
        let items = x.len() / 2;
        Self {
            sigma: x[..items].to_vec(),
            tau: x[items..].to_vec(),
        }
    }

    pub(crate) fn packed(&self) -> Vec<f64> {
        self.sigma.iter().chain(&self.tau).copied().collect()
    }

    pub fn items(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn gamma_sq(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(&self.tau)
            .map(|(s, t)| (1.0 - s * s - t * t).max(0.0))
            .collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.gamma_sq().into_iter().map(f64::sqrt).collect()
    }

    /// Fixes the two unidentified global signs: `sum(sigma) >= 0` and
    /// `sum(tau) >= 0`, with an exactly zero sum resolved by making the first
    /// nonzero entry nonnegative.
    pub fn canonicalize(&self) -> Self {
        Self {
            sigma: canonical_sign(&self.sigma),
            tau: canonical_sign(&self.tau),
        }
    }

    pub fn is_canonical(&self) -> bool {
        canonical_sign(&self.sigma) == self.sigma && canonical_sign(&self.tau) == self.tau
    }

    /// Covariance (equivalently correlation) matrix of one subject's `J*T`
    /// latent vector. Diagonal blocks hold `sigma_j sigma_k + tau_j tau_k`,
    /// off-diagonal blocks `sigma_j sigma_k`, and the diagonal is 1.
    pub fn build_covariance(&self, times: usize) -> DMatrix<f64> {
        let items = self.items();
        let dim = items * times;
        DMatrix::from_fn(dim, dim, |a, b| {
            if a == b {
                return 1.0;
            }
            let (ja, ta) = (a % items, a / items);
            let (jb, tb) = (b % items, b / items);
            let mut v = self.sigma[ja] * self.sigma[jb];
            if ta == tb {
                v += self.tau[ja] * self.tau[jb];
            }
            v
        })
    }

    /// Pulls a gradient with respect to the covariance entries back to the
    /// packed `[sigma, tau]` parameters.
    ///
    /// `entry_grad[(a, b)]` is the partial derivative of a scalar objective
    /// with respect to covariance entry `(a, b)`, treating all entries as
    /// independent. `entry_grad` must be symmetric; the diagonal is ignored.
    pub fn covariance_gradient(&self, entry_grad: &DMatrix<f64>, times: usize) -> Vec<f64> {
        let items = self.items();
        let dim = items * times;
        assert_eq!(entry_grad.nrows(), dim);
        let mut grad = vec![0.0; 2 * items];
        for a in 0..dim {
            let (ja, ta) = (a % items, a / items);
            let mut gs = 0.0;
            let mut gt = 0.0;
            for b in 0..dim {
                if a == b {
                    continue;
                }
                let jb = b % items;
                let w = entry_grad[(a, b)];
                gs += w * self.sigma[jb];
                if b / items == ta {
                    gt += w * self.tau[jb];
                }
            }
            grad[ja] += 2.0 * gs;
            grad[items + ja] += 2.0 * gt;
        }
        grad
    }
}

fn canonical_sign(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter().map(|x| -x).collect()
    } else {
        v.to_vec()
    }
}

/// Per-item strictly increasing cut points. Row `j` has
/// `num_categories - 1` entries; category `k` (1-based) of item `j` covers
/// `[cuts[j][k-2], cuts[j][k-1])` with infinite outer bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPointSet {
    cuts: Vec<Vec<f64>>,
    num_categories: usize,
}

impl CutPointSet {
    pub fn new(cuts: Vec<Vec<f64>>, num_categories: usize) -> Result<Self> {
        if num_categories < 2 {
            return Err(Error::InvalidCuts("at least two categories are required".into()));
        }
        for (j, row) in cuts.iter().enumerate() {
            if row.len() != num_categories - 1 {
                return Err(Error::InvalidCuts(format!(
                    "item {} has {} cut points, expected {}",
                    j + 1,
                    row.len(),
                    num_categories - 1
                )));
            }
            if row.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidCuts(format!("item {} has a non-finite cut point", j + 1)));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidCuts(format!(
                    "cut points of item {} are not strictly increasing",
                    j + 1
                )));
            }
        }
        Ok(Self { cuts, num_categories })
    }

    pub fn items(&self) -> usize {
        self.cuts.len()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn item(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    /// Category (1-based) of latent value `x` for item `j`.
    pub fn categorize(&self, j: usize, x: f64) -> u16 {
        coarsen(x, &self.cuts[j])
    }

    /// Latent interval `[lower, upper)` of category `k` (1-based) for item `j`.
    pub fn interval(&self, j: usize, k: u16) -> (f64, f64) {
        let row = &self.cuts[j];
        let k = k as usize;
        let lower = if k <= 1 { f64::NEG_INFINITY } else { row[k - 2] };
        let upper = if k > row.len() { f64::INFINITY } else { row[k - 1] };
        (lower, upper)
    }
}

/// `1 + #{k : cuts[k] <= x}`.
pub fn coarsen(x: f64, cuts: &[f64]) -> u16 {
    1 + cuts.partition_point(|z| *z <= x) as u16
}

/// Observed ordinal responses, `n` subjects by `J` items by `T` occasions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikertDataset {
    subjects: usize,
    items: usize,
    times: usize,
    num_categories: usize,
    responses: Vec<u16>,
}

impl LikertDataset {
    /// `responses` uses the per-subject layout of the module docs:
    /// index `(i * T + t) * J + j`.
    pub fn new(
        subjects: usize,
        items: usize,
        times: usize,
        num_categories: usize,
        responses: Vec<u16>,
    ) -> Result<Self> {
        if subjects < 1 {
            return Err(Error::InvalidData("at least one subject is required".into()));
        }
        if items < 2 {
            return Err(Error::InvalidData("at least two items are required".into()));
        }
        if times < 2 {
            return Err(Error::InvalidData(
                "at least two occasions are required to separate transient error".into(),
            ));
        }
        if num_categories < 2 {
            return Err(Error::InvalidData("at least two categories are required".into()));
        }
        if responses.len() != subjects * items * times {
            return Err(Error::Dimension(format!(
                "expected {} responses, got {}",
                subjects * items * times,
                responses.len()
            )));
        }
        if let Some(bad) = responses.iter().find(|&&y| y < 1 || y as usize > num_categories) {
            return Err(Error::InvalidData(format!(
                "response {bad} outside 1..={num_categories}"
            )));
        }
        Ok(Self {
            subjects,
            items,
            times,
            num_categories,
            responses,
        })
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn dim(&self) -> usize {
        self.items * self.times
    }

    /// 0-based subject, item and time.
    pub fn response(&self, i: usize, j: usize, t: usize) -> u16 {
        self.responses[(i * self.times + t) * self.items + j]
    }

    pub fn subject(&self, i: usize) -> &[u16] {
        let d = self.dim();
        &self.responses[i * d..(i + 1) * d]
    }

    pub fn responses(&self) -> &[u16] {
        &self.responses
    }
}

/// Latent responses, same shape and layout as [`LikertDataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    subjects: usize,
    items: usize,
    times: usize,
    values: Vec<f64>,
}

impl LatentDataset {
    pub fn new(subjects: usize, items: usize, times: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != subjects * items * times {
            return Err(Error::Dimension(format!(
                "expected {} latent values, got {}",
                subjects * items * times,
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("latent values must be finite".into()));
        }
        Ok(Self {
            subjects,
            items,
            times,
            values,
        })
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn dim(&self) -> usize {
        self.items * self.times
    }

    pub fn value(&self, i: usize, j: usize, t: usize) -> f64 {
        self.values[(i * self.times + t) * self.items + j]
    }

    pub fn subject(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Uncentered scatter matrix `sum_i x_i x_i'`.
    pub fn scatter(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = DMatrix::zeros(d, d);
        for i in 0..self.subjects {
            let x = self.subject(i);
            for a in 0..d {
                for b in 0..=a {
                    s[(a, b)] += x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                s[(b, a)] = s[(a, b)];
            }
        }
        s
    }

    /// Coarsens every latent value with `cuts`.
    pub fn coarsen(&self, cuts: &CutPointSet) -> Result<LikertDataset> {
        if cuts.items() != self.items {
            return Err(Error::Dimension(format!(
                "cut points cover {} items, latent data has {}",
                cuts.items(),
                self.items
            )));
        }
        let responses = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &x)| cuts.categorize(idx % self.items, x))
            .collect();
        LikertDataset::new(self.subjects, self.items, self.times, cuts.num_categories(), responses)
    }
}

/// Draws `n` subjects from the model and coarsens them with `cuts`.
///
/// Per subject the draws are taken in the order `Z_i`, `e_i1..e_iT`, then
/// `eps_ijt` in coordinate order, all from the stream seeded with `seed`.
pub fn simulate(
    params: &ModelParams,
    cuts: &CutPointSet,
    subjects: usize,
    times: usize,
    seed: u64,
) -> Result<(LatentDataset, LikertDataset)> {
    if cuts.items() != params.items() {
        return Err(Error::Dimension(format!(
            "parameters cover {} items, cut points {}",
            params.items(),
            cuts.items()
        )));
    }
    if subjects < 1 {
        return Err(Error::InvalidConfig("at least one subject is required".into()));
    }
    if times < 1 {
        return Err(Error::InvalidConfig("at least one occasion is required".into()));
    }
    let items = params.items();
    let gamma = params.gamma();
    let mut rng = rng::stream(seed);
    let mut values = Vec::with_capacity(subjects * items * times);
    let mut transient = vec![0.0; times];
    for _ in 0..subjects {
        let trait_level: f64 = rng.sample(StandardNormal);
        for e in transient.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for &e in &transient {
            for j in 0..items {
                let eps: f64 = rng.sample(StandardNormal);
                values.push(params.sigma[j] * trait_level + params.tau[j] * e + gamma[j] * eps);
            }
        }
    }
    let latent = LatentDataset::new(subjects, items, times, values)?;
    let responses: Vec<u16> = latent
        .values
        .iter()
        .enumerate()
        .map(|(idx, &x)| cuts.categorize(idx % items, x))
        .collect();
    // LikertDataset::new enforces T >= 2; simulation itself allows T = 1.
    let data = LikertDataset {
        subjects,
        items,
        times,
        num_categories: cuts.num_categories(),
        responses,
    };
    Ok((latent, data))
}

/// Parameter values and cut points of the five-item, two-occasion
/// configuration used throughout the simulation study.
pub fn reference_configuration() -> (ModelParams, CutPointSet) {
    let sigma = [0.8, 0.7, 0.6, 0.5, 0.4].map(f64::sqrt).to_vec();
    let tau = vec![0.1f64.sqrt(), -(0.15f64.sqrt()), -(0.2f64.sqrt()), 0.25f64.sqrt(), 0.3f64.sqrt()];
    let outer = vec![-1.2, -0.5, 0.4, 0.8];
    let inner = vec![-0.85, -0.25, 0.25, 0.85];
    let cuts = vec![outer.clone(), inner.clone(), inner.clone(), inner, outer];
    (
        ModelParams::new(sigma, tau).expect("reference parameters are valid"),
        CutPointSet::new(cuts, 5).expect("reference cut points are valid"),
    )
}
