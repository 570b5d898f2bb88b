//! Monte Carlo RMSE study: simulate replicates from a known truth, estimate
//! with the selected methods, and summarize root mean squared errors.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reference_configuration, simulate, CutPointSet, ModelParams};
use crate::rng::{derive_seed, replicate_seed, SIMULATION, STEM};
use crate::stem::{run_stem, StemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cr,
    Stem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StemSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub gibbs_sweeps: usize,
}

impl Default for StemSettings {
    fn default() -> Self {
        Self {
            iterations: 300,
            burn_in: 30,
            gibbs_sweeps: 10,
        }
    }
}

fn default_replicates() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Cr, Method::Stem]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub times: usize,
    #[serde(alias = "n")]
    pub subjects: usize,
    pub num_categories: usize,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub cuts: Vec<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub stem: StemSettings,
    #[serde(default)]
    pub seed: u64,
}

impl StudyConfig {
    /// Five items, two occasions, five categories.
    pub fn reference(subjects: usize, replicates: usize, methods: Vec<Method>, seed: u64) -> Self {
        let (params, cuts) = reference_configuration();
        Self {
            times: 2,
            subjects,
            num_categories: cuts.num_categories(),
            sigma: params.sigma().to_vec(),
            tau: params.tau().to_vec(),
            cuts: cuts.rows().to_vec(),
            replicates,
            methods,
            stem: StemSettings::default(),
            seed,
        }
    }

    pub fn truth(&self) -> Result<(ModelParams, CutPointSet)> {
        let params = ModelParams::new(self.sigma.clone(), self.tau.clone())?;
        let cuts = CutPointSet::new(self.cuts.clone(), self.num_categories)?;
        if cuts.items() != params.items() {
            return Err(Error::Dimension(format!(
                "{} items in sigma/tau but {} rows of cut points",
                params.items(),
                cuts.items()
            )));
        }
        Ok((params, cuts))
    }

    pub fn validate(&self) -> Result<()> {
        self.truth()?;
        if self.times < 2 {
            return Err(Error::InvalidConfig("at least two occasions are required".into()));
        }
        if self.subjects < 1 || self.replicates < 1 {
            return Err(Error::InvalidConfig("subjects and replicates must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no estimation method selected".into()));
        }
        if self.methods.contains(&Method::Stem) {
            self.stem_config(0).validate()?;
        }
        Ok(())
    }

    fn stem_config(&self, seed: u64) -> StemConfig {
        let mut c = StemConfig::new(self.stem.iterations, seed);
        c.burn_in = self.stem.burn_in;
        c.gibbs_sweeps = self.stem.gibbs_sweeps;
        c
    }
}

/// Estimates from one replicate. `mm_cuts` and `cr` are always computed
/// since they also start the StEM chain.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub mm_cuts: Option<CutPointSet>,
    pub cr: Option<ModelParams>,
    pub stem: Option<(ModelParams, CutPointSet)>,
    pub cut_repairs: usize,
    pub failure: Option<String>,
}

impl ReplicateOutcome {
    fn failed(index: usize, err: Error) -> Self {
        Self {
            index,
            mm_cuts: None,
            cr: None,
            stem: None,
            cut_repairs: 0,
            failure: Some(err.to_string()),
        }
    }
}

/// Simulates replicate `index` and runs the configured estimators.
pub fn run_replicate(config: &StudyConfig, index: usize) -> ReplicateOutcome {
    match try_replicate(config, index) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("replicate {}: {e}", index + 1);
            ReplicateOutcome::failed(index, e)
        }
    }
}

fn try_replicate(config: &StudyConfig, index: usize) -> Result<ReplicateOutcome> {
    let (truth, cuts) = config.truth()?;
    let seed = replicate_seed(config.seed, index as u64);
    let (_, data) = simulate(&truth, &cuts, config.subjects, config.times, derive_seed(seed, &[SIMULATION]))?;
    let (fit, mm) = crate::reconstruction::estimate(&data)?;
    let cut_repairs = mm.repairs().len();
    let mm_cuts = mm.into_pooled();
    let stem = if config.methods.contains(&Method::Stem) {
        let mut sc = config.stem_config(derive_seed(seed, &[STEM]));
        sc.init = Some((fit.params.clone(), mm_cuts.clone()));
        let chain = run_stem(&data, &sc)?;
        Some((chain.final_params, chain.final_cuts))
    } else {
        None
    };
    Ok(ReplicateOutcome {
        index,
        mm_cuts: Some(mm_cuts),
        cr: config.methods.contains(&Method::Cr).then_some(fit.params),
        stem,
        cut_repairs,
        failure: None,
    })
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub outcomes: Vec<ReplicateOutcome>,
    pub report: RmseReport,
}

/// Runs all replicates in parallel; outcomes stay in replicate order.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let start = Instant::now();
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|m| run_replicate(config, m))
        .collect();
    let report = rmse_report(config, &outcomes, start.elapsed().as_secs_f64())?;
    Ok(StudyResult { outcomes, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    /// `cr`, `stem` or `mm`.
    pub method: String,
    /// `sigma_j`, `tau_j` or `z_j_k`, 1-based.
    pub parameter: String,
    pub rmse: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub rows: Vec<RmseRow>,
    pub replicates: usize,
    pub failures: usize,
    pub cut_repairs: usize,
    pub wall_seconds: f64,
    items: usize,
    cuts_per_item: usize,
}

fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Root mean squared errors over the successful replicates. Truth and
/// estimates are both canonicalized first.
pub fn rmse_report(config: &StudyConfig, outcomes: &[ReplicateOutcome], wall_seconds: f64) -> Result<RmseReport> {
    let (truth, true_cuts) = config.truth()?;
    let truth = truth.canonicalize();
    let items = truth.items();
    let cuts_per_item = true_cuts.num_categories() - 1;
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let mut rows = Vec::new();

    let mut param_rows = |method: &str, estimates: Vec<&ModelParams>| {
        if estimates.is_empty() {
            return;
        }
        let canon: Vec<ModelParams> = estimates.iter().map(|p| p.canonicalize()).collect();
        for (name, pick) in [("sigma", true), ("tau", false)] {
            for j in 0..items {
                let value = |p: &ModelParams| if pick { p.sigma()[j] } else { p.tau()[j] };
                let errors: Vec<f64> = canon.iter().map(|p| value(p) - value(&truth)).collect();
                rows.push(RmseRow {
                    method: method.into(),
                    parameter: format!("{name}_{}", j + 1),
                    rmse: rmse(&errors),
                    replicates: errors.len(),
                });
            }
        }
    };
    param_rows("cr", ok.iter().filter_map(|o| o.cr.as_ref()).collect());
    param_rows("stem", ok.iter().filter_map(|o| o.stem.as_ref().map(|s| &s.0)).collect());

    let mut cut_rows = |method: &str, estimates: Vec<&CutPointSet>| {
        if estimates.is_empty() {
            return;
        }
        for j in 0..items {
            for k in 0..cuts_per_item {
                let errors: Vec<f64> = estimates
                    .iter()
                    .map(|c| c.item(j)[k] - true_cuts.item(j)[k])
                    .collect();
                rows.push(RmseRow {
                    method: method.into(),
                    parameter: format!("z_{}_{}", j + 1, k + 1),
                    rmse: rmse(&errors),
                    replicates: errors.len(),
                });
            }
        }
    };
    cut_rows("mm", ok.iter().filter_map(|o| o.mm_cuts.as_ref()).collect());
    cut_rows("stem", ok.iter().filter_map(|o| o.stem.as_ref().map(|s| &s.1)).collect());

    Ok(RmseReport {
        rows,
        replicates: ok.len(),
        failures: outcomes.len() - ok.len(),
        cut_repairs: ok.iter().map(|o| o.cut_repairs).sum(),
        wall_seconds,
        items,
        cuts_per_item,
    })
}

impl RmseReport {
    pub fn get(&self, method: &str, parameter: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.parameter == parameter)
            .map(|r| r.rmse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,parameter,rmse,replicates\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:?},{}", r.method, r.parameter, r.rmse, r.replicates);
        }
        out
    }

    /// Two tables: structural parameters (CR vs StEM) and cut points
    /// (MM vs StEM). Missing methods print as `-`.
    pub fn to_table(&self) -> String {
        let cell = |m: &str, p: &str| self.get(m, p).map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8}", "parameter", "CR", "StEM");
        for name in ["sigma", "tau"] {
            for j in 1..=self.items {
                let p = format!("{name}_{j}");
                let _ = writeln!(out, "{:<10} {:>8} {:>8}", p, cell("cr", &p), cell("stem", &p));
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>8} {:>8}", "cut", "MM", "StEM");
        for j in 1..=self.items {
            for k in 1..=self.cuts_per_item {
                let p = format!("z_{j}_{k}");
                let _ = writeln!(out, "{:<10} {:>8} {:>8}", p, cell("mm", &p), cell("stem", &p));
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "replicates: {} ok, {} failed; tie repairs: {}; wall time: {:.1} s",
            self.replicates, self.failures, self.cut_repairs, self.wall_seconds
        );
        out
    }
}
