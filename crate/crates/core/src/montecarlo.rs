//! Monte Carlo replications of the two-step estimator and their summary metrics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{ComparisonRule, RhoTable, SmoothingKind, TetradCriterion, TetradPlan};
use crate::dgp::{form_network, DgpConfig, Population};
use crate::error::{Error, Result};
use crate::model::{PairwiseIndex, PairwiseTransform};
use crate::search::{minimize, short_hash, SearchConfig};
use crate::sieve::{build_basis, fit_all};

fn default_smoothing() -> SmoothingKind {
    SmoothingKind::ScaledNormalCdf
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replications: usize,
    /// Template; its seed is replaced per replication.
    pub dgp: DgpConfig,
    /// Sampled `(i, j)` pairs per replication.
    pub pairs: usize,
    #[serde(default)]
    pub search: SearchConfig,
    pub base_seed: u64,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingKind,
}

impl McConfig {
    /// Baseline design: `N = 100`, `d = 3`, `corr = 0.2`, `B = 100`, `M = 1000`.
    pub fn baseline(base_seed: u64) -> Self {
        McConfig {
            replications: 100,
            dgp: DgpConfig::monte_carlo_design(100, 3, 0.2, 0),
            pairs: 1000,
            search: SearchConfig::default(),
            base_seed,
            smoothing: SmoothingKind::ScaledNormalCdf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.pairs == 0 {
            return Err(Error::config("pairs must be at least 1"));
        }
        self.dgp.validate()?;
        self.search.validate()
    }

    pub fn replication_seed(&self, b: usize) -> u64 {
        self.base_seed ^ b as u64
    }

    pub fn hash(&self) -> String {
        short_hash(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Raw output of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
    pub beta_mid: Vec<f64>,
    pub min_value: f64,
    pub evaluations: usize,
    pub density: f64,
}

/// Runs replication `b`: simulate, fit the first stage, minimize the criterion.
pub fn run_replication(cfg: &McConfig, b: usize) -> Result<ReplicationResult> {
    cfg.validate()?;
    let seed = cfg.replication_seed(b);
    let dgp = DgpConfig { seed, ..cfg.dgp.clone() };
    let pop = Population::draw(&dgp)?;
    let net = form_network(&pop, &dgp)?;
    let basis = Arc::new(build_basis(net.covariates(), net.d_x())?);
    let fits = fit_all(&net, &basis)?;
    let rho = RhoTable::from_estimates(&fits, &net);
    let index = PairwiseIndex::from_transform(net.covariates(), net.d_x(), &dgp.w)?;
    let plan = TetradPlan::sample(net.n(), cfg.pairs, dgp.plan_seed())?;
    let rule = ComparisonRule::for_transform(&dgp.w)?;
    let crit = TetradCriterion::build(&index, &rho, &plan, cfg.smoothing, rule)?;
    let est = minimize(|beta: &[f64]| crit.evaluate(beta), dgp.d, &cfg.search)?;
    Ok(ReplicationResult {
        replication: b,
        seed,
        beta_lower: est.beta_lower,
        beta_upper: est.beta_upper,
        beta_mid: est.beta_mid,
        min_value: est.min_value,
        evaluations: est.evaluations,
        density: net.density(),
    })
}

/// Runs all replications in parallel; results are ordered by replication.
pub fn run_all(cfg: &McConfig) -> Result<Vec<ReplicationResult>> {
    cfg.validate()?;
    (0..cfg.replications).into_par_iter().map(|b| run_replication(cfg, b)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    /// `(1/B) Σ_b (β̂ᵐ_bh - β0h)`
    pub bias: Vec<f64>,
    pub upper_bias: Vec<f64>,
    pub lower_bias: Vec<f64>,
    /// `(1/B) Σ_b (β̂ᵘ_bh - β̂ˡ_bh)`
    pub mean_width: Vec<f64>,
    pub rmse: f64,
    /// Mean norm deviation `(1/B) Σ_b ‖β̂ᵐ_b - β0‖`.
    pub mnd: f64,
    /// Maximum mean absolute deviation `max_h |bias_h|`.
    pub mmad: f64,
    pub raw: Vec<ReplicationResult>,
}

/// Table metrics from raw replication results.
pub fn compute_metrics(raw: &[ReplicationResult], beta0: &[f64]) -> Result<McReport> {
    if raw.is_empty() {
        return Err(Error::input("metrics need at least one replication"));
    }
    let d = beta0.len();
    if raw.iter().any(|r| r.beta_mid.len() != d || r.beta_lower.len() != d || r.beta_upper.len() != d) {
        return Err(Error::input("replication results do not match beta0's dimension"));
    }
    let nb = raw.len() as f64;
    let mean_dev = |f: &dyn Fn(&ReplicationResult, usize) -> f64| -> Vec<f64> {
        (0..d).map(|h| raw.iter().map(|r| f(r, h)).sum::<f64>() / nb).collect()
    };
    let bias = mean_dev(&|r, h| r.beta_mid[h] - beta0[h]);
    let upper_bias = mean_dev(&|r, h| r.beta_upper[h] - beta0[h]);
    let lower_bias = mean_dev(&|r, h| r.beta_lower[h] - beta0[h]);
    let mean_width = mean_dev(&|r, h| r.beta_upper[h] - r.beta_lower[h]);
    let sq_norms: Vec<f64> =
        raw.iter().map(|r| r.beta_mid.iter().zip(beta0).map(|(m, b)| (m - b).powi(2)).sum()).collect();
    let rmse = (sq_norms.iter().sum::<f64>() / nb).sqrt();
    let mnd = sq_norms.iter().map(|s| s.sqrt()).sum::<f64>() / nb;
    let mmad = bias.iter().fold(0.0, |acc: f64, b| acc.max(b.abs()));
    Ok(McReport { replications: raw.len(), bias, upper_bias, lower_bias, mean_width, rmse, mnd, mmad, raw: raw.to_vec() })
}

impl McReport {
    /// Recomputes the metrics from the stored raw results.
    pub fn recompute(&self, beta0: &[f64]) -> Result<McReport> {
        compute_metrics(&self.raw, beta0)
    }
}

/// Runs the replications and summarizes them.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    let raw = run_all(cfg)?;
    compute_metrics(&raw, cfg.dgp.beta0.as_slice())
}

/// One cell of a design sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub n: usize,
    pub d: usize,
    pub corr: f64,
    #[serde(default)]
    pub asymmetric: bool,
}

impl SweepCell {
    /// The Monte Carlo design at this cell, keeping the template's replication
    /// count, pair count, search settings, smoothing and base seed.
    pub fn apply(&self, template: &McConfig) -> McConfig {
        let mut dgp = DgpConfig::monte_carlo_design(self.n, self.d, self.corr, 0);
        if self.asymmetric {
            dgp.w = PairwiseTransform::asymmetric_last_coord(self.d);
        }
        McConfig { dgp, ..template.clone() }
    }

    pub fn label(&self) -> String {
        format!("N={} d={} corr={} w={}", self.n, self.d, self.corr, if self.asymmetric { "asym" } else { "sym" })
    }
}

/// Full factorial sweep over sample sizes and dimensions.
pub fn grid_cells(ns: &[usize], ds: &[usize], corr: f64) -> Vec<SweepCell> {
    ds.iter().flat_map(|&d| ns.iter().map(move |&n| SweepCell { n, d, corr, asymmetric: false })).collect()
}

pub fn run_sweep(template: &McConfig, cells: &[SweepCell]) -> Result<Vec<(SweepCell, McReport)>> {
    cells
        .iter()
        .map(|cell| {
            log::info!("sweep cell {}", cell.label());
            Ok((cell.clone(), run_monte_carlo(&cell.apply(template))?))
        })
        .collect()
}
