//! The three pipelines behind the command-line tool.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use crate::criterion::{ComparisonRule, RhoTable, TetradCriterion, TetradPlan};
use crate::error::{Error, Result};
use crate::idset::compute_idset_with;
use crate::montecarlo::{run_all, run_sweep};
use crate::montecarlo::compute_metrics;
use crate::search::{minimize, EstimateResult};
use crate::sieve::{build_basis, fit_all};

use super::config::RunConfig;
use super::ingest::{ingest, DyadDataset};
use super::output::{
    write_estimate, write_idset_grid, write_idset_summary, write_raw, write_report, write_sweep, Manifest,
};

pub const MANIFEST_FILE: &str = "manifest.json";

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn manifest(command: &str, cfg: &RunConfig) -> Result<Manifest> {
    Ok(Manifest::new(command, &cfg.hash(), serde_json::to_value(cfg)?))
}

fn finish(mut m: Manifest, out: &Path, files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    m.outputs = files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
    let path = out.join(MANIFEST_FILE);
    m.write(&path)?;
    let mut all = files.to_vec();
    all.push(path);
    Ok(all)
}

/// Monte Carlo study, or a sweep over design cells when the section lists any.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sec = cfg.simulate.as_ref().ok_or_else(|| Error::config("missing [simulate] section"))?;
    let mc = sec.mc_config();
    mc.validate()?;
    prepare(out)?;
    let hash = cfg.hash();
    let mut m = manifest("simulate", cfg)?;
    m.seeds.insert("base_seed".into(), mc.base_seed);
    let mut files = Vec::new();
    if sec.sweep.is_empty() {
        let raw = run_all(&mc)?;
        let report = compute_metrics(&raw, mc.dgp.beta0.as_slice())?;
        let (rp, rw) = (out.join("report.csv"), out.join("raw.csv"));
        write_report(&rp, &report, &hash)?;
        write_raw(&rw, &raw, &hash)?;
        m.details.insert("dgp".into(), serde_json::to_value(&mc.dgp)?);
        m.details.insert("beta0".into(), json!(mc.dgp.beta0.as_slice()));
        files.extend([rp, rw]);
    } else {
        for cell in &sec.sweep {
            cell.apply(&mc).validate()?;
        }
        let rows = run_sweep(&mc, &sec.sweep)?;
        let sp = out.join("sweep.csv");
        write_sweep(&sp, &rows, &hash)?;
        files.push(sp);
        for (k, (_, rep)) in rows.iter().enumerate() {
            let p = out.join(format!("raw_cell{k}.csv"));
            write_raw(&p, &rep.raw, &hash)?;
            files.push(p);
        }
        m.details.insert("cells".into(), serde_json::to_value(&sec.sweep)?);
    }
    finish(m, out, &files)
}

/// Two-step estimate on an ingested dataset.
pub fn estimate_dataset(data: &DyadDataset, pairs: Option<usize>, seed: u64, cfg: &RunConfig) -> Result<EstimateResult> {
    let sec = cfg.estimate.as_ref().ok_or_else(|| Error::config("missing [estimate] section"))?;
    let net = &data.network;
    if let Some(deg) = net.degeneracy() {
        return Err(Error::data(deg.to_string()));
    }
    let basis = Arc::new(build_basis(net.covariates(), net.d_x())?);
    let fits = fit_all(net, &basis)?;
    let rho = RhoTable::from_estimates(&fits, net);
    let n = net.n();
    let plan = TetradPlan::sample(n, pairs.unwrap_or(n * (n - 1)), seed)?;
    let rule = if data.index.is_symmetric() { ComparisonRule::Symmetric } else { ComparisonRule::Asymmetric };
    let crit = TetradCriterion::build(&data.index, &rho, &plan, sec.smoothing, rule)?;
    let mut est = minimize(|b: &[f64]| crit.evaluate(b), data.index.d(), &sec.search)?;
    est.manifest.seed = Some(seed);
    Ok(est)
}

pub fn estimate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sec = cfg.estimate.as_ref().ok_or_else(|| Error::config("missing [estimate] section"))?;
    sec.search.validate()?;
    let data = ingest(&sec.data)?;
    let est = estimate_dataset(&data, sec.pairs, sec.seed, cfg)?;
    prepare(out)?;
    let hash = cfg.hash();
    let path = out.join("estimate.csv");
    write_estimate(&path, &data.regressors, &est, &hash)?;
    let mut m = manifest("estimate", cfg)?;
    m.seeds.insert("seed".into(), sec.seed);
    m.details.insert("nodes".into(), json!(data.network.n()));
    m.details.insert("density".into(), json!(data.network.density()));
    m.details.insert("dropped_nodes".into(), json!(data.dropped_nodes));
    m.details.insert("dropped_dyads".into(), json!(data.dropped_dyads));
    m.details.insert("first_stage".into(), json!(data.first_stage));
    m.details.insert("min_value".into(), json!(est.min_value));
    m.details.insert("evaluations".into(), json!(est.evaluations));
    m.details.insert("search_config_hash".into(), json!(est.manifest.config_hash));
    finish(m, out, &[path])
}

/// Population identified sets, one grid file per support condition.
pub fn idset(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sec = cfg.idset.as_ref().ok_or_else(|| Error::config("missing [idset] section"))?;
    if !(sec.resolution_deg > 0.0 && sec.resolution_deg.is_finite()) {
        return Err(Error::config("resolution_deg must be positive"));
    }
    if sec.supports.is_empty() {
        return Err(Error::config("no support conditions requested"));
    }
    for &s in &sec.supports {
        sec.design(s).validate()?;
    }
    prepare(out)?;
    let hash = cfg.hash();
    let mut grids = Vec::new();
    let mut files = Vec::new();
    for &s in &sec.supports {
        let g = compute_idset_with(&sec.design(s), sec.n, sec.pairs, sec.resolution_deg, sec.tolerance)?;
        let p = out.join(format!("idset_{}.csv", s.label()));
        write_idset_grid(&p, &g, &hash)?;
        files.push(p);
        grids.push(g);
    }
    let sp = out.join("idset_summary.csv");
    write_idset_summary(&sp, &grids, &hash)?;
    files.push(sp);
    let mut m = manifest("idset", cfg)?;
    m.seeds.insert("seed".into(), sec.seed);
    finish(m, out, &files)
}
