//! CSV tables and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idset::IdSetGrid;
use crate::montecarlo::{McReport, ReplicationResult, SweepCell};
use crate::search::EstimateResult;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn coord_headers(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|h| format!("{prefix}{h}")).collect()
}

/// Monte Carlo report in the layout of the baseline table: one row per
/// per-coordinate quantity, then the scalar metrics.
pub fn write_report(path: &Path, report: &McReport, config_hash: &str) -> Result<()> {
    let d = report.bias.len();
    let mut w = writer(path)?;
    let mut header = vec!["quantity".to_owned()];
    header.extend(coord_headers("beta_", d));
    header.extend(["value".to_owned(), "config_hash".to_owned()]);
    w.write_record(&header)?;
    let rows: [(&str, &Vec<f64>); 4] = [
        ("bias", &report.bias),
        ("upper_bias", &report.upper_bias),
        ("lower_bias", &report.lower_bias),
        ("mean_u_minus_l", &report.mean_width),
    ];
    for (name, vals) in rows {
        let mut rec = vec![name.to_owned()];
        rec.extend(vals.iter().map(f64::to_string));
        rec.extend([String::new(), config_hash.to_owned()]);
        w.write_record(&rec)?;
    }
    for (name, v) in [("rmse", report.rmse), ("mnd", report.mnd), ("mmad", report.mmad)] {
        let mut rec = vec![name.to_owned()];
        rec.extend(std::iter::repeat_n(String::new(), d));
        rec.extend([v.to_string(), config_hash.to_owned()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replication results; floats are written in shortest round-trip form
/// so metrics recompute exactly from the file.
pub fn write_raw(path: &Path, raw: &[ReplicationResult], config_hash: &str) -> Result<()> {
    let d = raw.first().map_or(0, |r| r.beta_mid.len());
    let mut w = writer(path)?;
    let mut header = vec!["replication".to_owned(), "seed".to_owned()];
    header.extend(coord_headers("lower_", d));
    header.extend(coord_headers("upper_", d));
    header.extend(coord_headers("mid_", d));
    header.extend(["min_value", "evaluations", "density", "config_hash"].map(String::from));
    w.write_record(&header)?;
    for r in raw {
        let mut rec = vec![r.replication.to_string(), r.seed.to_string()];
        for v in [&r.beta_lower, &r.beta_upper, &r.beta_mid] {
            rec.extend(v.iter().map(f64::to_string));
        }
        rec.extend([r.min_value.to_string(), r.evaluations.to_string(), r.density.to_string(), config_hash.to_owned()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Vec<ReplicationResult>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let d = headers.iter().filter(|h| h.starts_with("mid_")).count();
    if headers.len() != 3 * d + 6 {
        return Err(Error::data(format!("{}: unexpected raw results layout", path.display())));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::data(format!("bad number `{s}` in raw results"))) };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::data(format!("bad integer `{s}` in raw results"))) };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |range: std::ops::Range<usize>| range.map(|c| num(&rec[c])).collect::<Result<Vec<_>>>();
        out.push(ReplicationResult {
            replication: int(&rec[0])? as usize,
            seed: int(&rec[1])?,
            beta_lower: f(2..2 + d)?,
            beta_upper: f(2 + d..2 + 2 * d)?,
            beta_mid: f(2 + 2 * d..2 + 3 * d)?,
            min_value: num(&rec[2 + 3 * d])?,
            evaluations: int(&rec[3 + 3 * d])? as usize,
            density: num(&rec[4 + 3 * d])?,
        });
    }
    Ok(out)
}

/// One row per design cell.
pub fn write_sweep(path: &Path, rows: &[(SweepCell, McReport)], config_hash: &str) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "d", "corr", "w", "replications", "rmse", "mnd", "mmad", "config_hash"])?;
    for (cell, rep) in rows {
        w.write_record([
            cell.n.to_string(),
            cell.d.to_string(),
            cell.corr.to_string(),
            (if cell.asymmetric { "asymmetric" } else { "symmetric" }).to_owned(),
            rep.replications.to_string(),
            rep.rmse.to_string(),
            rep.mnd.to_string(),
            rep.mmad.to_string(),
            config_hash.to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Point estimate (box midpoint) and bounds per regressor.
pub fn write_estimate(path: &Path, regressors: &[String], est: &EstimateResult, config_hash: &str) -> Result<()> {
    if regressors.len() != est.beta_mid.len() {
        return Err(Error::Internal("regressor names do not match the estimate".into()));
    }
    let mut w = writer(path)?;
    w.write_record(["regressor", "estimate", "lower", "upper", "config_hash"])?;
    for (h, name) in regressors.iter().enumerate() {
        w.write_record([
            name.clone(),
            est.beta_mid[h].to_string(),
            est.beta_lower[h].to_string(),
            est.beta_upper[h].to_string(),
            config_hash.to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every grid point of one identified-set computation.
pub fn write_idset_grid(path: &Path, grid: &IdSetGrid, config_hash: &str) -> Result<()> {
    let dims = grid.grid.axes.len();
    let mut w = writer(path)?;
    let mut header = coord_headers("theta_", dims);
    header.extend(["value", "member", "config_hash"].map(String::from));
    w.write_record(&header)?;
    for flat in 0..grid.grid.len() {
        let mut rec: Vec<String> = grid.grid.point(flat).iter().map(f64::to_string).collect();
        rec.extend([grid.values[flat].to_string(), (grid.members[flat] as u8).to_string(), config_hash.to_owned()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Bounding rectangle and size of the membership region, one row per support.
pub fn write_idset_summary(path: &Path, grids: &[IdSetGrid], config_hash: &str) -> Result<()> {
    let dims = grids.first().map_or(2, |g| g.grid.axes.len());
    let mut w = writer(path)?;
    let mut header: Vec<String> =
        ["support", "points", "members", "min_value", "tol", "area", "angular_diameter_deg", "beta0_member"]
            .map(String::from)
            .to_vec();
    header.extend(coord_headers("theta_lower_", dims));
    header.extend(coord_headers("theta_upper_", dims));
    header.extend(coord_headers("beta_lower_", dims + 1));
    header.extend(coord_headers("beta_upper_", dims + 1));
    header.push("config_hash".into());
    w.write_record(&header)?;
    for g in grids {
        let s = &g.summary;
        let mut rec = vec![
            s.support.clone(),
            s.points.to_string(),
            s.members.to_string(),
            s.min_value.to_string(),
            s.tol.to_string(),
            s.area.to_string(),
            s.angular_diameter.to_degrees().to_string(),
            (s.beta0_member as u8).to_string(),
        ];
        for v in [&s.theta_lower, &s.theta_upper, &s.beta_lower, &s.beta_upper] {
            rec.extend(v.iter().map(f64::to_string));
        }
        rec.push(config_hash.to_owned());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable record of a run. Everything except `timestamp` is a
/// function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub details: BTreeMap<String, serde_json::Value>,
    pub timestamp: String,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, config: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config_hash: config_hash.to_owned(),
            config,
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
