//! Run configuration documents (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criterion::SmoothingKind;
use crate::dgp::{DgpConfig, SupportKind};
use crate::error::{Error, Result};
use crate::idset::MembershipTolerance;
use crate::montecarlo::{McConfig, SweepCell};
use crate::search::{short_hash, SearchConfig};

use super::ingest::DataSpec;

pub const SCHEMA_VERSION: u32 = 1;

fn default_smoothing() -> SmoothingKind {
    SmoothingKind::ScaledNormalCdf
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub simulate: Option<SimulateSection>,
    pub estimate: Option<EstimateSection>,
    pub idset: Option<IdSetSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub replications: usize,
    pub pairs: usize,
    pub base_seed: u64,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingKind,
    #[serde(default)]
    pub search: SearchConfig,
    pub dgp: DgpConfig,
    /// When non-empty, one Monte Carlo study per cell replaces the single run.
    #[serde(default)]
    pub sweep: Vec<SweepCell>,
}

impl SimulateSection {
    pub fn mc_config(&self) -> McConfig {
        McConfig {
            replications: self.replications,
            dgp: self.dgp.clone(),
            pairs: self.pairs,
            search: self.search.clone(),
            base_seed: self.base_seed,
            smoothing: self.smoothing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub data: DataSpec,
    /// Sampled `(i, j)` pairs; all ordered pairs when absent.
    pub pairs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingKind,
    #[serde(default)]
    pub search: SearchConfig,
}

fn default_supports() -> Vec<SupportKind> {
    SupportKind::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdSetSection {
    #[serde(default = "default_supports")]
    pub supports: Vec<SupportKind>,
    pub n: usize,
    pub pairs: usize,
    pub resolution_deg: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: MembershipTolerance,
    /// Design template; the support is replaced per condition. Defaults to
    /// the identified-set design.
    pub dgp: Option<DgpConfig>,
}

impl IdSetSection {
    pub fn design(&self, support: SupportKind) -> DgpConfig {
        match &self.dgp {
            Some(t) => DgpConfig { support, n: self.n, seed: self.seed, ..t.clone() },
            None => DgpConfig::identified_set_design(support, self.n, self.seed),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads a configuration file; relative data paths are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(est) = cfg.estimate.as_mut() {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            est.data.resolve_paths(&base);
        }
        Ok(cfg)
    }

    /// Replaces every seed in the document.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = self.simulate.as_mut() {
            s.base_seed = seed;
        }
        if let Some(e) = self.estimate.as_mut() {
            e.seed = seed;
        }
        if let Some(i) = self.idset.as_mut() {
            i.seed = seed;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Hash of the resolved configuration.
    pub fn hash(&self) -> String {
        short_hash(serde_json::to_string(self).expect("run config serializes").as_bytes())
    }
}

pub(crate) fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}
