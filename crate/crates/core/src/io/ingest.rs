//! Node and dyad tables for observed networks.
//!
//! The node table has one row per node: an id column and named columns.
//! Links come either from a dyad table (one row per ordered or unordered
//! pair, with a link column and optional pair attributes) or from an edge
//! list holding only the linked pairs. Pairwise regressors are built from
//! both tables by a recipe.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkData, PairwiseIndex};

use super::config::resolve;

/// How the link column maps to `D_ij`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRule {
    /// `0`/`1` entries; both orders of a pair must agree.
    #[default]
    Binary,
    /// Directed mentions (`none`, `unilateral`, `bilateral`, or `0`/`1`);
    /// a pair is linked when either side mentions the other.
    EitherMentioned,
}

impl LinkRule {
    fn parse(self, raw: &str) -> Result<u8> {
        let v = raw.trim().to_ascii_lowercase();
        let parsed = match (self, v.as_str()) {
            (_, "0") | (_, "0.0") => Some(0),
            (_, "1") | (_, "1.0") => Some(1),
            (LinkRule::EitherMentioned, "none" | "not mentioned") => Some(0),
            (
                LinkRule::EitherMentioned,
                "unilateral" | "bilateral" | "unilaterally mentioned" | "bilaterally mentioned",
            ) => Some(1),
            _ => None,
        };
        parsed.ok_or_else(|| Error::data(format!("unrecognized link value `{raw}` for rule {self:?}")))
    }
}

/// One pairwise regressor `W_ij,h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constructor", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regressor {
    /// `|ln v_i - ln v_j|` of a node column.
    AbsLogDiff { column: String, name: Option<String> },
    /// `ln v_ij` of a dyad column.
    LogPairValue { column: String, name: Option<String> },
    /// `v_ij` of a dyad column.
    PairValue { column: String, name: Option<String> },
}

impl Regressor {
    pub fn abs_log_diff(column: &str) -> Self {
        Regressor::AbsLogDiff { column: column.into(), name: None }
    }

    pub fn log_pair_value(column: &str) -> Self {
        Regressor::LogPairValue { column: column.into(), name: None }
    }

    pub fn pair_value(column: &str) -> Self {
        Regressor::PairValue { column: column.into(), name: None }
    }

    pub fn column(&self) -> &str {
        match self {
            Regressor::AbsLogDiff { column, .. }
            | Regressor::LogPairValue { column, .. }
            | Regressor::PairValue { column, .. } => column,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Regressor::AbsLogDiff { name: Some(n), .. }
            | Regressor::LogPairValue { name: Some(n), .. }
            | Regressor::PairValue { name: Some(n), .. } => n.clone(),
            Regressor::AbsLogDiff { column, .. } => format!("abs_log_diff({column})"),
            Regressor::LogPairValue { column, .. } => format!("log_pair_value({column})"),
            Regressor::PairValue { column, .. } => format!("pair_value({column})"),
        }
    }

    fn is_node_level(&self) -> bool {
        matches!(self, Regressor::AbsLogDiff { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstStageSpec {
    /// Experimental: add each node's average of every pair-only regressor
    /// to the first-stage covariates.
    #[serde(default)]
    pub include_pair_averages: bool,
}

fn default_id() -> String {
    "id".into()
}

fn default_i() -> String {
    "i".into()
}

fn default_j() -> String {
    "j".into()
}

fn default_link() -> String {
    "link".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub nodes: PathBuf,
    pub dyads: Option<PathBuf>,
    /// Linked pairs only; takes precedence over the dyad link column.
    pub edges: Option<PathBuf>,
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_i")]
    pub source_column: String,
    #[serde(default = "default_j")]
    pub target_column: String,
    #[serde(default = "default_link")]
    pub link_column: String,
    #[serde(default)]
    pub link_rule: LinkRule,
    pub recipe: Vec<Regressor>,
    #[serde(default)]
    pub first_stage: FirstStageSpec,
}

impl DataSpec {
    pub fn new(nodes: impl Into<PathBuf>, recipe: Vec<Regressor>) -> Self {
        DataSpec {
            nodes: nodes.into(),
            dyads: None,
            edges: None,
            id_column: default_id(),
            source_column: default_i(),
            target_column: default_j(),
            link_column: default_link(),
            link_rule: LinkRule::Binary,
            recipe,
            first_stage: FirstStageSpec::default(),
        }
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.nodes);
        if let Some(p) = self.dyads.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = self.edges.as_mut() {
            resolve(base, p);
        }
    }
}

/// An ingested network ready for estimation.
#[derive(Clone, Debug)]
pub struct DyadDataset {
    /// Ids of the retained nodes, in node-table order.
    pub ids: Vec<String>,
    pub regressors: Vec<String>,
    pub first_stage: Vec<String>,
    /// Links and first-stage covariates.
    pub network: NetworkData,
    /// `W_ij` built by the recipe.
    pub index: PairwiseIndex,
    pub dropped_nodes: usize,
    pub dropped_dyads: usize,
}

fn is_missing(v: &str) -> bool {
    matches!(v.trim(), "" | "NA" | "na" | "NaN" | "nan" | ".")
}

fn parse_num(v: &str, what: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::data(format!("non-numeric value `{v}` in {what}")))
}

fn positive_log(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v.ln())
    } else {
        Err(Error::data(format!("{what} must be positive to take logs, got {v}")))
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers()?.iter().map(str::to_owned).collect();
        let rows = rdr.records().collect::<std::result::Result<_, _>>()?;
        Ok(Table { headers, rows })
    }

    fn col(&self, name: &str, path: &Path) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{} has no column `{name}`", path.display())))
    }
}

/// Reads the node table and the dyad table or edge list, drops incomplete
/// rows and builds links and regressors.
pub fn ingest(spec: &DataSpec) -> Result<DyadDataset> {
    if spec.recipe.is_empty() {
        return Err(Error::config("the regressor recipe is empty"));
    }
    let pair_cols: Vec<&str> = spec.recipe.iter().filter(|r| !r.is_node_level()).map(Regressor::column).collect();
    if spec.dyads.is_none() && (spec.edges.is_none() || !pair_cols.is_empty()) {
        return Err(Error::config("a dyad table is required for pair regressors and when no edge list is given"));
    }

    // nodes
    let nodes = Table::read(&spec.nodes)?;
    let id_col = nodes.col(&spec.id_column, &spec.nodes)?;
    let mut node_cols: Vec<&str> = Vec::new();
    for r in spec.recipe.iter().filter(|r| r.is_node_level()) {
        if !node_cols.contains(&r.column()) {
            node_cols.push(r.column());
        }
    }
    let node_idx: Vec<usize> = node_cols.iter().map(|c| nodes.col(c, &spec.nodes)).collect::<Result<_>>()?;
    let mut ids = Vec::new();
    let mut node_logs: Vec<Vec<f64>> = Vec::new();
    let mut dropped_ids = HashSet::new();
    let mut seen = HashSet::new();
    for row in &nodes.rows {
        let id = row.get(id_col).unwrap_or("").to_owned();
        if !is_missing(&id) && !seen.insert(id.clone()) {
            return Err(Error::data(format!("duplicate node id `{id}`")));
        }
        if is_missing(&id) || node_idx.iter().any(|&c| is_missing(row.get(c).unwrap_or(""))) {
            if !is_missing(&id) {
                dropped_ids.insert(id);
            }
            continue;
        }
        let vals = node_idx
            .iter()
            .zip(&node_cols)
            .map(|(&c, name)| positive_log(parse_num(&row[c], name)?, name))
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        node_logs.push(vals);
    }
    let dropped_nodes = nodes.rows.len() - ids.len();
    let n = ids.len();
    if n < 4 {
        return Err(Error::data(format!("only {n} complete nodes remain")));
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let lookup = |id: &str| -> Result<Option<usize>> {
        if let Some(&k) = pos.get(id) {
            Ok(Some(k))
        } else if dropped_ids.contains(id) {
            Ok(None)
        } else {
            Err(Error::data(format!("dyad refers to unknown node `{id}`")))
        }
    };

    let mut adjacency = vec![0u8; n * n];
    let mut link_seen = vec![false; n * n];
    let mut pair_vals: Vec<HashMap<(usize, usize), f64>> = vec![HashMap::new(); pair_cols.len()];
    let mut dropped_dyads = 0;

    if let Some(path) = &spec.dyads {
        let dyads = Table::read(path)?;
        let (ci, cj) = (dyads.col(&spec.source_column, path)?, dyads.col(&spec.target_column, path)?);
        let link_col = if spec.edges.is_none() { Some(dyads.col(&spec.link_column, path)?) } else { None };
        let val_cols: Vec<usize> = pair_cols.iter().map(|c| dyads.col(c, path)).collect::<Result<_>>()?;
        for row in &dyads.rows {
            let (Some(a), Some(b)) = (lookup(&row[ci])?, lookup(&row[cj])?) else {
                dropped_dyads += 1;
                continue;
            };
            if a == b {
                return Err(Error::data(format!("self-pair for node `{}`", ids[a])));
            }
            if link_col.iter().chain(&val_cols).any(|&c| is_missing(row.get(c).unwrap_or(""))) {
                dropped_dyads += 1;
                continue;
            }
            if let Some(c) = link_col {
                let link = spec.link_rule.parse(&row[c])?;
                set_link(&mut adjacency, &mut link_seen, n, a, b, link, spec.link_rule, &ids)?;
            }
            for (h, &c) in val_cols.iter().enumerate() {
                pair_vals[h].insert((a, b), parse_num(&row[c], pair_cols[h])?);
            }
        }
    }
    if let Some(path) = &spec.edges {
        let edges = Table::read(path)?;
        let (ci, cj) = (edges.col(&spec.source_column, path)?, edges.col(&spec.target_column, path)?);
        for row in &edges.rows {
            let (Some(a), Some(b)) = (lookup(&row[ci])?, lookup(&row[cj])?) else {
                dropped_dyads += 1;
                continue;
            };
            if a == b {
                return Err(Error::data(format!("self-loop for node `{}`", ids[a])));
            }
            adjacency[a * n + b] = 1;
            adjacency[b * n + a] = 1;
        }
    }

    // regressors
    let d = spec.recipe.len();
    let pair_value = |h: usize, a: usize, b: usize| -> Result<f64> {
        pair_vals[h]
            .get(&(a, b))
            .or_else(|| pair_vals[h].get(&(b, a)))
            .copied()
            .ok_or_else(|| Error::data(format!("no `{}` value for pair ({}, {})", pair_cols[h], ids[a], ids[b])))
    };
    let mut w = vec![0.0; n * n * d];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mut ph = 0;
            for (h, r) in spec.recipe.iter().enumerate() {
                let v = match r {
                    Regressor::AbsLogDiff { column, .. } => {
                        let c = node_cols.iter().position(|x| x == column).expect("node column indexed");
                        (node_logs[a][c] - node_logs[b][c]).abs()
                    }
                    Regressor::LogPairValue { column, .. } => {
                        let v = positive_log(pair_value(ph, a, b)?, column)?;
                        ph += 1;
                        v
                    }
                    Regressor::PairValue { .. } => {
                        let v = pair_value(ph, a, b)?;
                        ph += 1;
                        v
                    }
                };
                w[(a * n + b) * d + h] = v;
            }
        }
    }
    let index = PairwiseIndex::from_fn(n, d, |a, b, out| out.copy_from_slice(&w[(a * n + b) * d..(a * n + b + 1) * d]));

    // first stage
    let mut first_stage: Vec<String> = node_cols.iter().map(|c| format!("ln {c}")).collect();
    let mut covs: Vec<Vec<f64>> = node_logs.clone();
    if spec.first_stage.include_pair_averages {
        for (h, r) in spec.recipe.iter().enumerate().filter(|(_, r)| !r.is_node_level()) {
            first_stage.push(format!("mean {}", r.name()));
            for (a, row) in covs.iter_mut().enumerate() {
                let mean = (0..n).filter(|&b| b != a).map(|b| index.get(a, b)[h]).sum::<f64>() / (n - 1) as f64;
                row.push(mean);
            }
        }
    }
    if first_stage.is_empty() {
        return Err(Error::config(
            "no node-level covariates for the first stage; add a node regressor or enable include_pair_averages",
        ));
    }
    let network = NetworkData::new(n, first_stage.len(), adjacency, covs.concat())?;
    if dropped_nodes > 0 || dropped_dyads > 0 {
        log::info!("dropped {dropped_nodes} incomplete nodes and {dropped_dyads} dyad rows");
    }
    Ok(DyadDataset {
        ids,
        regressors: spec.recipe.iter().map(Regressor::name).collect(),
        first_stage,
        network,
        index,
        dropped_nodes,
        dropped_dyads,
    })
}

#[allow(clippy::too_many_arguments)]
fn set_link(
    adjacency: &mut [u8],
    seen: &mut [bool],
    n: usize,
    a: usize,
    b: usize,
    link: u8,
    rule: LinkRule,
    ids: &[String],
) -> Result<()> {
    let other = b * n + a;
    let (ab, ba) = (a * n + b, other);
    match rule {
        LinkRule::Binary => {
            if seen[ab] && adjacency[ab] != link || seen[ba] && adjacency[ba] != link {
                return Err(Error::data(format!("asymmetric link entries for pair ({}, {})", ids[a], ids[b])));
            }
            adjacency[ab] = link;
            adjacency[ba] = link;
        }
        LinkRule::EitherMentioned => {
            adjacency[ab] |= link;
            adjacency[ba] |= link;
        }
    }
    seen[ab] = true;
    seen[ba] = true;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn spec(dir: &Path, nodes: &str, dyads: &str) -> DataSpec {
        let mut s = DataSpec::new(
            write(dir, "nodes.csv", nodes),
            vec![Regressor::abs_log_diff("wealth"), Regressor::log_pair_value("distance"), Regressor::pair_value("tie")],
        );
        s.dyads = Some(write(dir, "dyads.csv", dyads));
        s
    }

    const NODES: &str = "id,wealth,name\na,100,x\nb,200,y\nc,50,z\nd,400,w\ne,,v\n";

    fn dyads(rows: &[(&str, &str, &str, &str, &str)]) -> String {
        let mut s = String::from("i,j,link,distance,tie\n");
        for r in rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.0, r.1, r.2, r.3, r.4));
        }
        s
    }

    fn full_pairs(link: impl Fn(usize, usize) -> &'static str) -> String {
        let ids = ["a", "b", "c", "d", "e"];
        let mut rows = Vec::new();
        for x in 0..5 {
            for y in x + 1..5 {
                rows.push((ids[x], ids[y], link(x, y), "10", "1"));
            }
        }
        dyads(&rows)
    }

    #[test]
    fn builds_regressors_and_drops_missing_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = ingest(&spec(dir.path(), NODES, &full_pairs(|x, y| if (x + y) % 2 == 0 { "1" } else { "0" }))).unwrap();
        assert_eq!(ds.ids, ["a", "b", "c", "d"]);
        assert_eq!(ds.dropped_nodes, 1);
        assert_eq!(ds.dropped_dyads, 4);
        let w = ds.index.get(0, 1);
        assert!((w[0] - 2f64.ln()).abs() < 1e-12);
        assert!((w[1] - 10f64.ln()).abs() < 1e-12);
        assert_eq!(w[2], 1.0);
        assert_eq!(ds.network.link(0, 2), 1);
        assert_eq!(ds.network.link(0, 1), 0);
        assert_eq!(ds.network.d_x(), 1);
        assert!((ds.network.x(3)[0] - 400f64.ln()).abs() < 1e-12);
        assert!(ds.index.is_symmetric());
    }

    #[test]
    fn asymmetric_binary_links_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = full_pairs(|_, _| "0");
        body.push_str("b,a,1,10,1\n");
        let err = ingest(&spec(dir.path(), NODES, &body)).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn either_mentioned_rule() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = full_pairs(|_, _| "none");
        body.push_str("b,a,unilateral,10,1\nc,d,bilateral,10,1\n");
        let mut s = spec(dir.path(), NODES, &body);
        s.link_rule = LinkRule::EitherMentioned;
        let ds = ingest(&s).unwrap();
        assert_eq!(ds.network.link(0, 1), 1);
        assert_eq!(ds.network.link(1, 0), 1);
        assert_eq!(ds.network.link(2, 3), 1);
        assert_eq!(ds.network.link(0, 3), 0);
        s.link_rule = LinkRule::Binary;
        assert!(ingest(&s).is_err());
    }

    #[test]
    fn edge_list_links() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), NODES, &full_pairs(|_, _| "0"));
        s.edges = Some(write(dir.path(), "edges.csv", "i,j\na,b\nd,c\ne,a\n"));
        let ds = ingest(&s).unwrap();
        assert_eq!(ds.network.link(1, 0), 1);
        assert_eq!(ds.network.link(2, 3), 1);
        assert_eq!(ds.network.adjacency().iter().map(|&v| v as usize).sum::<usize>(), 4);
    }

    #[test]
    fn data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = full_pairs(|_, _| "0");
        body.push_str("a,zz,1,10,1\n");
        assert!(matches!(ingest(&spec(dir.path(), NODES, &body)), Err(Error::Data(_))));
        let body = full_pairs(|_, _| "0").replace("a,b,0,10,1", "a,b,0,-3,1");
        assert!(matches!(ingest(&spec(dir.path(), NODES, &body)), Err(Error::Data(_))));
        let body = full_pairs(|_, _| "0").replace("a,b,0,10,1\n", "");
        assert!(matches!(ingest(&spec(dir.path(), NODES, &body)), Err(Error::Data(_))));
        let nodes = NODES.replace("b,200", "a,200");
        assert!(matches!(ingest(&spec(dir.path(), &nodes, &full_pairs(|_, _| "0"))), Err(Error::Data(_))));
        let nodes = NODES.replace("b,200", "b,lots");
        assert!(matches!(ingest(&spec(dir.path(), &nodes, &full_pairs(|_, _| "0"))), Err(Error::Data(_))));
    }

    #[test]
    fn missing_dyad_fields_drop_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = full_pairs(|_, _| "0");
        body.push_str("a,b,,10,1\n");
        let ds = ingest(&spec(dir.path(), NODES, &body)).unwrap();
        assert_eq!(ds.dropped_dyads, 5);
    }

    #[test]
    fn pair_averages_and_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), NODES, &full_pairs(|_, _| "0"));
        s.recipe = vec![Regressor::pair_value("tie")];
        assert!(matches!(ingest(&s), Err(Error::Config(_))));
        s.first_stage.include_pair_averages = true;
        let ds = ingest(&s).unwrap();
        assert_eq!(ds.first_stage, ["mean pair_value(tie)"]);
        assert_eq!(ds.network.x(0), [1.0]);
        s.dyads = None;
        assert!(matches!(ingest(&s), Err(Error::Config(_))));
    }
}
