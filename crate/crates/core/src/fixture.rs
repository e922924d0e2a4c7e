//! A synthetic village network in the household/dyad schema read by
//! [`crate::io::ingest`].
//!
//! Households sit at random locations; wealth is log-normal and a few
//! households have it missing. Links are drawn from the mutual-consent
//! model over `(|ln wealth_i - ln wealth_j|, ln distance_ij, tie_ij)` and
//! reported as directed mentions, so they are read with the
//! either-mentioned rule.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dgp::{draw_links, splitmix64};
use crate::error::Result;
use crate::model::{Direction, PairwiseIndex};

#[derive(Clone, Debug)]
pub struct VillageDesign {
    pub households: usize,
    /// Households whose wealth is reported missing.
    pub missing_wealth: usize,
    /// Index direction over (wealth gap, log distance, tie).
    pub beta0: Direction,
    pub index_scale: f64,
    pub seed: u64,
}

impl Default for VillageDesign {
    fn default() -> Self {
        VillageDesign {
            households: 119,
            missing_wealth: 5,
            beta0: Direction::normalized(vec![-0.2, -0.8, 0.55]).expect("nonzero"),
            index_scale: 0.3,
            seed: 20_260_101,
        }
    }
}

pub struct Village {
    pub households_csv: String,
    pub dyads_csv: String,
    /// Links among all households, including those later dropped.
    pub adjacency: Vec<u8>,
}

pub const HOUSEHOLDS_FILE: &str = "households.csv";
pub const DYADS_FILE: &str = "dyads.csv";
pub const CONFIG_FILE: &str = "estimate.toml";

/// Estimation config for the generated files, relative to their directory.
pub const ESTIMATE_TOML: &str = r#"schema_version = 1

[estimate]
seed = 1

[estimate.data]
nodes = "households.csv"
dyads = "dyads.csv"
id_column = "household"
source_column = "i"
target_column = "j"
link_column = "relation"
link_rule = "either_mentioned"
recipe = [
  { constructor = "abs_log_diff", column = "wealth", name = "wealth_difference" },
  { constructor = "log_pair_value", column = "distance", name = "distance" },
  { constructor = "pair_value", column = "tie", name = "tie" },
]
"#;

pub fn village(design: &VillageDesign) -> Village {
    let n = design.households;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(design.seed));
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..1500.0), rng.gen_range(0.0..1500.0))).collect();
    let ln_wealth: Vec<f64> = (0..n).map(|_| 11.5 + 0.9 * rng.sample::<f64, _>(StandardNormal)).collect();
    let wealth: Vec<f64> = ln_wealth.iter().map(|l| (l.exp() / 100.0).round() * 100.0).collect();
    let heterogeneity: Vec<f64> =
        (0..n).map(|i| 1.75 + 0.05 * (ln_wealth[i] - 11.5) + rng.gen_range(-0.1..0.1)).collect();
    let mut dist = vec![0.0; n * n];
    let mut tie = vec![0u8; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
            let d = ((dx * dx + dy * dy).sqrt() * 10.0).round().max(100.0) / 10.0;
            let near = (-d / 300.0).exp();
            let t = (0..3).filter(|_| rng.gen::<f64>() < 0.6 * near).count() as u8;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
            tie[i * n + j] = t;
            tie[j * n + i] = t;
        }
    }
    let index = PairwiseIndex::from_fn(n, 3, |i, j, out| {
        out[0] = (ln_wealth[i] - ln_wealth[j]).abs();
        out[1] = dist[i * n + j].ln();
        out[2] = tie[i * n + j] as f64;
    });
    let coef: Vec<f64> = design.beta0.as_slice().iter().map(|b| b * design.index_scale).collect();
    let adjacency = draw_links(&index, &coef, &heterogeneity, splitmix64(design.seed ^ 1), false);

    let missing: Vec<usize> = rand::seq::index::sample(&mut rng, n, design.missing_wealth).into_vec();
    let mut households = String::from("household,wealth\n");
    for i in 0..n {
        let w = if missing.contains(&i) { "NA".to_owned() } else { format!("{:.0}", wealth[i]) };
        writeln!(households, "H{:03},{w}", i + 1).unwrap();
    }

    // Directed mention status per ordered pair; an unlinked pair is `none`
    // both ways, a linked one is bilateral or mentioned by one side only.
    let mut mention = vec!["none"; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if adjacency[i * n + j] == 1 {
                let (a, b) = match rng.gen_range(0..4) {
                    0 => ("unilateral", "none"),
                    1 => ("none", "unilateral"),
                    _ => ("bilateral", "bilateral"),
                };
                mention[i * n + j] = a;
                mention[j * n + i] = b;
            }
        }
    }
    let mut dyads = String::from("i,j,relation,distance,tie\n");
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // a few unlinked rows lose their tie entry; the reverse row keeps it
            let tie_field = if i > j && mention[i * n + j] == "none" && (i * 31 + j) % 997 == 0 {
                String::new()
            } else {
                tie[i * n + j].to_string()
            };
            writeln!(dyads, "H{:03},H{:03},{},{:.1},{tie_field}", i + 1, j + 1, mention[i * n + j], dist[i * n + j])
                .unwrap();
        }
    }
    Village { households_csv: households, dyads_csv: dyads, adjacency }
}

/// Writes the household table, dyad table and estimation config into `dir`.
pub fn write_village(dir: &Path, design: &VillageDesign) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let v = village(design);
    let files = [(HOUSEHOLDS_FILE, v.households_csv), (DYADS_FILE, v.dyads_csv), (CONFIG_FILE, ESTIMATE_TOML.to_owned())];
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_and_density() {
        let v = village(&VillageDesign::default());
        assert_eq!(v.households_csv.lines().count(), 120);
        assert_eq!(v.households_csv.matches(",NA").count(), 5);
        assert_eq!(v.dyads_csv.lines().count(), 1 + 119 * 118);
        let density = v.adjacency.iter().map(|&a| a as f64).sum::<f64>() / (119.0 * 118.0);
        assert!((0.03..0.3).contains(&density), "density {density}");
    }
}
