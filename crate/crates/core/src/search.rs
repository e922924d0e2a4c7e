//! Nested-rectangle grid search over hyperspherical angles.
//!
//! Each round evaluates the objective on a `G^{d-1}` grid spanning the
//! current angle box, keeps every grid point within a slack of the round's
//! minimum, pads the kept region by a margin of grid cells and shrinks the
//! box to its bounding rectangle. The objective is piecewise constant, so
//! whole plateaus of minimizers are carried along rather than a single point.
//! A round that fails to shrink the box halves the slack for the next round.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{angle_domain, angles_to_vec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Grid points per angle dimension.
    pub grid_points: usize,
    /// Relative retention slack, as a fraction of the round's value range.
    pub slack: f64,
    /// Absolute retention floor added to the slack.
    pub abs_floor: f64,
    /// Grid cells kept around the retained region in each direction.
    pub neighbor_margin: usize,
    pub max_rounds: usize,
    /// Stop once every side of the next box is narrower than this (radians).
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_points: 9, slack: 0.05, abs_floor: 1e-9, neighbor_margin: 1, max_rounds: 8, tol: 1e-3 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 {
            return Err(Error::config("grid_points must be at least 3"));
        }
        if self.max_rounds < 1 {
            return Err(Error::config("max_rounds must be at least 1"));
        }
        if !(self.slack >= 0.0 && self.abs_floor >= 0.0 && self.tol >= 0.0) {
            return Err(Error::config("slack, abs_floor and tol must be non-negative"));
        }
        Ok(())
    }

    /// Short stable hash of the configuration, echoed in manifests.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("search config serializes");
        short_hash(text.as_bytes())
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Axis-aligned box in angle space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AngleBox {
    /// The whole angle space for directions in `R^d`.
    pub fn full(d: usize) -> Self {
        let (lower, upper) = angle_domain(d).into_iter().unzip();
        AngleBox { lower, upper }
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    fn axis(&self, m: usize, g: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[m], self.upper[m]);
        if hi <= lo {
            return vec![lo];
        }
        (0..g).map(|t| if t + 1 == g { hi } else { lo + (hi - lo) * t as f64 / (g - 1) as f64 }).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchManifest {
    pub config_hash: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// Retained angle grid points of the final round.
    pub theta_set: Vec<Vec<f64>>,
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
    pub beta_mid: Vec<f64>,
    pub min_value: f64,
    pub evaluations: usize,
    /// Box searched in each round, starting with the full domain.
    pub boxes: Vec<AngleBox>,
    /// Retained region of the final round padded by the neighbor margin.
    pub final_box: AngleBox,
    pub manifest: SearchManifest,
}

/// Minimizes `objective` over `S^{d-1}`.
pub fn minimize<F>(objective: F, d: usize, cfg: &SearchConfig) -> Result<EstimateResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    minimize_in(objective, AngleBox::full(d), cfg)
}

/// [`minimize`] starting from an arbitrary box.
pub fn minimize_in<F>(objective: F, start: AngleBox, cfg: &SearchConfig) -> Result<EstimateResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dims = start.lower.len();
    if dims == 0 || start.upper.len() != dims {
        return Err(Error::input("angle box must have matching non-empty bounds"));
    }
    let mut current = start;
    let mut slack = cfg.slack;
    let mut boxes = Vec::new();
    let mut evaluations = 0;
    let (theta_set, min_value, final_box) = loop {
        boxes.push(current.clone());
        let axes: Vec<Vec<f64>> = (0..dims).map(|m| current.axis(m, cfg.grid_points)).collect();
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = shape.iter().product();
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let theta = point(&axes, &shape, flat);
                objective(&angles_to_vec(&theta))
            })
            .collect();
        evaluations += total;
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            let theta = point(&axes, &shape, bad);
            return Err(Error::Numeric(format!("objective is {} at angles {theta:?}", values[bad])));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = min + slack * (max - min) + cfg.abs_floor;
        let kept: Vec<usize> = (0..total).filter(|&t| values[t] <= threshold).collect();

        let mut lo_idx = vec![usize::MAX; dims];
        let mut hi_idx = vec![0; dims];
        for &flat in &kept {
            for (m, t) in unflatten(&shape, flat).into_iter().enumerate() {
                lo_idx[m] = lo_idx[m].min(t);
                hi_idx[m] = hi_idx[m].max(t);
            }
        }
        let next = AngleBox {
            lower: (0..dims).map(|m| axes[m][lo_idx[m].saturating_sub(cfg.neighbor_margin)]).collect(),
            upper: (0..dims).map(|m| axes[m][(hi_idx[m] + cfg.neighbor_margin).min(shape[m] - 1)]).collect(),
        };
        // a round that keeps the whole box still carries a wide value range;
        // tighten the slack instead of repeating the same grid
        let stalled = next == current;
        let done = boxes.len() >= cfg.max_rounds || next.max_width() < cfg.tol || (stalled && (slack == 0.0 || max == min));
        if done {
            let set: Vec<Vec<f64>> = kept.iter().map(|&t| point(&axes, &shape, t)).collect();
            break (set, min, next);
        }
        if stalled {
            slack *= 0.5;
        }
        current = next;
    };
    let (beta_lower, beta_upper, beta_mid) = extract_box(&theta_set)?;
    Ok(EstimateResult {
        theta_set,
        beta_lower,
        beta_upper,
        beta_mid,
        min_value,
        evaluations,
        boxes,
        final_box,
        manifest: SearchManifest { config_hash: cfg.hash(), seed: None },
    })
}

fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for m in (0..shape.len()).rev() {
        idx[m] = flat % shape[m];
        flat /= shape[m];
    }
    idx
}

fn point(axes: &[Vec<f64>], shape: &[usize], flat: usize) -> Vec<f64> {
    unflatten(shape, flat).into_iter().enumerate().map(|(m, t)| axes[m][t]).collect()
}

/// Coordinate-wise lower bound, upper bound and midpoint of the directions
/// of a set of angle points.
pub fn extract_box(theta_set: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let first = theta_set.first().ok_or_else(|| Error::Internal("empty minimizing set".into()))?;
    let d = first.len() + 1;
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for theta in theta_set {
        for (h, b) in angles_to_vec(theta).into_iter().enumerate() {
            lower[h] = lower[h].min(b);
            upper[h] = upper[h].max(b);
        }
    }
    let mid = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
    Ok((lower, upper, mid))
}

impl EstimateResult {
    /// Recomputes the bounds from `theta_set`.
    pub fn extract_box(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        extract_box(&self.theta_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{direction_to_angles, Direction};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
    }

    #[test]
    fn smooth_objective_converges() {
        let cfg = SearchConfig { max_rounds: 6, ..SearchConfig::default() };
        let res = minimize(|b: &[f64]| dist2(b, &[1.0, 0.0, 0.0]), 3, &cfg).unwrap();
        assert!(dist2(&res.beta_mid, &[1.0, 0.0, 0.0]).sqrt() < 1e-3, "{:?}", res.beta_mid);
    }

    #[test]
    fn flat_objective_spans_the_domain() {
        let res = minimize(|_: &[f64]| 0.0, 3, &SearchConfig::default()).unwrap();
        assert_eq!(res.theta_set.len(), 81);
        for h in 0..3 {
            assert!((res.beta_lower[h] + 1.0).abs() < 1e-12);
            assert!((res.beta_upper[h] - 1.0).abs() < 1e-12);
        }
        assert_eq!(res.boxes.len(), 1);
    }

    #[test]
    fn extract_box_examples() {
        let (l, u, m) = extract_box(&[vec![0.3, 1.1]]).unwrap();
        assert_eq!(l, u);
        assert_eq!(l, m);
        let pts = vec![vec![0.0, 0.0], vec![0.0, FRAC_PI_2]];
        let (l, u, m) = extract_box(&pts).unwrap();
        for (got, want) in [(l, [0.0, 0.0, 0.0]), (u, [1.0, 1.0, 0.0]), (m, [0.5, 0.5, 0.0])] {
            assert!(dist2(&got, &want) < 1e-24);
        }
        assert!(matches!(extract_box(&[]), Err(Error::Internal(_))));
    }

    #[test]
    fn mid_is_center_and_contains_points() {
        let target = Direction::normalized(vec![0.2, -0.7, 0.4]).unwrap();
        let res = minimize(|b: &[f64]| dist2(b, target.as_slice()).sqrt(), 3, &SearchConfig::default()).unwrap();
        for h in 0..3 {
            assert_eq!(res.beta_mid[h], 0.5 * (res.beta_lower[h] + res.beta_upper[h]));
        }
        for theta in &res.theta_set {
            let b = angles_to_vec(theta);
            for h in 0..3 {
                assert!(b[h] >= res.beta_lower[h] && b[h] <= res.beta_upper[h]);
            }
        }
    }

    #[test]
    fn boxes_shrink_monotonically() {
        let res = minimize(|b: &[f64]| dist2(b, &[0.0, 0.6, 0.8]), 3, &SearchConfig::default()).unwrap();
        for pair in res.boxes.windows(2) {
            for (w0, w1) in pair[0].widths().iter().zip(pair[1].widths()) {
                assert!(w1 <= *w0);
            }
            for m in 0..2 {
                assert!(pair[1].lower[m] >= pair[0].lower[m] && pair[1].upper[m] <= pair[0].upper[m]);
            }
        }
    }

    #[test]
    fn non_finite_objective_aborts() {
        let res = minimize(|b: &[f64]| if b[2] > 0.9 { f64::NAN } else { 0.0 }, 3, &SearchConfig::default());
        assert!(matches!(res, Err(Error::Numeric(_))));
    }

    #[test]
    fn invalid_config() {
        let cfg = SearchConfig { grid_points: 2, ..SearchConfig::default() };
        assert!(minimize(|_: &[f64]| 0.0, 3, &cfg).is_err());
        let cfg = SearchConfig { max_rounds: 0, ..SearchConfig::default() };
        assert!(minimize(|_: &[f64]| 0.0, 3, &cfg).is_err());
    }

    /// Piecewise-constant objective: 0 on a spherical cap, stepping up with
    /// distance outside it.
    fn cap_objective(center: &Direction, radius: f64) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        move |b: &[f64]| {
            let ang = center.dot(b).clamp(-1.0, 1.0).acos();
            if ang <= radius {
                0.0
            } else {
                (1.0 + ((ang - radius) / 0.05).floor()).min(40.0)
            }
        }
    }

    #[test]
    fn conservative_on_plateau_objectives() {
        let centers = [vec![1.0, 1.0, 1.0], vec![-0.3, 0.9, -0.2], vec![0.5, -0.5, 0.1], vec![1.0, 0.2, -0.4, 0.3]];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for c in centers {
            let center = Direction::normalized(c).unwrap();
            let d = center.dim();
            let radius = 0.08;
            let res = minimize(cap_objective(&center, radius), d, &SearchConfig::default()).unwrap();
            assert_eq!(res.min_value, 0.0);
            let fb = &res.final_box;
            let mut hits = 0;
            while hits < 2000 {
                let b: Vec<f64> =
                    center.as_slice().iter().map(|c| c + rng.gen_range(-radius..radius)).collect();
                let b = Direction::normalized(b).unwrap();
                if center.angle_to(&b) > radius {
                    continue;
                }
                hits += 1;
                let theta = direction_to_angles(&b).into_inner();
                for m in 0..d - 1 {
                    assert!(theta[m] >= fb.lower[m] - 1e-12 && theta[m] <= fb.upper[m] + 1e-12, "{m}: {theta:?} {fb:?}");
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let f = |b: &[f64]| (b[0] * 3.0).sin().abs() + (b[1] - 0.2).abs();
        let a = minimize(f, 3, &SearchConfig::default()).unwrap();
        let b = minimize(f, 3, &SearchConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
