//! Population identified sets on an angle grid.
//!
//! The population criterion uses exact popularity functions, so the only
//! approximation left is the finite population and pair sample. The grid is
//! anchored at the angles of `β0`, which makes `β0` itself a grid node.
//!
//! For `d >= 3` the grid is evaluated column by column: with the trailing
//! angles fixed, `Δ'β = cos θ1 (u + c tan θ1)` where `u` and `c` do not depend
//! on `θ1`, so each comparison holds on a prefix or suffix of the `θ1` axis.
//! Per pair, the side sums over the whole column then come from difference
//! arrays in `O(n + T)` rather than `O(n T)`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{ComparisonRule, Neumaier, RhoTable, SmoothingKind, TetradCriterion, TetradPlan};
use crate::dgp::{rho_exact_matrix, DgpConfig, Population, SupportKind};
use crate::error::{Error, Result};
use crate::model::{angles_to_vec, direction_to_angles, dot, Direction, PairwiseIndex};

/// Population criterion `Q(β)` ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct PopulationCriterion {
    crit: TetradCriterion,
}

impl PopulationCriterion {
    pub fn new(cfg: &DgpConfig, pop: &Population, plan: &TetradPlan, kind: SmoothingKind) -> Result<Self> {
        cfg.validate()?;
        if pop.n() != plan.n {
            return Err(Error::input("population and tetrad plan disagree on n"));
        }
        if pop.d_x != cfg.d {
            return Err(Error::input("population covariates do not match the configuration"));
        }
        let index = PairwiseIndex::from_transform(&pop.covariates, pop.d_x, &cfg.w)?;
        let rho = RhoTable::new(pop.n(), rho_exact_matrix(pop, cfg)?)?;
        let rule = ComparisonRule::for_transform(&cfg.w)?;
        Ok(PopulationCriterion { crit: TetradCriterion::build(&index, &rho, plan, kind, rule)? })
    }

    pub fn evaluate(&self, beta: &[f64]) -> f64 {
        self.crit.evaluate(beta)
    }

    pub fn criterion(&self) -> &TetradCriterion {
        &self.crit
    }
}

/// One-shot `Q(β)` with the indicator weight.
pub fn population_criterion(beta: &Direction, cfg: &DgpConfig, pop: &Population, plan: &TetradPlan) -> Result<f64> {
    if beta.dim() != cfg.d {
        return Err(Error::input("beta has the wrong dimension"));
    }
    Ok(PopulationCriterion::new(cfg, pop, plan, SmoothingKind::Indicator)?.evaluate(beta.as_slice()))
}

/// Rectangular angle grid; values are stored with the last angle varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub axes: Vec<Vec<f64>>,
}

impl AngleGrid {
    /// Grid with spacing `step` (radians) through `anchor`, covering the full
    /// angle domain. The last angle wraps, so `-π` and `π` are not both present.
    pub fn anchored(anchor: &[f64], step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 0.5) {
            return Err(Error::input("grid step must be in (0, 0.5] radians"));
        }
        let last = anchor.len() - 1;
        let axes = anchor
            .iter()
            .enumerate()
            .map(|(m, &a)| {
                let (lo, hi) = if m == last { (-PI, PI) } else { (-FRAC_PI_2, FRAC_PI_2) };
                let k_lo = ((lo - a) / step - 1e-9).ceil() as i64;
                let k_hi = ((hi - a) / step + 1e-9).floor() as i64;
                (k_lo..=k_hi)
                    .map(|k| a + k as f64 * step)
                    .filter(|&t| if m == last { t < hi - 1e-12 } else { t.abs() <= hi })
                    .collect()
            })
            .collect();
        Ok(AngleGrid { axes })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        let mut rem = flat;
        for m in (0..self.axes.len()).rev() {
            let len = self.axes[m].len();
            idx[m] = rem % len;
            rem /= len;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&t, ax)| acc * ax.len() + t)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat).into_iter().enumerate().map(|(m, t)| self.axes[m][t]).collect()
    }

    /// Surface element `Π_m cos^{d-1-m}(θ_m)` at a grid point.
    fn jacobian(theta: &[f64]) -> f64 {
        let d = theta.len() + 1;
        theta[..d - 2].iter().enumerate().map(|(m, t)| t.cos().powi((d - 2 - m) as i32)).product()
    }
}

/// Criterion at every grid point by direct evaluation.
pub fn evaluate_grid(crit: &TetradCriterion, grid: &AngleGrid) -> Vec<f64> {
    (0..grid.len()).into_par_iter().map(|flat| crit.evaluate(&angles_to_vec(&grid.point(flat)))).collect()
}

/// Same values as [`evaluate_grid`] using the per-column interval sweep.
/// Requires `d >= 3`.
pub fn sweep_grid(crit: &TetradCriterion, grid: &AngleGrid) -> Vec<f64> {
    let d = crit.d();
    assert!(d >= 3 && grid.axes.len() == d - 1, "sweep needs d >= 3 and a matching grid");
    let axis0 = &grid.axes[0];
    let rest = AngleGrid { axes: grid.axes[1..].to_vec() };
    let columns: Vec<Vec<f64>> = (0..rest.len()).into_par_iter().map(|c| sweep_column(crit, axis0, &rest.point(c))).collect();
    let ncols = columns.len();
    let mut values = vec![0.0; grid.len()];
    for (c, col) in columns.into_iter().enumerate() {
        for (t, v) in col.into_iter().enumerate() {
            values[t * ncols + c] = v;
        }
    }
    values
}

struct Column<'a> {
    betas: Vec<Vec<f64>>,
    tans: Vec<f64>,
    v: Vec<f64>,
    crit: &'a TetradCriterion,
}

impl Column<'_> {
    fn t_len(&self) -> usize {
        self.betas.len()
    }

    /// `Δ'β_t`, summed in the same order as the direct evaluation.
    fn value(&self, cols: &[Vec<f64>], e: usize, t: usize) -> f64 {
        let mut v = 0.0;
        for (h, bh) in self.betas[t].iter().enumerate() {
            v += cols[h][e] * bh;
        }
        v
    }

    /// Half-open range of `t` on which `sign · Δ_e'β_t ≤ 0`, or `None` when
    /// `Δ_e'β_t` vanishes up to rounding along the whole column, so the
    /// comparison has to be checked point by point.
    fn interval(&self, cols: &[Vec<f64>], e: usize, sign: f64) -> Option<(usize, usize)> {
        let d = cols.len();
        let nt = self.t_len();
        let u: f64 = sign * (0..d - 1).map(|h| cols[h][e] * self.v[h]).sum::<f64>();
        let c = sign * cols[d - 1][e];
        let holds = |t: usize| sign * self.value(cols, e, t) <= 0.0;
        let scale: f64 = (0..d).map(|h| cols[h][e].abs()).sum();
        if u.abs() + c.abs() <= 1e-9 * scale {
            return None;
        }
        if c == 0.0 {
            return Some(if u < 0.0 { (0, nt) } else { (0, 0) });
        }
        let cut = -u / c;
        if c > 0.0 {
            // prefix: tan θ ≤ cut
            let mut b = self.tans.partition_point(|&x| x <= cut);
            while b < nt && holds(b) {
                b += 1;
            }
            while b > 0 && !holds(b - 1) {
                b -= 1;
            }
            Some((0, b))
        } else {
            // suffix: tan θ ≥ cut
            let mut b = self.tans.partition_point(|&x| x < cut);
            while b > 0 && holds(b - 1) {
                b -= 1;
            }
            while b < nt && !holds(b) {
                b += 1;
            }
            Some((b, nt))
        }
    }

    fn entry_range(&self, e: usize, sign: f64) -> Option<(usize, usize)> {
        let (mut lo, mut hi) = self.interval(self.crit.delta(), e, sign)?;
        if self.crit.rule() == ComparisonRule::Asymmetric && lo < hi {
            let (lo2, hi2) = self.interval(self.crit.delta_rev(), e, sign)?;
            lo = lo.max(lo2);
            hi = hi.min(hi2);
        }
        Some((lo, hi.max(lo)))
    }

    fn holds(&self, e: usize, sign: f64, t: usize) -> bool {
        let mut ok = sign * self.value(self.crit.delta(), e, t) <= 0.0;
        if self.crit.rule() == ComparisonRule::Asymmetric {
            ok &= sign * self.value(self.crit.delta_rev(), e, t) <= 0.0;
        }
        ok
    }
}

/// Side sums of one pair over the column, accumulated from difference arrays.
/// Hit counts are tracked separately so an empty side is exactly zero.
fn side_sums(col: &Column, start: usize, end: usize, sign: f64, sum: &mut [f64], hits: &mut [i64]) -> bool {
    let nt = col.t_len();
    sum[..=nt].fill(0.0);
    hits[..=nt].fill(0);
    let weights = col.crit.weights();
    let mut any = false;
    let mut mark = |lo: usize, hi: usize, w: f64| {
        sum[lo] += w;
        sum[hi] -= w;
        hits[lo] += 1;
        hits[hi] -= 1;
    };
    for e in start..end {
        match col.entry_range(e, sign) {
            Some((lo, hi)) if lo < hi => {
                any = true;
                mark(lo, hi, weights[e]);
            }
            Some(_) => {}
            None => {
                for t in (0..nt).filter(|&t| col.holds(e, sign, t)) {
                    any = true;
                    mark(t, t + 1, weights[e]);
                }
            }
        }
    }
    if any {
        let (mut s, mut h) = (0.0, 0);
        for t in 0..nt {
            s += sum[t];
            h += hits[t];
            sum[t] = if h == 0 { 0.0 } else { s };
        }
    }
    any
}

fn sweep_column(crit: &TetradCriterion, axis0: &[f64], rest: &[f64]) -> Vec<f64> {
    let nt = axis0.len();
    let betas = axis0
        .iter()
        .map(|&t| {
            let mut theta = Vec::with_capacity(rest.len() + 1);
            theta.push(t);
            theta.extend_from_slice(rest);
            angles_to_vec(&theta)
        })
        .collect();
    let col = Column { betas, tans: axis0.iter().map(|t| t.tan()).collect(), v: angles_to_vec(rest), crit };
    let mut sa = vec![0.0; nt + 1];
    let mut sb = vec![0.0; nt + 1];
    let mut ha = vec![0i64; nt + 1];
    let mut hb = vec![0i64; nt + 1];
    let mut acc = vec![Neumaier::default(); nt];
    for &(start, a_end, end) in crit.spans() {
        if !side_sums(&col, start, a_end, 1.0, &mut sa, &mut ha) {
            continue;
        }
        if !side_sums(&col, a_end, end, -1.0, &mut sb, &mut hb) {
            continue;
        }
        for t in 0..nt {
            let p = sa[t] * sb[t];
            if p != 0.0 {
                acc[t].add(p);
            }
        }
    }
    acc.into_iter().map(|a| a.total() * crit.normalization()).collect()
}

/// Summary of the membership region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdSetSummary {
    pub support: String,
    pub points: usize,
    pub members: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub tol: f64,
    /// Surface measure of the member cells (steradians for `d = 3`).
    pub area: f64,
    /// Largest angle between two member directions (radians).
    pub angular_diameter: f64,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
    pub beta0_member: bool,
}

/// Membership threshold above the grid minimum:
/// `max(absolute, relative · (max - min))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MembershipTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for MembershipTolerance {
    fn default() -> Self {
        MembershipTolerance { relative: 1e-6, absolute: 1e-9 }
    }
}

impl MembershipTolerance {
    /// `(min, max, tol)` over the grid values.
    pub fn resolve(&self, values: &[f64]) -> (f64, f64, f64) {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max, f64::max(self.absolute, self.relative * (max - min)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdSetGrid {
    pub support: SupportKind,
    /// Grid spacing in radians.
    pub resolution: f64,
    pub grid: AngleGrid,
    pub values: Vec<f64>,
    pub members: Vec<bool>,
    /// Flat index of the grid node at `β0`.
    pub anchor: usize,
    pub summary: IdSetSummary,
}

impl IdSetGrid {
    pub fn from_values(
        support: SupportKind,
        resolution: f64,
        grid: AngleGrid,
        values: Vec<f64>,
        anchor: usize,
        tolerance: MembershipTolerance,
    ) -> Result<Self> {
        if values.len() != grid.len() || anchor >= grid.len() {
            return Err(Error::Internal("grid values do not match the grid".into()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("criterion is {} at angles {:?}", values[bad], grid.point(bad))));
        }
        let (min, max, tol) = tolerance.resolve(&values);
        let members: Vec<bool> = values.iter().map(|&v| v <= min + tol).collect();
        let dims = grid.axes.len();
        let mut theta_lower = vec![f64::INFINITY; dims];
        let mut theta_upper = vec![f64::NEG_INFINITY; dims];
        let mut beta_lower = vec![f64::INFINITY; dims + 1];
        let mut beta_upper = vec![f64::NEG_INFINITY; dims + 1];
        let mut dirs = Vec::new();
        let mut area = 0.0;
        let cell = resolution.powi(dims as i32);
        for (flat, _) in members.iter().enumerate().filter(|(_, m)| **m) {
            let theta = grid.point(flat);
            let beta = angles_to_vec(&theta);
            for m in 0..dims {
                theta_lower[m] = theta_lower[m].min(theta[m]);
                theta_upper[m] = theta_upper[m].max(theta[m]);
            }
            for h in 0..=dims {
                beta_lower[h] = beta_lower[h].min(beta[h]);
                beta_upper[h] = beta_upper[h].max(beta[h]);
            }
            area += AngleGrid::jacobian(&theta) * cell;
            dirs.push(beta);
        }
        let summary = IdSetSummary {
            support: support.label().to_owned(),
            points: values.len(),
            members: dirs.len(),
            min_value: min,
            max_value: max,
            tol,
            area,
            angular_diameter: angular_diameter(&dirs),
            theta_lower,
            theta_upper,
            beta_lower,
            beta_upper,
            beta0_member: members[anchor],
        };
        Ok(IdSetGrid { support, resolution, grid, values, members, anchor, summary })
    }
}

/// Largest pairwise angle in a set of unit vectors.
pub fn angular_diameter(dirs: &[Vec<f64>]) -> f64 {
    let min_dot = (0..dirs.len())
        .into_par_iter()
        .map(|a| dirs[a + 1..].iter().map(|b| dot(&dirs[a], b)).fold(1.0, f64::min))
        .reduce(|| 1.0, f64::min);
    min_dot.clamp(-1.0, 1.0).acos()
}

/// Identified set of `cfg` on a grid of `resolution_deg` degrees, using a
/// population of `n` nodes and `m` sampled pairs.
pub fn compute_idset(cfg: &DgpConfig, n: usize, m: usize, resolution_deg: f64) -> Result<IdSetGrid> {
    compute_idset_with(cfg, n, m, resolution_deg, MembershipTolerance::default())
}

pub fn compute_idset_with(
    cfg: &DgpConfig,
    n: usize,
    m: usize,
    resolution_deg: f64,
    tolerance: MembershipTolerance,
) -> Result<IdSetGrid> {
    let cfg = DgpConfig { n, ..cfg.clone() };
    let pop = Population::draw(&cfg)?;
    let plan = TetradPlan::sample(n, m, cfg.plan_seed())?;
    let q = PopulationCriterion::new(&cfg, &pop, &plan, SmoothingKind::Indicator)?;
    let anchor_theta = direction_to_angles(&cfg.beta0).into_inner();
    let resolution = resolution_deg.to_radians();
    let grid = AngleGrid::anchored(&anchor_theta, resolution)?;
    let anchor_idx: Vec<usize> = grid
        .axes
        .iter()
        .zip(&anchor_theta)
        .map(|(ax, a)| ax.iter().position(|v| v == a).expect("anchor lies on the grid"))
        .collect();
    let anchor = grid.flat(&anchor_idx);
    log::info!("identified set for {}: {} grid points", cfg.support.label(), grid.len());
    let values = if cfg.d >= 3 { sweep_grid(q.criterion(), &grid) } else { evaluate_grid(q.criterion(), &grid) };
    IdSetGrid::from_values(cfg.support, resolution, grid, values, anchor, tolerance)
}
