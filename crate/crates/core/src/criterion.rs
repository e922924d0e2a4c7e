//! The logical-differencing criterion over tetrads `(i, j, k, l)`.
//!
//! For a fixed pair `(i, j)` the tetrad sum over ordered `(k, l)` factors:
//!
//! ```text
//! Σ_{k≠l} γ(ρ_ik - ρ_jk) γ(ρ_jl - ρ_il) λ_k(β) λ_l(β) = S_a(β) · S_b(β) - Σ_k a_k b_k (...)
//! ```
//!
//! and the diagonal correction vanishes because `γ(t) γ(-t) = 0` for every
//! one-sided sign-preserving `γ`. Each pair therefore costs `O(n)` per
//! evaluation instead of `O(n²)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, Direction, NetworkData, PairwiseIndex, PairwiseTransform};
use crate::sieve::{predict_rho, RhoEstimate};

/// The one-sided sign-preserving weight `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    /// `1{t > 0}`
    Indicator,
    /// `max(t, 0)`
    PositivePart,
    /// `2 Φ(max(t, 0)) - 1`
    ScaledNormalCdf,
}

pub fn gamma(kind: SmoothingKind, t: f64) -> f64 {
    if t <= 0.0 || t.is_nan() {
        return 0.0;
    }
    match kind {
        SmoothingKind::Indicator => 1.0,
        SmoothingKind::PositivePart => t,
        // 2Φ(t) - 1 = erf(t / √2)
        SmoothingKind::ScaledNormalCdf => statrs::function::erf::erf(t * std::f64::consts::FRAC_1_SQRT_2),
    }
}

/// `γ(ρ_i(x_k) - ρ_j(x_k)) · γ(ρ_j(x_l) - ρ_i(x_l))`.
pub fn tau_weight(kind: SmoothingKind, rho_i_at_xk: f64, rho_j_at_xk: f64, rho_i_at_xl: f64, rho_j_at_xl: f64) -> f64 {
    gamma(kind, rho_i_at_xk - rho_j_at_xk) * gamma(kind, rho_j_at_xl - rho_i_at_xl)
}

fn diff_dot(a: &[f64], b: &[f64], beta: &[f64]) -> f64 {
    a.iter().zip(b).zip(beta).map(|((x, y), c)| (x - y) * c).sum()
}

/// `1{Δ(x_k)'β ≤ 0} · 1{Δ(x_l)'β ≥ 0}` with `Δ(x) = w(x_i, x) - w(x_j, x)`.
pub fn lambda_sym(
    x_k: &[f64],
    x_l: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    w: &PairwiseTransform,
    beta: &Direction,
) -> Result<u8> {
    let f = w.resolve()?;
    let d = w.d;
    let (mut wi, mut wj) = (vec![0.0; d], vec![0.0; d]);
    f(x_i, x_k, &mut wi);
    f(x_j, x_k, &mut wj);
    let at_k = diff_dot(&wi, &wj, beta.as_slice());
    f(x_i, x_l, &mut wi);
    f(x_j, x_l, &mut wj);
    let at_l = diff_dot(&wi, &wj, beta.as_slice());
    Ok((at_k <= 0.0 && at_l >= 0.0) as u8)
}

/// Comparison indicator for asymmetric `w`: both orientations of each
/// comparison must point the same way.
pub fn lambda_asym(
    x_k: &[f64],
    x_l: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    w: &PairwiseTransform,
    beta: &Direction,
) -> Result<u8> {
    let f = w.resolve()?;
    let d = w.d;
    let b = beta.as_slice();
    let (mut u, mut v) = (vec![0.0; d], vec![0.0; d]);
    let mut side = |x: &[f64]| {
        f(x_i, x, &mut u);
        f(x_j, x, &mut v);
        let out = diff_dot(&u, &v, b);
        f(x, x_i, &mut u);
        f(x, x_j, &mut v);
        (out, diff_dot(&u, &v, b))
    };
    let (k1, k2) = side(x_k);
    let (l1, l2) = side(x_l);
    Ok((k1 <= 0.0 && k2 <= 0.0 && l1 >= 0.0 && l2 >= 0.0) as u8)
}

/// Which comparison indicator the criterion uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonRule {
    Symmetric,
    Asymmetric,
}

impl ComparisonRule {
    pub fn for_transform(w: &PairwiseTransform) -> Result<Self> {
        Ok(if w.is_symmetric()? { ComparisonRule::Symmetric } else { ComparisonRule::Asymmetric })
    }
}

/// Sampled `(i, j)` pairs; every admissible `(k, l)` is compared against each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TetradPlan {
    pub n: usize,
    pub pairs: Vec<(u32, u32)>,
    pub seed: u64,
}

impl TetradPlan {
    /// Draws `m` ordered pairs uniformly without replacement. When `m`
    /// exceeds `n(n-1)` every ordered pair is used.
    pub fn sample(n: usize, m: usize, seed: u64) -> Result<Self> {
        if n < 4 {
            return Err(Error::input("tetrads need at least four nodes"));
        }
        if m == 0 {
            return Err(Error::input("tetrad plan needs at least one pair"));
        }
        let total = n * (n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = if m >= total {
            (0..total).collect()
        } else {
            rand::seq::index::sample(&mut rng, total, m).into_vec()
        };
        idx.sort_unstable();
        let pairs = idx
            .into_iter()
            .map(|t| {
                let i = t / (n - 1);
                let r = t % (n - 1);
                let j = if r >= i { r + 1 } else { r };
                (i as u32, j as u32)
            })
            .collect();
        Ok(TetradPlan { n, pairs, seed })
    }

    pub fn from_pairs(n: usize, pairs: Vec<(u32, u32)>) -> Result<Self> {
        if n < 4 {
            return Err(Error::input("tetrads need at least four nodes"));
        }
        if pairs.is_empty() {
            return Err(Error::input("tetrad plan needs at least one pair"));
        }
        if pairs.iter().any(|&(i, j)| i == j || i as usize >= n || j as usize >= n) {
            return Err(Error::input("plan pairs must be distinct in-range nodes"));
        }
        Ok(TetradPlan { n, pairs, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of admissible tetrads: `M (n-2)(n-3)`.
    pub fn tetrad_count(&self) -> f64 {
        self.pairs.len() as f64 * ((self.n - 2) * (self.n - 3)) as f64
    }
}

/// `n × n` popularity table, entry `(i, k) = ρ_i(X_k)`.
#[derive(Clone, Debug)]
pub struct RhoTable {
    n: usize,
    values: Vec<f64>,
}

impl RhoTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::input("popularity table must be n × n"));
        }
        Ok(RhoTable { n, values })
    }

    pub fn from_estimates(estimates: &[RhoEstimate], net: &NetworkData) -> Self {
        RhoTable { n: net.n(), values: crate::sieve::rho_hat_matrix(estimates, net) }
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n + k]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Popularity differences this small are rounding noise (e.g. a first stage
/// fitted to a constant outcome) and count as ties.
pub const RHO_TIE_TOL: f64 = 1e-12;

/// Pairs per parallel work unit; fixed so sums are reproducible.
const PAIR_CHUNK: usize = 16;

/// Precomputed tetrad terms ready for repeated evaluation in `β`.
///
/// Entries of one pair are stored contiguously: first the `k` with
/// `ρ_i(X_k) > ρ_j(X_k)` ("a" side), then those with the reverse strict
/// ordering ("b" side). Ties (within [`RHO_TIE_TOL`]) carry zero weight and
/// are dropped.
#[derive(Clone, Debug)]
pub struct TetradCriterion {
    d: usize,
    rule: ComparisonRule,
    /// per pair: (start, end of a side, end)
    spans: Vec<(usize, usize, usize)>,
    /// `w(x_i, x_k) - w(x_j, x_k)`, one column per coordinate.
    delta: Vec<Vec<f64>>,
    /// `w(x_k, x_i) - w(x_k, x_j)`, asymmetric rule only.
    delta_rev: Vec<Vec<f64>>,
    weight: Vec<f64>,
    norm: f64,
}

impl TetradCriterion {
    pub fn build(
        index: &PairwiseIndex,
        rho: &RhoTable,
        plan: &TetradPlan,
        kind: SmoothingKind,
        rule: ComparisonRule,
    ) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::input("empty tetrad plan"));
        }
        let n = index.n();
        if rho.n() != n || plan.n != n {
            return Err(Error::input("plan, popularity table and pairwise index disagree on n"));
        }
        let d = index.d();
        let asym = rule == ComparisonRule::Asymmetric;
        let cap = plan.len() * (n - 2);
        let mut delta = vec![Vec::with_capacity(cap); d];
        let mut delta_rev = if asym { vec![Vec::with_capacity(cap); d] } else { Vec::new() };
        let mut weight = Vec::with_capacity(cap);
        let mut spans = Vec::with_capacity(plan.len());
        let mut b_side: Vec<(usize, f64)> = Vec::with_capacity(n);
        let mut push = |k: usize, wgt: f64, i: usize, j: usize, delta: &mut Vec<Vec<f64>>, delta_rev: &mut Vec<Vec<f64>>| {
            let (wi, wj) = (index.get(i, k), index.get(j, k));
            for h in 0..d {
                delta[h].push(wi[h] - wj[h]);
            }
            if asym {
                let (vi, vj) = (index.get(k, i), index.get(k, j));
                for h in 0..d {
                    delta_rev[h].push(vi[h] - vj[h]);
                }
            }
            weight.push(wgt);
        };
        for &(i, j) in &plan.pairs {
            let (i, j) = (i as usize, j as usize);
            let start = delta[0].len();
            b_side.clear();
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let t = rho.get(i, k) - rho.get(j, k);
                if t.abs() <= RHO_TIE_TOL {
                    continue;
                }
                let a = gamma(kind, t);
                if a > 0.0 {
                    push(k, a, i, j, &mut delta, &mut delta_rev);
                } else {
                    let b = gamma(kind, -t);
                    if b > 0.0 {
                        b_side.push((k, b));
                    }
                }
            }
            let a_end = delta[0].len();
            for &(k, b) in &b_side {
                push(k, b, i, j, &mut delta, &mut delta_rev);
            }
            spans.push((start, a_end, delta[0].len()));
        }
        Ok(TetradCriterion { d, rule, spans, delta, delta_rev, weight, norm: 1.0 / plan.tetrad_count() })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rule(&self) -> ComparisonRule {
        self.rule
    }

    /// Number of stored (pair, k) terms.
    pub fn entries(&self) -> usize {
        self.weight.len()
    }

    pub(crate) fn spans(&self) -> &[(usize, usize, usize)] {
        &self.spans
    }

    pub(crate) fn delta(&self) -> &[Vec<f64>] {
        &self.delta
    }

    pub(crate) fn delta_rev(&self) -> &[Vec<f64>] {
        &self.delta_rev
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// `1 / (M (n-2)(n-3))`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Criterion value at `beta` (any vector of length `d`; only its direction matters).
    pub fn evaluate(&self, beta: &[f64]) -> f64 {
        assert_eq!(beta.len(), self.d, "beta has the wrong dimension");
        let partials: Vec<f64> = self
            .spans
            .par_chunks(PAIR_CHUNK)
            .map(|chunk| {
                let mut acc = Neumaier::default();
                for &(start, a_end, end) in chunk {
                    let sa = self.side_sum(beta, start, a_end, true);
                    if sa == 0.0 {
                        continue;
                    }
                    let sb = self.side_sum(beta, a_end, end, false);
                    acc.add(sa * sb);
                }
                acc.total()
            })
            .collect();
        let mut acc = Neumaier::default();
        partials.into_iter().for_each(|p| acc.add(p));
        acc.total() * self.norm
    }

    fn side_sum(&self, beta: &[f64], start: usize, end: usize, a_side: bool) -> f64 {
        match self.d {
            2 => self.side_sum_fixed::<2>(beta, start, end, a_side),
            3 => self.side_sum_fixed::<3>(beta, start, end, a_side),
            4 => self.side_sum_fixed::<4>(beta, start, end, a_side),
            5 => self.side_sum_fixed::<5>(beta, start, end, a_side),
            _ => self.side_sum_dyn(beta, start, end, a_side),
        }
    }

    fn side_sum_fixed<const D: usize>(&self, beta: &[f64], start: usize, end: usize, a_side: bool) -> f64 {
        let cols: [&[f64]; D] = std::array::from_fn(|h| &self.delta[h][start..end]);
        let b: [f64; D] = std::array::from_fn(|h| beta[h]);
        let w = &self.weight[start..end];
        let mut s = 0.0;
        if self.rule == ComparisonRule::Symmetric {
            for e in 0..w.len() {
                let mut v = 0.0;
                for h in 0..D {
                    v += cols[h][e] * b[h];
                }
                let hit = if a_side { v <= 0.0 } else { v >= 0.0 };
                s += if hit { w[e] } else { 0.0 };
            }
        } else {
            let rev: [&[f64]; D] = std::array::from_fn(|h| &self.delta_rev[h][start..end]);
            for e in 0..w.len() {
                let (mut v, mut r) = (0.0, 0.0);
                for h in 0..D {
                    v += cols[h][e] * b[h];
                    r += rev[h][e] * b[h];
                }
                let hit = if a_side { v <= 0.0 && r <= 0.0 } else { v >= 0.0 && r >= 0.0 };
                s += if hit { w[e] } else { 0.0 };
            }
        }
        s
    }

    fn side_sum_dyn(&self, beta: &[f64], start: usize, end: usize, a_side: bool) -> f64 {
        let mut s = 0.0;
        for e in start..end {
            let v: f64 = (0..self.d).map(|h| self.delta[h][e] * beta[h]).sum();
            let mut hit = if a_side { v <= 0.0 } else { v >= 0.0 };
            if self.rule == ComparisonRule::Asymmetric {
                let r: f64 = (0..self.d).map(|h| self.delta_rev[h][e] * beta[h]).sum();
                hit &= if a_side { r <= 0.0 } else { r >= 0.0 };
            }
            if hit {
                s += self.weight[e];
            }
        }
        s
    }
}

/// Compensated (Kahan–Babuška–Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One-shot sample criterion `Q̂(β)` for a network whose pairwise
/// regressors are `w(X_i, X_j)` of the node covariates.
pub fn sample_criterion(
    beta: &Direction,
    rho_hats: &[RhoEstimate],
    net: &NetworkData,
    plan: &TetradPlan,
    w: &PairwiseTransform,
    kind: SmoothingKind,
) -> Result<f64> {
    if plan.is_empty() {
        return Err(Error::input("empty tetrad plan"));
    }
    if rho_hats.len() != net.n() {
        return Err(Error::input("need one popularity estimate per node"));
    }
    let index = PairwiseIndex::from_transform(net.covariates(), net.d_x(), w)?;
    let n = net.n();
    let mut values = vec![0.0; n * n];
    for (i, est) in rho_hats.iter().enumerate() {
        for k in 0..n {
            values[i * n + k] = predict_rho(est, net.x(k));
        }
    }
    let rho = RhoTable::new(n, values)?;
    let crit = TetradCriterion::build(&index, &rho, plan, kind, ComparisonRule::for_transform(w)?)?;
    Ok(crit.evaluate(beta.as_slice()))
}

/// Index value `w(x_i, x_k)'β`, exposed for diagnostics.
pub fn index_value(w_ik: &[f64], beta: &Direction) -> f64 {
    dot(w_ik, beta.as_slice())
}
