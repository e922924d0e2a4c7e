//! Shared domain types: networks, pairwise transforms, directions on the
//! unit sphere and their hyperspherical-angle parameterization.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|‖β‖ - 1|` accepted by [`Direction::new`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// A point on the unit sphere `S^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::input("a direction needs at least two coordinates"));
        }
        let norm = norm2(&beta);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::input(format!("direction has norm {norm}, expected 1")));
        }
        Ok(Direction(beta))
    }

    /// Rescales `beta` onto the sphere.
    pub fn normalized(beta: Vec<f64>) -> Result<Self> {
        let norm = norm2(&beta);
        if beta.len() < 2 || !norm.is_finite() || norm == 0.0 {
            return Err(Error::input("cannot normalize a zero or non-finite vector"));
        }
        Ok(Direction(beta.into_iter().map(|b| b / norm).collect()))
    }

    /// `(1, ..., 1)/sqrt(d)`.
    pub fn equal_weights(d: usize) -> Self {
        let v = 1.0 / (d as f64).sqrt();
        Direction(vec![v; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        dot(&self.0, v)
    }

    pub fn antipode(&self) -> Self {
        Direction(self.0.iter().map(|b| -b).collect())
    }

    /// Great-circle distance in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0).acos()
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

/// Hyperspherical angles of a direction in `S^{d-1}`: `d-2` polar angles in
/// `[-π/2, π/2]` followed by one azimuth in `[-π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::input("angle vector must be non-empty"));
        }
        for (m, (&t, (lo, hi))) in theta.iter().zip(angle_domain(theta.len() + 1)).enumerate() {
            if !(lo..=hi).contains(&t) {
                return Err(Error::input(format!("angle {m} = {t} outside [{lo}, {hi}]")));
            }
        }
        Ok(AngleVector(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-angle bounds of the full angle space for directions in `R^d`.
pub fn angle_domain(d: usize) -> Vec<(f64, f64)> {
    assert!(d >= 2);
    let mut dom = vec![(-FRAC_PI_2, FRAC_PI_2); d - 2];
    dom.push((-PI, PI));
    dom
}

/// Nested hyperspherical coordinates:
/// `β_d = sin θ_1`, `β_{d-1} = cos θ_1 sin θ_2`, ..., `β_1 = Π cos θ_m`.
///
/// For `d = 3` this is `β = (cos θ1 cos θ2, cos θ1 sin θ2, sin θ1)`.
pub fn angles_to_direction(theta: &AngleVector) -> Direction {
    Direction(angles_to_vec(theta.as_slice()))
}

/// Unchecked variant of [`angles_to_direction`] used on search grids.
pub(crate) fn angles_to_vec(theta: &[f64]) -> Vec<f64> {
    let d = theta.len() + 1;
    let mut beta = vec![0.0; d];
    let mut cos_prod = 1.0;
    for (m, &t) in theta.iter().enumerate() {
        let (s, c) = t.sin_cos();
        beta[d - 1 - m] = cos_prod * s;
        cos_prod *= c;
    }
    beta[0] = cos_prod;
    beta
}

/// Inverse of [`angles_to_direction`]. Angles left undetermined at a pole are 0.
pub fn direction_to_angles(beta: &Direction) -> AngleVector {
    let b = beta.as_slice();
    let d = b.len();
    let mut theta = Vec::with_capacity(d - 1);
    // squared norm of the leading coordinates still to be resolved
    let mut rest: f64 = b.iter().map(|v| v * v).sum();
    for m in 0..d - 2 {
        let top = b[d - 1 - m];
        rest -= top * top;
        let radius = rest.max(0.0).sqrt();
        theta.push(top.atan2(radius));
    }
    theta.push(b[1].atan2(b[0]));
    AngleVector(theta)
}

/// Signature of a registered pairwise transform: writes `w(x, y)` into `out`.
pub type TransformFn = fn(x: &[f64], y: &[f64], out: &mut [f64]);

#[derive(Clone, Copy)]
struct RegistryEntry {
    f: TransformFn,
    symmetric: bool,
}

fn registry() -> &'static RwLock<HashMap<String, RegistryEntry>> {
    static REGISTRY: OnceLock<RwLock<HashMap<String, RegistryEntry>>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Registers a named pairwise transform so configurations can refer to it.
///
/// `symmetric` must be true only when `f(x, y) == f(y, x)` for all inputs;
/// it selects the two-condition comparison indicator in the criterion.
pub fn register_transform(name: &str, f: TransformFn, symmetric: bool) {
    registry()
        .write()
        .expect("transform registry poisoned")
        .insert(name.to_owned(), RegistryEntry { f, symmetric });
}

fn lookup_transform(name: &str) -> Result<RegistryEntry> {
    registry()
        .read()
        .expect("transform registry poisoned")
        .get(name)
        .copied()
        .ok_or_else(|| Error::config(format!("no pairwise transform registered as `{name}`")))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// `w_h(x, y) = |x_h - y_h|`.
    SymmetricAbsDiff,
    /// `|x_h - y_h|` for `h < d`, and `|2 x_d - y_d| * 2/3` for the last coordinate.
    AsymmetricLastCoord,
    Custom(String),
}

/// The known pairwise map `w` producing `W_ij = w(X_i, X_j)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseTransform {
    pub variant: TransformKind,
    pub d: usize,
}

impl PairwiseTransform {
    pub fn symmetric_abs_diff(d: usize) -> Self {
        PairwiseTransform { variant: TransformKind::SymmetricAbsDiff, d }
    }

    pub fn asymmetric_last_coord(d: usize) -> Self {
        PairwiseTransform { variant: TransformKind::AsymmetricLastCoord, d }
    }

    pub fn custom(name: &str, d: usize) -> Self {
        PairwiseTransform { variant: TransformKind::Custom(name.to_owned()), d }
    }

    pub fn is_symmetric(&self) -> Result<bool> {
        Ok(match &self.variant {
            TransformKind::SymmetricAbsDiff => true,
            TransformKind::AsymmetricLastCoord => false,
            TransformKind::Custom(name) => lookup_transform(name)?.symmetric,
        })
    }

    /// Resolves the transform into a plain function pointer for hot loops.
    pub(crate) fn resolve(&self) -> Result<TransformFn> {
        Ok(match &self.variant {
            TransformKind::SymmetricAbsDiff => abs_diff,
            TransformKind::AsymmetricLastCoord => asym_last_coord,
            TransformKind::Custom(name) => lookup_transform(name)?.f,
        })
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "covariate vectors differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        let builtin = !matches!(self.variant, TransformKind::Custom(_));
        if builtin && x.len() != self.d {
            return Err(Error::input(format!(
                "transform has d = {} but covariates have length {}",
                self.d,
                x.len()
            )));
        }
        if self.variant == TransformKind::AsymmetricLastCoord && self.d < 1 {
            return Err(Error::input("asymmetric transform needs d >= 1"));
        }
        Ok(())
    }
}

fn abs_diff(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = (a - b).abs();
    }
}

fn asym_last_coord(x: &[f64], y: &[f64], out: &mut [f64]) {
    let d = out.len();
    abs_diff(&x[..d - 1], &y[..d - 1], &mut out[..d - 1]);
    out[d - 1] = (2.0 * x[d - 1] - y[d - 1]).abs() * (2.0 / 3.0);
}

/// `W_ij = w(x_i, x_j)`.
pub fn pairwise_index(w: &PairwiseTransform, x_i: &[f64], x_j: &[f64]) -> Result<Vec<f64>> {
    w.check_dims(x_i, x_j)?;
    let f = w.resolve()?;
    let mut out = vec![0.0; w.d];
    f(x_i, x_j, &mut out);
    Ok(out)
}

/// Dense `n × n × d` table of pairwise regressors `W_ij` (diagonal unused).
#[derive(Clone, Debug)]
pub struct PairwiseIndex {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl PairwiseIndex {
    /// Applies `w` to every ordered pair of covariate rows.
    pub fn from_transform(covariates: &[f64], d_x: usize, w: &PairwiseTransform) -> Result<Self> {
        if d_x == 0 || covariates.len() % d_x != 0 {
            return Err(Error::input("covariate matrix shape is inconsistent"));
        }
        let n = covariates.len() / d_x;
        if n > 0 {
            w.check_dims(&covariates[..d_x], &covariates[..d_x])?;
        }
        let f = w.resolve()?;
        let d = w.d;
        let mut data = vec![0.0; n * n * d];
        for i in 0..n {
            let xi = &covariates[i * d_x..(i + 1) * d_x];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let xj = &covariates[j * d_x..(j + 1) * d_x];
                let at = (i * n + j) * d;
                f(xi, xj, &mut data[at..at + d]);
            }
        }
        Ok(PairwiseIndex { n, d, data })
    }

    /// Builds the table from an arbitrary function of the ordered pair.
    pub fn from_fn(n: usize, d: usize, mut f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut data = vec![0.0; n * n * d];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let at = (i * n + j) * d;
                    f(i, j, &mut data[at..at + d]);
                }
            }
        }
        PairwiseIndex { n, d, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n + j) * self.d;
        &self.data[at..at + self.d]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Observed undirected network plus node covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkData {
    n: usize,
    d_x: usize,
    adjacency: Vec<u8>,
    covariates: Vec<f64>,
}

/// The network is (nearly) empty or (nearly) complete.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degeneracy {
    pub density: f64,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "degenerate network: link density {:.6}", self.density)
    }
}

/// Density band outside which a network is flagged as degenerate.
pub const DEGENERATE_DENSITY: (f64, f64) = (0.001, 0.999);

impl NetworkData {
    /// `adjacency` is row-major `n × n`, `covariates` row-major `n × d_x`.
    pub fn new(n: usize, d_x: usize, adjacency: Vec<u8>, covariates: Vec<f64>) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(Error::input(format!("adjacency has {} entries, expected {}", adjacency.len(), n * n)));
        }
        if covariates.len() != n * d_x {
            return Err(Error::input(format!("covariates have {} entries, expected {}", covariates.len(), n * d_x)));
        }
        if let Some(bad) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("covariate of node {} is missing or non-finite", bad / d_x.max(1))));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0 {
                return Err(Error::data(format!("self-link at node {i}")));
            }
            for j in 0..n {
                let v = adjacency[i * n + j];
                if v > 1 {
                    return Err(Error::data(format!("link ({i},{j}) = {v} is not binary")));
                }
                if v != adjacency[j * n + i] {
                    return Err(Error::data(format!("link ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(NetworkData { n, d_x, adjacency, covariates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    #[inline]
    pub fn link(&self, i: usize, j: usize) -> u8 {
        self.adjacency[i * self.n + j]
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn adjacency(&self) -> &[u8] {
        &self.adjacency
    }

    /// Fraction of linked unordered pairs.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let links: usize = self.adjacency.iter().map(|&v| v as usize).sum();
        links as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        let density = self.density();
        let (lo, hi) = DEGENERATE_DENSITY;
        (density < lo || density > hi).then_some(Degeneracy { density })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
