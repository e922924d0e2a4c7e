//! Synthetic worlds for the NTU link formation model with uniform shocks,
//! together with the closed-form linking probabilities they imply.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, Direction, NetworkData, PairwiseIndex, PairwiseTransform};

/// Marginal support of the node covariates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    /// Every coordinate Uniform[-0.5, 0.5].
    AllContinuous,
    /// First coordinate uniform on {0, 1}, the rest continuous.
    Binary1,
    /// First coordinate binary, second on the 11-point grid, the rest continuous.
    Binary1Discrete2,
    /// Every coordinate on the 101-point grid {-0.5, -0.49, ..., 0.5}.
    AllDiscrete101,
    /// Every coordinate on the 11-point grid {-0.5, -0.4, ..., 0.5}.
    AllDiscrete11,
}

impl SupportKind {
    pub const ALL: [SupportKind; 5] = [
        SupportKind::AllContinuous,
        SupportKind::Binary1,
        SupportKind::Binary1Discrete2,
        SupportKind::AllDiscrete101,
        SupportKind::AllDiscrete11,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SupportKind::AllContinuous => "all_continuous",
            SupportKind::Binary1 => "binary1",
            SupportKind::Binary1Discrete2 => "binary1_discrete2",
            SupportKind::AllDiscrete101 => "all_discrete101",
            SupportKind::AllDiscrete11 => "all_discrete11",
        }
    }

    fn draw_coord(self, h: usize, rng: &mut impl Rng) -> f64 {
        match (self, h) {
            (SupportKind::Binary1 | SupportKind::Binary1Discrete2, 0) => rng.gen_range(0..2u32) as f64,
            (SupportKind::Binary1Discrete2, 1) | (SupportKind::AllDiscrete11, _) => {
                (rng.gen_range(0..=10i32) - 5) as f64 / 10.0
            }
            (SupportKind::AllDiscrete101, _) => (rng.gen_range(0..=100i32) - 50) as f64 / 100.0,
            _ => rng.gen::<f64>() - 0.5,
        }
    }
}

/// Rule generating the unobserved degree heterogeneity `A_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Heterogeneity {
    /// `A_i = c1 * X_{i,1} + c2 * ξ_i` with `ξ_i ~ Uniform[-0.5, 0.5]`.
    Linear { c1: f64, c2: f64 },
    /// `A_i = c1 * X_{i,1} + sd * Z_i` with standard normal `Z_i`.
    /// Simulation only: there is no closed-form popularity function.
    Gaussian { c1: f64, sd: f64 },
}

impl Heterogeneity {
    /// `(corr, 1 - corr)` mixing used by the Monte Carlo designs.
    pub fn corr(corr: f64) -> Self {
        Heterogeneity::Linear { c1: corr, c2: 1.0 - corr }
    }
}

/// Full description of a synthetic world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub d: usize,
    /// Direction of the index coefficient.
    pub beta0: Direction,
    /// The index is `W'(index_scale * beta0)`; only the direction is identified.
    #[serde(default = "one")]
    pub index_scale: f64,
    pub support: SupportKind,
    pub heterogeneity: Heterogeneity,
    pub w: PairwiseTransform,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl DgpConfig {
    /// The identified-set design: `d = 3`, index coefficient `(1,1,1)/6`,
    /// `A_i = (X_{i,1} + ξ_i)/4`.
    pub fn identified_set_design(support: SupportKind, n: usize, seed: u64) -> Self {
        DgpConfig {
            n,
            d: 3,
            beta0: Direction::equal_weights(3),
            index_scale: 3f64.sqrt() / 6.0,
            support,
            heterogeneity: Heterogeneity::Linear { c1: 0.25, c2: 0.25 },
            w: PairwiseTransform::symmetric_abs_diff(3),
            seed,
        }
    }

    /// The Monte Carlo design: continuous covariates, `β0 = (1,...,1)/sqrt(d)`,
    /// `A_i = corr X_{i,1} + (1 - corr) ξ_i`.
    pub fn monte_carlo_design(n: usize, d: usize, corr: f64, seed: u64) -> Self {
        DgpConfig {
            n,
            d,
            beta0: Direction::equal_weights(d),
            index_scale: 1.0,
            support: SupportKind::AllContinuous,
            heterogeneity: Heterogeneity::corr(corr),
            w: PairwiseTransform::symmetric_abs_diff(d),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::config("d must be at least 2"));
        }
        if self.n < 4 {
            return Err(Error::config("n must be at least 4 (tetrads need four distinct nodes)"));
        }
        if self.beta0.dim() != self.d || self.w.d != self.d {
            return Err(Error::config(format!(
                "dimension mismatch: d = {}, beta0 has {}, w has {}",
                self.d,
                self.beta0.dim(),
                self.w.d
            )));
        }
        if !(self.index_scale.is_finite() && self.index_scale > 0.0) {
            return Err(Error::config("index_scale must be positive"));
        }
        let ok = match self.heterogeneity {
            Heterogeneity::Linear { c1, c2 } => c1.is_finite() && c2.is_finite(),
            Heterogeneity::Gaussian { c1, sd } => c1.is_finite() && sd.is_finite() && sd >= 0.0,
        };
        if !ok {
            return Err(Error::config("heterogeneity coefficients must be finite"));
        }
        self.w.resolve()?;
        Ok(())
    }

    /// `index_scale * beta0`.
    pub fn index_coefficients(&self) -> Vec<f64> {
        self.beta0.as_slice().iter().map(|b| b * self.index_scale).collect()
    }

    fn stream_seed(&self, tag: u64) -> u64 {
        splitmix64(self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Seed of the node-level draws.
    pub fn population_seed(&self) -> u64 {
        self.stream_seed(1)
    }

    /// Seed of the pair-level shocks.
    pub fn network_seed(&self) -> u64 {
        self.stream_seed(2)
    }

    /// Seed of the tetrad plan.
    pub fn plan_seed(&self) -> u64 {
        self.stream_seed(3)
    }
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Node-level draws: observed covariates and unobserved heterogeneity.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub d_x: usize,
    /// Row-major `n × d_x`.
    pub covariates: Vec<f64>,
    pub heterogeneity: Vec<f64>,
    /// Seed the draws came from.
    pub seed: u64,
}

impl Population {
    pub fn n(&self) -> usize {
        self.heterogeneity.len()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d_x..(i + 1) * self.d_x]
    }

    /// Draws the population from the configuration's own seed stream.
    pub fn draw(cfg: &DgpConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.population_seed();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pop = draw_population(cfg, &mut rng);
        pop.seed = seed;
        Ok(pop)
    }
}

/// Draws `n` i.i.d. nodes `(X_i, A_i)`.
pub fn draw_population(cfg: &DgpConfig, rng: &mut impl Rng) -> Population {
    let (n, d) = (cfg.n, cfg.d);
    let mut covariates = Vec::with_capacity(n * d);
    let mut heterogeneity = Vec::with_capacity(n);
    for _ in 0..n {
        let start = covariates.len();
        for h in 0..d {
            covariates.push(cfg.support.draw_coord(h, rng));
        }
        let x1 = covariates[start];
        let a = match cfg.heterogeneity {
            Heterogeneity::Linear { c1, c2 } => c1 * x1 + c2 * (rng.gen::<f64>() - 0.5),
            Heterogeneity::Gaussian { c1, sd } => c1 * x1 + sd * rng.sample::<f64, _>(StandardNormal),
        };
        heterogeneity.push(a);
    }
    Population { d_x: d, covariates, heterogeneity, seed: 0 }
}

/// Forms the network with shocks keyed by `(network_seed, i, j)`.
pub fn form_network(pop: &Population, cfg: &DgpConfig) -> Result<NetworkData> {
    form_network_with(pop, cfg, cfg.network_seed(), false)
}

/// `shared_shock` forces `ε_ij = ε_ji`; used to check the TU special case.
pub(crate) fn form_network_with(
    pop: &Population,
    cfg: &DgpConfig,
    network_seed: u64,
    shared_shock: bool,
) -> Result<NetworkData> {
    cfg.validate()?;
    let n = pop.n();
    let table = PairwiseIndex::from_transform(&pop.covariates, pop.d_x, &cfg.w)?;
    let adjacency = draw_links(&table, &cfg.index_coefficients(), &pop.heterogeneity, network_seed, shared_shock);
    let net = NetworkData::new(n, pop.d_x, adjacency, pop.covariates.clone())?;
    if let Some(deg) = net.degeneracy() {
        log::warn!("{deg}; the index scale may be mis-specified");
    }
    Ok(net)
}

/// Mutual-consent links `1{β'W_ij + a_i > ε_ij} · 1{β'W_ji + a_j > ε_ji}`
/// with uniform shocks keyed by `(network_seed, i, j)`; `coef` is the scaled
/// index direction.
pub fn draw_links(
    table: &PairwiseIndex,
    coef: &[f64],
    heterogeneity: &[f64],
    network_seed: u64,
    shared_shock: bool,
) -> Vec<u8> {
    let n = table.n();
    let mut adjacency = vec![0u8; n * n];
    let mut rng = ChaCha8Rng::seed_from_u64(network_seed);
    for i in 0..n {
        rng.set_stream(i as u64);
        for j in i + 1..n {
            // four 32-bit words per pair: two f64 shocks
            rng.set_word_pos(4 * j as u128);
            let eps_ij: f64 = rng.gen();
            let eps_ji: f64 = if shared_shock { eps_ij } else { rng.gen() };
            let u_ij = dot(table.get(i, j), coef) + heterogeneity[i];
            let u_ji = dot(table.get(j, i), coef) + heterogeneity[j];
            let link = (u_ij > eps_ij && u_ji > eps_ji) as u8;
            adjacency[i * n + j] = link;
            adjacency[j * n + i] = link;
        }
    }
    adjacency
}

#[inline]
fn clamp01(t: f64) -> f64 {
    t.clamp(0.0, 1.0)
}

/// Linking probability under uniform shocks:
/// `clamp(δ_ij + a_i) * clamp(δ_ji + a_j)`.
pub fn link_probability_exact(delta_ij: f64, delta_ji: f64, a_i: f64, a_j: f64) -> f64 {
    clamp01(delta_ij + a_i) * clamp01(delta_ji + a_j)
}

/// `E[clamp(m + c ξ, 0, 1)]` for `ξ ~ Uniform[-0.5, 0.5]`.
pub fn expected_clamp_uniform(m: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-12 {
        return clamp01(m);
    }
    // antiderivative of clamp(y, 0, 1)
    fn big_f(y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y <= 1.0 {
            0.5 * y * y
        } else {
            y - 0.5
        }
    }
    let (lo, hi) = (m - 0.5 * c, m + 0.5 * c);
    if lo >= 1.0 {
        return 1.0;
    }
    if hi <= 0.0 {
        return 0.0;
    }
    clamp01((big_f(hi) - big_f(lo)) / c)
}

/// Exact popularity `ρ_i(x) = E[D_ik | X_k = x]` of a node with covariates
/// `x_i` and heterogeneity `a_i`, integrating over `A_k` and the shocks.
pub fn rho_exact(x_i: &[f64], a_i: f64, x: &[f64], cfg: &DgpConfig) -> Result<f64> {
    let f = cfg.w.resolve()?;
    let mut buf = vec![0.0; cfg.d];
    let coef = cfg.index_coefficients();
    f(x_i, x, &mut buf);
    let delta_i = dot(&buf, &coef);
    f(x, x_i, &mut buf);
    let delta_k = dot(&buf, &coef);
    rho_from_indices(delta_i, delta_k, a_i, x[0], cfg)
}

/// [`rho_exact`] given the two indices `w(x_i,x)'β` and `w(x,x_i)'β`.
pub(crate) fn rho_from_indices(delta_i: f64, delta_k: f64, a_i: f64, x1: f64, cfg: &DgpConfig) -> Result<f64> {
    match cfg.heterogeneity {
        Heterogeneity::Linear { c1, c2 } => {
            Ok(clamp01(delta_i + a_i) * expected_clamp_uniform(delta_k + c1 * x1, c2))
        }
        Heterogeneity::Gaussian { .. } => Err(Error::config(
            "exact popularity requires the linear uniform heterogeneity rule",
        )),
    }
}

/// `n × n` matrix with entry `(i, k) = ρ_i(X_k)` (diagonal left at 0).
pub fn rho_exact_matrix(pop: &Population, cfg: &DgpConfig) -> Result<Vec<f64>> {
    let n = pop.n();
    let table = PairwiseIndex::from_transform(&pop.covariates, pop.d_x, &cfg.w)?;
    let coef = cfg.index_coefficients();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            if i != k {
                let delta_i = dot(table.get(i, k), &coef);
                let delta_k = dot(table.get(k, i), &coef);
                out[i * n + k] = rho_from_indices(delta_i, delta_k, pop.heterogeneity[i], pop.x(k)[0], cfg)?;
            }
        }
    }
    Ok(out)
}
