//! First-stage series estimation of each node's popularity function with an
//! additive quadratic spline basis (one knot per coordinate at the median).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::NetworkData;

/// Singular values below `RANK_TOL * σ_max` are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// `{1} ∪ {x_h, x_h², [x_h - m_h]₊²}` for every coordinate `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineBasis {
    d_x: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn with_knots(knots: Vec<f64>) -> Self {
        SplineBasis { d_x: knots.len(), knots }
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn size(&self) -> usize {
        1 + 3 * self.d_x
    }

    /// Writes the basis functions evaluated at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (h, (&v, &m)) in x.iter().zip(&self.knots).enumerate() {
            let hinge = (v - m).max(0.0);
            out[1 + 3 * h] = v;
            out[2 + 3 * h] = v * v;
            out[3 + 3 * h] = hinge * hinge;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Places one knot at the (lower) sample median of each covariate column.
pub fn build_basis(covariates: &[f64], d_x: usize) -> Result<SplineBasis> {
    if d_x == 0 || covariates.len() % d_x != 0 {
        return Err(Error::input("covariate matrix shape is inconsistent"));
    }
    let n = covariates.len() / d_x;
    let need = 2 * (1 + 3 * d_x);
    if n < need {
        return Err(Error::input(format!("{n} rows are too few for a spline basis in {d_x} covariates (need {need})")));
    }
    let knots = (0..d_x)
        .map(|h| {
            let mut col: Vec<f64> = (0..n).map(|i| covariates[i * d_x + h]).collect();
            col.sort_by(f64::total_cmp);
            col[(n - 1) / 2]
        })
        .collect();
    Ok(SplineBasis { d_x, knots })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitDiagnostics {
    pub residual_ss: f64,
    pub rank: usize,
    /// The design was rank deficient and the minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Fitted popularity function of one node.
#[derive(Clone, Debug)]
pub struct RhoEstimate {
    pub node: usize,
    pub coefficients: Vec<f64>,
    pub basis: Arc<SplineBasis>,
    pub diagnostics: FitDiagnostics,
}

impl RhoEstimate {
    /// Unclamped series value at `x`.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.basis.size()];
        self.basis.eval_into(x, &mut buf);
        buf.iter().zip(&self.coefficients).map(|(b, c)| b * c).sum()
    }
}

/// `ρ̂_i(x)`, clamped to `[0, 1]`.
pub fn predict_rho(est: &RhoEstimate, x: &[f64]) -> f64 {
    est.predict_raw(x).clamp(0.0, 1.0)
}

/// Minimum-norm least squares of `y` on the basis evaluated at the rows of `xs`.
pub fn fit_series(basis: &SplineBasis, xs: &[&[f64]], y: &[f64]) -> Result<(Vec<f64>, FitDiagnostics)> {
    let p = basis.size();
    let m = xs.len();
    if m != y.len() {
        return Err(Error::input("response and design lengths differ"));
    }
    if m < p {
        return Err(Error::input(format!("{m} observations cannot identify {p} series terms")));
    }
    let mut design = DMatrix::<f64>::zeros(m, p);
    let mut row = vec![0.0; p];
    for (r, x) in xs.iter().enumerate() {
        basis.eval_into(x, &mut row);
        for (c, v) in row.iter().enumerate() {
            design[(r, c)] = *v;
        }
    }
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (RANK_TOL * smax).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let coef = svd.solve(&rhs, eps).map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    let resid = &design * &coef - rhs;
    let diagnostics = FitDiagnostics { residual_ss: resid.norm_squared(), rank, rank_deficient: rank < p };
    Ok((coef.iter().copied().collect(), diagnostics))
}

/// Regresses `D_ik` on the basis at `X_k` over all `k ≠ i`.
pub fn fit_rho(i: usize, net: &NetworkData, basis: &Arc<SplineBasis>) -> Result<RhoEstimate> {
    if basis.d_x() != net.d_x() {
        return Err(Error::input("basis and network covariate dimensions differ"));
    }
    let xs: Vec<&[f64]> = (0..net.n()).filter(|&k| k != i).map(|k| net.x(k)).collect();
    let y: Vec<f64> = (0..net.n()).filter(|&k| k != i).map(|k| net.link(i, k) as f64).collect();
    let (coefficients, diagnostics) = fit_series(basis, &xs, &y)?;
    if diagnostics.rank_deficient {
        log::debug!("node {i}: rank-deficient first stage (rank {})", diagnostics.rank);
    }
    Ok(RhoEstimate { node: i, coefficients, basis: Arc::clone(basis), diagnostics })
}

/// Fits every node in parallel.
pub fn fit_all(net: &NetworkData, basis: &Arc<SplineBasis>) -> Result<Vec<RhoEstimate>> {
    (0..net.n()).into_par_iter().map(|i| fit_rho(i, net, basis)).collect()
}

/// `n × n` matrix with entry `(i, k) = ρ̂_i(X_k)`.
pub fn rho_hat_matrix(estimates: &[RhoEstimate], net: &NetworkData) -> Vec<f64> {
    let n = net.n();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).zip(estimates).for_each(|(row, est)| {
        for (k, v) in row.iter_mut().enumerate() {
            *v = predict_rho(est, net.x(k));
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_size_and_layout() {
        let basis = SplineBasis::with_knots(vec![0.0, 0.1, -0.1]);
        assert_eq!(basis.size(), 10);
        let row = basis.eval(&[0.5, 0.0, -0.3]);
        assert_eq!(row, vec![1.0, 0.5, 0.25, 0.25, 0.0, 0.0, 0.0, -0.3, 0.09, 0.0]);
    }

    #[test]
    fn lower_median_knot() {
        let cov: Vec<f64> = [0.0, 0.0, 1.0, 1.0].iter().copied().cycle().take(8).collect();
        let basis = build_basis(&cov, 1).unwrap();
        assert_eq!(basis.knots(), &[0.0]);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(build_basis(&[0.0; 15], 3), Err(Error::Input(_))));
    }

    #[test]
    fn uniform_knots_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov: Vec<f64> = (0..30_000).map(|_| rng.gen::<f64>() - 0.5).collect();
        let basis = build_basis(&cov, 3).unwrap();
        assert!(basis.knots().iter().all(|k| k.abs() < 0.02));
    }

    fn network(n: usize, link: impl Fn(usize, usize) -> u8, seed: u64) -> NetworkData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov: Vec<f64> = (0..n * 2).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut adj = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    adj[i * n + j] = link(i.min(j), i.max(j));
                }
            }
        }
        NetworkData::new(n, 2, adj, cov).unwrap()
    }

    #[test]
    fn constant_links_give_constant_fit() {
        let net = network(40, |_, _| 1, 1);
        let basis = Arc::new(build_basis(net.covariates(), 2).unwrap());
        let est = fit_rho(3, &net, &basis).unwrap();
        for k in 0..40 {
            assert!((est.predict_raw(net.x(k)) - 1.0).abs() < 1e-10);
        }
        assert_eq!(predict_rho(&est, &[0.4, -0.4]), 1.0);
    }

    #[test]
    fn exact_recovery_inside_the_sieve_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 200;
        let cov: Vec<f64> = (0..n * 3).map(|_| rng.gen::<f64>() - 0.5).collect();
        let basis = build_basis(&cov, 3).unwrap();
        let truth: Vec<f64> = (0..basis.size()).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let xs: Vec<&[f64]> = cov.chunks(3).collect();
        let y: Vec<f64> = xs.iter().map(|x| basis.eval(x).iter().zip(&truth).map(|(b, c)| b * c).sum()).collect();
        let (coef, diag) = fit_series(&basis, &xs, &y).unwrap();
        assert!(!diag.rank_deficient);
        for (x, target) in xs.iter().zip(&y) {
            let fitted: f64 = basis.eval(x).iter().zip(&coef).map(|(b, c)| b * c).sum();
            assert!((fitted - target).abs() < 1e-8);
        }
    }

    #[test]
    fn clamps_negative_predictions() {
        let basis = Arc::new(SplineBasis::with_knots(vec![0.0]));
        let est = RhoEstimate {
            node: 0,
            coefficients: vec![-0.03, 0.0, 0.0, 0.0],
            basis,
            diagnostics: FitDiagnostics { residual_ss: 0.0, rank: 4, rank_deficient: false },
        };
        assert!((est.predict_raw(&[0.2]) + 0.03).abs() < 1e-15);
        assert_eq!(predict_rho(&est, &[0.2]), 0.0);
    }

    #[test]
    fn in_sample_mean_equals_degree_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs: Vec<f64> = (0..60 * 60).map(|_| rng.gen()).collect();
        let net = network(60, |i, j| (probs[i * 60 + j] < 0.3) as u8, 9);
        let basis = Arc::new(build_basis(net.covariates(), 2).unwrap());
        for i in [0, 17, 59] {
            let est = fit_rho(i, &net, &basis).unwrap();
            let others: Vec<usize> = (0..60).filter(|&k| k != i).collect();
            let mean_pred: f64 = others.iter().map(|&k| est.predict_raw(net.x(k))).sum::<f64>() / 59.0;
            let share: f64 = others.iter().map(|&k| net.link(i, k) as f64).sum::<f64>() / 59.0;
            assert!((mean_pred - share).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_covariate_is_flagged_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 50;
        let cov: Vec<f64> = (0..n).flat_map(|_| [rng.gen_range(0..2) as f64, rng.gen::<f64>() - 0.5]).collect();
        let basis = build_basis(&cov, 2).unwrap();
        let xs: Vec<&[f64]> = cov.chunks(2).collect();
        let y: Vec<f64> = (0..n).map(|k| (k % 3 == 0) as u8 as f64).collect();
        let (coef, diag) = fit_series(&basis, &xs, &y).unwrap();
        assert!(diag.rank_deficient);
        assert!(coef.iter().all(|c| c.is_finite()));
    }
}
