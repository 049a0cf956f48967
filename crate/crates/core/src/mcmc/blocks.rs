//! Individual posterior-sampling blocks: the conjugate Gaussian regression
//! update, the inverse-gamma variance update, the independent MH move on the
//! simplex weights, and the slice move on a single network exposure.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{term_indices, LagMode, RegressionDesign, StructuralParams, VarianceSpec};
use crate::networks::MultilayerPanel;

use super::slice::{slice_sample, SliceConfig};
use super::PriorConfig;

/// Boundary guard for simplex draws.
pub const SIMPLEX_CLAMP: f64 = 1e-12;
/// Exposures live strictly inside (-1, 1).
pub const RHO_BOUND: f64 = 1.0 - 1e-12;

/// Dirichlet draw via normalized gammas, clamped away from the boundary and
/// renormalized.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive Dirichlet concentration")
                .sample(rng)
        })
        .collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        let u = 1.0 / draws.len() as f64;
        draws.iter_mut().for_each(|v| *v = u);
        return draws;
    }
    for v in &mut draws {
        *v = (*v / sum).clamp(SIMPLEX_CLAMP, 1.0 - SIMPLEX_CLAMP);
    }
    let sum: f64 = draws.iter().sum();
    for v in &mut draws {
        *v /= sum;
    }
    draws
}

pub fn dirichlet_log_pdf(x: &[f64], concentration: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), concentration.len());
    let total: f64 = concentration.iter().sum();
    let mut lp = ln_gamma(total);
    for (&xi, &a) in x.iter().zip(concentration) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        lp += (a - 1.0) * xi.ln() - ln_gamma(a);
    }
    lp
}

/// Log prior density (up to a constant) of an exposure under the
/// transformed beta prior: `(rho + 1) / 2 ~ Beta(a, b)`.
pub fn rho_log_prior(rho: f64, a: f64, b: f64) -> f64 {
    if rho.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let tilde = 0.5 * (rho + 1.0);
    (a - 1.0) * tilde.ln() + (b - 1.0) * (1.0 - tilde).ln()
}

/// Exact conjugate draw of the regression block: the posterior is Gaussian
/// with precision `prior_prec + sum_t X_t' Sigma_t^-1 X_t`.
pub fn sample_beta<R: Rng + ?Sized>(
    rng: &mut R,
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    params: &StructuralParams,
    variance: &VarianceSpec,
    prior: &PriorConfig,
    lag: LagMode,
) -> Result<DVector<f64>> {
    let terms = term_indices(data.t_len(), lag);
    let wy = composite_responses(data, panel, &params.delta, &terms);
    sample_beta_with(rng, data, &terms, &wy, &params.rho, variance, prior)
}

/// `wy[i]` holds `W*_{st} y_{rt}` for term `i`; the caller keeps it cached
/// across blocks.
pub(crate) fn sample_beta_with<R: Rng + ?Sized>(
    rng: &mut R,
    data: &RegressionDesign,
    terms: &[(usize, usize)],
    wy: &[DVector<f64>],
    rho: &DVector<f64>,
    variance: &VarianceSpec,
    prior: &PriorConfig,
) -> Result<DVector<f64>> {
    let n = data.n();
    let k_beta = data.k_beta();
    let blocks = k_beta / n;
    let intercept = data.includes_intercept();

    let prior_chol = Cholesky::new(prior.sigma_beta.clone())
        .ok_or_else(|| Error::Numerical("prior covariance for beta is not positive definite".into()))?;
    let mut precision = prior_chol.inverse();
    let mut rhs = &precision * &prior.mu_beta;

    // X_t has the block structure (I_n, f_t' (x) I_n): the Gram matrix is
    // diagonal within each block pair, so accumulate per (block, block, j).
    let mut g = vec![0.0f64; blocks];
    for (i, &(rt, st)) in terms.iter().enumerate() {
        for (b, gb) in g.iter_mut().enumerate() {
            *gb = block_factor(data, intercept, st, b);
        }
        for j in 0..n {
            let inv_var = 1.0 / variance.at(rt, j);
            let ay = data.responses()[(rt, j)] - rho[j] * wy[i][j];
            for b1 in 0..blocks {
                let base = g[b1] * inv_var;
                rhs[b1 * n + j] += base * ay;
                for b2 in b1..blocks {
                    let v = base * g[b2];
                    precision[(b1 * n + j, b2 * n + j)] += v;
                    if b2 > b1 {
                        precision[(b2 * n + j, b1 * n + j)] += v;
                    }
                }
            }
        }
    }

    let chol = Cholesky::new(precision.clone())
        .or_else(|| {
            // symmetrize and retry once
            let sym = (&precision + precision.transpose()) * 0.5;
            Cholesky::new(sym)
        })
        .ok_or_else(|| {
            Error::Numerical("posterior precision for beta is not positive definite".into())
        })?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(k_beta, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    // beta = mean + L^-T z draws from N(mean, P^-1)
    let spread = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed in beta draw".into()))?;
    Ok(mean + spread)
}

fn block_factor(data: &RegressionDesign, intercept: bool, st: usize, block: usize) -> f64 {
    if intercept {
        if block == 0 {
            1.0
        } else {
            data.factors()[(st, block - 1)]
        }
    } else {
        data.factors()[(st, block)]
    }
}

/// Structural residuals `A_t y_t - X_t beta`, one row per likelihood term.
pub(crate) fn structural_residuals(
    data: &RegressionDesign,
    terms: &[(usize, usize)],
    wy: &[DVector<f64>],
    rho: &DVector<f64>,
    xb: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = data.n();
    let mut resid = DMatrix::zeros(terms.len(), n);
    for (i, &(rt, _)) in terms.iter().enumerate() {
        for j in 0..n {
            resid[(i, j)] = data.responses()[(rt, j)] - rho[j] * wy[i][j] - xb[(rt, j)];
        }
    }
    resid
}

/// Static-mode variance update under the improper `1/sigma^2` prior:
/// `sigma2_j ~ InvGamma(T_eff / 2, ssr_j / 2)`.
pub fn sample_sigma2<R: Rng + ?Sized>(
    rng: &mut R,
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    params: &StructuralParams,
    lag: LagMode,
) -> Result<DVector<f64>> {
    let terms = term_indices(data.t_len(), lag);
    let wy = composite_responses(data, panel, &params.delta, &terms);
    let mut xb = DMatrix::zeros(data.t_len(), data.n());
    data.xbeta_into(&params.beta, &mut xb);
    let resid = structural_residuals(data, &terms, &wy, &params.rho, &xb);
    sample_sigma2_with(rng, &resid)
}

pub(crate) fn sample_sigma2_with<R: Rng + ?Sized>(
    rng: &mut R,
    resid: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let t_eff = resid.nrows();
    if t_eff < 1 {
        return Err(Error::Config(
            "variance update needs at least one effective observation".into(),
        ));
    }
    let n = resid.ncols();
    let mut out = DVector::zeros(n);
    for j in 0..n {
        let ssr: f64 = resid.column(j).iter().map(|r| r * r).sum();
        if ssr <= 0.0 {
            return Err(Error::Numerical(format!(
                "residuals for unit {j} are identically zero; variance posterior is degenerate"
            )));
        }
        let shape = t_eff as f64 / 2.0;
        let scale = 2.0 / ssr; // Gamma(shape, scale) with rate ssr/2
        let g = Gamma::new(shape, scale)
            .expect("positive inverse-gamma parameters")
            .sample(rng);
        out[j] = 1.0 / g;
    }
    Ok(out)
}

/// One independent-MH move on the simplex weights with a Dirichlet proposal.
/// `loglik` evaluates the likelihood as a function of the weights with all
/// other blocks fixed; return `-inf` for invalid proposals to reject them.
pub fn sample_delta_imh<R: Rng + ?Sized>(
    rng: &mut R,
    current: &[f64],
    prior_c: &[f64],
    proposal_c: &[f64],
    mut loglik: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, bool)> {
    let proposal = sample_dirichlet(rng, proposal_c);
    let lf_current = loglik(current)? + dirichlet_log_pdf(current, prior_c);
    let lf_proposal = loglik(&proposal)? + dirichlet_log_pdf(&proposal, prior_c);
    let lq_current = dirichlet_log_pdf(current, proposal_c);
    let lq_proposal = dirichlet_log_pdf(&proposal, proposal_c);
    let log_ratio = (lf_proposal + lq_current) - (lf_current + lq_proposal);
    // NaN (e.g. -inf minus -inf) compares false and rejects
    if rng.random::<f64>().ln() < log_ratio {
        Ok((proposal, true))
    } else {
        Ok((current.to_vec(), false))
    }
}

/// Slice-sampler move on one exposure, targeting likelihood times the
/// transformed beta prior on (-1, 1).
pub fn sample_rho_slice<R: Rng + ?Sized>(
    rng: &mut R,
    current: f64,
    a_rho: f64,
    b_rho: f64,
    cfg: &SliceConfig,
    mut loglik: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut failure: Option<Error> = None;
    let drawn = slice_sample(rng, current, -RHO_BOUND, RHO_BOUND, cfg, |x| {
        match loglik(x) {
            Ok(v) => v + rho_log_prior(x, a_rho, b_rho),
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    drawn
}

/// `W*_{st} y_{rt}` per likelihood term.
pub(crate) fn composite_responses(
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    delta: &[f64],
    terms: &[(usize, usize)],
) -> Vec<DVector<f64>> {
    let n = data.n();
    let mut w = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(terms.len());
    for &(rt, st) in terms {
        panel.composite_into(delta, st, &mut w);
        let y = data.response(rt);
        out.push(&w * y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_draws_live_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let d = sample_dirichlet(&mut rng, &[0.5, 2.0, 7.0]);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn imh_ratio_is_one_when_proposal_equals_target() {
        // flat likelihood and proposal == prior: every move accepted
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let c = vec![2.0, 3.0];
        let mut accepts = 0;
        let mut current = vec![0.5, 0.5];
        for _ in 0..2000 {
            let (next, accepted) =
                sample_delta_imh(&mut rng, &current, &c, &c, |_| Ok(0.0)).unwrap();
            current = next;
            accepts += usize::from(accepted);
        }
        assert_eq!(accepts, 2000);
    }

    #[test]
    fn rho_slice_uniform_under_flat_prior_and_likelihood() {
        // Beta(1,1) prior is uniform on (-1, 1)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = SliceConfig::default();
        let mut x = 0.0;
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            x = sample_rho_slice(&mut rng, x, 1.0, 1.0, &cfg, |_| Ok(0.0)).unwrap();
            draws.push(x);
        }
        assert!(draws.iter().all(|v| v.abs() < 1.0));
        let m = stats::mean(&draws);
        assert!(m.abs() < 0.03, "uniform mean {m}");
        let v = stats::variance(&draws);
        assert_relative_eq!(v, 1.0 / 3.0, max_relative = 0.08);
    }

    #[test]
    fn sigma2_scale_equivariance_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let resid = DMatrix::from_fn(50, 2, |t, j| 0.1 * (t as f64 + 1.0) * (j as f64 + 1.0));
        let doubled = &resid * 2.0;
        let mut base = Vec::new();
        let mut scaled = Vec::new();
        for _ in 0..3000 {
            base.push(sample_sigma2_with(&mut rng, &resid).unwrap()[0]);
            scaled.push(sample_sigma2_with(&mut rng, &doubled).unwrap()[0]);
        }
        assert!(base.iter().all(|&v| v > 0.0));
        // doubling residuals quadruples the posterior scale
        let ratio = stats::mean(&scaled) / stats::mean(&base);
        assert_relative_eq!(ratio, 4.0, max_relative = 0.1);
    }

    #[test]
    fn sigma2_mean_matches_inverse_gamma_oracle() {
        // InvGamma(T/2, ssr/2) has mean ssr / (T - 2)
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let t_len = 200;
        let resid = DMatrix::from_fn(t_len, 1, |t, _| ((t % 5) as f64 - 2.0) * 0.3 + 0.05);
        let ssr: f64 = resid.column(0).iter().map(|r| r * r).sum();
        let expected = ssr / (t_len as f64 - 2.0);
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            draws.push(sample_sigma2_with(&mut rng, &resid).unwrap()[0]);
        }
        assert_relative_eq!(stats::mean(&draws), expected, max_relative = 0.05);
    }

    #[test]
    fn sigma2_rejects_empty_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let resid = DMatrix::zeros(0, 2);
        assert!(sample_sigma2_with(&mut rng, &resid).is_err());
    }
}
