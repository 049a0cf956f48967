//! Stochastic-volatility updates: auxiliary-mixture forward-filter
//! backward-sampler for the log-variance paths and conjugate/Metropolis
//! updates for the AR(1) parameters.
//!
//! The observation `ln r_t^2 = h_t + ln chi^2_1` is linearized with the
//! ten-component Gaussian mixture of Omori, Chib, Shephard & Nakajima
//! (2007); draws are used without mixture re-weighting, the standard
//! practice. A single-site random-walk sampler targeting the exact
//! conditional is kept as a verification oracle.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as NormalDist};

/// Mixture weights for the log chi-square(1) approximation.
const MIX_PROB: [f64; 10] = [
    0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
];
const MIX_MEAN: [f64; 10] = [
    1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384,
    -14.65000,
];
const MIX_VAR: [f64; 10] = [
    0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
];

/// Offset inside the log so an exactly-zero residual stays finite.
const LOG_RESID_OFFSET: f64 = 1e-10;

/// Priors for the per-unit volatility parameters: Gaussian on the level,
/// Beta on `(phi + 1) / 2`, inverse-gamma on the innovation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvPriors {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
}

impl Default for SvPriors {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 10.0,
            phi_a: 20.0,
            phi_b: 1.5,
            sigma2_shape: 2.5,
            sigma2_scale: 0.25,
        }
    }
}

impl SvPriors {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.mu_var > 0.0)
            || !(self.phi_a > 0.0)
            || !(self.phi_b > 0.0)
            || !(self.sigma2_shape > 0.0)
            || !(self.sigma2_scale > 0.0)
        {
            return Err(crate::Error::Config(
                "volatility priors need positive variance/shape/scale parameters".into(),
            ));
        }
        Ok(())
    }
}

/// One unit's AR(1) volatility parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma2: f64,
}

/// Redraw one unit's log-variance path conditional on its structural
/// residuals (`None` marks periods without an observation, e.g. the
/// conditioned-upon first period of the lagged specification).
pub fn sample_h_column<R: Rng + ?Sized>(
    rng: &mut R,
    resid: &[Option<f64>],
    h: &mut [f64],
    params: SvParams,
) {
    let t_len = h.len();
    assert_eq!(resid.len(), t_len);
    if t_len == 0 {
        return;
    }
    let SvParams { mu, phi, sigma2 } = params;
    let stationary_var = sigma2 / (1.0 - phi * phi);

    // transformed observations and mixture indicators given the current path
    let mut obs = vec![None; t_len];
    for t in 0..t_len {
        if let Some(r) = resid[t] {
            let y_star = (r * r + LOG_RESID_OFFSET).ln();
            let k = sample_mixture_indicator(rng, y_star - h[t]);
            obs[t] = Some((y_star - MIX_MEAN[k], MIX_VAR[k]));
        }
    }

    // forward filter
    let mut filt_mean = vec![0.0; t_len];
    let mut filt_var = vec![0.0; t_len];
    for t in 0..t_len {
        let (pred_mean, pred_var) = if t == 0 {
            (mu, stationary_var)
        } else {
            (
                mu + phi * (filt_mean[t - 1] - mu),
                phi * phi * filt_var[t - 1] + sigma2,
            )
        };
        match obs[t] {
            Some((z, v)) => {
                let gain = pred_var / (pred_var + v);
                filt_mean[t] = pred_mean + gain * (z - pred_mean);
                filt_var[t] = (1.0 - gain) * pred_var;
            }
            None => {
                filt_mean[t] = pred_mean;
                filt_var[t] = pred_var;
            }
        }
    }

    // backward sampling
    let z: f64 = StandardNormal.sample(rng);
    h[t_len - 1] = filt_mean[t_len - 1] + filt_var[t_len - 1].sqrt() * z;
    for t in (0..t_len - 1).rev() {
        let prec = 1.0 / filt_var[t].max(f64::MIN_POSITIVE) + phi * phi / sigma2;
        let mean = (filt_mean[t] / filt_var[t].max(f64::MIN_POSITIVE)
            + phi * (h[t + 1] - mu * (1.0 - phi)) / sigma2)
            / prec;
        let z: f64 = StandardNormal.sample(rng);
        h[t] = mean + z / prec.sqrt();
    }
}

fn sample_mixture_indicator<R: Rng + ?Sized>(rng: &mut R, centered: f64) -> usize {
    // posterior over components for one observation of ln chi^2_1
    let mut logw = [0.0f64; 10];
    let mut max = f64::NEG_INFINITY;
    for k in 0..10 {
        let d = centered - MIX_MEAN[k];
        logw[k] = MIX_PROB[k].ln() - 0.5 * (MIX_VAR[k].ln() + d * d / MIX_VAR[k]);
        max = max.max(logw[k]);
    }
    let mut total = 0.0;
    for w in &mut logw {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut u = rng.random::<f64>() * total;
    for (k, w) in logw.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return k;
        }
    }
    9
}

/// Conjugate/Metropolis update of `(mu, phi, sigma2)` for one unit given its
/// log-variance path. An empty path returns exact prior draws (the
/// conditionals carry no information).
pub fn sample_sv_params<R: Rng + ?Sized>(
    rng: &mut R,
    h: &[f64],
    current: SvParams,
    priors: &SvPriors,
) -> SvParams {
    if h.is_empty() {
        let mu = priors.mu_mean
            + priors.mu_var.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let phi_tilde = BetaDist::new(priors.phi_a, priors.phi_b)
            .expect("validated beta prior")
            .sample(rng);
        let phi = bound_phi(2.0 * phi_tilde - 1.0);
        let gamma = Gamma::new(priors.sigma2_shape, 1.0 / priors.sigma2_scale)
            .expect("validated gamma prior")
            .sample(rng);
        let sigma2 = 1.0 / gamma;
        return SvParams { mu, phi, sigma2 };
    }

    let t_len = h.len() as f64;
    let mut state = current;

    // mu | phi, sigma2, h (Gaussian)
    {
        let phi = state.phi;
        let s2 = state.sigma2;
        let mut prec = 1.0 / priors.mu_var + (1.0 - phi * phi) / s2;
        let mut num = priors.mu_mean / priors.mu_var + (1.0 - phi * phi) * h[0] / s2;
        for t in 1..h.len() {
            prec += (1.0 - phi) * (1.0 - phi) / s2;
            num += (1.0 - phi) * (h[t] - phi * h[t - 1]) / s2;
        }
        let mean = num / prec;
        let z: f64 = StandardNormal.sample(rng);
        state.mu = mean + z / prec.sqrt();
    }

    // sigma2 | mu, phi, h (inverse gamma)
    {
        let phi = state.phi;
        let mu = state.mu;
        let mut ss = (1.0 - phi * phi) * (h[0] - mu) * (h[0] - mu);
        for t in 1..h.len() {
            let e = h[t] - mu - phi * (h[t - 1] - mu);
            ss += e * e;
        }
        let shape = priors.sigma2_shape + 0.5 * t_len;
        let scale = priors.sigma2_scale + 0.5 * ss;
        let gamma = Gamma::new(shape, 1.0 / scale).expect("positive inverse-gamma parameters");
        state.sigma2 = 1.0 / gamma.sample(rng);
    }

    // phi | mu, sigma2, h (Metropolis with a truncated-normal proposal)
    {
        let mu = state.mu;
        let s2 = state.sigma2;
        let log_target = |phi: f64| -> f64 {
            if phi.abs() >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let tilde = 0.5 * (phi + 1.0);
            let mut lt = (priors.phi_a - 1.0) * tilde.ln() + (priors.phi_b - 1.0) * (1.0 - tilde).ln();
            lt += 0.5 * (1.0 - phi * phi).ln()
                - 0.5 * (1.0 - phi * phi) * (h[0] - mu) * (h[0] - mu) / s2;
            for t in 1..h.len() {
                let e = h[t] - mu - phi * (h[t - 1] - mu);
                lt -= 0.5 * e * e / s2;
            }
            lt
        };
        const STEP: f64 = 0.1;
        if let Some(proposal) = truncated_normal(rng, state.phi, STEP, -1.0, 1.0) {
            let log_ratio = log_target(proposal) - log_target(state.phi)
                + truncated_normal_log_pdf(state.phi, proposal, STEP, -1.0, 1.0)
                - truncated_normal_log_pdf(proposal, state.phi, STEP, -1.0, 1.0);
            if rng.random::<f64>().ln() < log_ratio {
                state.phi = bound_phi(proposal);
            }
        }
    }
    state
}

fn bound_phi(phi: f64) -> f64 {
    phi.clamp(-1.0 + 1e-12, 1.0 - 1e-12)
}

fn truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
) -> Option<f64> {
    for _ in 0..1000 {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sd * z;
        if x > lower && x < upper {
            return Some(x);
        }
    }
    None
}

fn truncated_normal_log_pdf(x: f64, mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    let dist = NormalDist::new(mean, sd).expect("valid normal");
    let mass = dist.cdf(upper) - dist.cdf(lower);
    dist.ln_pdf(x) - mass.ln()
}

/// Verification oracle: one sweep of single-site random-walk Metropolis on
/// the exact conditional of the log-variance path. Returns the number of
/// accepted site moves.
pub fn single_site_mh_sweep<R: Rng + ?Sized>(
    rng: &mut R,
    resid: &[Option<f64>],
    h: &mut [f64],
    params: SvParams,
    step_sd: f64,
) -> usize {
    let t_len = h.len();
    let SvParams { mu, phi, sigma2 } = params;
    let mut accepts = 0;
    for t in 0..t_len {
        let current = h[t];
        let z: f64 = StandardNormal.sample(rng);
        let proposal = current + step_sd * z;
        let mut delta = 0.0;
        if let Some(r) = resid[t] {
            let r2 = r * r + LOG_RESID_OFFSET;
            delta += -0.5 * (proposal - current) - 0.5 * r2 * ((-proposal).exp() - (-current).exp());
        }
        // state terms
        let prior_term = |value: f64| -> f64 {
            let mut lp = 0.0;
            if t == 0 {
                lp -= 0.5 * (1.0 - phi * phi) * (value - mu) * (value - mu) / sigma2;
            } else {
                let e = value - mu - phi * (h[t - 1] - mu);
                lp -= 0.5 * e * e / sigma2;
            }
            if t + 1 < t_len {
                let e = h[t + 1] - mu - phi * (value - mu);
                lp -= 0.5 * e * e / sigma2;
            }
            lp
        };
        delta += prior_term(proposal) - prior_term(current);
        if rng.random::<f64>().ln() < delta {
            h[t] = proposal;
            accepts += 1;
        }
    }
    accepts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixture_probabilities_sum_to_one() {
        let total: f64 = MIX_PROB.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "mixture weights sum to {total}");
    }

    #[test]
    fn degenerate_state_equation_collapses_to_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = SvParams {
            mu: -1.5,
            phi: 0.0,
            sigma2: 1e-10,
        };
        let resid = vec![Some(0.2); 40];
        let mut h = vec![0.0; 40];
        sample_h_column(&mut rng, &resid, &mut h, params);
        for &v in &h {
            assert!((v - params.mu).abs() < 1e-3, "path {v} escaped mu");
        }
    }

    #[test]
    fn sampled_paths_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = SvParams {
            mu: 0.0,
            phi: 0.95,
            sigma2: 0.1,
        };
        let resid: Vec<Option<f64>> = (0..50)
            .map(|i| Some(if i % 7 == 0 { 0.0 } else { 0.01 * i as f64 }))
            .collect();
        let mut h = vec![0.0; 50];
        for _ in 0..500 {
            sample_h_column(&mut rng, &resid, &mut h, params);
            assert!(h.iter().all(|v| v.is_finite() && v.exp() > 0.0));
        }
    }

    #[test]
    fn empty_path_returns_prior_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let priors = SvPriors::default();
        let current = SvParams {
            mu: 5.0,
            phi: 0.0,
            sigma2: 1.0,
        };
        let mut mus = Vec::new();
        for _ in 0..4000 {
            let s = sample_sv_params(&mut rng, &[], current, &priors);
            assert!(s.phi.abs() < 1.0);
            assert!(s.sigma2 > 0.0);
            mus.push(s.mu);
        }
        let m = stats::mean(&mus);
        assert!((m - priors.mu_mean).abs() < 0.2, "prior mu mean {m}");
    }

    #[test]
    fn constant_path_centers_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let priors = SvPriors::default();
        let h = vec![-2.0; 400];
        let mut current = SvParams {
            mu: 0.0,
            phi: 0.5,
            sigma2: 0.05,
        };
        let mut mus = Vec::new();
        for _ in 0..2000 {
            current = sample_sv_params(&mut rng, &h, current, &priors);
            mus.push(current.mu);
        }
        let m = stats::mean(&mus[500..]);
        assert!((m - (-2.0)).abs() < 0.1, "mu posterior mean {m}");
    }

    #[test]
    fn phi_recovered_from_simulated_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let truth = SvParams {
            mu: -1.0,
            phi: 0.9,
            sigma2: 0.2,
        };
        let t_len = 2000;
        let mut h = vec![0.0; t_len];
        h[0] = truth.mu;
        for t in 1..t_len {
            let z: f64 = StandardNormal.sample(&mut rng);
            h[t] = truth.mu + truth.phi * (h[t - 1] - truth.mu) + truth.sigma2.sqrt() * z;
        }
        let priors = SvPriors::default();
        let mut state = SvParams {
            mu: 0.0,
            phi: 0.5,
            sigma2: 1.0,
        };
        let mut phis = Vec::new();
        for i in 0..4000 {
            state = sample_sv_params(&mut rng, &h, state, &priors);
            if i >= 1000 {
                phis.push(state.phi);
            }
        }
        let m = stats::mean(&phis);
        assert!((m - truth.phi).abs() < 0.05, "phi posterior mean {m}");
        assert!(phis.iter().all(|p| p.abs() < 1.0));
    }
}
