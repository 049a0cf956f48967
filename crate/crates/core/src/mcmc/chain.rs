//! The full posterior sweep and chain driver.
//!
//! Sweep order: regression block, variance block (static variances or
//! log-variance paths), layer weights (independent MH), one slice update per
//! exposure in fixed index order, then the volatility parameters. A single
//! chain is strictly sequential; reproducibility comes from one seeded RNG
//! consumed in fixed order.
//!
//! The exposure conditionals exploit the rank-one structure of the
//! relational matrix in one coordinate: changing `rho_j` only moves row `j`
//! of `A_t`, so by the matrix determinant lemma `det A_t` is linear in
//! `rho_j` and the residual quadratic form is quadratic. One factorization
//! per (period, coordinate) then prices every slice evaluation at O(T).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::LuWorkspace;
use crate::model::{
    term_indices, LagMode, RegressionDesign, StaticVariance, StructuralParams, VarianceMode,
    VarianceSpec, VolatilityState,
};
use crate::networks::MultilayerPanel;
use crate::stats;

use super::blocks::{
    dirichlet_log_pdf, rho_log_prior, sample_beta_with, sample_dirichlet,
    sample_sigma2_with, structural_residuals, RHO_BOUND,
};
use super::slice::slice_sample;
use super::sv::{sample_h_column, sample_sv_params, SvParams};
use super::{ess_map, param_names, ChainConfig, ChainOutput, ModelState, PriorConfig};

const LN_2PI: f64 = 1.8378770664093453;
const TUNING_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) struct Sweep<'a> {
    data: &'a RegressionDesign,
    panel: &'a MultilayerPanel,
    prior: &'a PriorConfig,
    config: &'a ChainConfig,
    terms: Vec<(usize, usize)>,
    ys: Vec<DVector<f64>>,
    pub state: ModelState,
    /// W*_{st} at the current delta, one per term.
    composites: Vec<DMatrix<f64>>,
    /// W*_{st} y_{rt} at the current delta, one per term.
    wy: Vec<DVector<f64>>,
    /// X_t beta at the current beta (T x n).
    xb: DMatrix<f64>,
    lu: LuWorkspace,
    scratch_w: DMatrix<f64>,
    scratch_vec: DVector<f64>,
    pub delta_accepts: usize,
    pub delta_moves: usize,
}

impl<'a> Sweep<'a> {
    pub fn new(
        data: &'a RegressionDesign,
        panel: &'a MultilayerPanel,
        prior: &'a PriorConfig,
        config: &'a ChainConfig,
        variance_mode: VarianceMode,
        lag: LagMode,
    ) -> Result<Self> {
        let n = data.n();
        let t_len = data.t_len();
        let terms = term_indices(t_len, lag);
        let ys: Vec<DVector<f64>> = terms.iter().map(|&(rt, _)| data.response(rt)).collect();
        let state = initial_state(data, prior, variance_mode);
        let mut sweep = Self {
            data,
            panel,
            prior,
            config,
            terms,
            ys,
            state,
            composites: vec![DMatrix::zeros(n, n); 0],
            wy: Vec::new(),
            xb: DMatrix::zeros(t_len, n),
            lu: LuWorkspace::new(n),
            scratch_w: DMatrix::zeros(n, n),
            scratch_vec: DVector::zeros(n),
            delta_accepts: 0,
            delta_moves: 0,
        };
        sweep.composites = vec![DMatrix::zeros(n, n); sweep.terms.len()];
        sweep.refresh_composites();
        sweep.refresh_xb();
        Ok(sweep)
    }

    fn refresh_composites(&mut self) {
        for (i, &(_, st)) in self.terms.iter().enumerate() {
            self.panel
                .composite_into(&self.state.params.delta, st, &mut self.composites[i]);
        }
        self.wy = self
            .composites
            .iter()
            .zip(&self.ys)
            .map(|(w, y)| w * y)
            .collect();
    }

    fn refresh_xb(&mut self) {
        self.data.xbeta_into(&self.state.params.beta, &mut self.xb);
    }

    /// Full log-likelihood at the current state, optionally overriding the
    /// layer weights.
    pub fn log_likelihood(&mut self, delta_override: Option<&[f64]>) -> Result<f64> {
        let n = self.data.n();
        let rho = &self.state.params.rho;
        let mut total = 0.0;
        for (i, &(rt, st)) in self.terms.iter().enumerate() {
            let w = match delta_override {
                Some(delta) => {
                    self.panel.composite_into(delta, st, &mut self.scratch_w);
                    &self.scratch_w
                }
                None => &self.composites[i],
            };
            self.scratch_vec.gemv(1.0, w, &self.ys[i], 0.0);
            let mut quad = 0.0;
            let mut log_det_sigma = 0.0;
            for j in 0..n {
                let r = self.ys[i][j] - rho[j] * self.scratch_vec[j] - self.xb[(rt, j)];
                let s2 = self.state.variance.at(rt, j);
                quad += r * r / s2;
                log_det_sigma += s2.ln();
            }
            for r in 0..n {
                let rr = rho[r];
                for c in 0..n {
                    self.lu.m[(r, c)] = if r == c { 1.0 } else { -rr * w[(r, c)] };
                }
            }
            self.lu.factor();
            let log_det = self
                .lu
                .log_abs_det()
                .ok_or(Error::SingularRelationalMatrix { t: st, iteration: None })?;
            total += log_det - 0.5 * log_det_sigma - 0.5 * quad;
        }
        Ok(total - 0.5 * (n * self.terms.len()) as f64 * LN_2PI)
    }

    /// Coefficients of the conditional of `rho_j`: per term,
    /// `det A(x) = c0 + c1 x` and the row-`j` residual `m - s x` with
    /// inverse variance `inv_var`. All other likelihood terms are constant
    /// in `rho_j`.
    fn rho_coefficients(&mut self, j: usize, iteration: Option<usize>) -> Result<RhoCoeffs> {
        let n = self.data.n();
        let rho = &self.state.params.rho;
        let rho_j = rho[j];
        let len = self.terms.len();
        let mut coeffs = RhoCoeffs {
            c0: Vec::with_capacity(len),
            c1: Vec::with_capacity(len),
            m: Vec::with_capacity(len),
            s: Vec::with_capacity(len),
            inv_var: Vec::with_capacity(len),
        };
        for (i, &(rt, st)) in self.terms.iter().enumerate() {
            let w = &self.composites[i];
            for r in 0..n {
                let rr = rho[r];
                for c in 0..n {
                    self.lu.m[(r, c)] = if r == c { 1.0 } else { -rr * w[(r, c)] };
                }
            }
            if !self.lu.factor() {
                return Err(Error::SingularRelationalMatrix { t: st, iteration });
            }
            let det = self.lu.det();
            self.lu.solve_unit_into(j, &mut self.scratch_vec);
            // g = (row j of W*) . (A^-1 e_j)
            let mut g = 0.0;
            for m in 0..n {
                g += w[(j, m)] * self.scratch_vec[m];
            }
            coeffs.c0.push(det * (1.0 + rho_j * g));
            coeffs.c1.push(-det * g);
            coeffs.m.push(self.ys[i][j] - self.xb[(rt, j)]);
            coeffs.s.push(self.wy[i][j]);
            coeffs.inv_var.push(1.0 / self.state.variance.at(rt, j));
        }
        Ok(coeffs)
    }

    /// One full sweep. `iteration` tags numerical aborts.
    pub fn iterate<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        proposal_concentration: &[f64],
        iteration: usize,
    ) -> Result<()> {
        let n = self.data.n();

        // 1. regression block
        let beta = sample_beta_with(
            rng,
            self.data,
            &self.terms,
            &self.wy,
            &self.state.params.rho,
            &self.state.variance,
            self.prior,
        )?;
        self.state.params.beta = beta;
        self.refresh_xb();

        // 2. variance block
        match &mut self.state.variance {
            VarianceSpec::Static(_) => {
                let resid = structural_residuals(
                    self.data,
                    &self.terms,
                    &self.wy,
                    &self.state.params.rho,
                    &self.xb,
                );
                let sigma2 = sample_sigma2_with(rng, &resid)?;
                self.state.variance = VarianceSpec::Static(StaticVariance { sigma2 });
            }
            VarianceSpec::StochasticVolatility(_) => {
                let resid = structural_residuals(
                    self.data,
                    &self.terms,
                    &self.wy,
                    &self.state.params.rho,
                    &self.xb,
                );
                let t_len = self.data.t_len();
                let VarianceSpec::StochasticVolatility(vol) = &mut self.state.variance else {
                    unreachable!()
                };
                let mut resid_by_time = vec![None; t_len];
                let mut col = vec![0.0; t_len];
                for j in 0..n {
                    for (i, &(rt, _)) in self.terms.iter().enumerate() {
                        resid_by_time[rt] = Some(resid[(i, j)]);
                    }
                    for t in 0..t_len {
                        col[t] = vol.h[(t, j)];
                    }
                    sample_h_column(
                        rng,
                        &resid_by_time,
                        &mut col,
                        SvParams {
                            mu: vol.mu_h[j],
                            phi: vol.phi_h[j],
                            sigma2: vol.sigma2_h[j],
                        },
                    );
                    for t in 0..t_len {
                        vol.h[(t, j)] = col[t];
                    }
                    resid_by_time.fill(None);
                }
            }
        }

        // 3. layer weights (independent MH)
        let lf_current = self.log_likelihood(None).map_err(|e| tag(e, iteration))?;
        let current = self.state.params.delta.clone();
        let proposal = sample_dirichlet(rng, proposal_concentration);
        let lf_proposal = match self.log_likelihood(Some(&proposal)) {
            Ok(v) => v,
            Err(Error::SingularRelationalMatrix { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        let log_ratio = lf_proposal + dirichlet_log_pdf(&proposal, &self.prior.dirichlet_c)
            + dirichlet_log_pdf(&current, proposal_concentration)
            - lf_current
            - dirichlet_log_pdf(&current, &self.prior.dirichlet_c)
            - dirichlet_log_pdf(&proposal, proposal_concentration);
        self.delta_moves += 1;
        if rng.random::<f64>().ln() < log_ratio {
            self.state.params.delta = proposal;
            self.delta_accepts += 1;
            self.refresh_composites();
        }

        // 4. exposures, fixed index order
        let slice_cfg = self.config.slice_config();
        for j in 0..n {
            let coeffs = self.rho_coefficients(j, Some(iteration))?;
            let a_rho = self.prior.a_rho;
            let b_rho = self.prior.b_rho;
            let current = self.state.params.rho[j];
            let next = slice_sample(rng, current, -RHO_BOUND, RHO_BOUND, &slice_cfg, |x| {
                coeffs.log_density(x) + rho_log_prior(x, a_rho, b_rho)
            })
            .map_err(|e| tag(e, iteration))?;
            self.state.params.rho[j] = next;
        }

        // 5. volatility parameters see the freshest paths
        if let VarianceSpec::StochasticVolatility(vol) = &mut self.state.variance {
            let t_len = self.data.t_len();
            let mut col = vec![0.0; t_len];
            for j in 0..n {
                for t in 0..t_len {
                    col[t] = vol.h[(t, j)];
                }
                let updated = sample_sv_params(
                    rng,
                    &col,
                    SvParams {
                        mu: vol.mu_h[j],
                        phi: vol.phi_h[j],
                        sigma2: vol.sigma2_h[j],
                    },
                    &self.prior.sv,
                );
                vol.mu_h[j] = updated.mu;
                vol.phi_h[j] = updated.phi;
                vol.sigma2_h[j] = updated.sigma2;
            }
        }
        Ok(())
    }
}

fn tag(e: Error, iteration: usize) -> Error {
    match e {
        Error::SingularRelationalMatrix { t, .. } => Error::SingularRelationalMatrix {
            t,
            iteration: Some(iteration),
        },
        other => other,
    }
}

pub(crate) struct RhoCoeffs {
    c0: Vec<f64>,
    c1: Vec<f64>,
    m: Vec<f64>,
    s: Vec<f64>,
    inv_var: Vec<f64>,
}

impl RhoCoeffs {
    /// Log conditional density of the exposure (up to terms constant in it).
    pub fn log_density(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.c0.len() {
            let det = self.c0[i] + self.c1[i] * x;
            if det == 0.0 {
                return f64::NEG_INFINITY;
            }
            let r = self.m[i] - self.s[i] * x;
            acc += det.abs().ln() - 0.5 * r * r * self.inv_var[i];
        }
        acc
    }
}

fn initial_state(
    data: &RegressionDesign,
    prior: &PriorConfig,
    variance_mode: VarianceMode,
) -> ModelState {
    let n = data.n();
    let t_len = data.t_len();
    let c_total: f64 = prior.dirichlet_c.iter().sum();
    let delta: Vec<f64> = prior.dirichlet_c.iter().map(|c| c / c_total).collect();
    let col_var = |j: usize| -> f64 {
        let col: Vec<f64> = (0..t_len).map(|t| data.responses()[(t, j)]).collect();
        stats::variance(&col).max(1e-6)
    };
    let variance = match variance_mode {
        VarianceMode::Static => VarianceSpec::Static(StaticVariance {
            sigma2: DVector::from_fn(n, |j, _| col_var(j)),
        }),
        VarianceMode::StochasticVolatility => {
            let mu_h = DVector::from_fn(n, |j, _| col_var(j).ln());
            let mut h = DMatrix::zeros(t_len, n);
            for j in 0..n {
                for t in 0..t_len {
                    h[(t, j)] = mu_h[j];
                }
            }
            VarianceSpec::StochasticVolatility(VolatilityState {
                h,
                mu_h,
                phi_h: DVector::from_element(n, 0.9),
                sigma2_h: DVector::from_element(n, 0.1),
            })
        }
    };
    ModelState {
        params: StructuralParams {
            beta: prior.mu_beta.clone(),
            delta,
            rho: DVector::zeros(n),
        },
        variance,
    }
}

/// Result of the preliminary proposal-tuning run.
#[derive(Debug, Clone)]
pub struct TunedProposal {
    pub concentration: Vec<f64>,
    pub acceptance: f64,
    /// True when tuning could not improve on the prior concentration.
    pub fell_back: bool,
}

/// Preliminary short run with the prior as proposal, followed by a
/// moment-matched Dirichlet fit to the accepted weight draws, rescaled until
/// the measured acceptance leaves the degenerate regime.
pub fn tune_delta_proposal(
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    prior: &PriorConfig,
    config: &ChainConfig,
    variance_mode: VarianceMode,
    lag: LagMode,
) -> Result<TunedProposal> {
    if config.tuning_iters < 200 {
        return Err(Error::Config(format!(
            "tuning needs at least 200 iterations, got {}",
            config.tuning_iters
        )));
    }
    prior.validate(data.k_beta(), panel.layers())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ TUNING_SEED_SALT);
    let mut sweep = Sweep::new(data, panel, prior, config, variance_mode, lag)?;

    let warmup = config.tuning_iters / 5;
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(config.tuning_iters - warmup);
    for it in 0..config.tuning_iters {
        sweep.iterate(&mut rng, &prior.dirichlet_c, it)?;
        if it >= warmup {
            draws.push(sweep.state.params.delta.clone());
        }
    }
    if sweep.delta_accepts == 0 {
        log::warn!("proposal tuning: no accepted moves, falling back to the prior concentration");
        return Ok(TunedProposal {
            concentration: prior.dirichlet_c.clone(),
            acceptance: 0.0,
            fell_back: true,
        });
    }
    let Some(mut concentration) = fit_dirichlet_moments(&draws) else {
        log::warn!("proposal tuning: degenerate draws, falling back to the prior concentration");
        return Ok(TunedProposal {
            concentration: prior.dirichlet_c.clone(),
            acceptance: sweep.delta_accepts as f64 / sweep.delta_moves as f64,
            fell_back: true,
        });
    };

    // Probe the fitted proposal; broaden while acceptance is degenerate.
    let probe_iters = (config.tuning_iters / 2).max(100);
    let mut acceptance = 0.0;
    for _attempt in 0..4 {
        let before = (sweep.delta_accepts, sweep.delta_moves);
        for it in 0..probe_iters {
            sweep.iterate(&mut rng, &concentration, it)?;
        }
        let accepted = sweep.delta_accepts - before.0;
        acceptance = accepted as f64 / (sweep.delta_moves - before.1) as f64;
        if acceptance >= 0.15 {
            break;
        }
        for c in &mut concentration {
            *c *= 0.5;
        }
    }
    Ok(TunedProposal {
        concentration,
        acceptance,
        fell_back: false,
    })
}

/// Moment-matched Dirichlet: mean vector times a common precision estimated
/// from the coordinate variances.
fn fit_dirichlet_moments(draws: &[Vec<f64>]) -> Option<Vec<f64>> {
    if draws.len() < 10 {
        return None;
    }
    let d = draws[0].len();
    let mut precisions = Vec::new();
    let mut means = vec![0.0; d];
    for (i, mean) in means.iter_mut().enumerate() {
        let col: Vec<f64> = draws.iter().map(|row| row[i]).collect();
        *mean = stats::mean(&col);
        let var = stats::variance(&col);
        if var > 0.0 && *mean > 0.0 && *mean < 1.0 {
            let s = *mean * (1.0 - *mean) / var - 1.0;
            if s.is_finite() && s > 0.0 {
                precisions.push(s);
            }
        }
    }
    if precisions.is_empty() {
        return None;
    }
    precisions.sort_by(|a, b| a.partial_cmp(b).expect("finite precision estimates"));
    let s_hat = precisions[precisions.len() / 2];
    Some(means.iter().map(|m| (m * s_hat).max(1e-2)).collect())
}

/// Run the chain, streaming each retained draw to `on_draw` before it is
/// stored (the callback enables crash-consistent output files).
#[allow(clippy::too_many_arguments)]
pub fn run_chain_streaming(
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    prior: &PriorConfig,
    config: &ChainConfig,
    variance_mode: VarianceMode,
    lag: LagMode,
    mut on_draw: impl FnMut(usize, &ModelState) -> Result<()>,
) -> Result<ChainOutput> {
    let started = Instant::now();
    config.validate()?;
    prior.validate(data.k_beta(), panel.layers())?;
    if data.n() != panel.n() || data.t_len() != panel.periods() {
        return Err(Error::ShapeMismatch(format!(
            "design is T={} n={}, panel is T={} n={}",
            data.t_len(),
            data.n(),
            panel.periods(),
            panel.n()
        )));
    }
    let report = panel.validate_assumptions(None);
    if !report.passed() {
        return Err(Error::AssumptionsViolated(report));
    }

    let proposal_concentration = match &config.delta_proposal_concentration {
        Some(c) => {
            if c.len() != panel.layers() {
                return Err(Error::Config(
                    "proposal concentration length must match the layer count".into(),
                ));
            }
            c.clone()
        }
        None => tune_delta_proposal(data, panel, prior, config, variance_mode, lag)?.concentration,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sweep = Sweep::new(data, panel, prior, config, variance_mode, lag)?;
    let n_retained = (config.n_iter - config.n_burnin).div_ceil(config.thin);
    let mut draws = Vec::with_capacity(n_retained);
    let mut draw_iterations = Vec::with_capacity(n_retained);
    for it in 0..config.n_iter {
        sweep.iterate(&mut rng, &proposal_concentration, it)?;
        if it >= config.n_burnin && (it - config.n_burnin) % config.thin == 0 {
            sweep
                .state
                .validate(data.n(), panel.layers(), data.k_beta(), data.t_len())
                .map_err(|e| {
                    Error::Numerical(format!("stored draw at iteration {it} violates constraints: {e}"))
                })?;
            on_draw(it, &sweep.state)?;
            draws.push(sweep.state.clone());
            draw_iterations.push(it);
        }
    }

    let names = param_names(
        data.n(),
        panel.layers(),
        data.k_beta(),
        variance_mode,
        data.t_len(),
        config.store_h,
    );
    let core_names = param_names(
        data.n(),
        panel.layers(),
        data.k_beta(),
        variance_mode,
        data.t_len(),
        false,
    );
    let mut flat = DMatrix::zeros(draws.len(), core_names.len());
    for (i, s) in draws.iter().enumerate() {
        for (j, v) in s.flatten(false).into_iter().enumerate() {
            flat[(i, j)] = v;
        }
    }
    let ess = ess_map(&flat, &core_names, false);

    Ok(ChainOutput {
        draws,
        draw_iterations,
        param_names: names,
        delta_acceptance_rate: sweep.delta_accepts as f64 / sweep.delta_moves.max(1) as f64,
        ess,
        runtime_seconds: started.elapsed().as_secs_f64(),
        seed: config.seed,
        store_h: config.store_h,
        proposal_concentration,
        variance_mode,
    })
}

/// Tune (unless a proposal is pinned), then run the full sweep for
/// `n_iter` iterations, discarding the burn-in and keeping every
/// `thin`-th draw.
pub fn run_chain(
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    prior: &PriorConfig,
    config: &ChainConfig,
    variance_mode: VarianceMode,
    lag: LagMode,
) -> Result<ChainOutput> {
    run_chain_streaming(data, panel, prior, config, variance_mode, lag, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        log_likelihood, simulate, SimulationConfig, VarianceTruth,
    };
    use approx::assert_relative_eq;

    fn test_instance(seed: u64, variance: VarianceTruth) -> crate::model::SimulatedData {
        simulate(&SimulationConfig {
            n: 3,
            d: 2,
            t_len: 12,
            k: 1,
            includes_intercept: true,
            beta: vec![0.1, -0.2, 0.3, 0.4, 0.0, -0.1],
            delta: vec![0.4, 0.6],
            rho: vec![0.3, 0.5, 0.2],
            variance,
            sparsity: 0.7,
            lag: LagMode::Contemporaneous,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn sweep_loglik_matches_model_loglik() {
        for lag in [LagMode::Contemporaneous, LagMode::Lagged] {
            let sim = test_instance(31, VarianceTruth::Static { sigma2: vec![0.5, 1.0, 1.5] });
            let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
            let config = ChainConfig::new(5);
            let mut sweep = Sweep::new(
                &sim.design,
                &sim.panel,
                &prior,
                &config,
                VarianceMode::Static,
                lag,
            )
            .unwrap();
            // move the state off the origin
            sweep.state.params.rho = DVector::from_vec(vec![0.4, -0.3, 0.6]);
            sweep.state.params.delta = vec![0.25, 0.75];
            sweep.state.params.beta = DVector::from_fn(6, |i, _| 0.05 * i as f64 - 0.1);
            sweep.refresh_composites();
            sweep.refresh_xb();

            let have = sweep.log_likelihood(None).unwrap();
            let want = log_likelihood(
                &sim.design,
                &sim.panel,
                &sweep.state.params,
                &sweep.state.variance,
                lag,
            )
            .unwrap();
            assert_relative_eq!(have, want, epsilon = 1e-10);

            // delta override agrees with a full evaluation at that delta
            let other = vec![0.8, 0.2];
            let have = sweep.log_likelihood(Some(&other)).unwrap();
            let mut params = sweep.state.params.clone();
            params.delta = other;
            let want =
                log_likelihood(&sim.design, &sim.panel, &params, &sweep.state.variance, lag)
                    .unwrap();
            assert_relative_eq!(have, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn rho_conditional_matches_full_likelihood_differences() {
        let sim = test_instance(32, VarianceTruth::Static { sigma2: vec![0.5, 1.0, 1.5] });
        let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
        let config = ChainConfig::new(5);
        let mut sweep = Sweep::new(
            &sim.design,
            &sim.panel,
            &prior,
            &config,
            VarianceMode::Static,
            LagMode::Contemporaneous,
        )
        .unwrap();
        sweep.state.params.rho = DVector::from_vec(vec![0.4, -0.3, 0.6]);
        sweep.state.params.beta = DVector::from_fn(6, |i, _| 0.03 * i as f64);
        sweep.refresh_composites();
        sweep.refresh_xb();

        for j in 0..3 {
            let coeffs = sweep.rho_coefficients(j, None).unwrap();
            for &(x1, x2) in &[(0.1, -0.5), (0.7, 0.2), (-0.9, 0.9)] {
                let cond_diff = coeffs.log_density(x1) - coeffs.log_density(x2);
                let mut p1 = sweep.state.params.clone();
                p1.rho[j] = x1;
                let mut p2 = sweep.state.params.clone();
                p2.rho[j] = x2;
                let full_diff = log_likelihood(
                    &sim.design,
                    &sim.panel,
                    &p1,
                    &sweep.state.variance,
                    LagMode::Contemporaneous,
                )
                .unwrap()
                    - log_likelihood(
                        &sim.design,
                        &sim.panel,
                        &p2,
                        &sweep.state.variance,
                        LagMode::Contemporaneous,
                    )
                    .unwrap();
                assert_relative_eq!(cond_diff, full_diff, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn chains_are_reproducible() {
        let sim = test_instance(33, VarianceTruth::Static { sigma2: vec![1.0, 1.0, 1.0] });
        let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
        let mut config = ChainConfig::new(99);
        config.n_iter = 60;
        config.n_burnin = 20;
        config.tuning_iters = 200;
        let a = run_chain(
            &sim.design,
            &sim.panel,
            &prior,
            &config,
            VarianceMode::Static,
            LagMode::Contemporaneous,
        )
        .unwrap();
        let b = run_chain(
            &sim.design,
            &sim.panel,
            &prior,
            &config,
            VarianceMode::Static,
            LagMode::Contemporaneous,
        )
        .unwrap();
        assert_eq!(a.draws.len(), b.draws.len());
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert_eq!(x, y);
        }
        assert_eq!(a.delta_acceptance_rate, b.delta_acceptance_rate);
    }

    #[test]
    fn constraints_hold_on_every_draw() {
        let sim = test_instance(34, VarianceTruth::Static { sigma2: vec![1.0, 1.0, 1.0] });
        let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
        let mut config = ChainConfig::new(4);
        config.n_iter = 80;
        config.n_burnin = 10;
        config.tuning_iters = 200;
        let out = run_chain(
            &sim.design,
            &sim.panel,
            &prior,
            &config,
            VarianceMode::Static,
            LagMode::Contemporaneous,
        )
        .unwrap();
        for s in &out.draws {
            let sum: f64 = s.params.delta.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(s.params.delta.iter().all(|&v| v >= 0.0));
            assert!(s.params.rho.iter().all(|r| r.abs() < 1.0));
            match &s.variance {
                VarianceSpec::Static(v) => assert!(v.sigma2.iter().all(|&x| x > 0.0)),
                VarianceSpec::StochasticVolatility(v) => {
                    assert!(v.sigma2_h.iter().all(|&x| x > 0.0))
                }
            }
        }
    }

    #[test]
    fn sv_chain_runs_and_stores_paths() {
        let sim = test_instance(
            35,
            VarianceTruth::StochasticVolatility {
                mu_h: vec![-1.0, -1.5, -0.5],
                phi_h: vec![0.9, 0.8, 0.7],
                sigma2_h: vec![0.1, 0.2, 0.1],
            },
        );
        let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
        let mut config = ChainConfig::new(6);
        config.n_iter = 40;
        config.n_burnin = 10;
        config.tuning_iters = 200;
        config.store_h = true;
        let out = run_chain(
            &sim.design,
            &sim.panel,
            &prior,
            &config,
            VarianceMode::StochasticVolatility,
            LagMode::Contemporaneous,
        )
        .unwrap();
        assert!(out.param_names.iter().any(|n| n == "h_0_0"));
        let flat = out.flattened();
        assert_eq!(flat.ncols(), out.param_names.len());
        assert!(flat.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn refuses_assumption_violations() {
        let sim = test_instance(36, VarianceTruth::Static { sigma2: vec![1.0, 1.0, 1.0] });
        // duplicate layer 0 into layer 1 at every period: violates A2
        let mats: Vec<Vec<DMatrix<f64>>> = vec![
            (0..sim.panel.periods())
                .map(|t| sim.panel.snapshot(0, t).weights.clone())
                .collect(),
            (0..sim.panel.periods())
                .map(|t| sim.panel.snapshot(0, t).weights.clone())
                .collect(),
        ];
        let bad_panel = MultilayerPanel::from_matrices(mats).unwrap();
        let prior = PriorConfig::default_for(sim.design.k_beta(), 2);
        let config = ChainConfig::new(1);
        let err = run_chain(
            &sim.design,
            &bad_panel,
            &prior,
            &config,
            VarianceMode::Static,
            LagMode::Contemporaneous,
        )
        .unwrap_err();
        assert!(matches!(err, Error::AssumptionsViolated(_)));
    }
}
