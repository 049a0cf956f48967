//! Structural model: relational matrices, the exact log-likelihood, the
//! series expansion of the reduced form, and a synthetic-data generator for
//! posterior-recovery studies.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, LuWorkspace};
use crate::networks::{validate_simplex, MultilayerPanel};

/// Variances below this floor raise instead of silently flushing to zero.
pub const VARIANCE_FLOOR: f64 = 1e-300;

const LN_2PI: f64 = 1.8378770664093453;

/// Whether the relational matrix and covariates enter at the response's own
/// period or one period earlier (the forecasting-oriented variant). Under
/// `Lagged` the first observation is conditioned upon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    Contemporaneous,
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    Static,
    StochasticVolatility,
}

/// Covariates and responses on a shared panel calendar.
///
/// The period-`t` regression matrix is `X_t = (I_n, f_t' (x) I_n)` (the
/// intercept block present only when `includes_intercept`), so that
/// `X_t beta = alpha_0 + B f_t` with `beta = (alpha_0', vec(B)')'` stacked
/// column-major. `k_beta = n (k + 1)` with the intercept block.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDesign {
    factors: DMatrix<f64>,
    responses: DMatrix<f64>,
    includes_intercept: bool,
}

impl RegressionDesign {
    pub fn new(
        factors: DMatrix<f64>,
        responses: DMatrix<f64>,
        includes_intercept: bool,
    ) -> Result<Self> {
        if factors.nrows() != responses.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "factors have {} rows, responses {}",
                factors.nrows(),
                responses.nrows()
            )));
        }
        if responses.nrows() < 2 {
            return Err(Error::ShapeMismatch("a design needs at least T = 2 periods".into()));
        }
        if factors.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::constraint("design contains missing or non-finite values"));
        }
        Ok(Self {
            factors,
            responses,
            includes_intercept,
        })
    }

    pub fn t_len(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n(&self) -> usize {
        self.responses.ncols()
    }

    pub fn k(&self) -> usize {
        self.factors.ncols()
    }

    pub fn includes_intercept(&self) -> bool {
        self.includes_intercept
    }

    pub fn k_beta(&self) -> usize {
        let blocks = self.k() + usize::from(self.includes_intercept);
        self.n() * blocks
    }

    pub fn factors(&self) -> &DMatrix<f64> {
        &self.factors
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn response(&self, t: usize) -> DVector<f64> {
        self.responses.row(t).transpose()
    }

    /// Fill `out` (T x n) with the rows `X_t beta`.
    pub fn xbeta_into(&self, beta: &DVector<f64>, out: &mut DMatrix<f64>) {
        let n = self.n();
        let k = self.k();
        let offset = if self.includes_intercept { n } else { 0 };
        debug_assert_eq!(beta.len(), self.k_beta());
        for t in 0..self.t_len() {
            for j in 0..n {
                let mut acc = if self.includes_intercept { beta[j] } else { 0.0 };
                for m in 0..k {
                    acc += self.factors[(t, m)] * beta[offset + m * n + j];
                }
                out[(t, j)] = acc;
            }
        }
    }

    /// Dense `X_t` (n x k_beta), mostly for the conjugate regression block.
    pub fn design_matrix(&self, t: usize) -> DMatrix<f64> {
        let n = self.n();
        let k = self.k();
        let mut x = DMatrix::zeros(n, self.k_beta());
        let offset = if self.includes_intercept {
            for j in 0..n {
                x[(j, j)] = 1.0;
            }
            n
        } else {
            0
        };
        for m in 0..k {
            let f = self.factors[(t, m)];
            for j in 0..n {
                x[(j, offset + m * n + j)] = f;
            }
        }
        x
    }

    /// Stable flattened coefficient names: `beta_0 ...` ordered as
    /// (intercept block, then one block per factor).
    pub fn beta_names(&self) -> Vec<String> {
        (0..self.k_beta()).map(|i| format!("beta_{i}")).collect()
    }
}

/// Structural coefficients: regression vector, simplex layer weights, and
/// per-unit network exposures in (-1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub beta: DVector<f64>,
    pub delta: Vec<f64>,
    pub rho: DVector<f64>,
}

impl StructuralParams {
    pub fn validate(&self, n: usize, d: usize, k_beta: usize) -> Result<()> {
        if self.beta.len() != k_beta {
            return Err(Error::ShapeMismatch(format!(
                "beta has {} entries, design implies {k_beta}",
                self.beta.len()
            )));
        }
        if self.rho.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "rho has {} entries, cross-section has {n}",
                self.rho.len()
            )));
        }
        validate_simplex(&self.delta, d)?;
        for (j, &r) in self.rho.iter().enumerate() {
            if !(r.abs() < 1.0) {
                return Err(Error::constraint(format!("rho[{j}] = {r} outside (-1, 1)")));
            }
        }
        Ok(())
    }
}

/// Constant diagonal innovation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticVariance {
    pub sigma2: DVector<f64>,
}

impl StaticVariance {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.sigma2.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "sigma2 has {} entries, cross-section has {n}",
                self.sigma2.len()
            )));
        }
        for (j, &s) in self.sigma2.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::constraint(format!("sigma2[{j}] = {s} must be positive")));
            }
            if s < VARIANCE_FLOOR {
                return Err(Error::Numerical(format!(
                    "sigma2[{j}] = {s:e} underflows the {VARIANCE_FLOOR:e} floor"
                )));
            }
        }
        Ok(())
    }
}

/// Log-variance paths with stationary AR(1) dynamics per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityState {
    /// T x n matrix of log-variances.
    pub h: DMatrix<f64>,
    pub mu_h: DVector<f64>,
    pub phi_h: DVector<f64>,
    pub sigma2_h: DVector<f64>,
}

impl VolatilityState {
    pub fn validate(&self, t_len: usize, n: usize) -> Result<()> {
        if self.h.nrows() != t_len || self.h.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "h is {}x{}, expected {t_len}x{n}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.mu_h.len() != n || self.phi_h.len() != n || self.sigma2_h.len() != n {
            return Err(Error::ShapeMismatch("volatility parameter vectors must have length n".into()));
        }
        for j in 0..n {
            if !(self.phi_h[j].abs() < 1.0) {
                return Err(Error::constraint(format!(
                    "phi_h[{j}] = {} outside (-1, 1)",
                    self.phi_h[j]
                )));
            }
            if !(self.sigma2_h[j] > 0.0) {
                return Err(Error::constraint(format!(
                    "sigma2_h[{j}] = {} must be positive",
                    self.sigma2_h[j]
                )));
            }
        }
        Ok(())
    }
}

/// Innovation variance specification: constant or stochastic volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarianceSpec {
    Static(StaticVariance),
    StochasticVolatility(VolatilityState),
}

impl VarianceSpec {
    pub fn mode(&self) -> VarianceMode {
        match self {
            VarianceSpec::Static(_) => VarianceMode::Static,
            VarianceSpec::StochasticVolatility(_) => VarianceMode::StochasticVolatility,
        }
    }

    pub fn validate(&self, t_len: usize, n: usize) -> Result<()> {
        match self {
            VarianceSpec::Static(s) => s.validate(n),
            VarianceSpec::StochasticVolatility(v) => v.validate(t_len, n),
        }
    }

    /// Variance of unit `j`'s innovation at the response period `t`.
    pub fn at(&self, t: usize, j: usize) -> f64 {
        match self {
            VarianceSpec::Static(s) => s.sigma2[j],
            VarianceSpec::StochasticVolatility(v) => v.h[(t, j)].exp(),
        }
    }
}

/// (response period, structural period) pairs entering the likelihood.
pub(crate) fn term_indices(t_len: usize, lag: LagMode) -> Vec<(usize, usize)> {
    match lag {
        LagMode::Contemporaneous => (0..t_len).map(|t| (t, t)).collect(),
        LagMode::Lagged => (1..t_len).map(|t| (t, t - 1)).collect(),
    }
}

/// Relational matrix `A_t = I_n - R W_t*`. Diagonal entries are exactly 1
/// because the composite network has a zero diagonal.
pub fn build_relational_matrix(
    panel: &MultilayerPanel,
    params: &StructuralParams,
    t: usize,
) -> Result<DMatrix<f64>> {
    let n = panel.n();
    validate_simplex(&params.delta, panel.layers())?;
    for (j, &r) in params.rho.iter().enumerate() {
        if !(r.abs() < 1.0) {
            return Err(Error::constraint(format!("rho[{j}] = {r} outside (-1, 1)")));
        }
    }
    let mut w = DMatrix::zeros(n, n);
    panel.composite_into(&params.delta, t, &mut w);
    let mut a = DMatrix::zeros(n, n);
    relational_from_composite(&w, &params.rho, &mut a);
    Ok(a)
}

/// `out = I - diag(rho) * w`, allocation-free.
pub(crate) fn relational_from_composite(
    w: &DMatrix<f64>,
    rho: &DVector<f64>,
    out: &mut DMatrix<f64>,
) {
    let n = w.nrows();
    for r in 0..n {
        let rr = rho[r];
        for c in 0..n {
            out[(r, c)] = if r == c { 1.0 } else { -rr * w[(r, c)] };
        }
    }
}

/// Reusable buffers for repeated likelihood evaluation.
pub(crate) struct LikelihoodWorkspace {
    pub w: DMatrix<f64>,
    pub lu: LuWorkspace,
    pub wy: DVector<f64>,
    pub y: DVector<f64>,
    pub xb: DMatrix<f64>,
}

impl LikelihoodWorkspace {
    pub fn new(n: usize, t_len: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
            lu: LuWorkspace::new(n),
            wy: DVector::zeros(n),
            y: DVector::zeros(n),
            xb: DMatrix::zeros(t_len, n),
        }
    }
}

/// Exact log-likelihood of the structural form, summing per period
/// `ln|det A| - 1/2 ln det Sigma_t - 1/2 r' Sigma_t^{-1} r` plus the
/// Gaussian constant; `Sigma_t` is constant in static mode. Under the
/// lagged specification the relational matrix and covariates shift to the
/// previous period and the first observation is conditioned upon.
pub fn log_likelihood(
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    params: &StructuralParams,
    variance: &VarianceSpec,
    lag: LagMode,
) -> Result<f64> {
    check_shapes(data, panel)?;
    params.validate(data.n(), panel.layers(), data.k_beta())?;
    variance.validate(data.t_len(), data.n())?;
    let mut ws = LikelihoodWorkspace::new(data.n(), data.t_len());
    data.xbeta_into(&params.beta, &mut ws.xb);
    log_likelihood_with(&mut ws, data, panel, params, variance, lag)
}

/// Hot-loop variant: `ws.xb` must already hold `X_t beta`.
pub(crate) fn log_likelihood_with(
    ws: &mut LikelihoodWorkspace,
    data: &RegressionDesign,
    panel: &MultilayerPanel,
    params: &StructuralParams,
    variance: &VarianceSpec,
    lag: LagMode,
) -> Result<f64> {
    let n = data.n();
    let mut total = 0.0;
    let mut n_terms = 0usize;
    for (rt, st) in term_indices(data.t_len(), lag) {
        panel.composite_into(&params.delta, st, &mut ws.w);
        for j in 0..n {
            ws.y[j] = data.responses()[(rt, j)];
        }
        ws.wy.gemv(1.0, &ws.w, &ws.y, 0.0);
        // residual r = A y - X beta, using A y = y - R (W* y)
        let mut quad = 0.0;
        let mut log_det_sigma = 0.0;
        for j in 0..n {
            let r = ws.y[j] - params.rho[j] * ws.wy[j] - ws.xb[(rt, j)];
            let s2 = variance.at(rt, j);
            if !(s2 > 0.0) {
                return Err(Error::constraint(format!(
                    "variance at (t={rt}, j={j}) is {s2}, must be positive"
                )));
            }
            if s2 < VARIANCE_FLOOR {
                return Err(Error::Numerical(format!(
                    "variance at (t={rt}, j={j}) = {s2:e} underflows the {VARIANCE_FLOOR:e} floor"
                )));
            }
            quad += r * r / s2;
            log_det_sigma += s2.ln();
        }
        relational_from_composite(&ws.w, &params.rho, &mut ws.lu.m);
        ws.lu.factor();
        let log_det_a = ws
            .lu
            .log_abs_det()
            .ok_or(Error::SingularRelationalMatrix { t: st, iteration: None })?;
        total += log_det_a - 0.5 * log_det_sigma - 0.5 * quad;
        n_terms += 1;
    }
    Ok(total - 0.5 * (n * n_terms) as f64 * LN_2PI)
}

fn check_shapes(data: &RegressionDesign, panel: &MultilayerPanel) -> Result<()> {
    if data.n() != panel.n() {
        return Err(Error::ShapeMismatch(format!(
            "design has n={}, panel has n={}",
            data.n(),
            panel.n()
        )));
    }
    if data.t_len() != panel.periods() {
        return Err(Error::ShapeMismatch(format!(
            "design has T={}, panel has T={}",
            data.t_len(),
            panel.periods()
        )));
    }
    Ok(())
}

/// Order-`L` truncation of the series expansion of the reduced-form mean:
/// direct term `X_t beta` and accumulated indirect term
/// `sum_{l=1..L} (R W_t*)^l X_t beta`.
#[derive(Debug, Clone)]
pub struct NeumannDecomposition {
    pub direct: DVector<f64>,
    pub indirect: DVector<f64>,
}

pub fn neumann_effect_decomposition(
    panel: &MultilayerPanel,
    params: &StructuralParams,
    data: &RegressionDesign,
    t: usize,
    order: usize,
) -> Result<NeumannDecomposition> {
    check_shapes(data, panel)?;
    params.validate(data.n(), panel.layers(), data.k_beta())?;
    let n = data.n();
    let mut w = DMatrix::zeros(n, n);
    panel.composite_into(&params.delta, t, &mut w);
    for r in 0..n {
        for c in 0..n {
            w[(r, c)] *= params.rho[r];
        }
    }
    let (radius, _) = spectral_radius(&w, 1e-10, 10_000);
    if radius >= 1.0 {
        return Err(Error::Divergence { t, radius });
    }
    let mut xb = DMatrix::zeros(data.t_len(), n);
    data.xbeta_into(&params.beta, &mut xb);
    let direct = xb.row(t).transpose();
    let mut indirect = DVector::zeros(n);
    let mut power = direct.clone();
    let mut next = DVector::zeros(n);
    for _ in 0..order {
        next.gemv(1.0, &w, &power, 0.0);
        indirect += &next;
        power.copy_from(&next);
    }
    Ok(NeumannDecomposition { direct, indirect })
}

// ---- synthetic data ----

/// Ground-truth variance configuration for the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum VarianceTruth {
    Static { sigma2: Vec<f64> },
    StochasticVolatility { mu_h: Vec<f64>, phi_h: Vec<f64>, sigma2_h: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub d: usize,
    pub t_len: usize,
    pub k: usize,
    pub includes_intercept: bool,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub variance: VarianceTruth,
    /// Probability of a directed edge in each generated layer.
    pub sparsity: f64,
    pub lag: LagMode,
    pub seed: u64,
}

/// Everything the generator produced, including the parameter truth for
/// recovery checks.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub design: RegressionDesign,
    pub panel: MultilayerPanel,
    pub truth: TruthRecord,
}

/// Serializable record of the generating configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TruthRecord {
    pub config: SimulationConfig,
    /// Realized volatility paths under stochastic volatility (T x n,
    /// row-major), absent in static mode.
    pub h_paths: Option<Vec<Vec<f64>>>,
}

impl PartialEq for SimulationConfig {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_string(self).ok() == serde_json::to_string(other).ok()
    }
}

const PANEL_REJECTION_CAP: usize = 1000;

pub fn simulate(config: &SimulationConfig) -> Result<SimulatedData> {
    let n = config.n;
    let d = config.d;
    let t_len = config.t_len;
    if n == 0 || d == 0 || t_len < 2 {
        return Err(Error::Config("simulation needs n >= 1, d >= 1, T >= 2".into()));
    }
    if !(config.sparsity > 0.0 && config.sparsity <= 1.0) {
        return Err(Error::Config(format!(
            "sparsity {} outside (0, 1]",
            config.sparsity
        )));
    }
    let params = StructuralParams {
        beta: DVector::from_vec(config.beta.clone()),
        delta: config.delta.clone(),
        rho: DVector::from_vec(config.rho.clone()),
    };
    let k_beta = n * (config.k + usize::from(config.includes_intercept));
    if params.beta.len() != k_beta {
        return Err(Error::Config(format!(
            "beta has {} entries, expected {k_beta}",
            params.beta.len()
        )));
    }
    validate_simplex(&params.delta, d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Networks: rejection per period so A1/A2/A4 hold by construction.
    let weight_dist = Uniform::new(0.1, 1.0).expect("valid uniform support");
    let mut layers: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(t_len); d];
    for _t in 0..t_len {
        let mut attempts = 0;
        let slice = loop {
            attempts += 1;
            if attempts > PANEL_REJECTION_CAP {
                return Err(Error::Config(format!(
                    "could not satisfy network assumptions after {PANEL_REJECTION_CAP} attempts \
                     (n={n}, d={d}, sparsity={})",
                    config.sparsity
                )));
            }
            let candidate: Vec<DMatrix<f64>> = (0..d)
                .map(|_| {
                    DMatrix::from_fn(n, n, |r, c| {
                        if r != c && rng.random::<f64>() < config.sparsity {
                            weight_dist.sample(&mut rng)
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            let a1_ok = candidate.iter().all(|m| m.iter().any(|&v| v != 0.0));
            let a2_ok = (0..d).all(|a| ((a + 1)..d).all(|b| candidate[a] != candidate[b]));
            let a4_ok = (0..n).all(|row| {
                candidate.iter().any(|m| m.row(row).iter().any(|&v| v != 0.0))
            });
            if a1_ok && a2_ok && a4_ok {
                break candidate;
            }
        };
        for (l, m) in slice.into_iter().enumerate() {
            layers[l].push(m);
        }
    }
    let panel = MultilayerPanel::from_matrices(layers)?.standard_row_normalized();

    let factors = DMatrix::from_fn(t_len, config.k, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });

    // innovation scale per (t, j), plus realized h paths in SV mode
    let mut h_paths: Option<DMatrix<f64>> = None;
    let scale_at: Box<dyn Fn(usize, usize) -> f64>;
    match &config.variance {
        VarianceTruth::Static { sigma2 } => {
            if sigma2.len() != n {
                return Err(Error::Config("sigma2 truth must have length n".into()));
            }
            let sd: Vec<f64> = sigma2.iter().map(|s| s.sqrt()).collect();
            scale_at = Box::new(move |_t, j| sd[j]);
        }
        VarianceTruth::StochasticVolatility { mu_h, phi_h, sigma2_h } => {
            if mu_h.len() != n || phi_h.len() != n || sigma2_h.len() != n {
                return Err(Error::Config("volatility truth vectors must have length n".into()));
            }
            let mut h = DMatrix::zeros(t_len, n);
            for j in 0..n {
                let stationary_sd = (sigma2_h[j] / (1.0 - phi_h[j] * phi_h[j])).sqrt();
                let innov_sd = sigma2_h[j].sqrt();
                let z: f64 = StandardNormal.sample(&mut rng);
                h[(0, j)] = mu_h[j] + stationary_sd * z;
                for t in 1..t_len {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    h[(t, j)] = mu_h[j] + phi_h[j] * (h[(t - 1, j)] - mu_h[j]) + innov_sd * z;
                }
            }
            let h_clone = h.clone();
            h_paths = Some(h);
            scale_at = Box::new(move |t, j| (0.5 * h_clone[(t, j)]).exp());
        }
    }

    // responses: y_t = A^{-1} (X beta + eps)
    let mut responses = DMatrix::zeros(t_len, n);
    let mut xb = DMatrix::zeros(t_len, n);
    {
        // factors are final; reuse the design machinery for X_t beta
        let probe = RegressionDesign::new(factors.clone(), responses.clone(), config.includes_intercept)?;
        probe.xbeta_into(&params.beta, &mut xb);
    }
    let mut w = DMatrix::zeros(n, n);
    let mut lu = LuWorkspace::new(n);
    let mut rhs = DVector::zeros(n);
    for t in 0..t_len {
        let struct_t = match config.lag {
            LagMode::Contemporaneous => t,
            // the first observation seeds the lagged recursion
            LagMode::Lagged => t.saturating_sub(1),
        };
        panel.composite_into(&params.delta, struct_t, &mut w);
        relational_from_composite(&w, &params.rho, &mut lu.m);
        if !lu.factor() {
            return Err(Error::SingularRelationalMatrix { t: struct_t, iteration: None });
        }
        let xb_t = match config.lag {
            LagMode::Contemporaneous => t,
            LagMode::Lagged => t.saturating_sub(1),
        };
        for j in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            rhs[j] = xb[(xb_t, j)] + scale_at(t, j) * z;
        }
        lu.solve_in_place(&mut rhs);
        for j in 0..n {
            responses[(t, j)] = rhs[j];
        }
    }

    let design = RegressionDesign::new(factors, responses, config.includes_intercept)?;
    let truth = TruthRecord {
        config: config.clone(),
        h_paths: h_paths.map(|h| {
            (0..t_len)
                .map(|t| (0..n).map(|j| h[(t, j)]).collect())
                .collect()
        }),
    };
    Ok(SimulatedData { design, panel, truth })
}

// ---- design CSV ----

/// A design plus the calendar and column labels used by the CSV interface:
/// first column is an ISO date or integer period, then the `k` factor
/// columns (prefix `f_`), then the `n` response columns (prefix `y_`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub design: RegressionDesign,
    pub period_labels: Vec<String>,
    pub factor_names: Vec<String>,
    pub response_names: Vec<String>,
}

impl DesignTable {
    pub fn with_default_labels(design: RegressionDesign) -> Self {
        let period_labels = (0..design.t_len()).map(|t| t.to_string()).collect();
        let factor_names = (0..design.k()).map(|m| format!("x{m}")).collect();
        let response_names = (0..design.n()).map(|j| format!("v{j}")).collect();
        Self {
            design,
            period_labels,
            factor_names,
            response_names,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["period".to_string()];
        header.extend(self.factor_names.iter().map(|f| format!("f_{f}")));
        header.extend(self.response_names.iter().map(|r| format!("y_{r}")));
        wtr.write_record(&header)?;
        for t in 0..self.design.t_len() {
            let mut row = vec![self.period_labels[t].clone()];
            for m in 0..self.design.k() {
                row.push(format!("{}", self.design.factors()[(t, m)]));
            }
            for j in 0..self.design.n() {
                row.push(format!("{}", self.design.responses()[(t, j)]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, includes_intercept: bool) -> Result<DesignTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let mut factor_cols = Vec::new();
        let mut response_cols = Vec::new();
        for (i, name) in headers.iter().enumerate() {
            if let Some(f) = name.strip_prefix("f_") {
                factor_cols.push((i, f.to_string()));
            } else if let Some(r) = name.strip_prefix("y_") {
                response_cols.push((i, r.to_string()));
            }
        }
        if response_cols.is_empty() {
            return Err(Error::Config(format!(
                "{}: no response columns (prefix 'y_') in header",
                path.display()
            )));
        }
        let mut labels = Vec::new();
        let mut factors = Vec::new();
        let mut responses = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            labels.push(record.get(0).unwrap_or_default().to_string());
            for (i, _) in &factor_cols {
                factors.push(parse_cell(&record, *i, path, line)?);
            }
            for (i, _) in &response_cols {
                responses.push(parse_cell(&record, *i, path, line)?);
            }
        }
        let t_len = labels.len();
        let design = RegressionDesign::new(
            DMatrix::from_row_slice(t_len, factor_cols.len(), &factors),
            DMatrix::from_row_slice(t_len, response_cols.len(), &responses),
            includes_intercept,
        )?;
        Ok(DesignTable {
            design,
            period_labels: labels,
            factor_names: factor_cols.into_iter().map(|(_, n)| n).collect(),
            response_names: response_cols.into_iter().map(|(_, n)| n).collect(),
        })
    }
}

fn parse_cell(record: &csv::StringRecord, idx: usize, path: &Path, line: usize) -> Result<f64> {
    let raw = record.get(idx).unwrap_or_default();
    raw.trim().parse::<f64>().map_err(|e| {
        Error::Config(format!(
            "{} line {}: bad numeric value '{raw}': {e}",
            path.display(),
            line + 2
        ))
    })
}

pub fn write_truth_json(truth: &TruthRecord, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(truth)?)?;
    Ok(())
}

pub fn read_truth_json(path: &Path) -> Result<TruthRecord> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
