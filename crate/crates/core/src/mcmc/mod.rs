//! Posterior sampling: a four-block sweep (Gaussian regression update,
//! variance block, independent MH on the layer weights, slice updates on the
//! exposures) plus stochastic-volatility state and parameter blocks, with
//! proposal tuning and chain diagnostics.

mod blocks;
mod chain;
pub mod slice;
pub mod sv;

pub use blocks::{
    dirichlet_log_pdf, rho_log_prior, sample_beta, sample_delta_imh, sample_dirichlet,
    sample_rho_slice, sample_sigma2, RHO_BOUND, SIMPLEX_CLAMP,
};
pub use chain::{run_chain, run_chain_streaming, tune_delta_proposal, TunedProposal};
pub use slice::SliceConfig;
pub use sv::{sample_h_column, sample_sv_params, single_site_mh_sweep, SvParams, SvPriors};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StructuralParams, VarianceMode, VarianceSpec};
use crate::stats;

/// Hyperparameters of the prior block. The innovation variances carry the
/// improper `1/sigma^2` prior and need no hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub dirichlet_c: Vec<f64>,
    pub a_rho: f64,
    pub b_rho: f64,
    pub sv: SvPriors,
}

impl PriorConfig {
    /// Weakly informative defaults: zero-mean `10 I` Gaussian on the
    /// regression block, unit Dirichlet on the weights, uniform exposure
    /// prior (`Beta(1, 1)` on the transformed scale).
    pub fn default_for(k_beta: usize, d: usize) -> Self {
        Self {
            mu_beta: DVector::zeros(k_beta),
            sigma_beta: DMatrix::identity(k_beta, k_beta) * 10.0,
            dirichlet_c: vec![1.0; d],
            a_rho: 1.0,
            b_rho: 1.0,
            sv: SvPriors::default(),
        }
    }

    pub fn validate(&self, k_beta: usize, d: usize) -> Result<()> {
        if self.mu_beta.len() != k_beta {
            return Err(Error::Config(format!(
                "prior mean for beta has {} entries, design implies {k_beta}",
                self.mu_beta.len()
            )));
        }
        if self.sigma_beta.nrows() != k_beta || self.sigma_beta.ncols() != k_beta {
            return Err(Error::Config("prior covariance for beta has wrong shape".into()));
        }
        let asym = (&self.sigma_beta - self.sigma_beta.transpose()).abs().max();
        if asym > 1e-8 {
            return Err(Error::Config(format!(
                "prior covariance for beta is asymmetric (max deviation {asym:e})"
            )));
        }
        if Cholesky::new(self.sigma_beta.clone()).is_none() {
            return Err(Error::Config("prior covariance for beta is not positive definite".into()));
        }
        if self.dirichlet_c.len() != d {
            return Err(Error::Config(format!(
                "Dirichlet concentration has {} entries, panel has {d} layers",
                self.dirichlet_c.len()
            )));
        }
        if self.dirichlet_c.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("Dirichlet concentration entries must be positive".into()));
        }
        if !(self.a_rho > 0.0) || !(self.b_rho > 0.0) {
            return Err(Error::Config("exposure prior shapes must be positive".into()));
        }
        self.sv.validate()
    }
}

/// Sampler run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// When absent, a preliminary tuning run picks the proposal.
    pub delta_proposal_concentration: Option<Vec<f64>>,
    pub tuning_iters: usize,
    pub slice_step_width: f64,
    pub slice_max_steps: u32,
    /// Store the log-variance paths in each retained draw's flattening.
    pub store_h: bool,
}

impl ChainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_iter: 5000,
            n_burnin: 1000,
            thin: 1,
            seed,
            delta_proposal_concentration: None,
            tuning_iters: 500,
            slice_step_width: 0.25,
            slice_max_steps: 100,
            store_h: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.n_burnin >= self.n_iter {
            return Err(Error::Config(format!(
                "need n_burnin < n_iter, got {} / {}",
                self.n_burnin, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.slice_step_width > 0.0) {
            return Err(Error::Config("slice step width must be positive".into()));
        }
        if let Some(c) = &self.delta_proposal_concentration {
            if c.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("proposal concentration entries must be positive".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn slice_config(&self) -> SliceConfig {
        SliceConfig {
            width: self.slice_step_width,
            max_steps: self.slice_max_steps,
        }
    }
}

/// One full parameter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: StructuralParams,
    pub variance: VarianceSpec,
}

impl ModelState {
    pub fn validate(&self, n: usize, d: usize, k_beta: usize, t_len: usize) -> Result<()> {
        self.params.validate(n, d, k_beta)?;
        self.variance.validate(t_len, n)
    }

    pub fn flatten(&self, store_h: bool) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.params.beta.iter());
        out.extend(self.params.delta.iter());
        out.extend(self.params.rho.iter());
        match &self.variance {
            VarianceSpec::Static(s) => out.extend(s.sigma2.iter()),
            VarianceSpec::StochasticVolatility(v) => {
                out.extend(v.mu_h.iter());
                out.extend(v.phi_h.iter());
                out.extend(v.sigma2_h.iter());
                if store_h {
                    for t in 0..v.h.nrows() {
                        for j in 0..v.h.ncols() {
                            out.push(v.h[(t, j)]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Stable flattened parameter names matching [`ModelState::flatten`].
pub fn param_names(
    n: usize,
    d: usize,
    k_beta: usize,
    mode: VarianceMode,
    t_len: usize,
    store_h: bool,
) -> Vec<String> {
    let mut names = Vec::new();
    names.extend((0..k_beta).map(|i| format!("beta_{i}")));
    names.extend((0..d).map(|i| format!("delta_{i}")));
    names.extend((0..n).map(|j| format!("rho_{j}")));
    match mode {
        VarianceMode::Static => names.extend((0..n).map(|j| format!("sigma2_{j}"))),
        VarianceMode::StochasticVolatility => {
            names.extend((0..n).map(|j| format!("mu_h_{j}")));
            names.extend((0..n).map(|j| format!("phi_h_{j}")));
            names.extend((0..n).map(|j| format!("sigma2_h_{j}")));
            if store_h {
                for t in 0..t_len {
                    for j in 0..n {
                        names.push(format!("h_{t}_{j}"));
                    }
                }
            }
        }
    }
    names
}

/// Ordered posterior draws plus per-block diagnostics.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<ModelState>,
    /// Absolute iteration index of each retained draw.
    pub draw_iterations: Vec<usize>,
    pub param_names: Vec<String>,
    pub delta_acceptance_rate: f64,
    pub ess: BTreeMap<String, f64>,
    pub runtime_seconds: f64,
    pub seed: u64,
    pub store_h: bool,
    pub proposal_concentration: Vec<f64>,
    pub variance_mode: VarianceMode,
}

impl ChainOutput {
    /// Draws as a matrix, one row per retained draw.
    pub fn flattened(&self) -> DMatrix<f64> {
        let rows = self.draws.len();
        let cols = self.param_names.len();
        let mut m = DMatrix::zeros(rows, cols);
        for (i, s) in self.draws.iter().enumerate() {
            let flat = s.flatten(self.store_h);
            debug_assert_eq!(flat.len(), cols);
            for (j, v) in flat.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        write_chain_header(&mut file, &self.param_names)?;
        for (i, state) in self.draws.iter().enumerate() {
            write_chain_row(&mut file, self.draw_iterations[i], &state.flatten(self.store_h))?;
        }
        writeln!(file, "{}", chain_complete_marker(self.draws.len()))?;
        Ok(())
    }

    pub fn diagnostics_json(&self, config_echo: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "delta_acceptance_rate": self.delta_acceptance_rate,
            "ess": self.ess,
            "runtime_seconds": self.runtime_seconds,
            "seed": self.seed,
            "n_draws": self.draws.len(),
            "proposal_concentration": self.proposal_concentration,
            "config": config_echo,
        })
    }
}

pub(crate) fn write_chain_header(w: &mut impl std::io::Write, names: &[String]) -> Result<()> {
    writeln!(w, "iteration,{}", names.join(","))?;
    Ok(())
}

pub(crate) fn write_chain_row(
    w: &mut impl std::io::Write,
    iteration: usize,
    flat: &[f64],
) -> Result<()> {
    let mut line = String::with_capacity(flat.len() * 24 + 16);
    line.push_str(&iteration.to_string());
    for v in flat {
        line.push(',');
        line.push_str(&format!("{v}"));
    }
    writeln!(w, "{line}")?;
    Ok(())
}

pub(crate) fn chain_complete_marker(n_draws: usize) -> String {
    format!("# end_of_chain draws={n_draws}")
}

/// A chain read back from disk. `complete` is false when the end-of-chain
/// marker is missing (an interrupted run); the rows present are still valid.
#[derive(Debug, Clone)]
pub struct ChainCsv {
    pub param_names: Vec<String>,
    pub iterations: Vec<usize>,
    pub draws: DMatrix<f64>,
    pub complete: bool,
}

impl ChainCsv {
    pub fn read(path: &Path) -> Result<ChainCsv> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{}: empty chain file", path.display())))?;
        let mut cols = header.split(',');
        if cols.next() != Some("iteration") {
            return Err(Error::Config(format!(
                "{}: chain header must start with 'iteration'",
                path.display()
            )));
        }
        let param_names: Vec<String> = cols.map(str::to_string).collect();
        let mut iterations = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut complete = false;
        for (lineno, line) in lines.enumerate() {
            if line.starts_with('#') {
                if line.starts_with("# end_of_chain") {
                    complete = true;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let it: usize = cells
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), lineno + 2)))?;
            let row: Vec<f64> = cells
                .map(|c| {
                    c.parse::<f64>().map_err(|e| {
                        Error::Config(format!("{} line {}: {e}", path.display(), lineno + 2))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != param_names.len() {
                return Err(Error::Config(format!(
                    "{} line {}: {} values, header names {}",
                    path.display(),
                    lineno + 2,
                    row.len(),
                    param_names.len()
                )));
            }
            iterations.push(it);
            values.extend(row);
        }
        let rows = iterations.len();
        let cols = param_names.len();
        Ok(ChainCsv {
            param_names,
            iterations,
            draws: DMatrix::from_row_slice(rows, cols, &values),
            complete,
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.param_names.iter().position(|n| n == name)?;
        Some(self.draws.column(idx).iter().copied().collect())
    }
}

pub(crate) fn ess_map(
    flat: &DMatrix<f64>,
    names: &[String],
    skip_h: bool,
) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    for (j, name) in names.iter().enumerate() {
        if skip_h && name.starts_with("h_") {
            continue;
        }
        let col: Vec<f64> = flat.column(j).iter().copied().collect();
        map.insert(name.clone(), stats::effective_sample_size(&col));
    }
    map
}
