//! Spatial multiplier and time-varying direct/indirect/total effect series
//! from posterior draws.
//!
//! Effects follow the column convention: premultiplying the multiplier by a
//! row of ones aggregates over rows, attributing each column's effects to
//! the shocked variable.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::LuWorkspace;
use crate::model::StructuralParams;
use crate::networks::{validate_simplex, MultilayerPanel};
use crate::stats;

/// Spatial multiplier `S_t = (I - R W_t*)^{-1}` by dense solve.
pub fn spatial_multiplier(
    panel: &MultilayerPanel,
    delta: &[f64],
    rho: &DVector<f64>,
    t: usize,
) -> Result<DMatrix<f64>> {
    validate_simplex(delta, panel.layers())?;
    let n = panel.n();
    if rho.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "rho has {} entries, panel has n={n}",
            rho.len()
        )));
    }
    let mut w = DMatrix::zeros(n, n);
    panel.composite_into(delta, t, &mut w);
    let mut lu = LuWorkspace::new(n);
    for r in 0..n {
        for c in 0..n {
            lu.m[(r, c)] = if r == c { 1.0 } else { -rho[r] * w[(r, c)] };
        }
    }
    if !lu.factor() || lu.is_singular_relative(1e-14) {
        return Err(Error::SingularRelationalMatrix { t, iteration: None });
    }
    let mut s = DMatrix::zeros(n, n);
    lu.inverse_into(&mut s);
    Ok(s)
}

/// Direct (own) effects: the diagonal of the multiplier.
pub fn direct_effects(s: &DMatrix<f64>) -> DVector<f64> {
    s.diagonal()
}

/// Indirect (spillover) effects: off-diagonal column sums of the multiplier.
pub fn indirect_effects(s: &DMatrix<f64>) -> DVector<f64> {
    let n = s.nrows();
    DVector::from_fn(n, |j, _| {
        let mut acc = 0.0;
        for i in 0..n {
            if i != j {
                acc += s[(i, j)];
            }
        }
        acc
    })
}

/// Per-period effect vectors for one parameter configuration. The total is
/// stored as `direct + indirect`, so the identity holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSeries {
    pub direct: DMatrix<f64>,
    pub indirect: DMatrix<f64>,
    pub total: DMatrix<f64>,
    pub draw_index: Option<usize>,
}

/// The slice of a posterior draw that the effects depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDraw {
    pub delta: Vec<f64>,
    pub rho: DVector<f64>,
}

impl From<&StructuralParams> for EffectDraw {
    fn from(p: &StructuralParams) -> Self {
        Self {
            delta: p.delta.clone(),
            rho: p.rho.clone(),
        }
    }
}

/// Effects at every period for a single draw.
pub fn effect_series_single(
    panel: &MultilayerPanel,
    draw: &EffectDraw,
    draw_index: Option<usize>,
) -> Result<EffectSeries> {
    let n = panel.n();
    let t_len = panel.periods();
    let mut direct = DMatrix::zeros(t_len, n);
    let mut indirect = DMatrix::zeros(t_len, n);
    let mut total = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        let s = spatial_multiplier(panel, &draw.delta, &draw.rho, t)?;
        let d = direct_effects(&s);
        let z = indirect_effects(&s);
        for j in 0..n {
            direct[(t, j)] = d[j];
            indirect[(t, j)] = z[j];
            total[(t, j)] = d[j] + z[j];
        }
    }
    Ok(EffectSeries {
        direct,
        indirect,
        total,
        draw_index,
    })
}

/// Posterior mean and central 95% band per (period, unit).
#[derive(Debug, Clone)]
pub struct EffectBands {
    pub mean: DMatrix<f64>,
    pub lo: DMatrix<f64>,
    pub hi: DMatrix<f64>,
}

/// Summarized effect distributions over draws. Draws with a singular
/// relational matrix at any period are excluded and reported.
#[derive(Debug, Clone)]
pub struct EffectSummary {
    pub direct: EffectBands,
    pub indirect: EffectBands,
    pub total: EffectBands,
    pub excluded_draws: Vec<usize>,
    pub n_draws_used: usize,
}

pub fn effect_series(panel: &MultilayerPanel, draws: &[EffectDraw]) -> Result<EffectSummary> {
    if draws.is_empty() {
        return Err(Error::Config("effect summary needs at least one draw".into()));
    }
    let per_draw: Vec<Result<EffectSeries>> = draws
        .par_iter()
        .enumerate()
        .map(|(i, draw)| effect_series_single(panel, draw, Some(i)))
        .collect();
    let mut excluded = Vec::new();
    let mut kept: Vec<EffectSeries> = Vec::with_capacity(per_draw.len());
    for (i, r) in per_draw.into_iter().enumerate() {
        match r {
            Ok(series) => kept.push(series),
            Err(Error::SingularRelationalMatrix { .. }) => excluded.push(i),
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Numerical(
            "all draws produced a singular relational matrix".into(),
        ));
    }
    let t_len = panel.periods();
    let n = panel.n();
    let summarize = |extract: fn(&EffectSeries) -> &DMatrix<f64>| -> EffectBands {
        let mut mean = DMatrix::zeros(t_len, n);
        let mut lo = DMatrix::zeros(t_len, n);
        let mut hi = DMatrix::zeros(t_len, n);
        let mut cell = Vec::with_capacity(kept.len());
        for t in 0..t_len {
            for j in 0..n {
                cell.clear();
                cell.extend(kept.iter().map(|s| extract(s)[(t, j)]));
                mean[(t, j)] = stats::mean(&cell);
                cell.sort_by(|a, b| a.partial_cmp(b).expect("finite effects"));
                lo[(t, j)] = stats::quantile_type7_sorted(&cell, 0.025);
                hi[(t, j)] = stats::quantile_type7_sorted(&cell, 0.975);
            }
        }
        EffectBands { mean, lo, hi }
    };
    Ok(EffectSummary {
        direct: summarize(|s| &s.direct),
        indirect: summarize(|s| &s.indirect),
        total: summarize(|s| &s.total),
        excluded_draws: excluded,
        n_draws_used: kept.len(),
    })
}

/// Correlation of one unit's indirect-effect series with an external index.
#[derive(Debug, Clone)]
pub struct ExternalCorrelation {
    pub unit: usize,
    pub correlation: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

pub fn effect_external_correlation(
    effects: &EffectSeries,
    external: &[f64],
) -> Result<Vec<ExternalCorrelation>> {
    let t_len = effects.indirect.nrows();
    if external.len() != t_len {
        return Err(Error::ShapeMismatch(format!(
            "external index has {} periods, effects have {t_len}",
            external.len()
        )));
    }
    let n = effects.indirect.ncols();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let series: Vec<f64> = (0..t_len).map(|t| effects.indirect[(t, j)]).collect();
        let r = stats::pearson(&series, external, &format!("indirect effects of unit {j}"))?;
        let p = stats::correlation_p_value(r, t_len);
        out.push(ExternalCorrelation {
            unit: j,
            correlation: r,
            p_value: p,
            stars: stats::stars(p),
        });
    }
    Ok(out)
}

impl EffectSummary {
    /// CSV rows: period, country, then mean/lo/hi for direct, indirect,
    /// total.
    pub fn write_csv(
        &self,
        path: &Path,
        period_labels: Option<&[String]>,
        unit_labels: Option<&[String]>,
    ) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record([
            "period",
            "country",
            "direct_mean",
            "direct_lo",
            "direct_hi",
            "indirect_mean",
            "indirect_lo",
            "indirect_hi",
            "total_mean",
            "total_lo",
            "total_hi",
        ])?;
        let t_len = self.direct.mean.nrows();
        let n = self.direct.mean.ncols();
        for t in 0..t_len {
            for j in 0..n {
                let period = period_labels
                    .map(|l| l[t].clone())
                    .unwrap_or_else(|| t.to_string());
                let unit = unit_labels
                    .map(|l| l[j].clone())
                    .unwrap_or_else(|| j.to_string());
                wtr.write_record([
                    period,
                    unit,
                    format!("{}", self.direct.mean[(t, j)]),
                    format!("{}", self.direct.lo[(t, j)]),
                    format!("{}", self.direct.hi[(t, j)]),
                    format!("{}", self.indirect.mean[(t, j)]),
                    format!("{}", self.indirect.lo[(t, j)]),
                    format!("{}", self.indirect.hi[(t, j)]),
                    format!("{}", self.total.mean[(t, j)]),
                    format!("{}", self.total.lo[(t, j)]),
                    format!("{}", self.total.hi[(t, j)]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}
