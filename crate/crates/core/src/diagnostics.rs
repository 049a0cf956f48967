//! Posterior summarization: per-parameter tables, kernel density exports,
//! and pairwise effect cross-correlations.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mcmc::ChainOutput;
use crate::spillovers::EffectSeries;
use crate::stats;

pub const MIN_SUMMARY_DRAWS: usize = 100;

#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// The central 95% interval excludes zero.
    pub significant: bool,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub n_draws: usize,
}

/// Empirical mean and type-7 2.5%/97.5% quantiles per parameter.
pub fn summarize(chain: &ChainOutput) -> Result<PosteriorSummary> {
    let flat = chain.flattened();
    summarize_matrix(&chain.param_names, &flat, Some(&chain.ess))
}

pub fn summarize_matrix(
    names: &[String],
    draws: &DMatrix<f64>,
    ess: Option<&std::collections::BTreeMap<String, f64>>,
) -> Result<PosteriorSummary> {
    let n_draws = draws.nrows();
    if n_draws < MIN_SUMMARY_DRAWS {
        return Err(Error::TooFewDraws {
            have: n_draws,
            need: MIN_SUMMARY_DRAWS,
        });
    }
    let mut params = Vec::with_capacity(names.len());
    let mut col = Vec::with_capacity(n_draws);
    for (j, name) in names.iter().enumerate() {
        col.clear();
        col.extend(draws.column(j).iter().copied());
        let mean = stats::mean(&col);
        let mut sorted = col.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let lo = stats::quantile_type7_sorted(&sorted, 0.025);
        let hi = stats::quantile_type7_sorted(&sorted, 0.975);
        let ess_value = ess
            .and_then(|m| m.get(name).copied())
            .unwrap_or_else(|| stats::effective_sample_size(&col));
        params.push(ParamSummary {
            name: name.clone(),
            mean,
            lo,
            hi,
            significant: !(lo <= 0.0 && 0.0 <= hi),
            ess: ess_value,
        });
    }
    Ok(PosteriorSummary { params, n_draws })
}

impl PosteriorSummary {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["parameter", "mean", "ci_2.5", "ci_97.5", "significant", "ess"])?;
        for p in &self.params {
            wtr.write_record([
                p.name.clone(),
                format!("{}", p.mean),
                format!("{}", p.lo),
                format!("{}", p.hi),
                p.significant.to_string(),
                format!("{}", p.ess),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Table layout mirroring the reporting convention: a mean row plus
    /// CI 2.5% / 97.5% rows, significant entries marked with `*`.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .params
            .iter()
            .map(|p| p.name.len())
            .max()
            .unwrap_or(9)
            .max(9);
        out.push_str(&format!(
            "{:<width$}  {:>12} {:>12} {:>12} {:>10}\n",
            "parameter", "mean", "CI 2.5%", "CI 97.5%", "ESS"
        ));
        for p in &self.params {
            let flag = if p.significant { "*" } else { " " };
            out.push_str(&format!(
                "{:<width$}{} {:>12.4} {:>12.4} {:>12.4} {:>10.1}\n",
                p.name, flag, p.mean, p.lo, p.hi, p.ess
            ));
        }
        out
    }
}

/// Density export result: a kernel density on a grid, or a point-mass flag
/// for degenerate draws.
#[derive(Debug, Clone)]
pub enum DensityExport {
    Kde { grid: Vec<f64>, density: Vec<f64> },
    PointMass { value: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: None,
            max: None,
            points: 512,
        }
    }
}

/// Gaussian-kernel density with Silverman's rule-of-thumb bandwidth.
pub fn density_export(draws: &[f64], spec: &GridSpec) -> Result<DensityExport> {
    if draws.is_empty() {
        return Err(Error::Config("density export needs draws".into()));
    }
    let bandwidth = stats::silverman_bandwidth(draws);
    if bandwidth <= 0.0 || !bandwidth.is_finite() {
        return Ok(DensityExport::PointMass { value: draws[0] });
    }
    let data_min = draws.iter().cloned().fold(f64::INFINITY, f64::min);
    let data_max = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = spec.min.unwrap_or(data_min - 3.0 * bandwidth);
    let hi = spec.max.unwrap_or(data_max + 3.0 * bandwidth);
    let points = spec.points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (draws.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut grid = Vec::with_capacity(points);
    let mut density = Vec::with_capacity(points);
    for i in 0..points {
        let x = lo + step * i as f64;
        let mut acc = 0.0;
        for &v in draws {
            let z = (x - v) / bandwidth;
            acc += (-0.5 * z * z).exp();
        }
        grid.push(x);
        density.push(acc * norm);
    }
    Ok(DensityExport::Kde { grid, density })
}

pub fn write_density_csv(path: &Path, export: &DensityExport) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    match export {
        DensityExport::Kde { grid, density } => {
            wtr.write_record(["x", "density"])?;
            for (x, d) in grid.iter().zip(density) {
                wtr.write_record([format!("{x}"), format!("{d}")])?;
            }
        }
        DensityExport::PointMass { value } => {
            wtr.write_record(["point_mass"])?;
            wtr.write_record([format!("{value}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One cell of a correlation table; `None` marks an undefined correlation
/// (zero-variance series).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrCell {
    pub r: f64,
    pub p: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone)]
pub struct CorrelationTable {
    pub cells: Vec<Vec<Option<CorrCell>>>,
}

impl CorrelationTable {
    fn from_series(columns: &[Vec<f64>]) -> CorrelationTable {
        let n = columns.len();
        let t_len = columns.first().map(|c| c.len()).unwrap_or(0);
        let mut cells = vec![vec![None; n]; n];
        for a in 0..n {
            for b in a..n {
                let cell = stats::pearson(&columns[a], &columns[b], "effect series")
                    .ok()
                    .map(|r| {
                        let p = stats::correlation_p_value(r, t_len);
                        CorrCell {
                            r,
                            p,
                            stars: stats::stars(p),
                        }
                    });
                cells[a][b] = cell;
                cells[b][a] = cell;
            }
        }
        CorrelationTable { cells }
    }

    pub fn write_csv(&self, path: &Path, labels: Option<&[String]>) -> Result<()> {
        let n = self.cells.len();
        let name = |i: usize| {
            labels
                .map(|l| l[i].clone())
                .unwrap_or_else(|| i.to_string())
        };
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec![String::new()];
        header.extend((0..n).map(name));
        wtr.write_record(&header)?;
        for a in 0..n {
            let mut row = vec![name(a)];
            for b in 0..n {
                row.push(match &self.cells[a][b] {
                    Some(c) => format!("{:.4}{}", c.r, c.stars),
                    None => "NA".to_string(),
                });
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Pairwise cross-correlations of the overall (total), direct, and indirect
/// effect series across units, with significance stars.
#[derive(Debug, Clone)]
pub struct CrossCorrelation {
    pub overall: CorrelationTable,
    pub direct: CorrelationTable,
    pub indirect: CorrelationTable,
}

pub fn effect_crosscorrelation_matrix(effects: &EffectSeries) -> CrossCorrelation {
    let columns = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.ncols())
            .map(|j| m.column(j).iter().copied().collect())
            .collect()
    };
    CrossCorrelation {
        overall: CorrelationTable::from_series(&columns(&effects.total)),
        direct: CorrelationTable::from_series(&columns(&effects.direct)),
        indirect: CorrelationTable::from_series(&columns(&effects.indirect)),
    }
}
