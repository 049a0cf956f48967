//! Time-varying multilayer networks: construction, normalization,
//! assumption validation, and summary measures.
//!
//! A panel holds `d` layers observed over `T` periods, each an `n x n`
//! non-negative weight matrix with a zero diagonal. Layers are combined into
//! a composite network by a convex combination with simplex weights.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, LuWorkspace};

/// Absolute tolerance for simplex sums and layer-equality comparisons.
pub const SIMPLEX_TOL: f64 = 1e-12;

const CENTRALITY_MAX_ITERS: usize = 10_000;
const CENTRALITY_TOL: f64 = 1e-10;

/// One layer's weight matrix at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub weights: DMatrix<f64>,
    pub time_index: usize,
    pub layer_index: usize,
}

impl LayerSnapshot {
    /// Validates non-negativity and the zero diagonal.
    pub fn new(weights: DMatrix<f64>, layer_index: usize, time_index: usize) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "layer {layer_index} at t={time_index}: weights are {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for (r, row) in weights.row_iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !(v >= 0.0) {
                    return Err(Error::constraint(format!(
                        "layer {layer_index} t={time_index} entry ({r},{c}) = {v} is negative or NaN"
                    )));
                }
                if r == c && v != 0.0 {
                    return Err(Error::constraint(format!(
                        "layer {layer_index} t={time_index} has nonzero diagonal at {r}"
                    )));
                }
            }
        }
        Ok(Self {
            weights,
            time_index,
            layer_index,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&v| v == 0.0)
    }
}

/// `d` layers over `T` periods on a shared cross-section of size `n`.
/// Snapshots are stored layer-major: index `layer * T + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerPanel {
    snapshots: Vec<LayerSnapshot>,
    n: usize,
    d: usize,
    t_len: usize,
}

impl MultilayerPanel {
    pub fn from_snapshots(mut snapshots: Vec<LayerSnapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::ShapeMismatch("panel has no snapshots".into()));
        }
        let n = snapshots[0].n();
        let d = snapshots.iter().map(|s| s.layer_index).max().unwrap() + 1;
        let t_len = snapshots.iter().map(|s| s.time_index).max().unwrap() + 1;
        if snapshots.len() != d * t_len {
            return Err(Error::ShapeMismatch(format!(
                "expected {d} layers x {t_len} periods = {} snapshots, got {}",
                d * t_len,
                snapshots.len()
            )));
        }
        let mut seen = vec![false; d * t_len];
        for s in &snapshots {
            if s.n() != n {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} t={} has n={}, expected {n}",
                    s.layer_index,
                    s.time_index,
                    s.n()
                )));
            }
            let idx = s.layer_index * t_len + s.time_index;
            if seen[idx] {
                return Err(Error::ShapeMismatch(format!(
                    "duplicate snapshot for layer {} t={}",
                    s.layer_index, s.time_index
                )));
            }
            seen[idx] = true;
        }
        snapshots.sort_by_key(|s| (s.layer_index, s.time_index));
        Ok(Self {
            snapshots,
            n,
            d,
            t_len,
        })
    }

    /// Build from layer-major matrices: `layers[l][t]` is the weight matrix
    /// of layer `l` at period `t`.
    pub fn from_matrices(layers: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        let mut snaps = Vec::new();
        for (l, series) in layers.into_iter().enumerate() {
            for (t, m) in series.into_iter().enumerate() {
                snaps.push(LayerSnapshot::new(m, l, t)?);
            }
        }
        Self::from_snapshots(snaps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> usize {
        self.d
    }

    pub fn periods(&self) -> usize {
        self.t_len
    }

    pub fn snapshot(&self, layer: usize, t: usize) -> &LayerSnapshot {
        &self.snapshots[layer * self.t_len + t]
    }

    pub fn snapshots(&self) -> &[LayerSnapshot] {
        &self.snapshots
    }

    /// Standard row normalization: every row with a positive sum is rescaled
    /// to sum exactly 1; all-zero rows are preserved (they surface as A4
    /// violations downstream). Bit-exact idempotent.
    pub fn standard_row_normalized(&self) -> MultilayerPanel {
        let mut out = self.clone();
        for snap in &mut out.snapshots {
            for r in 0..snap.weights.nrows() {
                normalize_row_to_unit_sum(&mut snap.weights, r);
            }
        }
        out
    }

    /// Max-row normalization: within each layer, row `j`'s entries at every
    /// period are divided by the maximum over periods of row `j`'s sum.
    /// A dyad weight that does not change between periods keeps the same
    /// normalized value, unlike standard row normalization. Rows that are
    /// zero at every period stay zero.
    pub fn max_row_normalized(&self) -> MultilayerPanel {
        let mut out = self.clone();
        for layer in 0..self.d {
            for r in 0..self.n {
                let mut divisor: f64 = 0.0;
                for t in 0..self.t_len {
                    divisor = divisor.max(self.snapshot(layer, t).weights.row(r).sum());
                }
                if divisor == 0.0 {
                    continue;
                }
                for t in 0..self.t_len {
                    let snap = &mut out.snapshots[layer * self.t_len + t];
                    let pre_sum = snap.weights.row(r).sum();
                    for c in 0..self.n {
                        snap.weights[(r, c)] /= divisor;
                    }
                    // Periods attaining the maximum get row sum exactly 1.
                    if pre_sum == divisor {
                        correct_row_sum_defect(&mut snap.weights, r);
                    }
                }
            }
        }
        out
    }

    /// Composite network `sum_i delta_i W_{i,t}` for simplex weights.
    pub fn composite(&self, delta: &[f64], t: usize) -> Result<CompositeNetwork> {
        validate_simplex(delta, self.d)?;
        if t >= self.t_len {
            return Err(Error::ShapeMismatch(format!(
                "period {t} out of range (T = {})",
                self.t_len
            )));
        }
        let mut matrix = DMatrix::zeros(self.n, self.n);
        self.composite_into(delta, t, &mut matrix);
        Ok(CompositeNetwork {
            matrix,
            delta_used: delta.to_vec(),
            time_index: t,
        })
    }

    /// Allocation-free composite accumulation; `out` must be `n x n`.
    /// Skips simplex validation: used by the sampler after the weights have
    /// already been checked.
    pub fn composite_into(&self, delta: &[f64], t: usize, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (l, &dw) in delta.iter().enumerate() {
            if dw == 0.0 {
                continue;
            }
            let w = &self.snapshot(l, t).weights;
            for c in 0..self.n {
                for r in 0..self.n {
                    out[(r, c)] += dw * w[(r, c)];
                }
            }
        }
    }

    /// Check assumptions A1 (no empty layer), A2 (no duplicated layers at a
    /// period), and A4 (every cross-section row connected in at least one
    /// layer). A3 — simplex weights — is enforced by construction on the
    /// sampler side. When `delta_hint` is given, layers with zero weight are
    /// ignored for A4 (a connection in a zero-weight layer cannot identify
    /// the row's exposure).
    pub fn validate_assumptions(&self, delta_hint: Option<&[f64]>) -> AssumptionReport {
        let mut report = AssumptionReport::default();
        for layer in 0..self.d {
            for t in 0..self.t_len {
                if self.snapshot(layer, t).is_zero() {
                    report.a1_violations.push((layer, t));
                }
            }
        }
        for t in 0..self.t_len {
            for a in 0..self.d {
                for b in (a + 1)..self.d {
                    let wa = &self.snapshot(a, t).weights;
                    let wb = &self.snapshot(b, t).weights;
                    let max_diff = (wa - wb).abs().max();
                    if max_diff <= SIMPLEX_TOL {
                        report.a2_violations.push((a, b, t));
                    }
                }
            }
        }
        for t in 0..self.t_len {
            for row in 0..self.n {
                let connected = (0..self.d).any(|layer| {
                    if let Some(delta) = delta_hint {
                        if delta.get(layer).copied().unwrap_or(0.0) == 0.0 {
                            return false;
                        }
                    }
                    self.snapshot(layer, t).weights.row(row).iter().any(|&v| v != 0.0)
                });
                if !connected {
                    report.a4_violations.push((row, t));
                }
            }
        }
        report
    }

    // ---- serialization ----

    /// Write one headerless CSV per (layer, period): `layer<L>_t<T>.csv`
    /// with `n` rows of `n` comma-separated values. Indices are 0-based.
    pub fn to_csv_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for snap in &self.snapshots {
            let path = dir.join(format!("layer{}_t{}.csv", snap.layer_index, snap.time_index));
            let mut file = fs::File::create(path)?;
            for r in 0..self.n {
                let cells: Vec<String> =
                    (0..self.n).map(|c| format!("{}", snap.weights[(r, c)])).collect();
                writeln!(file, "{}", cells.join(","))?;
            }
        }
        Ok(())
    }

    pub fn from_csv_dir(dir: &Path) -> Result<MultilayerPanel> {
        let mut snaps = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(idx) = parse_layer_file_name(&name) else {
                continue;
            };
            let text = fs::read_to_string(entry.path())?;
            let rows: Vec<Vec<f64>> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|line| {
                    line.split(',')
                        .map(|cell| {
                            cell.trim().parse::<f64>().map_err(|e| {
                                Error::Config(format!("{name}: bad value '{cell}': {e}"))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::ShapeMismatch(format!("{name}: matrix is not square")));
            }
            let m = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
            snaps.push(LayerSnapshot::new(m, idx.0, idx.1)?);
        }
        MultilayerPanel::from_snapshots(snaps)
    }

    pub fn to_json(&self) -> PanelJson {
        PanelJson {
            n: self.n,
            d: self.d,
            t: self.t_len,
            layers: (0..self.d)
                .map(|l| {
                    (0..self.t_len)
                        .map(|t| {
                            let w = &self.snapshot(l, t).weights;
                            (0..self.n)
                                .map(|r| (0..self.n).map(|c| w[(r, c)]).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_json(json: &PanelJson) -> Result<MultilayerPanel> {
        if json.layers.len() != json.d {
            return Err(Error::ShapeMismatch(format!(
                "container says d={} but has {} layer series",
                json.d,
                json.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(json.d);
        for series in &json.layers {
            if series.len() != json.t {
                return Err(Error::ShapeMismatch(format!(
                    "container says T={} but a layer has {} periods",
                    json.t,
                    series.len()
                )));
            }
            let mut mats = Vec::with_capacity(json.t);
            for rows in series {
                if rows.len() != json.n || rows.iter().any(|r| r.len() != json.n) {
                    return Err(Error::ShapeMismatch(format!(
                        "container says n={} but a matrix has other dimensions",
                        json.n
                    )));
                }
                mats.push(DMatrix::from_fn(json.n, json.n, |r, c| rows[r][c]));
            }
            layers.push(mats);
        }
        Self::from_matrices(layers)
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json_file(path: &Path) -> Result<MultilayerPanel> {
        let text = fs::read_to_string(path)?;
        let json: PanelJson = serde_json::from_str(&text)?;
        Self::from_json(&json)
    }
}

fn parse_layer_file_name(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_suffix(".csv")?;
    let rest = stem.strip_prefix("layer")?;
    let (l, t) = rest.split_once("_t")?;
    Some((l.parse().ok()?, t.parse().ok()?))
}

/// Divide row `r` by its sum (when positive), then absorb the floating-point
/// defect into the largest entry so the row sums to exactly 1.0. Rows already
/// summing to exactly 1.0 are untouched, which makes normalization
/// idempotent at the bit level.
fn normalize_row_to_unit_sum(m: &mut DMatrix<f64>, r: usize) {
    let sum: f64 = m.row(r).sum();
    if sum <= 0.0 {
        return;
    }
    for c in 0..m.ncols() {
        m[(r, c)] /= sum;
    }
    correct_row_sum_defect(m, r);
}

fn correct_row_sum_defect(m: &mut DMatrix<f64>, r: usize) {
    let mut sum: f64 = m.row(r).sum();
    if sum == 0.0 {
        return;
    }
    let mut argmax = 0;
    let mut best = -1.0;
    for c in 0..m.ncols() {
        if m[(r, c)] > best {
            best = m[(r, c)];
            argmax = c;
        }
    }
    // Coarse correction, then directional ulp steps: the recomputed sum can
    // ring around 1.0 by an ulp, and every entry lies in (0, 1], so single
    // ulp steps on the largest entry cannot jump over 1.0.
    if sum != 1.0 {
        m[(r, argmax)] -= sum - 1.0;
        sum = m.row(r).sum();
    }
    for _ in 0..256 {
        if sum == 1.0 {
            return;
        }
        m[(r, argmax)] = if sum > 1.0 {
            m[(r, argmax)].next_down()
        } else {
            m[(r, argmax)].next_up()
        };
        sum = m.row(r).sum();
    }
}

/// JSON container format: `{n, d, T, layers}` with `layers[l][t]` an `n x n`
/// nested array.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelJson {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub layers: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Convex combination of the layers at one period.
#[derive(Debug, Clone)]
pub struct CompositeNetwork {
    pub matrix: DMatrix<f64>,
    pub delta_used: Vec<f64>,
    pub time_index: usize,
}

/// Outcome of the A1/A2/A4 checks. `passed` iff all three lists are empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssumptionReport {
    /// (layer, t) pairs where the whole matrix is zero.
    pub a1_violations: Vec<(usize, usize)>,
    /// (layer_a, layer_b, t) triples of entry-wise identical layers.
    pub a2_violations: Vec<(usize, usize, usize)>,
    /// (row, t) pairs where the row is zero in every layer.
    pub a4_violations: Vec<(usize, usize)>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.a1_violations.is_empty()
            && self.a2_violations.is_empty()
            && self.a4_violations.is_empty()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "all assumptions satisfied");
        }
        if !self.a1_violations.is_empty() {
            writeln!(f, "A1 (empty network) violated at (layer, t): {:?}", self.a1_violations)?;
        }
        if !self.a2_violations.is_empty() {
            writeln!(
                f,
                "A2 (identical layers) violated at (layer, layer, t): {:?}",
                self.a2_violations
            )?;
        }
        if !self.a4_violations.is_empty() {
            writeln!(
                f,
                "A4 (disconnected row) violated at (row, t): {:?}",
                self.a4_violations
            )?;
        }
        Ok(())
    }
}

pub fn validate_simplex(delta: &[f64], d: usize) -> Result<()> {
    if delta.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "delta has {} entries, panel has {d} layers",
            delta.len()
        )));
    }
    if delta.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::constraint(format!("delta {delta:?} has negative or NaN entries")));
    }
    let sum: f64 = delta.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::constraint(format!(
            "delta sums to {sum}, outside 1 +/- {SIMPLEX_TOL:e}"
        )));
    }
    Ok(())
}

/// Eigenvector centrality of a directed snapshot: the dominant left
/// eigenvector (in-influence), normalized to sum 1.
///
/// Power iteration from the uniform vector on the transposed operator, with
/// a diagonal Perron shift that leaves the dominant eigenvector unchanged
/// while breaking the oscillation of periodic (e.g. purely cyclic) graphs.
pub fn eigenvector_centrality(snapshot: &LayerSnapshot) -> Result<DVector<f64>> {
    let n = snapshot.n();
    let w = &snapshot.weights;
    let scale = (0..n)
        .map(|c| w.column(c).sum())
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::constraint(
            "eigenvector centrality requires at least one nonzero entry",
        ));
    }
    let shift = 0.5 * scale;
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut y = DVector::zeros(n);
    let mut last_delta = f64::INFINITY;
    for _ in 0..CENTRALITY_MAX_ITERS {
        // y = W' x + shift * x
        y.gemv_tr(1.0, w, &x, 0.0);
        y.axpy(shift, &x, 1.0);
        let total = y.sum();
        if total <= 0.0 {
            return Err(Error::Numerical(
                "eigenvector centrality broke down: iterate left the positive cone".into(),
            ));
        }
        y /= total;
        last_delta = (0..n).map(|i| (y[i] - x[i]).abs()).fold(0.0f64, f64::max);
        x.copy_from(&y);
        if last_delta < CENTRALITY_TOL {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        iterations: CENTRALITY_MAX_ITERS,
        last_delta,
        last_iterate: x.iter().copied().collect(),
    })
}

/// Invertibility of `I - R W*` together with a spectral-radius estimate of
/// `R W*`.
#[derive(Debug, Clone, Copy)]
pub struct InvertibilityCheck {
    pub invertible: bool,
    pub spectral_radius: f64,
}

pub fn check_invertibility(composite: &CompositeNetwork, rho: &[f64]) -> InvertibilityCheck {
    let n = composite.matrix.nrows();
    assert_eq!(rho.len(), n, "rho length must match the cross-section");
    let mut rw = composite.matrix.clone();
    for r in 0..n {
        for c in 0..n {
            rw[(r, c)] *= rho[r];
        }
    }
    let (radius, _) = spectral_radius(&rw, 1e-10, 10_000);
    let mut ws = LuWorkspace::new(n);
    for i in 0..n {
        rw[(i, i)] -= 1.0;
    }
    rw.neg_mut(); // I - R W*
    ws.load(&rw);
    ws.factor();
    let invertible = !ws.is_singular_relative(1e-12);
    InvertibilityCheck {
        invertible,
        spectral_radius: radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn panel_from(layers: Vec<Vec<DMatrix<f64>>>) -> MultilayerPanel {
        MultilayerPanel::from_matrices(layers).unwrap()
    }

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn snapshot_rejects_negative_and_diagonal() {
        assert!(LayerSnapshot::new(m2(0.0, -1.0, 1.0, 0.0), 0, 0).is_err());
        assert!(LayerSnapshot::new(m2(1.0, 1.0, 1.0, 0.0), 0, 0).is_err());
        assert!(LayerSnapshot::new(m2(0.0, 1.0, 1.0, 0.0), 0, 0).is_ok());
    }

    #[test]
    fn standard_normalization_examples() {
        let p = panel_from(vec![vec![m2(0.0, 2.0, 3.0, 0.0)]]);
        let normd = p.standard_row_normalized();
        assert_eq!(normd.snapshot(0, 0).weights, m2(0.0, 1.0, 1.0, 0.0));

        let already = panel_from(vec![vec![m2(0.0, 1.0, 1.0, 0.0)]]);
        assert_eq!(
            already.standard_row_normalized().snapshot(0, 0).weights,
            m2(0.0, 1.0, 1.0, 0.0)
        );

        let row = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p3 = panel_from(vec![vec![row]]);
        let out = p3.standard_row_normalized();
        assert_relative_eq!(out.snapshot(0, 0).weights[(0, 1)], 0.25);
        assert_relative_eq!(out.snapshot(0, 0).weights[(0, 2)], 0.75);
        // all-zero rows preserved
        assert_eq!(out.snapshot(0, 0).weights.row(2).sum(), 0.0);
    }

    #[test]
    fn standard_normalization_idempotent_bitwise() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let m = DMatrix::from_fn(n, n, |r, c| {
                if r == c || rng.random::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.random::<f64>() * 5.0
                }
            });
            let p = panel_from(vec![vec![m]]);
            let once = p.standard_row_normalized();
            let twice = once.standard_row_normalized();
            assert_eq!(once.snapshot(0, 0).weights, twice.snapshot(0, 0).weights);
        }
    }

    #[test]
    fn max_row_normalization_hand_example() {
        // row 0: t1 sums to 1, t2 sums to 2 -> divide all periods by 2
        let t1 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let t2 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = panel_from(vec![vec![t1, t2]]);
        let out = p.max_row_normalized();
        assert_relative_eq!(out.snapshot(0, 0).weights[(0, 1)], 0.5);
        assert_relative_eq!(out.snapshot(0, 0).weights[(0, 2)], 0.0);
        assert_relative_eq!(out.snapshot(0, 1).weights[(0, 1)], 0.5);
        assert_relative_eq!(out.snapshot(0, 1).weights[(0, 2)], 0.5);
        // the persisting dyad entry stays constant across periods
        assert_eq!(
            out.snapshot(0, 0).weights[(0, 1)],
            out.snapshot(0, 1).weights[(0, 1)]
        );
    }

    #[test]
    fn max_row_single_period_matches_standard() {
        let p = panel_from(vec![vec![m2(0.0, 3.0, 5.0, 0.0)]]);
        let a = p.max_row_normalized();
        let b = p.standard_row_normalized();
        assert_eq!(a.snapshot(0, 0).weights, b.snapshot(0, 0).weights);
        assert_eq!(a.snapshot(0, 0).weights[(0, 1)], 1.0);
    }

    #[test]
    fn max_row_constant_rows_match_standard() {
        let m = m2(0.0, 2.0, 4.0, 0.0);
        let p = panel_from(vec![vec![m.clone(), m]]);
        let a = p.max_row_normalized();
        let b = p.standard_row_normalized();
        for t in 0..2 {
            assert_eq!(a.snapshot(0, t).weights, b.snapshot(0, t).weights);
        }
    }

    #[test]
    fn max_row_all_zero_row_left_zero() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let p = panel_from(vec![vec![m.clone(), m]]);
        let out = p.max_row_normalized();
        assert_eq!(out.snapshot(0, 0).weights.row(0).sum(), 0.0);
        assert_eq!(out.snapshot(0, 1).weights[(1, 0)], 1.0);
    }

    #[test]
    fn composite_examples() {
        let w1 = m2(0.0, 1.0, 1.0, 0.0);
        let w2 = m2(0.0, 1.0, 0.0, 0.0);
        let p = panel_from(vec![vec![w1.clone()], vec![w2]]);
        let single = panel_from(vec![vec![w1.clone()]]);
        assert_eq!(single.composite(&[1.0], 0).unwrap().matrix, w1);

        let c = p.composite(&[0.5, 0.5], 0).unwrap();
        assert_eq!(c.matrix, m2(0.0, 1.0, 0.5, 0.0));

        // paper's posterior-mean weights are a valid simplex input
        assert!(p.composite(&[0.282, 0.718], 0).is_ok());
        assert!(p.composite(&[0.4, 0.4], 0).is_err());
        assert!(p.composite(&[-0.2, 1.2], 0).is_err());
    }

    #[test]
    fn degenerate_vertex_uses_single_layer() {
        let w1 = m2(0.0, 1.0, 1.0, 0.0);
        let w2 = m2(0.0, 0.5, 0.5, 0.0);
        let p = panel_from(vec![vec![w1], vec![w2.clone()]]);
        let c = p.composite(&[0.0, 1.0], 0).unwrap();
        assert_eq!(c.matrix, w2);
    }

    #[test]
    fn assumption_checks() {
        let zero = DMatrix::zeros(2, 2);
        let w = m2(0.0, 1.0, 1.0, 0.0);
        // A1: all-zero layer snapshot
        let p = panel_from(vec![vec![zero.clone()], vec![w.clone()]]);
        let rep = p.validate_assumptions(None);
        assert_eq!(rep.a1_violations, vec![(0, 0)]);
        assert!(!rep.passed());

        // A2: identical layers at the same period
        let p = panel_from(vec![vec![w.clone()], vec![w.clone()]]);
        let rep = p.validate_assumptions(None);
        assert_eq!(rep.a2_violations, vec![(0, 1, 0)]);

        // A4: row zero in every layer
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let p = panel_from(vec![vec![a], vec![b]]);
        let rep = p.validate_assumptions(None);
        assert_eq!(rep.a4_violations, vec![(0, 0)]);

        let ok = panel_from(vec![vec![w.clone()], vec![m2(0.0, 0.5, 0.5, 0.0)]]);
        assert!(ok.validate_assumptions(None).passed());
    }

    #[test]
    fn a4_respects_delta_hint() {
        // row 0 connected only in layer 0; zero hint weight disables it
        let a = m2(0.0, 1.0, 1.0, 0.0);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let p = panel_from(vec![vec![a], vec![b]]);
        assert!(p.validate_assumptions(None).passed());
        let rep = p.validate_assumptions(Some(&[0.0, 1.0]));
        assert_eq!(rep.a4_violations, vec![(0, 0)]);
    }

    #[test]
    fn centrality_symmetric_cases() {
        let cycle3 = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
        );
        let snap = LayerSnapshot::new(cycle3, 0, 0).unwrap();
        let c = eigenvector_centrality(&snap).unwrap();
        for i in 0..3 {
            assert_relative_eq!(c[i], 1.0 / 3.0, epsilon = 1e-8);
        }

        let dyad = LayerSnapshot::new(m2(0.0, 1.0, 1.0, 0.0), 0, 0).unwrap();
        let c = eigenvector_centrality(&dyad).unwrap();
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-8);
        assert_relative_eq!(c[1], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn centrality_star_center_maximal() {
        // leaves send weight 3 to the center (node 0), center sends 1 back
        let mut w = DMatrix::zeros(4, 4);
        for leaf in 1..4 {
            w[(leaf, 0)] = 3.0;
            w[(0, leaf)] = 1.0;
        }
        let snap = LayerSnapshot::new(w.clone(), 0, 0).unwrap();
        let c = eigenvector_centrality(&snap).unwrap();
        for leaf in 1..4 {
            assert!(c[0] > c[leaf], "center {} vs leaf {}", c[0], c[leaf]);
        }
        // analytic left Perron vector: x'W = 3 x' with x = (1/2, 1/6, 1/6, 1/6)
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-8);
        for leaf in 1..4 {
            assert_relative_eq!(c[leaf], 1.0 / 6.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn centrality_rejects_empty_graph() {
        let snap = LayerSnapshot::new(DMatrix::zeros(3, 3), 0, 0).unwrap();
        assert!(eigenvector_centrality(&snap).is_err());
    }

    #[test]
    fn invertibility_examples() {
        let w = m2(0.0, 1.0, 1.0, 0.0);
        let p = panel_from(vec![vec![w]]);
        let comp = p.composite(&[1.0], 0).unwrap();

        let check = check_invertibility(&comp, &[0.0, 0.0]);
        assert!(check.invertible);
        assert_relative_eq!(check.spectral_radius, 0.0, epsilon = 1e-9);

        let check = check_invertibility(&comp, &[1.0, 1.0]);
        assert!(!check.invertible, "I - W* with unit rho and row-stochastic W* is singular");

        let check = check_invertibility(&comp, &[0.9, 0.9]);
        assert!(check.invertible);
        assert!(check.spectral_radius <= 0.9 + 1e-9);
    }

    #[test]
    fn csv_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = panel_from(vec![
            vec![m2(0.0, 1.0, 0.25, 0.0), m2(0.0, 0.5, 1.0, 0.0)],
            vec![m2(0.0, 2.0, 0.0, 0.0), m2(0.0, 0.125, 3.0, 0.0)],
        ]);
        p.to_csv_dir(dir.path()).unwrap();
        let back = MultilayerPanel::from_csv_dir(dir.path()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn json_round_trip() {
        let p = panel_from(vec![vec![m2(0.0, 1.5, 0.25, 0.0)]]);
        let json = serde_json::to_string(&p.to_json()).unwrap();
        let parsed: PanelJson = serde_json::from_str(&json).unwrap();
        let back = MultilayerPanel::from_json(&parsed).unwrap();
        assert_eq!(p, back);
    }
}
