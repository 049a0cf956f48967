//! Univariate slice sampler with stepping out and shrinkage (Neal 2003),
//! restricted to a bounded support.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SliceConfig {
    /// Initial interval width for the stepping-out phase.
    pub width: f64,
    /// Budget of stepping-out moves, split randomly between the two sides.
    pub max_steps: u32,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            width: 0.25,
            max_steps: 100,
        }
    }
}

const MAX_SHRINK_ITERS: usize = 10_000;

/// Draw from a density proportional to `exp(log_f)` on `(lower, upper)`,
/// starting at `x0`. The target is evaluated on the log scale; `-inf` marks
/// points outside the slice.
pub fn slice_sample<R: Rng + ?Sized>(
    rng: &mut R,
    x0: f64,
    lower: f64,
    upper: f64,
    cfg: &SliceConfig,
    mut log_f: impl FnMut(f64) -> f64,
) -> Result<f64> {
    debug_assert!(lower < upper);
    let w = cfg.width.max(f64::MIN_POSITIVE);
    let lf0 = log_f(x0);
    if !lf0.is_finite() {
        return Err(Error::Numerical(format!(
            "slice sampler started at x = {x0} where the target is zero or undefined"
        )));
    }
    // auxiliary level: u ~ U(0, f(x0)) on the log scale
    let log_y = lf0 + rng.random::<f64>().ln();

    // initial interval around x0, clipped to the support
    let mut l = (x0 - rng.random::<f64>() * w).max(lower);
    let mut r = (l + w).min(upper);

    // stepping out with a randomly split budget
    if cfg.max_steps > 1 {
        let j = (rng.random::<f64>() * cfg.max_steps as f64).floor() as u32;
        let mut j = j.min(cfg.max_steps - 1);
        let mut k = cfg.max_steps - 1 - j;
        while j > 0 && l > lower && log_f(l) > log_y {
            l = (l - w).max(lower);
            j -= 1;
        }
        while k > 0 && r < upper && log_f(r) > log_y {
            r = (r + w).min(upper);
            k -= 1;
        }
    }

    // shrinkage
    for _ in 0..MAX_SHRINK_ITERS {
        let x1 = l + rng.random::<f64>() * (r - l);
        if log_f(x1) > log_y {
            return Ok(x1);
        }
        if x1 < x0 {
            l = x1;
        } else {
            r = x1;
        }
    }
    Err(Error::Numerical(
        "slice shrinkage failed to find an acceptable point".into(),
    ))
}
