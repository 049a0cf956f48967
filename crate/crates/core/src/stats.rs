//! Shared scalar statistics: moments, quantiles, correlations, effective
//! sample sizes.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Linear-interpolation (type 7) quantile on a pre-sorted slice.
pub fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn quantile_type7(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_type7_sorted(&v, p)
}

/// Pearson correlation. Errors when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64], label: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 || n < 2.0 {
        return Err(Error::ZeroVariance(label.to_string()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value for H0: correlation = 0, from the t statistic with
/// `n - 2` degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t))
}

/// Significance stars at the 10% / 5% / 1% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn autocovariance(xs: &[f64], lag: usize, m: f64) -> f64 {
    let n = xs.len();
    (0..n - lag)
        .map(|i| (xs[i] - m) * (xs[i + lag] - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size via Geyer's initial positive sequence estimator.
/// Degenerate (constant) chains report `n`.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0 = autocovariance(xs, 0, m);
    if c0 <= 0.0 {
        return n as f64;
    }
    let max_lag = n - 2;
    let mut sum_pairs = 0.0;
    let mut lag = 0usize;
    loop {
        if lag + 1 > max_lag {
            break;
        }
        let rho_even = autocovariance(xs, lag, m) / c0;
        let rho_odd = autocovariance(xs, lag + 1, m) / c0;
        let pair = rho_even + rho_odd;
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1.0);
    (n as f64 / tau).min(n as f64)
}

/// Autocorrelation-adjusted Monte-Carlo standard error of the chain mean.
pub fn mc_standard_error(xs: &[f64]) -> f64 {
    let ess = effective_sample_size(xs);
    (variance(xs) / ess).sqrt()
}

/// Silverman's rule-of-thumb bandwidth (robust variant).
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sd = variance(xs).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in bandwidth input"));
    let iqr = quantile_type7_sorted(&sorted, 0.75) - quantile_type7_sorted(&sorted, 0.25);
    let scale = if iqr > 0.0 {
        sd.min(iqr / 1.34)
    } else {
        sd
    };
    0.9 * scale * n.powf(-0.2)
}
