//! Shared test oracles, independent of the implementation paths they check.

#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};
use sarnet::model::{LagMode, RegressionDesign, StructuralParams, VarianceSpec};
use sarnet::networks::MultilayerPanel;

const LN_2PI: f64 = 1.8378770664093453;

/// Reduced-form log-likelihood oracle: the sum over periods of the
/// multivariate normal log-density of `y_t` with mean `A_t^{-1} X_t beta`
/// and covariance `A_t^{-1} Sigma_t A_t^{-T}`, all built through nalgebra's
/// own decompositions and the dense design matrix.
pub fn reduced_form_log_likelihood(
    design: &RegressionDesign,
    panel: &MultilayerPanel,
    params: &StructuralParams,
    variance: &VarianceSpec,
    lag: LagMode,
) -> f64 {
    let n = design.n();
    let t_len = design.t_len();
    let terms: Vec<(usize, usize)> = match lag {
        LagMode::Contemporaneous => (0..t_len).map(|t| (t, t)).collect(),
        LagMode::Lagged => (1..t_len).map(|t| (t, t - 1)).collect(),
    };
    let mut total = 0.0;
    for (rt, st) in terms {
        let w = panel.composite(&params.delta, st).unwrap().matrix;
        let mut a = DMatrix::identity(n, n);
        for r in 0..n {
            for c in 0..n {
                a[(r, c)] -= params.rho[r] * w[(r, c)];
            }
        }
        let a_inv = a.clone().try_inverse().expect("invertible relational matrix");
        let xb = design.design_matrix(st) * &params.beta;
        let mean = &a_inv * xb;
        let sigma = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                variance.at(rt, r)
            } else {
                0.0
            }
        });
        let cov = &a_inv * sigma * a_inv.transpose();
        let chol = Cholesky::new(cov).expect("positive definite reduced-form covariance");
        let y = design.response(rt);
        let centered = y - mean;
        let solved = chol.l().solve_lower_triangular(&centered).unwrap();
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        total += -0.5 * (n as f64 * LN_2PI + log_det + solved.norm_squared());
    }
    total
}

/// Two-sided one-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    (d, ks_p_value(d, n))
}

/// Asymptotic Kolmogorov distribution tail with the small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Mean of a slice (tests only; avoids importing the crate's stats in
/// oracle code).
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
