//! Small dense linear-algebra helpers for the sampler hot loop.
//!
//! The cross-section size is small (single digits in the motivating
//! application) while the likelihood is evaluated hundreds of thousands of
//! times per chain, so the per-period factorizations run in place on
//! caller-owned buffers instead of allocating through `nalgebra`'s
//! decomposition API.

use nalgebra::{DMatrix, DVector};

/// Reusable LU factorization buffer (partial pivoting).
///
/// Copy the matrix into [`LuWorkspace::m`], call [`LuWorkspace::factor`],
/// then read the determinant or solve right-hand sides. The buffer can be
/// refilled and refactored any number of times without reallocating.
#[derive(Debug, Clone)]
pub struct LuWorkspace {
    pub m: DMatrix<f64>,
    piv: Vec<usize>,
    sign: f64,
    factored: bool,
}

impl LuWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
            piv: vec![0; n],
            sign: 1.0,
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Copy `src` into the buffer (shapes must match).
    pub fn load(&mut self, src: &DMatrix<f64>) {
        self.m.copy_from(src);
        self.factored = false;
    }

    /// Factor the buffer in place. Returns `false` when a pivot is exactly
    /// zero (the matrix is singular to working precision); the partial
    /// factorization is still usable for the relative singularity test.
    pub fn factor(&mut self) -> bool {
        let n = self.m.nrows();
        self.sign = 1.0;
        let mut nonsingular = true;
        for col in 0..n {
            // pivot search
            let mut p = col;
            let mut best = self.m[(col, col)].abs();
            for r in (col + 1)..n {
                let v = self.m[(r, col)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.piv[col] = p;
            if p != col {
                self.m.swap_rows(p, col);
                self.sign = -self.sign;
            }
            let pivot = self.m[(col, col)];
            if pivot == 0.0 {
                nonsingular = false;
                continue;
            }
            for r in (col + 1)..n {
                let factor = self.m[(r, col)] / pivot;
                self.m[(r, col)] = factor;
                for c in (col + 1)..n {
                    let sub = factor * self.m[(col, c)];
                    self.m[(r, c)] -= sub;
                }
            }
        }
        self.factored = true;
        nonsingular
    }

    /// Determinant of the factored matrix.
    pub fn det(&self) -> f64 {
        debug_assert!(self.factored);
        let mut d = self.sign;
        for i in 0..self.m.nrows() {
            d *= self.m[(i, i)];
        }
        d
    }

    /// `ln |det|`, or `None` when the determinant is exactly zero or not
    /// finite.
    pub fn log_abs_det(&self) -> Option<f64> {
        debug_assert!(self.factored);
        let mut acc = 0.0;
        for i in 0..self.m.nrows() {
            let u = self.m[(i, i)];
            if u == 0.0 {
                return None;
            }
            acc += u.abs().ln();
        }
        acc.is_finite().then_some(acc)
    }

    /// Relative pivot test: singular when `min |u_ii| <= tol * max |u_ii|`.
    /// Catches matrices that are singular up to rounding (e.g. `I - W` for
    /// row-stochastic `W`), where the raw determinant is a tiny nonzero
    /// number.
    pub fn is_singular_relative(&self, tol: f64) -> bool {
        debug_assert!(self.factored);
        let mut min = f64::INFINITY;
        let mut max: f64 = 0.0;
        for i in 0..self.m.nrows() {
            let u = self.m[(i, i)].abs();
            min = min.min(u);
            max = max.max(u);
        }
        max == 0.0 || min <= tol * max
    }

    /// Solve `A x = b` in place using the stored factors.
    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        debug_assert!(self.factored);
        let n = self.m.nrows();
        for col in 0..n {
            let p = self.piv[col];
            if p != col {
                b.swap_rows(p, col);
            }
        }
        // forward substitution (unit lower triangle)
        for r in 1..n {
            let mut acc = b[r];
            for c in 0..r {
                acc -= self.m[(r, c)] * b[c];
            }
            b[r] = acc;
        }
        // back substitution
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in (r + 1)..n {
                acc -= self.m[(r, c)] * b[c];
            }
            b[r] = acc / self.m[(r, r)];
        }
    }

    /// Solve `A x = e_j` into `out`.
    pub fn solve_unit_into(&self, j: usize, out: &mut DVector<f64>) {
        out.fill(0.0);
        out[j] = 1.0;
        self.solve_in_place(out);
    }

    /// Dense inverse via column solves.
    pub fn inverse_into(&self, out: &mut DMatrix<f64>) {
        let n = self.m.nrows();
        let mut col = DVector::zeros(n);
        for j in 0..n {
            self.solve_unit_into(j, &mut col);
            out.set_column(j, &col);
        }
    }
}

/// Spectral-radius estimate by power iteration with two-step geometric
/// averaging (stable under the sign-alternating growth of negative dominant
/// eigenvalues). Returns `(estimate, converged)`.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64, max_iters: usize) -> (f64, bool) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, true);
    }
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut y = DVector::zeros(n);
    let mut prev_growth = f64::NAN;
    let mut estimate = 0.0;
    for it in 0..max_iters {
        y.gemv(1.0, m, &x, 0.0);
        let norm = y.norm();
        if norm == 0.0 {
            return (0.0, true);
        }
        let new_estimate = if prev_growth.is_nan() {
            norm
        } else {
            (norm * prev_growth).sqrt()
        };
        if it > 0 && (new_estimate - estimate).abs() <= tol * new_estimate.max(1.0) {
            return (new_estimate, true);
        }
        estimate = new_estimate;
        prev_growth = norm;
        x.copy_from(&y);
        x /= norm;
    }
    (estimate, false)
}
