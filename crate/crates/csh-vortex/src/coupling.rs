//! Closed-form algebra of the reduced vortex system: coupling matrices,
//! the smooth right-hand side, the g-function and the Bradlow bound.

use std::f64::consts::PI;
use std::ops::Mul;

use crate::error::{Result, VortexError};

/// Scalar model parameters: color rank `n`, coupling ratio `kappa` and
/// scaled coupling `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    n: usize,
    kappa: f64,
    lambda: f64,
}

impl CouplingParams {
    pub fn new(n: usize, kappa: f64, lambda: f64) -> Result<Self> {
        if n < 2 {
            return Err(VortexError::InvalidParameter(format!("N must be at least 2, got {n}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(VortexError::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(VortexError::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { n, kappa, lambda })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same rank and ratio with a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.n, self.kappa, lambda)
    }

    /// Torus solvers need `kappa > 1`.
    pub fn require_periodic(&self) -> Result<()> {
        if self.kappa > 1.0 {
            Ok(())
        } else {
            Err(VortexError::InvalidParameter(format!(
                "periodic solutions require kappa > 1, got {}",
                self.kappa
            )))
        }
    }

    /// `n as f64`, used everywhere in the formulas.
    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Slowest decay factor `min(1, kappa)`.
    pub fn sigma0(&self) -> f64 {
        self.kappa.min(1.0)
    }

    /// U(1) Chern-Simons coupling `1 / (2 sqrt(lambda))`.
    pub fn kappa1(&self) -> f64 {
        0.5 / self.lambda.sqrt()
    }

    /// SU(N) Chern-Simons coupling `kappa1 / kappa`.
    pub fn kappa2(&self) -> f64 {
        self.kappa1() / self.kappa
    }
}

/// Dense 2x2 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2 {
    pub entries: [[f64; 2]; 2],
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2 { entries: [[1.0, 0.0], [0.0, 1.0]] };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { entries: [[a, b], [c, d]] }
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Self::new(a, 0.0, 0.0, d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.entries;
        Self::new(a, c, b, d)
    }

    pub fn scale(&self, s: f64) -> Self {
        let [[a, b], [c, d]] = self.entries;
        Self::new(s * a, s * b, s * c, s * d)
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        a * d - b * c
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.entries;
        Some(Self::new(d / det, -b / det, -c / det, a / det))
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.entries;
        [a * x[0] + b * x[1], c * x[0] + d * x[1]]
    }

    /// `xᵀ M y`.
    pub fn bilinear(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let my = self.apply(y);
        x[0] * my[0] + x[1] * my[1]
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.entries.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        (self.entries[0][1] - self.entries[1][0]).abs() <= rel_tol * scale
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        m
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;

    fn mul(self, rhs: Matrix2) -> Matrix2 {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.entries[i][0] * rhs.entries[0][j] + self.entries[i][1] * rhs.entries[1][j];
            }
        }
        Matrix2 { entries: out }
    }
}

/// Coupling matrix `K`; its rows sum to one.
pub fn build_k(params: &CouplingParams) -> Matrix2 {
    let n = params.nf();
    let k = params.kappa;
    Matrix2::new(n - 1.0 + k, 1.0 - k, (n - 1.0) * (1.0 - k), 1.0 + (n - 1.0) * k).scale(1.0 / n)
}

/// Symmetric positive definite matrix `A(N, kappa)`, or `A(N, 1/kappa)` when
/// `use_inverse_kappa` is set.
pub fn build_a(params: &CouplingParams, use_inverse_kappa: bool) -> Matrix2 {
    let n = params.nf();
    let inv = if use_inverse_kappa { params.kappa } else { 1.0 / params.kappa };
    let off = 1.0 - inv;
    Matrix2::new(n - 1.0 + inv, off, off, 1.0 / (n - 1.0) + inv).scale(1.0 / n)
}

/// Smaller eigenvalue of a symmetric 2x2 matrix.
pub fn smallest_eigenvalue(a: &Matrix2) -> Result<f64> {
    if !a.is_symmetric(1e-14) {
        return Err(VortexError::NotSymmetric);
    }
    let [[p, b], [_, d]] = a.entries;
    Ok(0.5 * (p + d - ((p - d) * (p - d) + 4.0 * b * b).sqrt()))
}

/// The coercivity constant in the printed closed form. It equals the smaller
/// eigenvalue of `N·A(N, kappa)`, not of `A(N, kappa)`.
pub fn printed_alpha0(n: usize, kappa: f64) -> f64 {
    let nf = n as f64;
    let m = nf - 1.0;
    let disc = (nf * nf * (nf - 2.0) * (nf - 2.0)) / (m * m) + 4.0 * (1.0 - 1.0 / kappa).powi(2);
    0.5 * ((m * m + 1.0) / m + 2.0 / kappa - disc.sqrt())
}

/// Smooth right-hand side from precomputed exponentials `e_i = exp(u_i)`.
///
/// Uses the unit row sums of `K`: `K·(e − 1) = K·e − 1`.
#[inline]
pub fn rhs_from_exp(e1: f64, e2: f64, k: &Matrix2, lambda: f64) -> (f64, f64) {
    let [[k11, k12], [k21, k22]] = k.entries;
    let t1 = e1 * (k11 * e1 + k12 * e2 - 1.0);
    let t2 = e2 * (k21 * e1 + k22 * e2 - 1.0);
    (lambda * (k11 * t1 + k12 * t2), lambda * (k21 * t1 + k22 * t2))
}

/// `λ·K·diag(e^u)·K·(e^u − 1)` at one point, without the Dirac terms.
pub fn rhs_smooth(u1: f64, u2: f64, params: &CouplingParams) -> Result<(f64, f64)> {
    let e1 = checked_exp(u1)?;
    let e2 = checked_exp(u2)?;
    Ok(rhs_from_exp(e1, e2, &build_k(params), params.lambda))
}

pub(crate) fn checked_exp(u: f64) -> Result<f64> {
    let e = u.exp();
    if e.is_finite() && !u.is_nan() {
        Ok(e)
    } else {
        Err(VortexError::Overflow(u))
    }
}

/// `g(t1, t2)`, whose minimum `−N²/(4(N−1))` sits at `(1/2, 1/2)`.
pub fn g_eval(t1: f64, t2: f64, params: &CouplingParams) -> f64 {
    let n = params.nf();
    let k = params.kappa;
    (n - 1.0 + k) * t1 * t1 + (1.0 / (n - 1.0) + k) * t2 * t2
        - 2.0 * (k - 1.0) * t1 * t2
        - n * t1
        - n / (n - 1.0) * t2
}

pub fn g_minimum(n: usize) -> f64 {
    let nf = n as f64;
    -nf * nf / (4.0 * (nf - 1.0))
}

/// Necessary lower bound on `lambda` for periodic solutions.
pub fn bradlow_lambda_min(params: &CouplingParams, n1: u32, n2: u32, area: f64) -> f64 {
    let n = params.nf();
    16.0 * PI * ((n - 1.0) * n1 as f64 + n2 as f64) / (n * area)
}

/// Source constants `(b1, b2)` of the periodic functional.
pub fn source_constants(params: &CouplingParams, n1: u32, n2: u32) -> (f64, f64) {
    let n = params.nf();
    let k = params.kappa;
    let (n1, n2) = (n1 as f64, n2 as f64);
    let b1 = 4.0 * PI * ((1.0 + (n - 1.0) * k) * n1 + (k - 1.0) * n2) / k;
    let b2 = 4.0 * PI * ((n - 1.0) * (k - 1.0) * n1 + (n - 1.0 + k) * n2) / ((n - 1.0) * k);
    (b1, b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(n: usize, k: f64) -> CouplingParams {
        CouplingParams::new(n, k, 1.0).unwrap()
    }

    #[test]
    fn k_examples() {
        assert_eq!(build_k(&p(2, 3.0)), Matrix2::new(2.0, -1.0, -1.0, 2.0));
        assert_eq!(build_k(&p(2, 1.0)), Matrix2::IDENTITY);
        let k = build_k(&p(3, 2.0));
        assert!(k.max_abs_diff(&Matrix2::new(4.0, -1.0, -2.0, 5.0).scale(1.0 / 3.0)) < 1e-15);
    }

    #[test]
    fn a_examples() {
        let a = build_a(&p(2, 3.0), false);
        assert!(a.max_abs_diff(&Matrix2::new(2.0, 1.0, 1.0, 2.0).scale(1.0 / 3.0)) < 1e-15);
        assert_eq!(build_a(&p(2, 1.0), false), Matrix2::IDENTITY);
        assert!((smallest_eigenvalue(&a).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(smallest_eigenvalue(&Matrix2::IDENTITY).unwrap(), 1.0);
        assert!(smallest_eigenvalue(&build_a(&p(3, 2.0), false)).unwrap() > 0.0);
        assert_eq!(smallest_eigenvalue(&Matrix2::new(1.0, 2.0, 0.0, 1.0)), Err(VortexError::NotSymmetric));
    }

    #[test]
    fn printed_alpha0_is_eigenvalue_of_scaled_matrix() {
        for &(n, k) in &[(2, 3.0), (3, 2.0), (5, 0.4), (4, 7.5)] {
            let a = build_a(&p(n, k), false);
            let scaled = smallest_eigenvalue(&a.scale(n as f64)).unwrap();
            assert!((printed_alpha0(n, k) - scaled).abs() < 1e-12 * scaled.max(1.0));
        }
        let a = build_a(&p(2, 3.0), false);
        assert!((printed_alpha0(2, 3.0) / smallest_eigenvalue(&a).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn a_factorizations() {
        for &(n, k) in &[(2, 3.0), (3, 2.0), (6, 0.3)] {
            let params = p(n, k);
            let a = build_a(&params, false);
            let ap = build_a(&params, true);
            let kk = build_k(&params);
            let lam = Matrix2::diag(1.0, 1.0 / (n as f64 - 1.0));
            assert!((a * kk).max_abs_diff(&lam) < 1e-14);
            assert!((lam * kk).max_abs_diff(&ap) < 1e-14);
        }
    }

    #[test]
    fn rhs_vacuum_and_overflow() {
        assert_eq!(rhs_smooth(0.0, 0.0, &p(4, 2.5)).unwrap(), (0.0, 0.0));
        assert!(matches!(rhs_smooth(800.0, 0.0, &p(2, 3.0)), Err(VortexError::Overflow(_))));
        assert!(rhs_smooth(f64::NAN, 0.0, &p(2, 3.0)).is_err());
    }

    #[test]
    fn g_examples() {
        for &(n, k) in &[(2, 3.0), (3, 1.5), (7, 0.2)] {
            let params = p(n, k);
            assert!((g_eval(0.5, 0.5, &params) - g_minimum(n)).abs() < 1e-14);
            assert_eq!(g_eval(0.0, 0.0, &params), 0.0);
        }
    }

    #[test]
    fn g_hessian_is_2n_times_inverse_kappa_matrix() {
        let params = p(3, 2.0);
        let h = 1e-3;
        let f = |a: f64, b: f64| g_eval(a, b, &params);
        let hxx = (f(0.5 + h, 0.5) - 2.0 * f(0.5, 0.5) + f(0.5 - h, 0.5)) / (h * h);
        let hyy = (f(0.5, 0.5 + h) - 2.0 * f(0.5, 0.5) + f(0.5, 0.5 - h)) / (h * h);
        let hxy = (f(0.5 + h, 0.5 + h) - f(0.5 + h, 0.5 - h) - f(0.5 - h, 0.5 + h) + f(0.5 - h, 0.5 - h))
            / (4.0 * h * h);
        let expected = build_a(&params, true).scale(2.0 * 3.0);
        assert!(Matrix2::new(hxx, hxy, hxy, hyy).max_abs_diff(&expected) < 1e-8);
    }

    #[test]
    fn bradlow_examples() {
        let area = 4.0 * PI * PI;
        assert!((bradlow_lambda_min(&p(2, 3.0), 1, 1, area) - 4.0 / PI).abs() < 1e-15);
        assert_eq!(bradlow_lambda_min(&p(2, 3.0), 0, 0, area), 0.0);
        assert!((bradlow_lambda_min(&p(3, 3.0), 2, 1, 1.0) - 80.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CouplingParams::new(1, 1.0, 1.0).is_err());
        assert!(CouplingParams::new(2, 0.0, 1.0).is_err());
        assert!(CouplingParams::new(2, 1.0, -1.0).is_err());
        assert!(p(2, 1.0).require_periodic().is_err());
        assert!(p(2, 1.5).require_periodic().is_ok());
    }

    proptest! {
        #[test]
        fn a_is_positive_definite(n in 2usize..12, k in 0.01f64..100.0) {
            for flag in [false, true] {
                let a = build_a(&p(n, k), flag);
                prop_assert!(a.is_symmetric(0.0));
                prop_assert!(smallest_eigenvalue(&a).unwrap() > 0.0);
                prop_assert!(a.det() > 0.0);
            }
        }

        #[test]
        fn g_bounded_below(n in 2usize..10, k in 0.05f64..20.0, t1 in -5.0f64..5.0, t2 in -5.0f64..5.0) {
            let params = p(n, k);
            prop_assert!(g_eval(t1, t2, &params) >= g_minimum(n) - 1e-12 * g_minimum(n).abs());
        }

        #[test]
        fn k_rows_sum_to_one(n in 2usize..12, k in 0.01f64..100.0) {
            let m = build_k(&p(n, k));
            prop_assert!((m.get(0, 0) + m.get(0, 1) - 1.0).abs() < 1e-12 * k.max(1.0));
            prop_assert!((m.get(1, 0) + m.get(1, 1) - 1.0).abs() < 1e-12 * (n as f64 * k).max(1.0));
        }
    }
}
