//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical kernels, so a mistake in
//! the library cannot be mirrored by the oracle.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unnormalized `integral_0^c t^(a-1) (1-t)^(b-1) dt` by tanh-sinh quadrature,
/// with the integrand scaled by `exp(-shift)`.
fn beta_integral(a: f64, b: f64, c: f64, shift: f64) -> f64 {
    let integrand = |s: f64| -> f64 {
        let z = std::f64::consts::PI * s.sinh();
        // sigma(z) and 1 - sigma(z) without cancellation
        let (lo, hi) = if z >= 0.0 {
            let e = (-z).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = z.exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        };
        let t = c * lo;
        let one_minus_t = (1.0 - c) + c * hi;
        if t <= 0.0 || one_minus_t <= 0.0 {
            return 0.0;
        }
        let dt_ds = c * lo * hi * std::f64::consts::PI * s.cosh();
        let log_f = (a - 1.0) * t.ln() + (b - 1.0) * one_minus_t.ln() - shift;
        log_f.exp() * dt_ds
    };
    let s_max: f64 = 4.5;
    let mut previous = f64::NAN;
    let mut h = 0.5;
    loop {
        let n = (s_max / h).ceil() as i64;
        let sum: f64 = (-n..=n).map(|k| integrand(k as f64 * h)).sum::<f64>() * h;
        if (sum - previous).abs() <= 1e-15 * sum.abs() || h < 1.0 / 512.0 {
            return sum;
        }
        previous = sum;
        h /= 2.0;
    }
}

/// F-distribution CDF from direct numerical integration of the beta density.
pub fn f_cdf_quadrature(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let c = d1 * x / (d1 * x + d2);
    let mode = if a > 1.0 && b > 1.0 {
        (a - 1.0) / (a + b - 2.0)
    } else {
        0.5
    };
    let shift = (a - 1.0) * mode.ln() + (b - 1.0) * (1.0 - mode).ln();
    beta_integral(a, b, c, shift) / beta_integral(a, b, 1.0, shift)
}

/// Regularized batch least squares
/// `argmin (theta - theta0)' psi0^-1 (theta - theta0) + sum |y_i - phi_i theta|^2`.
pub fn batch_least_squares(
    phis: &[DMatrix<f64>],
    ys: &[DVector<f64>],
    theta0: &DVector<f64>,
    psi0: &DMatrix<f64>,
) -> DVector<f64> {
    let reg = psi0.clone().try_inverse().expect("invertible psi0");
    let mut normal = reg.clone();
    let mut rhs = &reg * theta0;
    for (phi, y) in phis.iter().zip(ys) {
        normal += phi.transpose() * phi;
        rhs += phi.transpose() * y;
    }
    normal
        .lu()
        .solve(&rhs)
        .expect("nonsingular normal equations")
}

/// Fixed point of `P = A'PA - A'PB (R2 + B'PB)^-1 B'PA + R1` by plain
/// iteration from `R1` with an explicit inverse.
pub fn dare_fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut p = r1.clone();
    for _ in 0..1_000_000 {
        let inner = (r2 + b.transpose() * &p * b)
            .try_inverse()
            .expect("invertible");
        let next =
            a.transpose() * &p * a - a.transpose() * &p * b * inner * b.transpose() * &p * a + r1;
        let change = (&next - &p).norm();
        p = next;
        if change <= 1e-15 * p.norm() {
            return p;
        }
    }
    panic!("DARE iteration did not converge");
}

/// One-step ARX prediction `sum_i -F_i y[i-1] + G_i u[i-1]` where `ys[0]`
/// and `us[0]` are the most recent samples.
pub fn arx_predict(
    f: &[DMatrix<f64>],
    g: &[DMatrix<f64>],
    ys: &[DVector<f64>],
    us: &[DVector<f64>],
) -> DVector<f64> {
    let mut out = DVector::zeros(f[0].nrows());
    for i in 0..f.len() {
        out -= &f[i] * &ys[i];
        out += &g[i] * &us[i];
    }
    out
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn relative_error(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}
