//! Quantiles of the F-distribution.
//!
//! The CDF is evaluated through the regularized incomplete beta function,
//! `P(X <= x) = I_t(d1/2, d2/2)` with `t = d1 x / (d1 x + d2)`, and inverted in
//! `t` (or `1 - t` for upper quantiles) by a bracketed Newton iteration.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{PcacError, Result};

const MAX_ITER: usize = 300;

/// Largest CDF residual accepted from [`inverse_f_cdf`].
pub const ROUND_TRIP_TOL: f64 = 1e-10;

/// CDF of the F-distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let t = d1 * x / (d1 * x + d2);
    beta_reg(d1 / 2.0, d2 / 2.0, t)
}

/// Returns `x` such that the F(`d1`, `d2`) CDF at `x` equals `prob`.
pub fn inverse_f_cdf(d1: f64, d2: f64, prob: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
        return Err(PcacError::InvalidConfig(format!(
            "F degrees of freedom must be positive, got ({d1}, {d2})"
        )));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(PcacError::InvalidConfig(format!(
            "F quantile probability must lie in (0, 1), got {prob}"
        )));
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    // Upper quantiles are solved for `1 - t` through I_t(a, b) = 1 - I_{1-t}(b, a),
    // which keeps relative precision in x when t is close to one.
    let x = if prob <= 0.5 {
        let t = inverse_beta_reg(a, b, prob)?;
        d2 * t / (d1 * (1.0 - t))
    } else {
        let s = inverse_beta_reg(b, a, 1.0 - prob)?;
        d2 * (1.0 - s) / (d1 * s)
    };
    let residual = (f_cdf(d1, d2, x) - prob).abs();
    if !x.is_finite() || residual > ROUND_TRIP_TOL {
        return Err(PcacError::NoConvergence(format!(
            "F quantile ({d1}, {d2}, {prob}) residual {residual:e}"
        )));
    }
    Ok(x)
}

fn inverse_beta_reg(a: f64, b: f64, prob: f64) -> Result<f64> {
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let density = |t: f64| ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_beta).exp();

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut t = a / (a + b);
    for _ in 0..MAX_ITER {
        let resid = beta_reg(a, b, t) - prob;
        if resid == 0.0 {
            return Ok(t);
        }
        if resid > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= f64::EPSILON * t.max(f64::MIN_POSITIVE) {
            return Ok(t);
        }
        let pdf = density(t);
        let newton = t - resid / pdf;
        let next = if pdf.is_finite() && pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t {
            return Ok(next);
        }
        t = next;
    }
    Err(PcacError::NoConvergence(format!(
        "inverse incomplete beta ({a}, {b}, {prob}) after {MAX_ITER} iterations"
    )))
}
