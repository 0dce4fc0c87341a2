//! Recursive least squares with variable-rate forgetting.
//!
//! The forgetting factor `lambda_k = 1 / beta_k` is driven by an F-test on the
//! identification error: when the variance over the last `tau_n + 1` errors is
//! statistically larger than the variance over the last `tau_d + 1` errors,
//! `beta_k` rises above one and old data is discounted.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, PcacError, Result};
use crate::fdist::inverse_f_cdf;
use crate::idmodel::ArxParameterVector;

/// Long-window variance (or covariance determinant) below which the
/// statistic is pinned to zero.
pub const ZERO_VARIANCE_FLOOR: f64 = 1e-30;

/// Ridge added to the long-window covariance before inversion.
pub const COVARIANCE_RIDGE: f64 = 1e-12;

/// F-test forgetting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgettingConfig {
    /// Short window length `tau_n`.
    pub tau_n: usize,
    /// Long window length `tau_d`.
    pub tau_d: usize,
    /// Forgetting gain `eta`.
    pub eta: f64,
    /// Significance level `alpha`.
    pub alpha: f64,
}

impl Default for ForgettingConfig {
    fn default() -> Self {
        Self {
            tau_n: 40,
            tau_d: 200,
            eta: 0.1,
            alpha: 0.001,
        }
    }
}

impl ForgettingConfig {
    /// Checks the window and level constraints for output dimension `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(PcacError::InvalidConfig(msg));
        if self.tau_n < p || self.tau_n >= self.tau_d {
            return bad(format!(
                "need p <= tau_n < tau_d (p={p}, tau_n={}, tau_d={})",
                self.tau_n, self.tau_d
            ));
        }
        if self.tau_d <= p {
            return bad(format!("need tau_d > p (tau_d={}, p={p})", self.tau_d));
        }
        if p > 1 && self.tau_d <= p + 3 {
            return bad(format!(
                "multivariable test needs tau_d > p + 3 (tau_d={}, p={p})",
                self.tau_d
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be nonnegative, got {}", self.eta));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        Ok(())
    }
}

/// Constants of the multivariable test for output dimension `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultivariableConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MultivariableConstants {
    pub fn new(p: usize, tau_n: usize, tau_d: usize) -> Self {
        let (p, tn, td) = (p as f64, tau_n as f64, tau_d as f64);
        let a = (tn + td - p - 1.0) * (td - 1.0) / ((td - p - 3.0) * (td - p));
        let b = 4.0 + (p * tn + 2.0) / (a - 1.0);
        let c = p * tn * (b - 2.0) / (b * (td - p - 1.0));
        Self { a, b, c }
    }
}

/// F-quantile term `sqrt(F_inv(1 - alpha))` for the given config and output
/// dimension. Degrees of freedom are `(tau_n, tau_d)` when `p = 1` and
/// `(p tau_n, b)` otherwise.
pub fn quantile_threshold(cfg: &ForgettingConfig, p: usize) -> Result<f64> {
    let level = 1.0 - cfg.alpha;
    if level <= 0.0 {
        return Ok(0.0);
    }
    let q = if p == 1 {
        inverse_f_cdf(cfg.tau_n as f64, cfg.tau_d as f64, level)?
    } else {
        let k = MultivariableConstants::new(p, cfg.tau_n, cfg.tau_d);
        inverse_f_cdf((p * cfg.tau_n) as f64, k.b, level)?
    };
    Ok(q.sqrt())
}

/// A forgetting test with its F quantile computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingTest {
    cfg: ForgettingConfig,
    p: usize,
    threshold: f64,
    constants: Option<MultivariableConstants>,
}

impl ForgettingTest {
    pub fn new(cfg: ForgettingConfig, p: usize) -> Result<Self> {
        cfg.validate(p)?;
        let constants = (p > 1).then(|| MultivariableConstants::new(p, cfg.tau_n, cfg.tau_d));
        Ok(Self {
            cfg,
            p,
            threshold: quantile_threshold(&cfg, p)?,
            constants,
        })
    }

    pub fn config(&self) -> &ForgettingConfig {
        &self.cfg
    }

    /// `sqrt(F_inv(1 - alpha))`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Statistic `g` over a full window of `tau_d + 1` errors, oldest first.
    pub fn statistic<'a, I>(&self, window: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let window: Vec<&DVector<f64>> = window.into_iter().collect();
        check_len("error window", self.cfg.tau_d + 1, window.len())?;
        let short = &window[window.len() - (self.cfg.tau_n + 1)..];
        if self.p == 1 {
            let long_var = variance(window.iter().map(|e| e[0]));
            if long_var < ZERO_VARIANCE_FLOOR {
                return Ok(0.0);
            }
            let short_var = variance(short.iter().map(|e| e[0]));
            Ok((short_var / long_var).sqrt() - self.threshold)
        } else {
            let k = self.constants.expect("constants set for p > 1");
            let sigma_d = covariance(&window, self.p);
            if sigma_d.determinant() < ZERO_VARIANCE_FLOOR {
                return Ok(0.0);
            }
            let sigma_n = covariance(short, self.p);
            let reg = sigma_d + DMatrix::identity(self.p, self.p) * COVARIANCE_RIDGE;
            let chol = reg.cholesky().ok_or(PcacError::SingularCovariance)?;
            let trace = chol.solve(&sigma_n).trace();
            let scale = self.cfg.tau_n as f64 / (k.c * self.cfg.tau_d as f64);
            Ok((scale * trace).max(0.0).sqrt() - self.threshold)
        }
    }

    /// `beta_k` for the given statistic and step.
    pub fn beta(&self, g: f64, step: usize) -> f64 {
        compute_beta(g, &self.cfg, step)
    }
}

fn variance(values: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn covariance(window: &[&DVector<f64>], p: usize) -> DMatrix<f64> {
    let n = window.len() as f64;
    let mean = window.iter().fold(DVector::zeros(p), |acc, e| acc + *e) / n;
    let mut cov = DMatrix::zeros(p, p);
    for e in window {
        let d = *e - &mean;
        cov += &d * d.transpose();
    }
    cov / (n - 1.0)
}

/// Scalar statistic over the last `tau_d + 1` errors (oldest first).
pub fn forgetting_statistic_scalar(errors: &[f64], cfg: &ForgettingConfig) -> Result<f64> {
    let window: Vec<DVector<f64>> = errors
        .iter()
        .map(|e| DVector::from_element(1, *e))
        .collect();
    ForgettingTest::new(*cfg, 1)?.statistic(window.iter())
}

/// Multivariable statistic over the last `tau_d + 1` error vectors (oldest first).
pub fn forgetting_statistic_multivariable(
    errors: &[DVector<f64>],
    cfg: &ForgettingConfig,
) -> Result<f64> {
    let p = errors.first().map(|e| e.len()).unwrap_or(0);
    if p < 2 {
        return Err(PcacError::DimensionMismatch {
            what: "multivariable error dimension",
            expected: 2,
            got: p,
        });
    }
    for e in errors {
        check_len("error vector", p, e.len())?;
    }
    ForgettingTest::new(*cfg, p)?.statistic(errors.iter())
}

/// `beta = 1` before the long window fills, `1 + eta * max(g, 0)` after.
pub fn compute_beta(g: f64, cfg: &ForgettingConfig, step: usize) -> f64 {
    if step < cfg.tau_d {
        1.0
    } else {
        1.0 + cfg.eta * g.max(0.0)
    }
}

/// Estimator state: coefficients, covariance, error window and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    pub theta: ArxParameterVector,
    pub psi: DMatrix<f64>,
    pub error_window: VecDeque<DVector<f64>>,
    pub step: usize,
}

/// Diagnostics from one update.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsStep {
    /// A-priori identification error `y_k - phi_k theta_k`.
    pub error: DVector<f64>,
    /// Forgetting statistic, when the window was full.
    pub statistic: Option<f64>,
    pub beta: f64,
}

impl RlsState {
    /// Seeds the estimator with `theta0` and `psi0 = psi0_scale * I`.
    pub fn new(theta0: ArxParameterVector, psi0_scale: f64) -> Result<Self> {
        if !(psi0_scale > 0.0 && psi0_scale.is_finite()) {
            return Err(PcacError::InvalidConfig(format!(
                "psi0 scale must be positive, got {psi0_scale}"
            )));
        }
        let n = theta0.dims().n_params();
        Ok(Self {
            theta: theta0,
            psi: DMatrix::identity(n, n) * psi0_scale,
            error_window: VecDeque::new(),
            step: 0,
        })
    }

    /// One update with regressor `phi` (`p x n_params`) and measurement `y`.
    pub fn update(
        &mut self,
        phi: &DMatrix<f64>,
        y: &DVector<f64>,
        test: &ForgettingTest,
    ) -> Result<RlsStep> {
        let dims = self.theta.dims();
        check_len("regressor rows", dims.p, phi.nrows())?;
        check_len("regressor columns", dims.n_params(), phi.ncols())?;
        check_len("measurement", dims.p, y.len())?;
        let tau_d = test.config().tau_d;

        let error = y - phi * self.theta.as_vector();
        self.error_window.push_back(error.clone());
        let dropped = if self.error_window.len() > tau_d + 1 {
            self.error_window.pop_front()
        } else {
            None
        };
        let result = self.advance(phi, error, test);
        if result.is_err() {
            self.error_window.pop_back();
            if let Some(e) = dropped {
                self.error_window.push_front(e);
            }
        }
        result
    }

    fn advance(
        &mut self,
        phi: &DMatrix<f64>,
        error: DVector<f64>,
        test: &ForgettingTest,
    ) -> Result<RlsStep> {
        let dims = self.theta.dims();
        let tau_d = test.config().tau_d;

        let statistic = if self.step >= tau_d {
            Some(test.statistic(self.error_window.iter())?)
        } else {
            None
        };
        let beta = test.beta(statistic.unwrap_or(0.0), self.step);

        let psi_phi_t = &self.psi * phi.transpose();
        let mut inner = phi * &psi_phi_t;
        for d in 0..dims.p {
            inner[(d, d)] += 1.0 / beta;
        }
        let chol = inner
            .cholesky()
            .ok_or(PcacError::NotPositiveDefinite { step: self.step })?;
        let gain_t = chol.solve(&psi_phi_t.transpose());
        let mut psi_next = (&self.psi - &psi_phi_t * gain_t) * beta;
        psi_next = (&psi_next + psi_next.transpose()) * 0.5;
        if psi_next.iter().any(|v| !v.is_finite()) || psi_next.clone().cholesky().is_none() {
            return Err(PcacError::NotPositiveDefinite { step: self.step });
        }

        let theta_next = self.theta.as_vector() + &psi_next * phi.transpose() * &error;
        self.theta = ArxParameterVector::new(dims, theta_next)
            .map_err(|_| PcacError::NotPositiveDefinite { step: self.step })?;
        self.psi = psi_next;
        self.step += 1;
        Ok(RlsStep {
            error,
            statistic,
            beta,
        })
    }
}

/// Functional form of [`RlsState::update`]; recomputes the F quantile.
pub fn rls_update(
    state: &RlsState,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &ForgettingConfig,
) -> Result<RlsState> {
    let test = ForgettingTest::new(*cfg, state.theta.dims().p)?;
    let mut next = state.clone();
    next.update(phi, y, &test)?;
    Ok(next)
}
