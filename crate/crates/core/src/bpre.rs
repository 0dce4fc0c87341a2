//! Receding-horizon control through the backward-propagating Riccati equation.
//!
//! For a horizon `ell` the quadratic cost
//! `1/2 sum_j (x_j' R1 x_j + u_j' R2 u_j) + 1/2 x_{ell+1}' P x_{ell+1}` is
//! minimized by sweeping
//!
//! ```text
//! Gamma_j = (R2 + B' P_{j+1} B)^-1 B' P_{j+1} A
//! P_j     = A' P_{j+1} (A - B Gamma_j) + R1
//! ```
//!
//! from `P_{ell+1}` down to `P_2`. Only the first-step gain is applied.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, PcacError, Result};

/// Condition estimate of `R2 + B' P B` above which the sweep reports failure.
pub const MAX_CONDITION: f64 = 1e12;

/// Horizon length and time-invariant weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonWeights {
    /// Horizon `ell >= 1`.
    pub horizon: usize,
    /// State weight `R1 = E1' E1`.
    pub r1: DMatrix<f64>,
    /// Control weight, positive definite.
    pub r2: DMatrix<f64>,
    /// Terminal weight `P_{ell+1}`.
    pub p_terminal: DMatrix<f64>,
    /// Performance-variable map, `z = E1 x`.
    pub e1: DMatrix<f64>,
}

impl HorizonWeights {
    /// Weights built from a performance map `e1`, with `R1 = e1' e1`.
    pub fn from_performance_map(
        horizon: usize,
        e1: DMatrix<f64>,
        r2: DMatrix<f64>,
        p_terminal: DMatrix<f64>,
    ) -> Result<Self> {
        let r1 = e1.transpose() * &e1;
        let w = Self {
            horizon,
            r1,
            r2,
            p_terminal,
            e1,
        };
        w.validate()?;
        Ok(w)
    }

    /// Output regulation: `E1 = [I_p 0 .. 0]`, `P_{ell+1} = R1`, `R2 = r2 I_m`.
    pub fn output_regulation(
        state_dim: usize,
        p: usize,
        m: usize,
        horizon: usize,
        r2: f64,
    ) -> Result<Self> {
        let mut e1 = DMatrix::zeros(p, state_dim);
        for d in 0..p.min(state_dim) {
            e1[(d, d)] = 1.0;
        }
        let r1 = e1.transpose() * &e1;
        Self::from_performance_map(horizon, e1, DMatrix::identity(m, m) * r2, r1)
    }

    pub fn state_dim(&self) -> usize {
        self.r1.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PcacError::InvalidConfig(msg.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        let n = self.r1.nrows();
        if !self.r1.is_square() || !self.p_terminal.is_square() || self.p_terminal.nrows() != n {
            return bad("R1 and terminal weight must be square with matching size");
        }
        check_len("performance map columns", n, self.e1.ncols())?;
        if !self.r2.is_square() || self.r2.clone().cholesky().is_none() {
            return bad("R2 must be symmetric positive definite");
        }
        if !is_psd(&self.r1) || !is_psd(&self.p_terminal) {
            return bad("R1 and terminal weight must be symmetric positive semidefinite");
        }
        let resid = (self.e1.transpose() * &self.e1 - &self.r1).abs().max();
        if resid > 1e-12 * self.r1.abs().max().max(1.0) {
            return bad("E1' E1 must equal R1");
        }
        Ok(())
    }
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return false;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .all(|l| *l >= -1e-12 * scale)
}

/// Componentwise actuator magnitude limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationBounds {
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
}

impl SaturationBounds {
    pub fn new(u_min: DVector<f64>, u_max: DVector<f64>) -> Result<Self> {
        check_len("saturation bounds", u_min.len(), u_max.len())?;
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| !(lo <= hi)) {
            return Err(PcacError::InvalidConfig(
                "u_min must not exceed u_max".into(),
            ));
        }
        Ok(Self { u_min, u_max })
    }

    /// `[-limit, limit]` on each of `m` channels.
    pub fn symmetric(m: usize, limit: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(m, -limit),
            DVector::from_element(m, limit),
        )
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.len() == self.u_min.len()
            && u.iter()
                .zip(self.u_min.iter().zip(self.u_max.iter()))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Clamps each channel of `u_req` into its bounds.
pub fn saturate(u_req: &DVector<f64>, bounds: &SaturationBounds) -> DVector<f64> {
    DVector::from_iterator(
        u_req.len(),
        u_req
            .iter()
            .zip(bounds.u_min.iter().zip(bounds.u_max.iter()))
            .map(|(u, (lo, hi))| u.clamp(*lo, *hi)),
    )
}

fn check_system(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> Result<()> {
    check_len("A rows", n, a.nrows())?;
    check_len("A cols", n, a.ncols())?;
    check_len("B rows", n, b.nrows())?;
    Ok(())
}

/// Factorizes `R2 + B' P B`, failing when its condition estimate is too large.
fn inner_factor(
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let s = r2 + b.transpose() * p * b;
    let cond = if s.nrows() == 1 {
        if s[(0, 0)] > 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        let eig = SymmetricEigen::new(s.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    };
    if !(cond <= MAX_CONDITION) {
        return Err(PcacError::IllConditioned { cond });
    }
    s.cholesky().ok_or(PcacError::IllConditioned { cond })
}

/// Sweeps the Riccati recursion from the terminal weight down to `P_2`.
///
/// With `horizon = 1` there are no sweep steps and the terminal weight is
/// returned.
pub fn riccati_backward(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &HorizonWeights,
) -> Result<DMatrix<f64>> {
    check_system(a, b, w.state_dim())?;
    check_len("B cols", w.r2.nrows(), b.ncols())?;
    let a_t = a.transpose();
    let mut p = w.p_terminal.clone();
    for _ in 1..w.horizon {
        let chol = inner_factor(b, &p, &w.r2)?;
        let pa = &p * a;
        let gamma = chol.solve(&(b.transpose() * &pa));
        let next = &a_t * (&pa - &p * b * gamma) + &w.r1;
        p = (&next + next.transpose()) * 0.5;
    }
    Ok(p)
}

/// First-step gain `K = -(R2 + B' P2 B)^-1 B' P2 A`.
pub fn control_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_system(a, b, p2.nrows())?;
    check_len("B cols", r2.nrows(), b.ncols())?;
    let chol = inner_factor(b, p2, r2)?;
    Ok(-chol.solve(&(b.transpose() * p2 * a)))
}

/// Backward sweep followed by the first-step gain.
pub fn receding_horizon_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &HorizonWeights,
) -> Result<DMatrix<f64>> {
    let p2 = riccati_backward(a, b, w)?;
    control_gain(a, b, &w.r2, &p2)
}
