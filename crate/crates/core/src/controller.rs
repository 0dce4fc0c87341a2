//! The PCAC loop: identify, realize, optimize, saturate.
//!
//! Each call to [`Pcac::step`] consumes the measurement `y_k` and returns the
//! control `u_{k+1}` to hold over the next sample period:
//!
//! 1. build `phi_k` from the stored history,
//! 2. update the RLS estimate to `theta_{k+1}`,
//! 3. assemble the BOCF matrices from `theta_{k+1}`,
//! 4. reconstruct `x_k` and propagate it to `x_{k+1} = A x_k + B u_k`,
//! 5. sweep the Riccati recursion and form the first-step gain,
//! 6. request `u_req = K x_{k+1}` and saturate it,
//! 7. shift `(y_k, u_k)` into the history.

use nalgebra::{DMatrix, DVector};

use crate::bpre::{control_gain, riccati_backward, saturate, HorizonWeights, SaturationBounds};
use crate::error::{check_len, PcacError, Result};
use crate::idmodel::{
    assemble_bocf, build_regressor, compute_bocf_state, ArxParameterVector, IoHistory, ModelDims,
};
use crate::rls::{ForgettingConfig, ForgettingTest, RlsState};

/// Controller hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PcacConfig {
    pub dims: ModelDims,
    pub theta0: ArxParameterVector,
    /// `Psi_0 = psi0_scale * I`.
    pub psi0_scale: f64,
    pub forgetting: ForgettingConfig,
    pub weights: HorizonWeights,
    pub bounds: SaturationBounds,
    /// Initial implemented control.
    pub u0: DVector<f64>,
}

impl Default for PcacConfig {
    /// SISO tuning used for the Rijke-tube experiments: order 10, horizon 20,
    /// `R2 = 0.01`, output weight on the first state, limits of 8 V.
    fn default() -> Self {
        let dims = ModelDims::siso(10).expect("valid dims");
        Self {
            dims,
            theta0: ArxParameterVector::from_element(dims, 1e-10),
            psi0_scale: 1e-4,
            forgetting: ForgettingConfig::default(),
            weights: HorizonWeights::output_regulation(dims.state_dim(), 1, 1, 20, 1e-2)
                .expect("valid weights"),
            bounds: SaturationBounds::symmetric(1, 8.0).expect("valid bounds"),
            u0: DVector::zeros(1),
        }
    }
}

impl PcacConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if self.theta0.dims() != d {
            return Err(PcacError::InvalidConfig(
                "theta0 does not match model dimensions".into(),
            ));
        }
        if !(self.psi0_scale > 0.0 && self.psi0_scale.is_finite()) {
            return Err(PcacError::InvalidConfig(format!(
                "psi0 scale must be positive, got {}",
                self.psi0_scale
            )));
        }
        self.forgetting.validate(d.p)?;
        self.weights.validate()?;
        check_len(
            "weight state dimension",
            d.state_dim(),
            self.weights.state_dim(),
        )?;
        check_len("control weight size", d.m, self.weights.r2.nrows())?;
        check_len("saturation bound size", d.m, self.bounds.u_min.len())?;
        check_len("initial control size", d.m, self.u0.len())?;
        if !self.bounds.contains(&self.u0) {
            return Err(PcacError::InvalidConfig(
                "u0 lies outside the saturation bounds".into(),
            ));
        }
        Ok(())
    }
}

/// Mutable controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct PcacState {
    pub rls: RlsState,
    pub history: IoHistory,
    /// `u_k`, the control currently held.
    pub u_implemented: DVector<f64>,
    /// `u_req,k`.
    pub u_requested: DVector<f64>,
    pub step: usize,
}

/// Result of one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `u_req,k+1`.
    pub u_requested: DVector<f64>,
    /// `u_{k+1}`.
    pub u_implemented: DVector<f64>,
    /// RLS forgetting rate used for this update.
    pub beta: f64,
    /// A-priori identification error.
    pub id_error: DVector<f64>,
    /// Set when the optimizer failed and the previous control was held.
    pub fallback: Option<PcacError>,
}

/// An adaptive predictive controller instance.
#[derive(Debug, Clone)]
pub struct Pcac {
    cfg: PcacConfig,
    test: ForgettingTest,
    state: PcacState,
}

/// Builds the initial controller state for `cfg`.
pub fn pcac_init(cfg: &PcacConfig) -> Result<PcacState> {
    cfg.validate()?;
    Ok(PcacState {
        rls: RlsState::new(cfg.theta0.clone(), cfg.psi0_scale)?,
        history: IoHistory::new(cfg.dims),
        u_implemented: cfg.u0.clone(),
        u_requested: cfg.u0.clone(),
        step: 0,
    })
}

impl Pcac {
    pub fn new(cfg: PcacConfig) -> Result<Self> {
        let state = pcac_init(&cfg)?;
        let test = ForgettingTest::new(cfg.forgetting, cfg.dims.p)?;
        Ok(Self { cfg, test, state })
    }

    pub fn config(&self) -> &PcacConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PcacState {
        &self.state
    }

    /// Current coefficient estimate.
    pub fn theta(&self) -> &ArxParameterVector {
        &self.state.rls.theta
    }

    /// Consumes `y_k` and returns `u_{k+1}`.
    pub fn step(&mut self, y: &DVector<f64>) -> Result<StepOutput> {
        let dims = self.cfg.dims;
        check_len("measurement", dims.p, y.len())?;
        let st = &mut self.state;
        let u_now = st.u_implemented.clone();

        let phi = build_regressor(&st.history, dims)?;
        let id = st.rls.update(&phi, y, &self.test)?;
        let theta = &st.rls.theta;

        let real = assemble_bocf(theta, dims)?;
        let x_now = compute_bocf_state(&st.history, y, theta)?;
        let x_next = &real.a * x_now + &real.b * &u_now;

        let (u_requested, u_implemented, fallback) =
            match optimize(&real.a, &real.b, &self.cfg.weights) {
                Ok(k) => {
                    let u_req = k * &x_next;
                    let u = saturate(&u_req, &self.cfg.bounds);
                    (u_req, u, None)
                }
                Err(e) => (u_now.clone(), u_now.clone(), Some(e)),
            };

        st.history.push(y, &u_now)?;
        st.u_requested = u_requested.clone();
        st.u_implemented = u_implemented.clone();
        st.step += 1;

        Ok(StepOutput {
            u_requested,
            u_implemented,
            beta: id.beta,
            id_error: id.error,
            fallback,
        })
    }
}

fn optimize(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &HorizonWeights) -> Result<DMatrix<f64>> {
    let p2 = riccati_backward(a, b, w)?;
    control_gain(a, b, &w.r2, &p2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_initial_state() {
        let cfg = PcacConfig::default();
        let st = pcac_init(&cfg).unwrap();
        assert_eq!(st.rls.theta.as_vector().len(), 20);
        assert!(st.rls.theta.as_vector().iter().all(|v| *v == 1e-10));
        assert_eq!(st.rls.psi.shape(), (20, 20));
        assert_eq!(st.rls.psi, DMatrix::identity(20, 20) * 1e-4);
        assert_eq!(st.u_implemented, DVector::zeros(1));
        assert_eq!(cfg.weights.horizon, 20);
        assert_eq!(cfg.weights.r2[(0, 0)], 1e-2);
        assert_eq!(cfg.bounds.u_max[0], 8.0);
        assert_eq!(cfg.bounds.u_min[0], -8.0);
    }

    #[test]
    fn rejects_zero_psi0() {
        let cfg = PcacConfig {
            psi0_scale: 0.0,
            ..PcacConfig::default()
        };
        assert!(Pcac::new(cfg).is_err());
    }

    #[test]
    fn rejects_u0_outside_bounds() {
        let cfg = PcacConfig {
            u0: DVector::from_element(1, 9.0),
            ..PcacConfig::default()
        };
        assert!(Pcac::new(cfg).is_err());
    }

    #[test]
    fn first_step_near_zero_model_gives_near_zero_control() {
        let mut c = Pcac::new(PcacConfig::default()).unwrap();
        let out = c.step(&DVector::from_element(1, 50.0)).unwrap();
        assert!(out.u_requested[0].abs() < 1e-6, "{}", out.u_requested[0]);
        assert!(out.fallback.is_none());
        assert_eq!(c.state().step, 1);
    }

    #[test]
    fn rejects_wrong_measurement_size() {
        let mut c = Pcac::new(PcacConfig::default()).unwrap();
        assert!(c.step(&DVector::zeros(2)).is_err());
    }
}
