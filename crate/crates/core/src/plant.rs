//! Self-excited oscillator standing in for the Rijke tube.
//!
//! The modal pressure amplitude follows a forced van der Pol equation
//!
//! ```text
//! q'' + mu (q^2 - 1) q' + omega^2 q = kappa u
//! ```
//!
//! which is unstable at rest and settles onto a limit cycle of amplitude close
//! to 2 when `mu << omega`. The input is held constant over each sample period
//! and the ODE is advanced with fixed-step RK4.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{PcacError, Result};

/// RK4 substeps per sample period.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Scaled state magnitude treated as divergence.
pub const BLOW_UP_LIMIT: f64 = 1e6;

/// Emulator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulatorParams {
    /// Linear acoustic frequency in rad/s.
    pub omega: f64,
    /// Negative damping / nonlinearity strength in 1/s.
    pub mu: f64,
    /// Input coupling gain.
    pub kappa: f64,
    /// Pressure per unit modal amplitude (Pa).
    pub amp_scale: f64,
    /// Standard deviation of additive measurement noise (Pa).
    pub noise_std: f64,
    pub seed: u64,
}

impl EmulatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.mu > 0.0 && self.amp_scale > 0.0) {
            return Err(PcacError::InvalidConfig(
                "omega, mu and amp_scale must be positive".into(),
            ));
        }
        if !(self.noise_std >= 0.0) || !self.kappa.is_finite() {
            return Err(PcacError::InvalidConfig(
                "noise_std must be nonnegative and kappa finite".into(),
            ));
        }
        Ok(())
    }

    /// Frequency in Hz.
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * std::f64::consts::PI)
    }
}

/// Modal displacement, velocity and simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub q: f64,
    pub qdot: f64,
    pub t: f64,
}

impl PlantState {
    pub fn at_rest() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn new(q: f64, qdot: f64) -> Self {
        Self { q, qdot, t: 0.0 }
    }
}

fn deriv(q: f64, qdot: f64, u: f64, p: &EmulatorParams) -> (f64, f64) {
    (
        qdot,
        p.kappa * u - p.mu * (q * q - 1.0) * qdot - p.omega * p.omega * q,
    )
}

/// Advances one sample period of length `ts` with the input held at `u_held`.
pub fn plant_zoh_step(
    state: PlantState,
    u_held: f64,
    params: &EmulatorParams,
    ts: f64,
) -> Result<PlantState> {
    plant_zoh_step_with(state, u_held, params, ts, DEFAULT_SUBSTEPS)
}

/// As [`plant_zoh_step`] with an explicit number of RK4 substeps.
pub fn plant_zoh_step_with(
    state: PlantState,
    u_held: f64,
    params: &EmulatorParams,
    ts: f64,
    substeps: usize,
) -> Result<PlantState> {
    if !(ts > 0.0) || substeps == 0 {
        return Err(PcacError::InvalidConfig(
            "sample time and substep count must be positive".into(),
        ));
    }
    let h = ts / substeps as f64;
    let (mut q, mut v) = (state.q, state.qdot);
    for _ in 0..substeps {
        let (k1q, k1v) = deriv(q, v, u_held, params);
        let (k2q, k2v) = deriv(q + 0.5 * h * k1q, v + 0.5 * h * k1v, u_held, params);
        let (k3q, k3v) = deriv(q + 0.5 * h * k2q, v + 0.5 * h * k2v, u_held, params);
        let (k4q, k4v) = deriv(q + h * k3q, v + h * k3v, u_held, params);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    let t = state.t + ts;
    let magnitude = q.abs().max(v.abs() / params.omega);
    if !(magnitude <= BLOW_UP_LIMIT) {
        return Err(PcacError::PlantBlowUp { t, magnitude });
    }
    Ok(PlantState { q, qdot: v, t })
}

/// Seeded Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    dist: Option<Normal<f64>>,
}

impl NoiseSource {
    pub fn new(std: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std")),
        }
    }

    pub fn sample(&mut self) -> f64 {
        match &self.dist {
            Some(d) => d.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// Emulated microphone reading `amp_scale * q + noise`.
pub fn plant_output(state: &PlantState, params: &EmulatorParams, noise: &mut NoiseSource) -> f64 {
    params.amp_scale * state.q + noise.sample()
}

/// One cell of the operating grid with the physical setting it stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    /// Heater position (m) this cell emulates.
    pub x_us: f64,
    /// Heater RMS voltage (V) this cell emulates.
    pub v_rms: f64,
    pub params: EmulatorParams,
}

/// Heater positions of the grid, mapped to 160, 150 and 140 Hz.
pub const GRID_X_US: [f64; 3] = [0.3, 0.35, 0.4];
/// Heater voltages of the grid, mapped to increasing `mu`.
pub const GRID_V_RMS: [f64; 3] = [75.0, 85.0, 95.0];
const GRID_FREQ_HZ: [f64; 3] = [160.0, 150.0, 140.0];
const GRID_MU_FRACTION: [f64; 3] = [0.01, 0.02, 0.03];

/// Input gain, output scale and noise shared by all grid cells.
pub const GRID_KAPPA_PER_OMEGA: f64 = 20.0;
pub const GRID_AMP_SCALE: f64 = 40.0;
pub const GRID_NOISE_STD: f64 = 0.01;

/// Emulator parameters for a frequency (Hz) and damping fraction `mu / omega`.
pub fn emulator(freq_hz: f64, mu_fraction: f64, seed: u64) -> EmulatorParams {
    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    EmulatorParams {
        omega,
        mu: mu_fraction * omega,
        kappa: GRID_KAPPA_PER_OMEGA * omega,
        amp_scale: GRID_AMP_SCALE,
        noise_std: GRID_NOISE_STD,
        seed,
    }
}

/// The 3 x 3 grid of heater positions and voltages, row-major in `x_us`.
pub fn operating_grid() -> Vec<GridPoint> {
    let mut cells = Vec::with_capacity(9);
    for (i, (&x_us, &f)) in GRID_X_US.iter().zip(&GRID_FREQ_HZ).enumerate() {
        for (j, (&v_rms, &frac)) in GRID_V_RMS.iter().zip(&GRID_MU_FRACTION).enumerate() {
            cells.push(GridPoint {
                x_us,
                v_rms,
                params: emulator(f, frac, (3 * i + j) as u64),
            });
        }
    }
    cells
}
