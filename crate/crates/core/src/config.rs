//! Experiment spec files.
//!
//! Specs are flat `section.key = value` lines (a subset of TOML using dotted
//! keys), for example
//!
//! ```text
//! sim.ts = 0.001
//! plant.freq_hz = 150.0
//! controller.eta = 0.1
//! ```
//!
//! Keys that are left out take the defaults of [`SpecFile::default`].

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bpre::{HorizonWeights, SaturationBounds};
use crate::controller::PcacConfig;
use crate::error::{PcacError, Result};
use crate::experiment::{ExperimentSpec, PlantChange};
use crate::idmodel::{ArxParameterVector, ModelDims};
use crate::plant::{self, EmulatorParams, PlantState};
use crate::rls::ForgettingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub ts: f64,
    pub t_open: f64,
    pub t_total: f64,
    pub substeps: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            ts: 1e-3,
            t_open: 3.0,
            t_total: 5.0,
            substeps: plant::DEFAULT_SUBSTEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub freq_hz: f64,
    pub mu: f64,
    pub kappa: f64,
    pub amp_scale: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub q0: f64,
    pub qdot0: f64,
}

impl Default for PlantSection {
    /// The 150 Hz, mid-damping grid cell.
    fn default() -> Self {
        Self::from_params(&plant::operating_grid()[4].params)
    }
}

impl PlantSection {
    pub fn from_params(p: &EmulatorParams) -> Self {
        Self {
            freq_hz: p.frequency_hz(),
            mu: p.mu,
            kappa: p.kappa,
            amp_scale: p.amp_scale,
            noise_std: p.noise_std,
            seed: p.seed,
            q0: 0.01,
            qdot0: 0.0,
        }
    }

    pub fn params(&self) -> EmulatorParams {
        EmulatorParams {
            omega: 2.0 * std::f64::consts::PI * self.freq_hz,
            mu: self.mu,
            kappa: self.kappa,
            amp_scale: self.amp_scale,
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }
}

/// SISO controller settings with output-regulation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub n_hat: usize,
    pub theta0: f64,
    pub psi0_scale: f64,
    pub tau_n: usize,
    pub tau_d: usize,
    pub eta: f64,
    pub alpha: f64,
    pub horizon: usize,
    pub r2: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u0: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let f = ForgettingConfig::default();
        Self {
            n_hat: 10,
            theta0: 1e-10,
            psi0_scale: 1e-4,
            tau_n: f.tau_n,
            tau_d: f.tau_d,
            eta: f.eta,
            alpha: f.alpha,
            horizon: 20,
            r2: 1e-2,
            u_min: -8.0,
            u_max: 8.0,
            u0: 0.0,
        }
    }
}

impl ControllerSection {
    pub fn to_config(&self) -> Result<PcacConfig> {
        let dims = ModelDims::siso(self.n_hat)?;
        let cfg = PcacConfig {
            dims,
            theta0: ArxParameterVector::from_element(dims, self.theta0),
            psi0_scale: self.psi0_scale,
            forgetting: ForgettingConfig {
                tau_n: self.tau_n,
                tau_d: self.tau_d,
                eta: self.eta,
                alpha: self.alpha,
            },
            weights: HorizonWeights::output_regulation(
                dims.state_dim(),
                1,
                1,
                self.horizon,
                self.r2,
            )?,
            bounds: SaturationBounds::new(
                DVector::from_element(1, self.u_min),
                DVector::from_element(1, self.u_max),
            )?,
            u0: DVector::from_element(1, self.u0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Abrupt change of the emulator frequency during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeSection {
    /// Time of the change (s).
    pub at: f64,
    /// Multiplier applied to `omega`.
    pub omega_factor: f64,
}

/// Parsed spec file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecFile {
    pub sim: SimSection,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub change: Option<ChangeSection>,
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PcacError::InvalidConfig(format!("spec file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PcacError::InvalidConfig(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Renders the spec as flat dotted key-value lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let s = &self.sim;
        let p = &self.plant;
        let c = &self.controller;
        let mut kv = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        kv("sim.ts", fmt(s.ts));
        kv("sim.t_open", fmt(s.t_open));
        kv("sim.t_total", fmt(s.t_total));
        kv("sim.substeps", s.substeps.to_string());
        kv("plant.freq_hz", fmt(p.freq_hz));
        kv("plant.mu", fmt(p.mu));
        kv("plant.kappa", fmt(p.kappa));
        kv("plant.amp_scale", fmt(p.amp_scale));
        kv("plant.noise_std", fmt(p.noise_std));
        kv("plant.seed", p.seed.to_string());
        kv("plant.q0", fmt(p.q0));
        kv("plant.qdot0", fmt(p.qdot0));
        kv("controller.n_hat", c.n_hat.to_string());
        kv("controller.theta0", fmt(c.theta0));
        kv("controller.psi0_scale", fmt(c.psi0_scale));
        kv("controller.tau_n", c.tau_n.to_string());
        kv("controller.tau_d", c.tau_d.to_string());
        kv("controller.eta", fmt(c.eta));
        kv("controller.alpha", fmt(c.alpha));
        kv("controller.horizon", c.horizon.to_string());
        kv("controller.r2", fmt(c.r2));
        kv("controller.u_min", fmt(c.u_min));
        kv("controller.u_max", fmt(c.u_max));
        kv("controller.u0", fmt(c.u0));
        if let Some(ch) = &self.change {
            kv("change.at", fmt(ch.at));
            kv("change.omega_factor", fmt(ch.omega_factor));
        }
        out
    }

    pub fn to_experiment(&self) -> Result<ExperimentSpec> {
        let spec = ExperimentSpec {
            plant: self.plant.params(),
            initial: PlantState::new(self.plant.q0, self.plant.qdot0),
            controller: self.controller.to_config()?,
            ts: self.sim.ts,
            t_open: self.sim.t_open,
            t_total: self.sim.t_total,
            substeps: self.sim.substeps,
            change: self.change.as_ref().map(|c| PlantChange {
                at: c.at,
                omega_factor: c.omega_factor,
            }),
        };
        spec.validate()?;
        Ok(spec)
    }
}

// Floats always carry a decimal point or exponent so they re-parse as floats.
fn fmt(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}
