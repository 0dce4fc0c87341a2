//! Predictive cost adaptive control (PCAC).
//!
//! Online ARX identification by recursive least squares with F-test driven
//! variable-rate forgetting, a block observable canonical form whose state is
//! built directly from past data, and receding-horizon control from a backward
//! Riccati sweep. A van der Pol emulator of a self-excited Rijke tube and an
//! experiment harness close the loop under zero-order hold and saturation.

// Validation uses `!(x > 0.0)` style checks so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bpre;
pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod fdist;
pub mod grid;
pub mod idmodel;
pub mod plant;
pub mod rls;
pub mod spectrum;

pub use bpre::{control_gain, riccati_backward, saturate, HorizonWeights, SaturationBounds};
pub use config::SpecFile;
pub use controller::{pcac_init, Pcac, PcacConfig, PcacState, StepOutput};
pub use error::{PcacError, Result};
pub use experiment::{run_experiment, ExperimentRecord, ExperimentSpec, PlantChange};
pub use fdist::{f_cdf, inverse_f_cdf};
pub use grid::{run_ablation, run_grid};
pub use idmodel::{
    assemble_bocf, build_regressor, compute_bocf_state, predict_output, ArxParameterVector,
    BocfRealization, IoHistory, ModelDims,
};
pub use plant::{
    operating_grid, plant_output, plant_zoh_step, EmulatorParams, GridPoint, PlantState,
};
pub use rls::{
    compute_beta, forgetting_statistic_multivariable, forgetting_statistic_scalar, rls_update,
    ForgettingConfig, ForgettingTest, RlsState,
};
pub use spectrum::{amplitude_spectrum, SpectralLine};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/identification.md")]
    pub struct Identification;
    #[doc = include_str!("../../../book/src/forgetting.md")]
    pub struct Forgetting;
    #[doc = include_str!("../../../book/src/realization.md")]
    pub struct Realization;
    #[doc = include_str!("../../../book/src/riccati.md")]
    pub struct Riccati;
    #[doc = include_str!("../../../book/src/controller.md")]
    pub struct Controller;
    #[doc = include_str!("../../../book/src/emulator.md")]
    pub struct Emulator;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
