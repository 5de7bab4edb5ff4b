//! Forecasting chaotic time series with reservoir computers (RC), next-generation
//! reservoir computers (NGRC) and a hybrid of the two that concatenates the
//! reservoir state with the NGRC feature vector before a shared linear readout.
//!
//! The numerical modules are generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`). The experiment harness works in `f64`;
//! the aliases at the bottom of this file name the concrete instantiations it uses.

pub mod error;
pub mod forecaster;
pub mod harness;
pub mod metrics;
pub mod ngrc;
pub mod reservoir;
pub mod scalar;
pub mod systems;

pub use error::{Error, Result};
pub use forecaster::{ForecastModel, Forecaster, ModelKind, Prediction, TrainingConfig};
pub use metrics::{MapErrorConfig, PsdEstimate, VptConfig, WelchConfig};
pub use ngrc::NgrcConfig;
pub use reservoir::{Reservoir, ReservoirParams, ReservoirState};
pub use scalar::Real;
pub use systems::{DdeHistory, InitialCondition, NormalizationStats, SystemKind, SystemSpec, Trajectory};

pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type SystemSpec64 = SystemSpec<f64>;
pub type Reservoir64 = Reservoir<f64>;
pub type Reservoir32 = Reservoir<f32>;
pub type ReservoirParams64 = ReservoirParams<f64>;
pub type Forecaster64 = Forecaster<f64>;
pub type ForecastModel64 = ForecastModel<f64>;
pub type TrainingConfig64 = TrainingConfig<f64>;
pub type PsdEstimate64 = PsdEstimate<f64>;
pub type NormalizationStats64 = NormalizationStats<f64>;

