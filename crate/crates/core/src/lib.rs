//! Monte Carlo engine for the sum-product shadow fading model.
//!
//! The local mean power of a radio link is modelled as the phase-averaged
//! quadratic form `P = bᴴ Sᴴ Γ_a S b`, where `S = S_K ⋯ S₁` chains random
//! coupling matrices between layers of channel interactions. This crate
//! draws such channels, converts their powers to dB and measures how close
//! the resulting distribution is to log-normal.
//!
//! * [`dist`]: amplitude and phase variates, seeded substreams.
//! * [`model`]: the deterministic channel algebra and special layer shapes.
//! * [`montecarlo`]: scenario configuration and experiment runner.
//! * [`stats`]: ECDF, normal fit, K-S distance.
//! * [`experiments`]: parameter sweeps and CDF export.

pub mod dist;
pub mod exec;
pub mod experiments;
pub mod model;
pub mod montecarlo;
pub mod stats;

pub use dist::{DistError, DistSpec, RandomStream};
pub use exec::Executor;
pub use model::{ChannelRealization, CouplingMatrix, ModelError, RayVector};
pub use montecarlo::{
    run_experiment, run_experiment_with, ConfigError, LosRoot, ModelKind, PowerSampleSet, Scenario,
    ScenarioConfig,
};
pub use stats::{EmpiricalCdf, KsResult, NormalFit, StatsError};
