//! Energy management for a series-parallel hybrid electric vehicle.
//!
//! The crate couples a backward-facing powertrain model to an episodic
//! environment, trains a tanh-Gaussian actor-critic with PPO and GAE, moves
//! trained parameters between cycle sets, and benchmarks policies against a
//! dynamic-programming solution of the same control problem.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod cycles;
pub mod env;
pub mod error;
pub mod net;
pub mod optim;
pub mod oracle;
pub mod powertrain;
pub mod ppo;
pub mod scalar;
pub mod seed;
pub mod transfer;

pub use cycles::{CyclePartition, DrivingCycle, Profile};
pub use error::{Error, Result};
pub use net::{NetLayout, PolicyParams};
pub use ppo::Hyperparams;
pub use scalar::Real;

pub type Powertrain = powertrain::PowertrainParams<f64>;
pub type Policy = net::PolicyParams<f64>;
pub type Env<'a> = env::Env<'a, f64>;
pub type Trajectory = env::Trajectory<f64>;
pub type EngineMap = powertrain::EngineMap<f64>;

pub type Powertrain32 = powertrain::PowertrainParams<f32>;
pub type Policy32 = net::PolicyParams<f32>;
