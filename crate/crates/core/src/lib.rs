//! Joint transmit beamforming and pinching-antenna placement for a MIMO
//! downlink with simultaneous wireless information and power transfer.
//!
//! The solver alternates a WMMSE beamforming block, whose harvested-power
//! constraints are linearised around the current beams, with a Gauss–Seidel
//! grid search over PA positions. See `README.md` for the CLI and file formats.

pub mod baselines;
pub mod config;
pub mod error;
pub mod harness;
pub mod inner;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod position;

#[cfg(test)]
mod testutil;

pub type C64 = nalgebra::Complex<f64>;

pub use baselines::BaselineKind;
pub use config::{load_config, ConfigFile, RawConfig, SystemConfig};
pub use error::{PassError, Result};
pub use harness::{sample_scenario, solve_p1, P1Solution, Scenario, Scheme, SolveTrace, SolverSettings};
pub use inner::InnerSolveSettings;
pub use metrics::BeamformerSet;
pub use model::{ChannelMatrixSet, PinchingLayout, ReceiverLayout};
pub use position::PositionObjective;
