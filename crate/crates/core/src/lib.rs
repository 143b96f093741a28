//! Training and transmission design for a MIMO integrated sensing and
//! communication (ISAC) transmitter.
//!
//! The transmitter sends `L_CE` training slots followed by `L_DT` data slots.
//! A communication receiver estimates its channel `H` from the training,
//! and a co-located radar receiver observes both stages to estimate the
//! target response matrix `G`. Designs minimize a weighted sum of the data
//! MSE and the target-estimation MSE.

pub mod beamforming;
pub mod design;
pub mod error;
pub mod experiments;
pub mod joint;
pub mod numerics;
pub mod metrics;
pub mod model;
pub mod settings;
pub mod training;

#[cfg(test)]
mod properties;

pub use error::{IsacError, Result};
pub use settings::SolverSettings;
