use std::fmt;
use std::str::FromStr;

use crate::error::IsacError;
use crate::metrics::MetricReport;
use crate::numerics::CMat;

/// Design pipelines compared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Weighted training, then per-block robust beamforming on the estimate.
    Sequential,
    /// Communication-only training, beamforming still sensing-aware.
    Existing,
    /// Sequential pipeline with the sensing weight set to zero.
    CommSequential,
    /// Alternating statistical design of training and beamformer.
    Joint,
    /// Power-allocation statistical design for aligned correlations.
    JointGp,
    /// Statistical design with the sensing weight set to zero.
    CommJoint,
    /// Training and beamformer chosen for target estimation only.
    Sensing,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Sequential,
        Scheme::Existing,
        Scheme::CommSequential,
        Scheme::Joint,
        Scheme::JointGp,
        Scheme::CommJoint,
        Scheme::Sensing,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Sequential => "sequential",
            Scheme::Existing => "existing",
            Scheme::CommSequential => "comm_seq",
            Scheme::Joint => "joint",
            Scheme::JointGp => "joint_gp",
            Scheme::CommJoint => "comm_joint",
            Scheme::Sensing => "sensing",
        }
    }

    /// Whether the beamformer adapts to each channel estimate.
    pub fn is_instantaneous(self) -> bool {
        matches!(self, Scheme::Sequential | Scheme::Existing | Scheme::CommSequential)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| IsacError::Config(format!("unknown scheme '{s}'")))
    }
}

/// Output of any design scheme.
#[derive(Clone, Debug)]
pub struct DesignResult {
    pub scheme: Scheme,
    pub x: CMat,
    /// Beamformer of the design; for per-block schemes, the one of the last block.
    pub w: CMat,
    pub objective: f64,
    pub analytic: MetricReport,
    pub empirical: Option<MetricReport>,
    pub wallclock_ms: f64,
    pub converged: bool,
    pub iterations: usize,
}
