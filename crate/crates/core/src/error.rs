use thiserror::Error;

use crate::geometry::Orientation;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("gimbal lock: |cos(pitch)| = {cos_pitch:e}, yaw and roll are not separable")]
    GimbalLock { cos_pitch: f64 },

    #[error("matrix is not a proper rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },

    #[error("inconsistent assembly: rod residuals ({e1:e}, {e2:e}) exceed tolerance")]
    InconsistentAssembly { e1: f64, e2: f64 },

    #[error("degenerate quadratic: {0}")]
    DegenerateQuadratic(String),

    #[error("no real solution: {0}")]
    NoRealSolution(String),

    #[error("leg {leg} cannot reach the requested orientation")]
    Unreachable { leg: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Orientation,
    },

    #[error("serial singularity: |(l{leg} x r{leg}) . i{leg}| = {value:e}")]
    SerialSingular { leg: usize, value: f64 },

    #[error("branch jump while differentiating along axis {axis}")]
    BranchJump { axis: usize },

    #[error("isotropic configuration not found (best residual {best_residual:e})")]
    NotFound { best_residual: f64 },

    #[error("workspace map is empty")]
    EmptyMap,

    #[error("branch flags of vertebra {vertebra} flipped at sample {sample} without a flagged singular sample")]
    BranchDiscontinuity { vertebra: usize, sample: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::GimbalLock { .. } => "GimbalLock",
            Error::NotARotation { .. } => "NotARotation",
            Error::InconsistentAssembly { .. } => "InconsistentAssembly",
            Error::DegenerateQuadratic(_) => "DegenerateQuadratic",
            Error::NoRealSolution(_) => "NoRealSolution",
            Error::Unreachable { .. } => "Unreachable",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SerialSingular { .. } => "SerialSingular",
            Error::BranchJump { .. } => "BranchJump",
            Error::NotFound { .. } => "NotFound",
            Error::EmptyMap => "EmptyMap",
            Error::BranchDiscontinuity { .. } => "BranchDiscontinuity",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
