//! Randomized experiment harness for the spike deconvolution solvers.
//!
//! Everything here is seeded and reproducible: instances, noise draws, and
//! initialization perturbations all derive from a master seed through
//! [`seeding::mix`], per trial, so result tables are bit-identical across
//! reruns and independent of the parallel schedule.
//!
//! The three experiments mirror the standard evaluation protocol for this
//! solver family: success rate versus initialization distance
//! ([`basin_experiment`]), convergence speed versus amplitude dynamic range
//! ([`convergence_experiment`]), and statistical error versus SNR with a
//! Cramér-Rao benchmark ([`snr_experiment`]).

pub mod crb;
pub mod experiments;
pub mod instance;
pub mod noise;
pub mod parallel;
pub mod seeding;
pub mod svg;

pub use crb::{crb, CrbReport};
pub use experiments::{
    basin_experiment, convergence_experiment, snr_experiment, BasinResult, CapPolicy,
    ConvergenceResult, Scheme, SnrResult, SUCCESS_THRESHOLD,
};
pub use instance::{gen_instance, InstanceSpec};
pub use noise::{add_noise, NoiseSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {r} spikes with scaled separation {min_sep_scaled} after {attempts} attempts")]
    Infeasible { r: usize, min_sep_scaled: f64, attempts: usize },
    #[error("noise SNR must be positive (got {0})")]
    InvalidSnr(f64),
    #[error("noise variance must be positive (got {0})")]
    InvalidNoiseVariance(f64),
    #[error(transparent)]
    Model(#[from] spikedec_core::model::ModelError),
    #[error(transparent)]
    Descent(#[from] spikedec_core::gd::GdError),
    #[error(transparent)]
    Init(#[from] spikedec_core::init::InitError),
    #[error("Fisher information matrix is singular: {0}")]
    DegenerateFisherInformation(spikedec_core::linalg::LinalgError),
}
