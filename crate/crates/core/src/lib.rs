//! Plug-and-play CSI reconstruction for massive MIMO-OFDM.
//!
//! One learned angular-delay denoiser serves three tasks (pilot-based
//! channel estimation, antenna extrapolation and CSI feedback) through a
//! half-quadratic-splitting loop that alternates each task's exact proximal
//! step with the denoiser.

pub mod baselines;
pub mod channel_model;
pub mod config;
pub mod denoiser;
pub mod error;
pub mod experiment;
pub mod hqs;
pub mod io;
pub mod metrics;
pub mod tasks;

pub use channel_model::{
    ad2sf, gen_channel, gen_dataset, sf2ad, AngularCsi, AngularTransform, ChannelConfig,
    ChannelMatrix, DatasetConfig, C64,
};
pub use denoiser::{Denoiser, DenoiserRegistry, DenoiserWeights};
pub use error::{Error, Result};
pub use experiment::{run_bench, run_experiment, ExperimentConfig, ResultRow};
pub use hqs::{run_pnp, SolverConfig};
pub use metrics::{cos_similarity, nmse};
