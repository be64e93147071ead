//! Conditional graph diffusion for fairness-aware, age-friendly facility
//! layouts on gridded cities.

pub mod baselines;
pub mod citygrid;
pub mod denoiser;
pub mod error;
pub mod fairdemand;
pub mod metrics;
pub mod nn;
pub mod sampler;
pub mod sde;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
