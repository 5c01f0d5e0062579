//! Reconstruction networks: interleaved and alternating joint-domain models
//! and the single-domain baselines.

mod checkpoint;
mod config;
mod network;
mod params;

pub use config::{Architecture, FreqActivation, ModelConfig};
pub use network::{
    custom_freq_activation, residual_tile, Activation, BatchNormParams, BnUpdate, ConvBlock, Layer, Mode, Model,
    Reconstruction,
};
pub use params::{BoundParams, ParamStore, Parameter};
