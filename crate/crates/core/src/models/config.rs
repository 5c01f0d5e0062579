use serde::{Deserialize, Serialize};

use crate::autodiff::Padding;
use crate::error::{Error, Result};

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Sigmoid-mixed frequency and image streams with parallel conv blocks.
    Interleaved,
    /// Frequency block, inverse transform, image block, forward transform.
    Alternating,
    /// Frequency-space convolutions only.
    Frequency,
    /// Image-space convolutions only.
    Image,
}

impl Architecture {
    pub const ALL: [Architecture; 4] =
        [Architecture::Interleaved, Architecture::Alternating, Architecture::Frequency, Architecture::Image];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Interleaved => "interleaved",
            Architecture::Alternating => "alternating",
            Architecture::Frequency => "frequency",
            Architecture::Image => "image",
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Architecture::Interleaved | Architecture::Alternating)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown architecture '{s}'")))
    }
}

/// Nonlinearity applied after frequency-space convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqActivation {
    /// `x + relu((x - 1) / 2) + relu(-(x + 1) / 2)`
    #[default]
    Custom,
    Relu,
}

fn default_layers() -> usize {
    8
}
fn default_kernel() -> usize {
    9
}
fn default_features() -> usize {
    32
}
fn default_input_channels() -> usize {
    2
}
fn default_bn_eps() -> f64 {
    1e-3
}
fn default_bn_momentum() -> f64 {
    0.99
}

/// Architecture hyperparameters. Defaults are the full-size settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Joint layers; single-domain networks get twice as many blocks.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default)]
    pub freq_activation: FreqActivation,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// Full-size configuration: 8 joint layers (16 blocks), 9x9 kernels,
    /// 32 features.
    pub fn full_size(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            layers: default_layers(),
            kernel: default_kernel(),
            features: default_features(),
            freq_activation: FreqActivation::Custom,
            input_channels: default_input_channels(),
            padding: Padding::Zero,
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
        }
    }

    pub fn with_size(mut self, layers: usize, kernel: usize, features: usize) -> Self {
        self.layers = layers;
        self.kernel = kernel;
        self.features = features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("a network needs at least one layer"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if self.input_channels == 0 || self.input_channels % 2 != 0 {
            return Err(Error::config("input channels must be a positive even number"));
        }
        if self.features == 0 || self.features % self.input_channels != 0 {
            return Err(Error::config(format!(
                "features ({}) must be a positive multiple of the input channels ({}) for skip tiling",
                self.features, self.input_channels
            )));
        }
        if !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::config("batch norm eps must be positive and momentum in [0, 1)"));
        }
        Ok(())
    }

    /// Trainable parameters implied by the configuration, without building
    /// the model.
    pub fn analytic_param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let f = self.features;
        let c0 = self.input_channels;
        let block = |c_in: usize| k2 * c_in * f + f + 2 * c_in;
        let output = k2 * f * c0 + c0;
        let interior = block(f);
        let n = self.layers;
        match self.architecture {
            Architecture::Interleaved => 2 * block(c0) + 2 * (n - 1) * interior + 2 * n + output,
            Architecture::Alternating => block(c0) + (2 * n - 1) * interior + output,
            Architecture::Frequency | Architecture::Image => block(c0) + (2 * n - 1) * interior + output,
        }
    }
}
