use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Real;

/// Additive i.i.d. complex Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of each of the real and imaginary parts.
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Self {
        NoiseSpec { sigma, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Adds independent `N(0, sigma^2)` draws to every real and imaginary value.
pub fn add_noise<T: Real>(kspace: &ComplexField<T>, spec: &NoiseSpec) -> Result<ComplexField<T>> {
    if kspace.domain() != Domain::Frequency {
        return Err(Error::shape("noise is added to frequency-domain data"));
    }
    if !(spec.sigma >= 0.0) {
        return Err(Error::config(format!("noise sigma must be non-negative, got {}", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(kspace.clone());
    }
    let mut rng = stream_rng(spec.seed, 0, Stream::Noise);
    let mut out = kspace.tensor().clone();
    for v in out.data_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += T::from_f64_lossy(e * spec.sigma);
    }
    ComplexField::new(out, Domain::Frequency)
}
