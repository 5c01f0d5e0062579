//! Shared inputs for the benchmarks.

use interlace_core::corruption::CorruptionSpec;
use interlace_core::harness::{build_samples, generate_phantoms, PhantomSpec, Sample};
use interlace_core::{Shape, Tensor};

/// Normalized 25%-undersampled phantom samples of side `size`.
pub fn samples(count: usize, size: usize) -> Vec<Sample<f32>> {
    let images = generate_phantoms::<f64>(&PhantomSpec::new(count, size, 0)).expect("valid phantom spec");
    let corruption = CorruptionSpec::preset("undersample-25").expect("known preset");
    build_samples(&images, &corruption, 0).expect("phantoms normalize")
}

/// Deterministic pseudo-random tensor without pulling in an RNG.
pub fn ramp(shape: Shape) -> Tensor<f32> {
    let mut state = 0x2545_f491_u32;
    Tensor::from_fn(shape, |_| {
        state ^= state << 13;
        state ^= state >> 17;
        state ^= state << 5;
        (state as f32 / u32::MAX as f32) * 2.0 - 1.0
    })
}
