use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::ComplexField;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Shape, Tensor};

fn default_ellipses() -> [usize; 2] {
    [3, 8]
}
fn default_intensity() -> [f64; 2] {
    [0.1, 1.0]
}
fn default_blur() -> f64 {
    1.0
}

/// Random-ellipse phantom generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub count: usize,
    pub size: usize,
    /// Inclusive range of ellipses per image.
    #[serde(default = "default_ellipses")]
    pub ellipses: [usize; 2],
    /// Inclusive range of ellipse intensities.
    #[serde(default = "default_intensity")]
    pub intensity: [f64; 2],
    /// Gaussian blur standard deviation in pixels; 0 disables smoothing.
    #[serde(default = "default_blur")]
    pub blur: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(count: usize, size: usize, seed: u64) -> Self {
        PhantomSpec { count, size, ellipses: default_ellipses(), intensity: default_intensity(), blur: default_blur(), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 16 {
            return Err(Error::config(format!("phantom size must be at least 16, got {}", self.size)));
        }
        if self.ellipses[0] > self.ellipses[1] {
            return Err(Error::config("ellipse count range is inverted"));
        }
        let [lo, hi] = self.intensity;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("intensity range must satisfy 0 <= lo <= hi"));
        }
        if !(self.blur >= 0.0 && self.blur.is_finite()) {
            return Err(Error::config("blur must be non-negative"));
        }
        Ok(())
    }

    /// Largest value any generated pixel can take.
    pub fn max_value(&self) -> f64 {
        self.intensity[1]
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with zero padding.
fn blur(img: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for (t, &w) in k.iter().enumerate() {
                    let d = t as isize - r;
                    let (sy, sx) = if horizontal { (y as isize, x as isize + d) } else { (y as isize + d, x as isize) };
                    if (0..n as isize).contains(&sy) && (0..n as isize).contains(&sx) {
                        acc += w * src[sy as usize * n + sx as usize];
                    }
                }
                out[y * n + x] = acc;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Real-valued phantom `index` of `spec` as an `n x n` row-major buffer.
pub fn phantom_pixels(spec: &PhantomSpec, index: usize) -> Vec<f64> {
    let n = spec.size;
    let mut rng = stream_rng(spec.seed, index as u64, Stream::Phantom);
    let count = rng.random_range(spec.ellipses[0]..=spec.ellipses[1]);
    let mut img = vec![0.0; n * n];
    let half = n as f64 / 2.0;
    for e in 0..count {
        // The first ellipse is a large body outline; the rest are features inside it.
        let (cy, cx, ay, ax) = if e == 0 {
            (
                rng.random_range(-0.1..0.1) * half,
                rng.random_range(-0.1..0.1) * half,
                rng.random_range(0.6..0.85) * half,
                rng.random_range(0.5..0.8) * half,
            )
        } else {
            (
                rng.random_range(-0.5..0.5) * half,
                rng.random_range(-0.5..0.5) * half,
                rng.random_range(0.05..0.35) * half,
                rng.random_range(0.05..0.35) * half,
            )
        };
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let value = rng.random_range(spec.intensity[0]..=spec.intensity[1]);
        let (s, c) = theta.sin_cos();
        for y in 0..n {
            for x in 0..n {
                let dy = y as f64 + 0.5 - half - cy;
                let dx = x as f64 + 0.5 - half - cx;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if (u / ax).powi(2) + (v / ay).powi(2) <= 1.0 {
                    img[y * n + x] = value;
                }
            }
        }
    }
    if spec.blur > 0.0 && count > 0 {
        img = blur(&img, n, spec.blur);
    }
    img
}

/// `spec.count` phantoms as image-domain fields `[1, n, n, 2]` with zero
/// imaginary part.
pub fn generate_phantoms<T: Real>(spec: &PhantomSpec) -> Result<Vec<ComplexField<T>>> {
    spec.validate()?;
    (0..spec.count).map(|i| phantom(spec, i)).collect()
}

/// Phantom `index` of `spec` alone.
pub fn phantom<T: Real>(spec: &PhantomSpec, index: usize) -> Result<ComplexField<T>> {
    spec.validate()?;
    let n = spec.size;
    let px = phantom_pixels(spec, index);
    let t = Tensor::from_fn(Shape::new(1, n, n, 2), |[_, y, x, c]| {
        if c == 0 {
            T::from_f64_lossy(px[y * n + x])
        } else {
            T::zero()
        }
    });
    ComplexField::image(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_ellipses_gives_zero_image() {
        let spec = PhantomSpec { ellipses: [0, 0], ..PhantomSpec::new(2, 16, 1) };
        for p in generate_phantoms::<f64>(&spec).unwrap() {
            assert!(p.tensor().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic_per_index() {
        let spec = PhantomSpec::new(4, 32, 9);
        let a = phantom::<f32>(&spec, 3).unwrap();
        let b = phantom::<f32>(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_phantoms::<f32>(&spec).unwrap()[3], a);
        assert_ne!(phantom::<f32>(&spec, 2).unwrap(), a);
    }

    #[test]
    fn pixel_values_stay_in_declared_range() {
        let spec = PhantomSpec::new(100, 24, 5);
        for p in generate_phantoms::<f64>(&spec).unwrap() {
            for (i, &v) in p.tensor().data().iter().enumerate() {
                if i % 2 == 0 {
                    assert!((0.0..=spec.max_value() + 1e-12).contains(&v), "{v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
            assert!(p.max_magnitude() > 0.0);
        }
    }

    #[test]
    fn small_sizes_are_config_errors() {
        assert!(matches!(generate_phantoms::<f64>(&PhantomSpec::new(1, 8, 0)), Err(Error::Config(_))));
    }
}
