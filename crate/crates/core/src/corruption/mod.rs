//! Simulators that turn clean images into corrupted k-space, plus the
//! normalization applied to every training pair.

mod mask;
mod motion;
mod noise;

use serde::{Deserialize, Serialize};

pub use mask::{center_block, make_mask, undersample, LineMask, MaskMode, UndersampleSpec};
pub use motion::{
    rigid_transform, roll_image, rotate_image, rotate_kspace, simulate_motion, translate_image,
    translate_kspace_phase, MotionEvent, MotionSpec, MotionTrace,
};
pub use noise::{add_noise, NoiseSpec};

use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::tensor::Real;

/// One corruption process applied to fully sampled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorruptionSpec {
    Undersample(UndersampleSpec),
    Motion(MotionSpec),
    Noise(NoiseSpec),
    /// Fully sampled, motion-free, noiseless acquisition.
    None,
}

impl CorruptionSpec {
    /// Named experiment regimes.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "undersample-33" => CorruptionSpec::Undersample(UndersampleSpec::uniform(0.33)),
            "undersample-25" => CorruptionSpec::Undersample(UndersampleSpec::uniform(0.25)),
            "undersample-10" => CorruptionSpec::Undersample(UndersampleSpec::uniform(0.10)),
            "fastmri-4x" => CorruptionSpec::Undersample(UndersampleSpec::fastmri_4x()),
            "fastmri-8x" => CorruptionSpec::Undersample(UndersampleSpec::fastmri_8x()),
            "motion-1" => CorruptionSpec::Motion(MotionSpec::new(0.01)),
            "motion-3" => CorruptionSpec::Motion(MotionSpec::new(0.03)),
            "motion-5" => CorruptionSpec::Motion(MotionSpec::new(0.05)),
            "noise-5000" => CorruptionSpec::Noise(NoiseSpec::new(5000.0)),
            "noise-10000" => CorruptionSpec::Noise(NoiseSpec::new(10000.0)),
            "noise-15000" => CorruptionSpec::Noise(NoiseSpec::new(15000.0)),
            "none" => CorruptionSpec::None,
            other => return Err(Error::config(format!("unknown corruption preset '{other}'"))),
        })
    }

    pub const PRESETS: [&'static str; 12] = [
        "undersample-33",
        "undersample-25",
        "undersample-10",
        "fastmri-4x",
        "fastmri-8x",
        "motion-1",
        "motion-3",
        "motion-5",
        "noise-5000",
        "noise-10000",
        "noise-15000",
        "none",
    ];

    /// Same process with every random draw keyed by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            CorruptionSpec::Undersample(s) => CorruptionSpec::Undersample(s.clone().with_seed(seed)),
            CorruptionSpec::Motion(s) => CorruptionSpec::Motion(s.clone().with_seed(seed)),
            CorruptionSpec::Noise(s) => CorruptionSpec::Noise(s.clone().with_seed(seed)),
            CorruptionSpec::None => CorruptionSpec::None,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            CorruptionSpec::Undersample(s) => s.seed,
            CorruptionSpec::Motion(s) => s.seed,
            CorruptionSpec::Noise(s) => s.seed,
            CorruptionSpec::None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CorruptionSpec::Undersample(s) => s.validate(),
            CorruptionSpec::Motion(s) => {
                if !(0.0..=1.0).contains(&s.fraction) {
                    return Err(Error::config("motion fraction must be in [0, 1]"));
                }
                Ok(())
            }
            CorruptionSpec::Noise(s) if !(s.sigma >= 0.0) => {
                Err(Error::config("noise sigma must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Corrupted k-space of a clean image. Motion needs the image itself;
    /// the other processes act on its transform.
    pub fn corrupt_image<T: Real>(&self, image: &ComplexField<T>) -> Result<ComplexField<T>> {
        if image.domain() != Domain::Image {
            return Err(Error::shape("corrupt_image expects an image-domain field"));
        }
        match self {
            CorruptionSpec::Motion(spec) => simulate_motion(image, &spec.trace(image.shape().height())?),
            _ => self.corrupt_kspace(&image.fft2c()?),
        }
    }

    /// Corrupted k-space from clean k-space.
    pub fn corrupt_kspace<T: Real>(&self, kspace: &ComplexField<T>) -> Result<ComplexField<T>> {
        match self {
            CorruptionSpec::Undersample(spec) => undersample(kspace, &make_mask(spec, kspace.shape().height())?),
            CorruptionSpec::Noise(spec) => add_noise(kspace, spec),
            CorruptionSpec::Motion(_) => self.corrupt_image(&kspace.ifft2c()?),
            CorruptionSpec::None => {
                if kspace.domain() != Domain::Frequency {
                    return Err(Error::shape("corrupt_kspace expects frequency-domain data"));
                }
                Ok(kspace.clone())
            }
        }
    }
}

/// A normalized (corrupted k-space, target image) pair and the divisor used.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPair<T> {
    pub kspace: ComplexField<T>,
    pub image: ComplexField<T>,
    pub scale: T,
}

impl<T: Real> NormalizedPair<T> {
    /// Undo the normalization on any field produced from this pair.
    pub fn denormalize(&self, field: &ComplexField<T>) -> ComplexField<T> {
        field.scale(self.scale)
    }
}

/// Divides both the corrupted k-space and the target image by the largest
/// complex magnitude of the zero-filled reconstruction `ifft2c(kspace)`.
pub fn normalize_pair<T: Real>(kspace: &ComplexField<T>, image: &ComplexField<T>) -> Result<NormalizedPair<T>> {
    if kspace.domain() != Domain::Frequency || image.domain() != Domain::Image {
        return Err(Error::shape("normalize_pair expects (frequency, image) fields"));
    }
    let scale = kspace.ifft2c()?.max_magnitude();
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(Error::data("corrupted image is all zero; cannot normalize"));
    }
    let inv = T::one() / scale;
    Ok(NormalizedPair { kspace: kspace.scale(inv), image: image.scale(inv), scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn specs_roundtrip_through_json_and_reject_unknown_keys() {
        for name in CorruptionSpec::PRESETS {
            let spec = CorruptionSpec::preset(name).unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<CorruptionSpec>(&json).unwrap(), spec, "{json}");
        }
        let bad = r#"{"kind":"noise","sigma":1.0,"bogus":2}"#;
        assert!(serde_json::from_str::<CorruptionSpec>(bad).is_err());
        let ok = r#"{"kind":"undersample","mode":"uniform-random","fraction":0.25}"#;
        assert!(matches!(serde_json::from_str::<CorruptionSpec>(ok).unwrap(), CorruptionSpec::Undersample(_)));
    }

    #[test]
    fn unknown_preset_is_config_error() {
        assert!(matches!(CorruptionSpec::preset("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn normalization_halves_when_max_is_two() {
        let mut img = Tensor::<f64>::zeros(Shape::new(1, 8, 8, 2));
        img.set([0, 3, 3, 0], 2.0);
        img.set([0, 1, 5, 1], 1.0);
        let image = ComplexField::image(img).unwrap();
        let kspace = image.fft2c().unwrap();
        let pair = normalize_pair(&kspace, &image).unwrap();
        assert!((pair.scale - 2.0).abs() < 1e-12);
        assert!((pair.image.tensor().get([0, 3, 3, 0]) - 1.0).abs() < 1e-12);
        assert!((pair.image.tensor().get([0, 1, 5, 1]) - 0.5).abs() < 1e-12);
        assert!((pair.kspace.ifft2c().unwrap().max_magnitude() - 1.0).abs() < 1e-12);
        let back = pair.denormalize(&pair.image);
        let err = back.tensor().zip_map(image.tensor(), |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err <= 1e-7 * 2.0);
    }

    #[test]
    fn all_zero_corruption_cannot_be_normalized() {
        let z = ComplexField::frequency(Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2))).unwrap();
        let i = ComplexField::image(Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2))).unwrap();
        assert!(matches!(normalize_pair(&z, &i), Err(Error::Data(_))));
    }
}
