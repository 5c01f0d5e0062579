use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::io::load_field;
use super::phantom::{generate_phantoms, PhantomSpec};
use crate::corruption::{normalize_pair, CorruptionSpec, NormalizedPair};
use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Tensor};

fn default_ellipses() -> [usize; 2] {
    [3, 8]
}
fn default_intensity() -> [f64; 2] {
    [0.1, 1.0]
}
fn default_blur() -> f64 {
    1.0
}

/// Where clean training images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Phantom {
        count: usize,
        #[serde(default = "default_ellipses")]
        ellipses: [usize; 2],
        #[serde(default = "default_intensity")]
        intensity: [f64; 2],
        #[serde(default = "default_blur")]
        blur: f64,
    },
    /// Every `*.imgc` file in the directory, in file-name order.
    Directory { path: PathBuf },
}

impl DatasetSource {
    pub fn phantoms(count: usize) -> Self {
        DatasetSource::Phantom { count, ellipses: default_ellipses(), intensity: default_intensity(), blur: default_blur() }
    }

    /// Clean image-domain slices of side `size`.
    pub fn load(&self, size: usize, seed: u64) -> Result<Vec<ComplexField<f64>>> {
        match self {
            DatasetSource::Phantom { count, ellipses, intensity, blur } => generate_phantoms(&PhantomSpec {
                count: *count,
                size,
                ellipses: *ellipses,
                intensity: *intensity,
                blur: *blur,
                seed,
            }),
            DatasetSource::Directory { path } => load_image_dir(path, size),
        }
    }
}

/// Reads all image files of a directory, checking they are `size x size`.
pub fn load_image_dir(dir: &Path, size: usize) -> Result<Vec<ComplexField<f64>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("imgc")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!("no .imgc files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let f: ComplexField<f64> = load_field(p)?;
            if f.domain() != Domain::Image {
                return Err(Error::data(format!("{} is not an image file", p.display())));
            }
            let s = f.shape();
            if s.height() != size || s.width() != size || s.channels() != 2 {
                return Err(Error::data(format!("{} has shape {s}, expected {size}x{size} complex", p.display())));
            }
            Ok(f)
        })
        .collect()
}

/// Corrupts a clean image with `corruption` keyed by `seed`, then normalizes
/// by the zero-filled reconstruction maximum.
pub fn make_training_pair<T: Real>(
    image: &ComplexField<T>,
    corruption: &CorruptionSpec,
    seed: u64,
) -> Result<NormalizedPair<T>> {
    let corrupted = corruption.with_seed(seed).corrupt_image(image)?;
    normalize_pair(&corrupted, image)
}

/// A normalized training or evaluation example, single slice each.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    /// Corrupted k-space, the network input.
    pub kspace: Tensor<T>,
    /// Clean image target.
    pub image: Tensor<T>,
    /// Transform of the clean image target.
    pub target_kspace: Tensor<T>,
    /// Divisor applied during normalization.
    pub scale: f64,
}

/// Builds normalized samples; sample `i` draws its corruption from
/// `seed ^ i`.
pub fn build_samples<T: Real>(images: &[ComplexField<f64>], corruption: &CorruptionSpec, seed: u64) -> Result<Vec<Sample<T>>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let pair = make_training_pair(img, corruption, seed ^ i as u64)?;
            let target_kspace = pair.image.fft2c()?;
            Ok(Sample {
                id: i.to_string(),
                kspace: pair.kspace.tensor().cast(),
                image: pair.image.tensor().cast(),
                target_kspace: target_kspace.tensor().cast(),
                scale: pair.scale,
            })
        })
        .collect()
}

/// Seeded 80/20 split: positions of a shuffled permutation with
/// `position % 5 == 4` go to validation.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, 0, Stream::Split));
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (pos, idx) in perm.into_iter().enumerate() {
        if pos % 5 == 4 {
            val.push(idx);
        } else {
            train.push(idx);
        }
    }
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::{make_mask, undersample, MotionTrace, UndersampleSpec};

    fn image() -> ComplexField<f64> {
        super::super::phantom::phantom(&PhantomSpec::new(1, 32, 4), 0).unwrap()
    }

    #[test]
    fn no_op_corruptions_give_exact_transform() {
        let img = image();
        for spec in [
            CorruptionSpec::Undersample(UndersampleSpec::uniform(1.0)),
            CorruptionSpec::preset("none").unwrap(),
            CorruptionSpec::Noise(crate::corruption::NoiseSpec::new(0.0)),
            CorruptionSpec::Motion(crate::corruption::MotionSpec::new(0.0)),
        ] {
            let pair = make_training_pair(&img, &spec, 3).unwrap();
            let want = pair.image.fft2c().unwrap();
            let err = pair.kspace.tensor().zip_map(want.tensor(), |a, b| (a - b).abs()).unwrap().max_abs();
            assert!(err < 1e-12, "{spec:?}: {err}");
            assert!(MotionTrace::empty().events.is_empty());
        }
    }

    #[test]
    fn normalized_zero_filled_max_is_one() {
        let pair = make_training_pair(&image(), &CorruptionSpec::preset("undersample-25").unwrap(), 1).unwrap();
        assert!((pair.kspace.ifft2c().unwrap().max_magnitude() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pipeline_matches_manual_composition() {
        let img = image();
        let spec = UndersampleSpec::uniform(0.25).with_seed(8);
        let pair = make_training_pair(&img, &CorruptionSpec::Undersample(spec.clone()), 8).unwrap();
        let k = undersample(&img.fft2c().unwrap(), &make_mask(&spec, 32).unwrap()).unwrap();
        let s = k.ifft2c().unwrap().max_magnitude();
        let err = pair.kspace.tensor().zip_map(k.scale(1.0 / s).tensor(), |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err < 1e-7);
        let err = pair.image.tensor().zip_map(img.scale(1.0 / s).tensor(), |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err < 1e-7);
    }

    #[test]
    fn split_is_eighty_twenty_and_seeded() {
        let (train, val) = split_indices(100, 3);
        assert_eq!((train.len(), val.len()), (80, 20));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 3), (train, val.clone()));
        assert_ne!(split_indices(100, 4).1, val);
    }

    #[test]
    fn dataset_source_json() {
        let s: DatasetSource = serde_json::from_str(r#"{"source":"phantom","count":12}"#).unwrap();
        assert_eq!(s, DatasetSource::phantoms(12));
        assert!(serde_json::from_str::<DatasetSource>(r#"{"source":"phantom","count":1,"x":2}"#).is_err());
        let d: DatasetSource = serde_json::from_str(r#"{"source":"directory","path":"/tmp/x"}"#).unwrap();
        assert!(matches!(d, DatasetSource::Directory { .. }));
    }

    #[test]
    fn directory_ingestion_checks_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let img = image();
        super::super::io::save_field(dir.path().join("b.imgc"), &img).unwrap();
        super::super::io::save_field(dir.path().join("a.imgc"), &img.scale(2.0)).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let loaded = load_image_dir(dir.path(), 32).unwrap();
        assert_eq!(loaded.len(), 2);
        assert!((loaded[0].max_magnitude() - 2.0 * img.max_magnitude()).abs() < 1e-6);
        assert!(matches!(load_image_dir(dir.path(), 64), Err(Error::Data(_))));
    }
}
