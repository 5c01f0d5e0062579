use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Real;

/// How kept lines are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Lines drawn uniformly without any preference for the center.
    UniformRandom,
    /// A fully sampled central block plus uniform lines elsewhere.
    CenterDense,
}

/// Cartesian line undersampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UndersampleSpec {
    pub mode: MaskMode,
    /// Fraction of lines kept, in `(0, 1]`.
    pub fraction: f64,
    /// Fraction of central lines always kept (center-dense mode only).
    #[serde(default)]
    pub center_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl UndersampleSpec {
    pub fn uniform(fraction: f64) -> Self {
        UndersampleSpec { mode: MaskMode::UniformRandom, fraction, center_fraction: 0.0, seed: 0 }
    }

    pub fn center_dense(fraction: f64, center_fraction: f64) -> Self {
        UndersampleSpec { mode: MaskMode::CenterDense, fraction, center_fraction, seed: 0 }
    }

    /// 4x scheme: central 8 % of lines plus uniform lines up to 25 % total.
    pub fn fastmri_4x() -> Self {
        Self::center_dense(0.25, 0.08)
    }

    /// 8x scheme: central 4 % of lines plus uniform lines up to 12.5 % total.
    pub fn fastmri_8x() -> Self {
        Self::center_dense(0.125, 0.04)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config(format!("sampled fraction must be in (0, 1], got {}", self.fraction)));
        }
        if self.mode == MaskMode::CenterDense && !(0.0..=1.0).contains(&self.center_fraction) {
            return Err(Error::config(format!(
                "center fraction must be in [0, 1], got {}",
                self.center_fraction
            )));
        }
        Ok(())
    }
}

/// Rounds `x` up, ignoring representation noise just above an integer
/// (`0.08 * 100` is `8.000000000000002`).
fn ceil_tolerant(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Which k-space rows (`k_y` lines) are acquired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineMask(Vec<bool>);

impl LineMask {
    pub fn from_bools(lines: Vec<bool>) -> Self {
        LineMask(lines)
    }

    pub fn full(n: usize) -> Self {
        LineMask(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }

    pub fn is_kept(&self, line: usize) -> bool {
        self.0[line]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn kept_lines(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect()
    }
}

/// Index range of the always-kept central block for `n` lines.
pub fn center_block(n: usize, center_fraction: f64) -> std::ops::Range<usize> {
    let count = ceil_tolerant(center_fraction * n as f64).min(n);
    let start = (n / 2).saturating_sub(count / 2).min(n - count);
    start..start + count
}

/// Draws the kept-line set. `round(fraction * n)` lines are kept in every
/// mode.
pub fn make_mask(spec: &UndersampleSpec, n_lines: usize) -> Result<LineMask> {
    spec.validate()?;
    let total = (spec.fraction * n_lines as f64).round() as usize;
    let mut rng = stream_rng(spec.seed, 0, Stream::Mask);
    let mut mask = vec![false; n_lines];
    match spec.mode {
        MaskMode::UniformRandom => {
            for i in sample(&mut rng, n_lines, total).iter() {
                mask[i] = true;
            }
        }
        MaskMode::CenterDense => {
            let center = center_block(n_lines, spec.center_fraction);
            if total < center.len() {
                return Err(Error::config(format!(
                    "{total} sampled lines cannot cover the {} central lines",
                    center.len()
                )));
            }
            for i in center.clone() {
                mask[i] = true;
            }
            let outside: Vec<usize> = (0..n_lines).filter(|i| !center.contains(i)).collect();
            for j in sample(&mut rng, outside.len(), total - center.len()).iter() {
                mask[outside[j]] = true;
            }
        }
    }
    Ok(LineMask(mask))
}

/// Zeroes every k-space row that is not in `mask` (both channels of every
/// complex channel, every batch entry).
pub fn undersample<T: Real>(kspace: &ComplexField<T>, mask: &LineMask) -> Result<ComplexField<T>> {
    if kspace.domain() != Domain::Frequency {
        return Err(Error::shape("undersampling acts on frequency-domain data"));
    }
    let [b, h, w, c] = kspace.shape().0;
    if mask.len() != h {
        return Err(Error::shape(format!("mask has {} lines but k-space has {h} rows", mask.len())));
    }
    let mut out = kspace.tensor().clone();
    let row = w * c;
    for bi in 0..b {
        for (y, &keep) in mask.as_slice().iter().enumerate() {
            if !keep {
                out.data_mut()[(bi * h + y) * row..][..row].fill(T::zero());
            }
        }
    }
    ComplexField::new(out, Domain::Frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn full_fraction_keeps_everything() {
        let m = make_mask(&UndersampleSpec::uniform(1.0), 37).unwrap();
        assert_eq!(m, LineMask::full(37));
    }

    #[test]
    fn uniform_quarter_of_256_keeps_64() {
        let m = make_mask(&UndersampleSpec::uniform(0.25).with_seed(11), 256).unwrap();
        assert_eq!(m.kept(), 64);
    }

    #[test]
    fn center_dense_keeps_central_block() {
        let spec = UndersampleSpec::center_dense(0.25, 0.08).with_seed(5);
        let m = make_mask(&spec, 100).unwrap();
        assert_eq!(m.kept(), 25);
        let block = center_block(100, 0.08);
        assert_eq!(block.len(), 8);
        assert!(block.contains(&50));
        assert!(block.clone().all(|i| m.is_kept(i)));
    }

    #[test]
    fn too_few_lines_for_center_block_is_config_error() {
        let spec = UndersampleSpec::center_dense(0.05, 0.2);
        assert!(matches!(make_mask(&spec, 100), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        assert!(make_mask(&UndersampleSpec::uniform(0.0), 10).is_err());
        assert!(make_mask(&UndersampleSpec::uniform(1.5), 10).is_err());
    }

    #[test]
    fn masks_are_seed_deterministic() {
        let a = make_mask(&UndersampleSpec::uniform(0.33).with_seed(3), 128).unwrap();
        let b = make_mask(&UndersampleSpec::uniform(0.33).with_seed(3), 128).unwrap();
        let c = make_mask(&UndersampleSpec::uniform(0.33).with_seed(4), 128).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn undersample_identity_and_zero() {
        let t = Tensor::<f64>::from_fn(Shape::new(2, 4, 3, 2), |[b, y, x, c]| (b + y * 3 + x + c) as f64 + 1.0);
        let f = ComplexField::frequency(t.clone()).unwrap();
        assert_eq!(undersample(&f, &LineMask::full(4)).unwrap().tensor(), &t);
        let zero = undersample(&f, &LineMask::from_bools(vec![false; 4])).unwrap();
        assert!(zero.tensor().data().iter().all(|&v| v == 0.0));
        assert!(undersample(&f, &LineMask::full(5)).is_err());
    }
}
