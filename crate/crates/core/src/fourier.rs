//! Centered, unitary 2-D discrete Fourier transforms over channel-paired
//! complex tensors.
//!
//! Channel pair `(2i, 2i + 1)` of a tensor holds the real and imaginary part
//! of complex channel `i`. The zero frequency sits at `(h / 2, w / 2)` and
//! both directions are scaled by `1 / sqrt(h * w)`, so the transform is
//! orthogonal on the real-pair representation.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Which space a [`ComplexField`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Image,
    Frequency,
}

impl Domain {
    pub fn flipped(self) -> Self {
        match self {
            Domain::Image => Domain::Frequency,
            Domain::Frequency => Domain::Image,
        }
    }
}

/// Largest side length accepted by [`dft2_naive`].
pub const NAIVE_DFT_MAX_SIDE: usize = 32;

fn check_even_channels(shape: Shape) -> Result<()> {
    if shape.channels() % 2 != 0 || shape.channels() == 0 {
        return Err(Error::shape(format!(
            "complex fields need a positive even channel count, got {shape}"
        )));
    }
    Ok(())
}

fn transform<T: Real>(x: &Tensor<T>, inverse: bool) -> Result<Tensor<T>> {
    let shape = x.shape();
    check_even_channels(shape)?;
    let [batch, h, w, c] = shape.0;
    if h == 0 || w == 0 {
        return Err(Error::shape(format!("empty spatial grid {shape}")));
    }

    let mut planner = FftPlanner::<T>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let scratch_len = row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
    let mut grid = vec![Complex::new(T::zero(), T::zero()); h * w];
    let mut transposed = grid.clone();

    let scale = T::one() / T::from_usize_lossy(h * w).sqrt();
    let (hh, wh) = (h / 2, w / 2);
    let src = x.data();
    let mut out = Tensor::zeros(shape);
    let dst = out.data_mut();

    for b in 0..batch {
        let base = b * h * w * c;
        for pair in 0..c / 2 {
            // ifftshift on the way in
            for r in 0..h {
                let sr = (r + hh) % h;
                for col in 0..w {
                    let sc = (col + wh) % w;
                    let o = base + (sr * w + sc) * c + 2 * pair;
                    grid[r * w + col] = Complex::new(src[o], src[o + 1]);
                }
            }
            row_fft.process_with_scratch(&mut grid, &mut scratch);
            for r in 0..h {
                for col in 0..w {
                    transposed[col * h + r] = grid[r * w + col];
                }
            }
            col_fft.process_with_scratch(&mut transposed, &mut scratch);
            // fftshift on the way out
            for col in 0..w {
                let dc = (col + wh) % w;
                for r in 0..h {
                    let dr = (r + hh) % h;
                    let v = transposed[col * h + r];
                    let o = base + (dr * w + dc) * c + 2 * pair;
                    dst[o] = v.re * scale;
                    dst[o + 1] = v.im * scale;
                }
            }
        }
    }
    Ok(out)
}

/// Centered unitary forward transform of every complex channel.
pub fn fft2c_tensor<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    transform(x, false)
}

/// Centered unitary inverse transform of every complex channel.
pub fn ifft2c_tensor<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    transform(x, true)
}

/// Direct double-sum DFT with the same centering and scaling as
/// [`fft2c_tensor`]. Quartic cost, so sides above
/// [`NAIVE_DFT_MAX_SIDE`] are refused.
pub fn dft2_naive<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    check_even_channels(shape)?;
    let [batch, h, w, c] = shape.0;
    if h > NAIVE_DFT_MAX_SIDE || w > NAIVE_DFT_MAX_SIDE {
        return Err(Error::config(format!(
            "naive DFT refuses grids larger than {NAIVE_DFT_MAX_SIDE}x{NAIVE_DFT_MAX_SIDE}, got {h}x{w}"
        )));
    }
    let (hh, wh) = ((h / 2) as f64, (w / 2) as f64);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Tensor::zeros(shape);
    for b in 0..batch {
        for pair in 0..c / 2 {
            for kr in 0..h {
                for kc in 0..w {
                    let (mut acc_re, mut acc_im) = (0.0f64, 0.0f64);
                    for r in 0..h {
                        for col in 0..w {
                            let phase = -tau
                                * ((kr as f64 - hh) * (r as f64 - hh) / h as f64
                                    + (kc as f64 - wh) * (col as f64 - wh) / w as f64);
                            let (s, co) = phase.sin_cos();
                            let re = x.get([b, r, col, 2 * pair]).to_f64_lossy();
                            let im = x.get([b, r, col, 2 * pair + 1]).to_f64_lossy();
                            acc_re += re * co - im * s;
                            acc_im += re * s + im * co;
                        }
                    }
                    out.set([b, kr, kc, 2 * pair], T::from_f64_lossy(acc_re * scale));
                    out.set([b, kr, kc, 2 * pair + 1], T::from_f64_lossy(acc_im * scale));
                }
            }
        }
    }
    Ok(out)
}

/// A channel-paired complex tensor tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    tensor: Tensor<T>,
    domain: Domain,
}

impl<T: Real> ComplexField<T> {
    pub fn new(tensor: Tensor<T>, domain: Domain) -> Result<Self> {
        check_even_channels(tensor.shape())?;
        Ok(ComplexField { tensor, domain })
    }

    pub fn image(tensor: Tensor<T>) -> Result<Self> {
        Self::new(tensor, Domain::Image)
    }

    pub fn frequency(tensor: Tensor<T>) -> Result<Self> {
        Self::new(tensor, Domain::Frequency)
    }

    /// Complex image with zero imaginary part from a single-channel real tensor.
    pub fn from_real(real: &Tensor<T>) -> Result<Self> {
        let shape = real.shape();
        if shape.channels() != 1 {
            return Err(Error::shape(format!("expected one real channel, got {shape}")));
        }
        let t = Tensor::from_fn(shape.with_channels(2), |[b, y, x, c]| {
            if c == 0 {
                real.get([b, y, x, 0])
            } else {
                T::zero()
            }
        });
        Ok(ComplexField { tensor: t, domain: Domain::Image })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.tensor
    }

    pub fn shape(&self) -> Shape {
        self.tensor.shape()
    }

    pub fn complex_channels(&self) -> usize {
        self.tensor.shape().channels() / 2
    }

    pub fn at(&self, b: usize, y: usize, x: usize, pair: usize) -> Complex<T> {
        Complex::new(self.tensor.get([b, y, x, 2 * pair]), self.tensor.get([b, y, x, 2 * pair + 1]))
    }

    pub fn set_at(&mut self, b: usize, y: usize, x: usize, pair: usize, v: Complex<T>) {
        self.tensor.set([b, y, x, 2 * pair], v.re);
        self.tensor.set([b, y, x, 2 * pair + 1], v.im);
    }

    /// Per-pixel complex magnitude, one channel per complex channel.
    pub fn magnitude(&self) -> Tensor<T> {
        let shape = self.shape();
        Tensor::from_fn(shape.with_channels(shape.channels() / 2), |[b, y, x, c]| {
            self.at(b, y, x, c).norm()
        })
    }

    pub fn max_magnitude(&self) -> T {
        self.magnitude().data().iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn scale(&self, k: T) -> Self {
        ComplexField { tensor: self.tensor.scale(k), domain: self.domain }
    }

    pub fn fft2c(&self) -> Result<Self> {
        if self.domain != Domain::Image {
            return Err(Error::shape("fft2c expects an image-domain field"));
        }
        Ok(ComplexField { tensor: fft2c_tensor(&self.tensor)?, domain: Domain::Frequency })
    }

    pub fn ifft2c(&self) -> Result<Self> {
        if self.domain != Domain::Frequency {
            return Err(Error::shape("ifft2c expects a frequency-domain field"));
        }
        Ok(ComplexField { tensor: ifft2c_tensor(&self.tensor)?, domain: Domain::Image })
    }
}
