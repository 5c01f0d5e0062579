//! "Same" 2-D convolution kernels, lowered to GEMM through im2col.
//!
//! Weights are `[k, k, c_in, c_out]`, which is already the row-major
//! `[k * k * c_in, c_out]` matrix the lowering needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Border handling for same-size convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Zero,
    Circular,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    pub fn check(x: Shape, w: Shape, b: Shape, padding: Padding) -> Result<Self> {
        let [k0, k1, ci, co] = w.0;
        if k0 != k1 {
            return Err(Error::shape(format!("conv kernel must be square, got {w}")));
        }
        if k0 % 2 == 0 {
            return Err(Error::config(format!("conv kernel size must be odd, got {k0}")));
        }
        if x.channels() != ci {
            return Err(Error::shape(format!(
                "conv input has {} channels but weight expects {ci}",
                x.channels()
            )));
        }
        if b != Shape::new(1, 1, 1, co) {
            return Err(Error::shape(format!("conv bias must be [1, 1, 1, {co}], got {b}")));
        }
        Ok(ConvGeometry {
            batch: x.batch(),
            height: x.height(),
            width: x.width(),
            c_in: ci,
            c_out: co,
            kernel: k0,
            padding,
        })
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.c_in
    }

    fn out_shape(&self) -> Shape {
        Shape::new(self.batch, self.height, self.width, self.c_out)
    }

    /// Source pixel for output `(y, x)` and kernel tap `(ky, kx)`, or `None`
    /// when it falls in the zero border.
    #[inline]
    fn source(&self, y: usize, x: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let r = (self.kernel / 2) as isize;
        let sy = y as isize + ky as isize - r;
        let sx = x as isize + kx as isize - r;
        let (h, w) = (self.height as isize, self.width as isize);
        match self.padding {
            Padding::Zero => {
                if sy < 0 || sy >= h || sx < 0 || sx >= w {
                    None
                } else {
                    Some((sy as usize, sx as usize))
                }
            }
            Padding::Circular => Some((sy.rem_euclid(h) as usize, sx.rem_euclid(w) as usize)),
        }
    }

    fn im2col<T: Real>(&self, sample: &[T], cols: &mut [T]) {
        let (ci, k, patch) = (self.c_in, self.kernel, self.patch());
        for y in 0..self.height {
            for x in 0..self.width {
                let row = &mut cols[(y * self.width + x) * patch..][..patch];
                for ky in 0..k {
                    for kx in 0..k {
                        let dst = &mut row[(ky * k + kx) * ci..][..ci];
                        match self.source(y, x, ky, kx) {
                            Some((sy, sx)) => {
                                dst.copy_from_slice(&sample[(sy * self.width + sx) * ci..][..ci])
                            }
                            None => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, cols: &[T], sample_grad: &mut [T]) {
        let (ci, k, patch) = (self.c_in, self.kernel, self.patch());
        for y in 0..self.height {
            for x in 0..self.width {
                let row = &cols[(y * self.width + x) * patch..][..patch];
                for ky in 0..k {
                    for kx in 0..k {
                        if let Some((sy, sx)) = self.source(y, x, ky, kx) {
                            let src = &row[(ky * k + kx) * ci..][..ci];
                            let dst = &mut sample_grad[(sy * self.width + sx) * ci..][..ci];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    geo: &ConvGeometry,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Tensor<T> {
    let (p, patch, co) = (geo.pixels(), geo.patch(), geo.c_out);
    let mut out = Tensor::zeros(geo.out_shape());
    let mut cols = vec![T::zero(); p * patch];
    let in_len = p * geo.c_in;
    let out_len = p * co;
    let bias = b.data();
    for bi in 0..geo.batch {
        geo.im2col(&x.data()[bi * in_len..][..in_len], &mut cols);
        let dst = &mut out.data_mut()[bi * out_len..][..out_len];
        for row in dst.chunks_exact_mut(co) {
            row.copy_from_slice(bias);
        }
        T::gemm(
            p,
            patch,
            co,
            T::one(),
            &cols,
            patch as isize,
            1,
            w.data(),
            co as isize,
            1,
            T::one(),
            dst,
            co as isize,
            1,
        );
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Tensor<T>>,
    pub w: Option<Tensor<T>>,
    pub b: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    geo: &ConvGeometry,
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    want: [bool; 3],
) -> ConvGrads<T> {
    let (p, patch, co) = (geo.pixels(), geo.patch(), geo.c_out);
    let in_len = p * geo.c_in;
    let out_len = p * co;
    let mut gx = want[0].then(|| Tensor::zeros(x.shape()));
    let mut gw = want[1].then(|| Tensor::zeros(w.shape()));
    let mut gb = want[2].then(|| Tensor::zeros(Shape::new(1, 1, 1, co)));
    let mut cols = vec![T::zero(); p * patch];

    for bi in 0..geo.batch {
        let g = &grad_out.data()[bi * out_len..][..out_len];
        if let Some(gb) = gb.as_mut() {
            let acc = gb.data_mut();
            for row in g.chunks_exact(co) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        if let Some(gw) = gw.as_mut() {
            geo.im2col(&x.data()[bi * in_len..][..in_len], &mut cols);
            // dW += cols^T * g
            T::gemm(
                patch,
                p,
                co,
                T::one(),
                &cols,
                1,
                patch as isize,
                g,
                co as isize,
                1,
                T::one(),
                gw.data_mut(),
                co as isize,
                1,
            );
        }
        if let Some(gx) = gx.as_mut() {
            // dcols = g * W^T
            T::gemm(
                p,
                co,
                patch,
                T::one(),
                g,
                co as isize,
                1,
                w.data(),
                1,
                co as isize,
                T::zero(),
                &mut cols,
                patch as isize,
                1,
            );
            geo.col2im_add(&cols, &mut gx.data_mut()[bi * in_len..][..in_len]);
        }
    }
    ConvGrads { x: gx, w: gw, b: gb }
}
