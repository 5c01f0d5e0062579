//! Line-wise rigid motion and its closed-form k-space counterparts.
//!
//! Image coordinates are centered: column `x` and row `y` map to
//! `(x - w/2, y - h/2)`. The same convention is used for `(k_x, k_y)`.

use num_complex::Complex;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Tensor};

fn default_max_translation() -> f64 {
    20.0
}

fn default_max_rotation() -> f64 {
    15.0
}

/// Rigid pose adopted from line `line` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionEvent {
    pub line: usize,
    /// Horizontal (column) translation in pixels.
    pub dx: f64,
    /// Vertical (row) translation in pixels.
    pub dy: f64,
    /// Rotation in degrees.
    pub rotation: f64,
}

/// Random motion model: a fraction of lines at which a new pose is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    /// Fraction of lines at which new motion is sampled.
    pub fraction: f64,
    #[serde(default = "default_max_translation")]
    pub max_translation: f64,
    #[serde(default = "default_max_rotation")]
    pub max_rotation: f64,
    /// Explicit events; when present they are used instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<MotionEvent>>,
    #[serde(default)]
    pub seed: u64,
}

impl MotionSpec {
    pub fn new(fraction: f64) -> Self {
        MotionSpec {
            fraction,
            max_translation: default_max_translation(),
            max_rotation: default_max_rotation(),
            events: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The trace for an image with `n_lines` rows.
    pub fn trace(&self, n_lines: usize) -> Result<MotionTrace> {
        let trace = match &self.events {
            Some(events) => MotionTrace {
                events: events.clone(),
                fraction: self.fraction,
                max_translation: self.max_translation,
                max_rotation: self.max_rotation,
            },
            None => MotionTrace::sample(self, n_lines)?,
        };
        trace.validate(n_lines)?;
        Ok(trace)
    }
}

/// Ordered motion events; the pose is constant between consecutive events
/// and identity before the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    pub events: Vec<MotionEvent>,
    pub fraction: f64,
    pub max_translation: f64,
    pub max_rotation: f64,
}

impl MotionTrace {
    pub fn empty() -> Self {
        MotionTrace { events: Vec::new(), fraction: 0.0, max_translation: 20.0, max_rotation: 15.0 }
    }

    pub fn single(event: MotionEvent) -> Self {
        MotionTrace {
            events: vec![event],
            fraction: 0.0,
            max_translation: event.dx.abs().max(event.dy.abs()),
            max_rotation: event.rotation.abs(),
        }
    }

    /// `round(fraction * n)` event lines (at least one for a positive
    /// fraction) drawn without replacement, with uniform poses.
    pub fn sample(spec: &MotionSpec, n_lines: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.fraction) {
            return Err(Error::config(format!("motion fraction must be in [0, 1], got {}", spec.fraction)));
        }
        if spec.max_translation < 0.0 || spec.max_rotation < 0.0 {
            return Err(Error::config("motion ranges must be non-negative"));
        }
        let mut count = (spec.fraction * n_lines as f64).round() as usize;
        if spec.fraction > 0.0 {
            count = count.max(1);
        }
        let mut rng = stream_rng(spec.seed, 0, Stream::Motion);
        let mut lines = sample(&mut rng, n_lines, count.min(n_lines)).into_vec();
        lines.sort_unstable();
        let mut draw = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let events = lines
            .into_iter()
            .map(|line| MotionEvent {
                line,
                dx: draw(spec.max_translation),
                dy: draw(spec.max_translation),
                rotation: draw(spec.max_rotation),
            })
            .collect();
        Ok(MotionTrace {
            events,
            fraction: spec.fraction,
            max_translation: spec.max_translation,
            max_rotation: spec.max_rotation,
        })
    }

    pub fn validate(&self, n_lines: usize) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if e.line >= n_lines {
                return Err(Error::config(format!("motion event line {} outside 0..{n_lines}", e.line)));
            }
            if i > 0 && self.events[i - 1].line >= e.line {
                return Err(Error::config("motion events must be strictly increasing in line"));
            }
            let tol = 1e-12;
            if e.dx.abs() > self.max_translation + tol
                || e.dy.abs() > self.max_translation + tol
                || e.rotation.abs() > self.max_rotation + tol
            {
                return Err(Error::config(format!("motion event {e:?} outside the declared ranges")));
            }
        }
        Ok(())
    }

    /// Pose active while acquiring `line`.
    pub fn pose_at(&self, line: usize) -> Option<&MotionEvent> {
        self.events.iter().take_while(|e| e.line <= line).last()
    }
}

#[inline]
fn centered(i: usize, n: usize) -> f64 {
    i as f64 - (n / 2) as f64
}

/// Bilinear sample of complex channel `pair` at fractional (row, col);
/// neighbours outside the grid contribute zero.
fn bilinear_zero<T: Real>(f: &ComplexField<T>, b: usize, pair: usize, row: f64, col: f64) -> Complex<T> {
    let [_, h, w, _] = f.shape().0;
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let mut acc = Complex::new(0.0f64, 0.0f64);
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            let (r, c) = (r0 + dr, c0 + dc);
            let wgt = wr * wc;
            if wgt == 0.0 || r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
                continue;
            }
            let v = f.at(b, r as usize, c as usize, pair);
            acc += Complex::new(v.re.to_f64_lossy(), v.im.to_f64_lossy()) * wgt;
        }
    }
    Complex::new(T::from_f64_lossy(acc.re), T::from_f64_lossy(acc.im))
}

/// Bilinear sample with circular wrap-around.
fn bilinear_wrap<T: Real>(f: &ComplexField<T>, b: usize, pair: usize, row: f64, col: f64) -> Complex<T> {
    let [_, h, w, _] = f.shape().0;
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let mut acc = Complex::new(0.0f64, 0.0f64);
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            let wgt = wr * wc;
            if wgt == 0.0 {
                continue;
            }
            let r = ((r0 + dr) as i64).rem_euclid(h as i64) as usize;
            let c = ((c0 + dc) as i64).rem_euclid(w as i64) as usize;
            let v = f.at(b, r, c, pair);
            acc += Complex::new(v.re.to_f64_lossy(), v.im.to_f64_lossy()) * wgt;
        }
    }
    Complex::new(T::from_f64_lossy(acc.re), T::from_f64_lossy(acc.im))
}

/// Resamples the grid at rotated centered coordinates:
/// `out[x, y] = in[x cos(phi) - y sin(phi), x sin(phi) + y cos(phi)]`,
/// bilinear with zero fill, restricted to output rows in `lines`.
fn rotate_grid<T: Real>(f: &ComplexField<T>, degrees: f64, lines: Option<&[bool]>) -> ComplexField<T> {
    let [b, h, w, _] = f.shape().0;
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = f.clone();
    for bi in 0..b {
        for row in 0..h {
            if lines.is_some_and(|l| !l[row]) {
                continue;
            }
            let y = centered(row, h);
            for col in 0..w {
                let x = centered(col, w);
                let sx = x * c - y * s + (w / 2) as f64;
                let sy = x * s + y * c + (h / 2) as f64;
                for pair in 0..f.complex_channels() {
                    out.set_at(bi, row, col, pair, bilinear_zero(f, bi, pair, sy, sx));
                }
            }
        }
    }
    out
}

/// Rotates an image about its center (`degrees`, zero fill outside).
pub fn rotate_image<T: Real>(image: &ComplexField<T>, degrees: f64) -> Result<ComplexField<T>> {
    if image.domain() != Domain::Image {
        return Err(Error::shape("rotate_image expects an image-domain field"));
    }
    Ok(rotate_grid(image, degrees, None))
}

/// Circular translation `out[y, x] = in[y - dy, x - dx]`, bilinear for
/// fractional shifts.
pub fn translate_image<T: Real>(image: &ComplexField<T>, dx: f64, dy: f64) -> Result<ComplexField<T>> {
    if image.domain() != Domain::Image {
        return Err(Error::shape("translate_image expects an image-domain field"));
    }
    let [b, h, w, _] = image.shape().0;
    let mut out = image.clone();
    for bi in 0..b {
        for row in 0..h {
            for col in 0..w {
                for pair in 0..image.complex_channels() {
                    let v = bilinear_wrap(image, bi, pair, row as f64 - dy, col as f64 - dx);
                    out.set_at(bi, row, col, pair, v);
                }
            }
        }
    }
    Ok(out)
}

/// `I[R(phi) (p - delta)]`: rotate about the center, then translate.
pub fn rigid_transform<T: Real>(image: &ComplexField<T>, pose: &MotionEvent) -> Result<ComplexField<T>> {
    let rotated = if pose.rotation == 0.0 { image.clone() } else { rotate_image(image, pose.rotation)? };
    if pose.dx == 0.0 && pose.dy == 0.0 {
        Ok(rotated)
    } else {
        translate_image(&rotated, pose.dx, pose.dy)
    }
}

fn require_square<T: Real>(f: &ComplexField<T>) -> Result<()> {
    let s = f.shape();
    if s.height() != s.width() {
        return Err(Error::shape(format!("motion simulation needs a square grid, got {s}")));
    }
    Ok(())
}

/// k-space of an object that moves rigidly between line acquisitions: row
/// `k_y` is taken from the transform of the image under the pose active at
/// `k_y`.
pub fn simulate_motion<T: Real>(image: &ComplexField<T>, trace: &MotionTrace) -> Result<ComplexField<T>> {
    if image.domain() != Domain::Image {
        return Err(Error::shape("simulate_motion expects an image-domain field"));
    }
    require_square(image)?;
    let [b, h, w, c] = image.shape().0;
    trace.validate(h)?;
    let mut out = image.fft2c()?.into_tensor();
    let row_len = w * c;
    for (i, event) in trace.events.iter().enumerate() {
        let end = trace.events.get(i + 1).map_or(h, |e| e.line);
        let moved = rigid_transform(image, event)?.fft2c()?;
        for bi in 0..b {
            for row in event.line..end {
                let o = (bi * h + row) * row_len;
                out.data_mut()[o..o + row_len].copy_from_slice(&moved.tensor().data()[o..o + row_len]);
            }
        }
    }
    ComplexField::new(out, Domain::Frequency)
}

/// Multiplies selected rows by `exp(-j 2 pi (k_x dx / w + k_y dy / h))`.
pub fn translate_kspace_phase<T: Real>(
    kspace: &ComplexField<T>,
    dx: f64,
    dy: f64,
    lines: Option<&[bool]>,
) -> Result<ComplexField<T>> {
    if kspace.domain() != Domain::Frequency {
        return Err(Error::shape("translate_kspace_phase expects frequency-domain data"));
    }
    let [b, h, w, _] = kspace.shape().0;
    if let Some(l) = lines {
        if l.len() != h {
            return Err(Error::shape("line selection length must equal the number of rows"));
        }
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = kspace.clone();
    for row in 0..h {
        if lines.is_some_and(|l| !l[row]) {
            continue;
        }
        let ky = centered(row, h);
        for col in 0..w {
            let kx = centered(col, w);
            let phase = -tau * (kx * dx / w as f64 + ky * dy / h as f64);
            let (s, c) = phase.sin_cos();
            let factor = Complex::new(T::from_f64_lossy(c), T::from_f64_lossy(s));
            for bi in 0..b {
                for pair in 0..kspace.complex_channels() {
                    let v = kspace.at(bi, row, col, pair);
                    out.set_at(bi, row, col, pair, v * factor);
                }
            }
        }
    }
    Ok(out)
}

/// Resamples selected rows at rotated frequency coordinates (bilinear,
/// zero outside the grid).
pub fn rotate_kspace<T: Real>(kspace: &ComplexField<T>, degrees: f64, lines: Option<&[bool]>) -> Result<ComplexField<T>> {
    if kspace.domain() != Domain::Frequency {
        return Err(Error::shape("rotate_kspace expects frequency-domain data"));
    }
    if let Some(l) = lines {
        if l.len() != kspace.shape().height() {
            return Err(Error::shape("line selection length must equal the number of rows"));
        }
    }
    Ok(rotate_grid(kspace, degrees, lines))
}

/// Circular integer roll used as an exact reference for translations.
pub fn roll_image<T: Real>(image: &Tensor<T>, dx: i64, dy: i64) -> Tensor<T> {
    let [_, h, w, _] = image.shape().0;
    Tensor::from_fn(image.shape(), |[b, y, x, c]| {
        let sy = (y as i64 - dy).rem_euclid(h as i64) as usize;
        let sx = (x as i64 - dx).rem_euclid(w as i64) as usize;
        image.get([b, sy, sx, c])
    })
}
