//! Training objectives and image-quality metrics.
//!
//! Every quantity is built on the tape so the same code serves as a
//! differentiable loss and as an evaluation metric. Structural and PSNR
//! metrics act on complex magnitudes with a per-slice dynamic range taken
//! from the target.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::Reconstruction;
use crate::tensor::{Real, Shape, Tensor};

/// Weight of the k-space term in the joint L1 loss.
pub const JOINT_KSPACE_WEIGHT: f64 = 0.1;

/// Per-scale exponents for multiscale SSIM, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    ImageL1,
    FreqL1,
    JointL1,
    Ssim,
    MsSsim,
    Psnr,
}

impl LossKind {
    pub const ALL: [LossKind; 6] =
        [LossKind::ImageL1, LossKind::FreqL1, LossKind::JointL1, LossKind::Ssim, LossKind::MsSsim, LossKind::Psnr];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ImageL1 => "image-l1",
            LossKind::FreqL1 => "freq-l1",
            LossKind::JointL1 => "joint-l1",
            LossKind::Ssim => "ssim",
            LossKind::MsSsim => "ms-ssim",
            LossKind::Psnr => "psnr",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, LossKind::Ssim | LossKind::MsSsim | LossKind::Psnr)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown loss or metric '{s}'")))
    }
}

/// Window and stability constants for SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 7, k1: 0.01, k2: 0.03 }
    }
}

fn default_joint_weight() -> f64 {
    JOINT_KSPACE_WEIGHT
}
fn default_window() -> usize {
    7
}
fn default_k1() -> f64 {
    0.01
}
fn default_k2() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_joint_weight")]
    pub joint_weight: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_k2")]
    pub k2: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind, joint_weight: JOINT_KSPACE_WEIGHT, window: 7, k1: 0.01, k2: 0.03 }
    }

    pub fn ssim_params(&self) -> SsimParams {
        SsimParams { window: self.window, k1: self.k1, k2: self.k2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.joint_weight >= 0.0) {
            return Err(Error::config("joint weight must be non-negative"));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::config(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::config("SSIM constants must be positive"));
        }
        Ok(())
    }
}

/// Per-sample metric values on the tape (`[b, 1, 1, 1]`) and which of them
/// are finite. Only PSNR of an exact reconstruction is infinite.
#[derive(Debug, Clone)]
pub struct PerSample {
    pub values: Var,
    pub finite: Vec<bool>,
}

fn fill_per_sample<T: Real>(shape: Shape, values: &[T]) -> Tensor<T> {
    Tensor::from_fn(shape, |[b, ..]| values[b])
}

/// Largest value of each sample.
pub fn sample_max<T: Real>(t: &Tensor<T>) -> Vec<T> {
    let n = t.shape().sample_len();
    t.data().chunks_exact(n.max(1)).map(|s| s.iter().copied().fold(T::neg_infinity(), T::max)).collect()
}

/// Mean absolute difference per sample.
pub fn l1_per_sample<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d);
    Ok(tape.mean_per_sample(a))
}

fn check_window(shape: Shape, window: usize) -> Result<()> {
    if shape.height() < window || shape.width() < window {
        return Err(Error::shape(format!("image {shape} is smaller than the {window}x{window} SSIM window")));
    }
    Ok(())
}

/// Local luminance and contrast-structure maps of real images `x`, `y`
/// over uniform valid windows. Covariances use the unbiased `1 / (n - 1)`
/// normalization.
fn ssim_maps<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, range: &[T], p: &SsimParams) -> Result<(Var, Var)> {
    check_window(tape.shape(x), p.window)?;
    let k = p.window;
    let mx = tape.box_mean_valid(x, k)?;
    let my = tape.box_mean_valid(y, k)?;
    let xx = tape.square(x);
    let yy = tape.square(y);
    let xy = tape.mul(x, y)?;
    let exx = tape.box_mean_valid(xx, k)?;
    let eyy = tape.box_mean_valid(yy, k)?;
    let exy = tape.box_mean_valid(xy, k)?;
    let mx2 = tape.square(mx);
    let my2 = tape.square(my);
    let mxy = tape.mul(mx, my)?;
    let np = k * k;
    let unbias = if np > 1 { T::from_f64_lossy(np as f64 / (np - 1) as f64) } else { T::one() };
    let vx = tape.sub(exx, mx2)?;
    let vx = tape.scale(vx, unbias);
    let vy = tape.sub(eyy, my2)?;
    let vy = tape.scale(vy, unbias);
    let cxy = tape.sub(exy, mxy)?;
    let cxy = tape.scale(cxy, unbias);

    let shape = tape.shape(mx);
    let c1: Vec<T> = range.iter().map(|&r| (T::from_f64_lossy(p.k1) * r).powi(2)).collect();
    let c2: Vec<T> = range.iter().map(|&r| (T::from_f64_lossy(p.k2) * r).powi(2)).collect();
    let c1 = tape.constant(fill_per_sample(shape, &c1));
    let c2 = tape.constant(fill_per_sample(shape, &c2));
    let two = T::from_f64_lossy(2.0);

    let l_num = tape.scale(mxy, two);
    let l_num = tape.add(l_num, c1)?;
    let l_den = tape.add(mx2, my2)?;
    let l_den = tape.add(l_den, c1)?;
    let lum = tape.div(l_num, l_den)?;

    let cs_num = tape.scale(cxy, two);
    let cs_num = tape.add(cs_num, c2)?;
    let cs_den = tape.add(vx, vy)?;
    let cs_den = tape.add(cs_den, c2)?;
    let cs = tape.div(cs_num, cs_den)?;
    Ok((lum, cs))
}

/// Mean SSIM per sample of real single-channel images with the given
/// per-sample dynamic range.
pub fn ssim_per_sample<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, range: &[T], p: &SsimParams) -> Result<Var> {
    let (lum, cs) = ssim_maps(tape, x, y, range, p)?;
    let map = tape.mul(lum, cs)?;
    Ok(tape.mean_per_sample(map))
}

/// Number of dyadic scales for which the window still fits, at most five.
pub fn ms_ssim_scales(height: usize, width: usize, window: usize) -> usize {
    let mut side = height.min(width);
    let mut scales = 0;
    while scales < MS_SSIM_WEIGHTS.len() && side >= window {
        scales += 1;
        side /= 2;
    }
    scales
}

/// Multiscale SSIM per sample: contrast-structure terms at the finer scales
/// and full SSIM at the coarsest, each clamped at zero and raised to its
/// renormalized weight.
pub fn ms_ssim_per_sample<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    y: Var,
    range: &[T],
    p: &SsimParams,
) -> Result<Var> {
    let shape = tape.shape(x);
    let scales = ms_ssim_scales(shape.height(), shape.width(), p.window);
    if scales == 0 {
        check_window(shape, p.window)?;
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut x, mut y) = (x, y);
    let mut acc: Option<Var> = None;
    for (j, &w) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let (lum, cs) = ssim_maps(tape, x, y, range, p)?;
        let last = j + 1 == scales;
        let term = if last {
            let map = tape.mul(lum, cs)?;
            tape.mean_per_sample(map)
        } else {
            tape.mean_per_sample(cs)
        };
        let term = tape.pow_const(term, T::from_f64_lossy(w / total));
        acc = Some(match acc {
            None => term,
            Some(a) => tape.mul(a, term)?,
        });
        if !last {
            x = tape.avg_pool2(x)?;
            y = tape.avg_pool2(y)?;
        }
    }
    Ok(acc.expect("at least one scale"))
}

/// PSNR per sample, `10 log10(range^2 / mse)`. Samples with zero error get a
/// placeholder value on the tape and are flagged as not finite.
pub fn psnr_per_sample<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, range: &[T]) -> Result<PerSample> {
    let d = tape.sub(x, y)?;
    let d2 = tape.square(d);
    let mse = tape.mean_per_sample(d2);
    let shape = tape.shape(mse);
    let finite: Vec<bool> = tape.value(mse).data().iter().map(|&m| m > T::zero()).collect();
    let pad: Vec<T> = finite.iter().map(|&f| if f { T::zero() } else { T::one() }).collect();
    let pad = tape.constant(fill_per_sample(shape, &pad));
    let safe = tape.add(mse, pad)?;
    let ln_mse = tape.ln(safe);
    let ln_peak: Vec<T> = range.iter().map(|&r| (r * r).ln()).collect();
    let ln_peak = tape.constant(fill_per_sample(shape, &ln_peak));
    let ratio = tape.sub(ln_peak, ln_mse)?;
    let db = T::from_f64_lossy(10.0 / std::f64::consts::LN_10);
    Ok(PerSample { values: tape.scale(ratio, db), finite })
}

fn magnitude_range<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<(Var, Var, Vec<T>)> {
    let (sp, st) = (tape.shape(pred), tape.shape(target));
    if sp != st {
        return Err(Error::shape(format!("prediction {sp} and target {st} differ")));
    }
    let xm = tape.complex_abs(pred)?;
    let ym = tape.complex_abs(target)?;
    let range = sample_max(tape.value(ym));
    if range.iter().any(|&r| !(r > T::zero())) {
        return Err(Error::data("target slice is all zero; metric range undefined"));
    }
    Ok((xm, ym, range))
}

/// Per-sample values of `spec.kind` for `pred` against `target`.
pub fn metric_per_sample<T: Real>(
    tape: &mut Tape<T>,
    spec: &LossSpec,
    pred: Reconstruction,
    target: Reconstruction,
) -> Result<PerSample> {
    let all_finite = |tape: &Tape<T>, v: Var| vec![true; tape.shape(v).batch()];
    let values = match spec.kind {
        LossKind::ImageL1 => l1_per_sample(tape, pred.image, target.image)?,
        LossKind::FreqL1 => l1_per_sample(tape, pred.kspace, target.kspace)?,
        LossKind::JointL1 => {
            let img = l1_per_sample(tape, pred.image, target.image)?;
            let freq = l1_per_sample(tape, pred.kspace, target.kspace)?;
            let freq = tape.scale(freq, T::from_f64_lossy(spec.joint_weight));
            tape.add(img, freq)?
        }
        LossKind::Ssim => {
            let (x, y, range) = magnitude_range(tape, pred.image, target.image)?;
            ssim_per_sample(tape, x, y, &range, &spec.ssim_params())?
        }
        LossKind::MsSsim => {
            let (x, y, range) = magnitude_range(tape, pred.image, target.image)?;
            ms_ssim_per_sample(tape, x, y, &range, &spec.ssim_params())?
        }
        LossKind::Psnr => {
            let (x, y, range) = magnitude_range(tape, pred.image, target.image)?;
            return psnr_per_sample(tape, x, y, &range);
        }
    };
    let finite = all_finite(tape, values);
    Ok(PerSample { values, finite })
}

/// Scalar objective to minimize: the mean loss for L1 kinds, `1 - metric`
/// for SSIM kinds and `-PSNR` over samples with nonzero error.
pub fn objective<T: Real>(
    tape: &mut Tape<T>,
    spec: &LossSpec,
    pred: Reconstruction,
    target: Reconstruction,
) -> Result<Var> {
    let per = metric_per_sample(tape, spec, pred, target)?;
    match spec.kind {
        LossKind::ImageL1 | LossKind::FreqL1 | LossKind::JointL1 => Ok(tape.mean(per.values)),
        LossKind::Ssim | LossKind::MsSsim => {
            let m = tape.mean(per.values);
            let neg = tape.scale(m, -T::one());
            Ok(tape.add_scalar(neg, T::one()))
        }
        LossKind::Psnr => {
            let n = per.finite.iter().filter(|&&f| f).count();
            let w: Vec<T> = per
                .finite
                .iter()
                .map(|&f| if f { -T::one() / T::from_usize_lossy(n) } else { T::zero() })
                .collect();
            let w = tape.constant(fill_per_sample(tape.shape(per.values), &w));
            let weighted = tape.mul(per.values, w)?;
            Ok(tape.sum(weighted))
        }
    }
}

/// Per-sample metric values for plain tensors (`[b, h, w, 2]` each).
/// Infinite PSNR is reported as `f64::INFINITY`.
pub fn evaluate_metric<T: Real>(
    spec: &LossSpec,
    pred_kspace: &Tensor<T>,
    pred_image: &Tensor<T>,
    target_kspace: &Tensor<T>,
    target_image: &Tensor<T>,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pred = Reconstruction { kspace: tape.constant(pred_kspace.clone()), image: tape.constant(pred_image.clone()) };
    let target =
        Reconstruction { kspace: tape.constant(target_kspace.clone()), image: tape.constant(target_image.clone()) };
    let per = metric_per_sample(&mut tape, spec, pred, target)?;
    Ok(tape
        .value(per.values)
        .data()
        .iter()
        .zip(&per.finite)
        .map(|(&v, &f)| if f { v.to_f64_lossy() } else { f64::INFINITY })
        .collect())
}

fn image_only<T: Real>(spec: LossSpec, pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let values = evaluate_metric(&spec, pred, pred, target, target)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean absolute error over real and imaginary parts of all pixels.
pub fn l1_image<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    image_only(LossSpec::new(LossKind::ImageL1), pred, target)
}

/// Mean absolute error over all k-space values.
pub fn l1_kspace<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let values = evaluate_metric(&LossSpec::new(LossKind::FreqL1), pred, pred, target, target)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `l1_image + 0.1 * l1_kspace`.
pub fn joint_l1<T: Real>(
    pred_image: &Tensor<T>,
    target_image: &Tensor<T>,
    pred_kspace: &Tensor<T>,
    target_kspace: &Tensor<T>,
) -> Result<f64> {
    let spec = LossSpec::new(LossKind::JointL1);
    let values = evaluate_metric(&spec, pred_kspace, pred_image, target_kspace, target_image)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Batch-mean SSIM of complex images on magnitudes.
pub fn ssim<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    image_only(LossSpec::new(LossKind::Ssim), pred, target)
}

/// Batch-mean multiscale SSIM of complex images on magnitudes.
pub fn ms_ssim<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    image_only(LossSpec::new(LossKind::MsSsim), pred, target)
}

/// Batch-mean PSNR in dB of complex images on magnitudes.
pub fn psnr<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    image_only(LossSpec::new(LossKind::Psnr), pred, target)
}

/// SSIM per sample of real single-channel images with an explicit range.
pub fn ssim_real<T: Real>(x: &Tensor<T>, y: &Tensor<T>, range: &[T], p: &SsimParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let v = ssim_per_sample(&mut tape, xv, yv, range, p)?;
    Ok(tape.value(v).data().iter().map(|v| v.to_f64_lossy()).collect())
}

/// Multiscale SSIM per sample of real single-channel images.
pub fn ms_ssim_real<T: Real>(x: &Tensor<T>, y: &Tensor<T>, range: &[T], p: &SsimParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let v = ms_ssim_per_sample(&mut tape, xv, yv, range, p)?;
    Ok(tape.value(v).data().iter().map(|v| v.to_f64_lossy()).collect())
}

/// Median with the two middle values averaged for even counts; NaN sorts last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: String,
    pub architecture: String,
    pub loss: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_report(rows: &[MetricRow], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_report(r: impl Read) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_reader(r);
    reader.deserialize().map(|row| row.map_err(Error::from)).collect()
}
