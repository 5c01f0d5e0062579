use super::data::Sample;
use crate::error::Result;
use crate::losses::{evaluate_metric, median, LossKind, LossSpec, MetricRow};
use crate::models::Model;
use crate::tensor::{Real, Tensor};

/// Row label used for per-metric medians.
pub const MEDIAN_ID: &str = "median";

/// Scores `predict` on every sample, then appends one median row per metric.
/// `predict` maps corrupted k-space to (k-space, image) estimates.
pub fn evaluate_with<T: Real>(
    mut predict: impl FnMut(&Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)>,
    samples: &[Sample<T>],
    metrics: &[LossKind],
    architecture: &str,
    loss: &str,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::with_capacity((samples.len() + 1) * metrics.len());
    let mut per_metric = vec![Vec::with_capacity(samples.len()); metrics.len()];
    for s in samples {
        let (k, img) = predict(&s.kspace)?;
        for (m, &metric) in metrics.iter().enumerate() {
            let value = evaluate_metric(&LossSpec::new(metric), &k, &img, &s.target_kspace, &s.image)?[0];
            per_metric[m].push(value);
            rows.push(MetricRow {
                sample_id: s.id.clone(),
                architecture: architecture.to_string(),
                loss: loss.to_string(),
                metric: metric.name().to_string(),
                value,
            });
        }
    }
    for (values, metric) in per_metric.iter().zip(metrics) {
        if let Some(value) = median(values) {
            rows.push(MetricRow {
                sample_id: MEDIAN_ID.to_string(),
                architecture: architecture.to_string(),
                loss: loss.to_string(),
                metric: metric.name().to_string(),
                value,
            });
        }
    }
    Ok(rows)
}

/// Eval-mode scoring of a trained model.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    samples: &[Sample<T>],
    metrics: &[LossKind],
    loss: &str,
) -> Result<Vec<MetricRow>> {
    let arch = model.config().architecture.name();
    evaluate_with(|k| model.predict(k), samples, metrics, arch, loss)
}

/// Median row for `metric`, if present.
pub fn median_of(rows: &[MetricRow], metric: LossKind) -> Option<f64> {
    rows.iter().find(|r| r.sample_id == MEDIAN_ID && r.metric == metric.name()).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::CorruptionSpec;
    use crate::harness::data::build_samples;
    use crate::harness::phantom::{generate_phantoms, PhantomSpec};

    fn samples() -> Vec<Sample<f64>> {
        let images = generate_phantoms::<f64>(&PhantomSpec::new(5, 16, 2)).unwrap();
        build_samples(&images, &CorruptionSpec::preset("undersample-33").unwrap(), 2).unwrap()
    }

    #[test]
    fn perfect_predictor_scores_ideal_values() {
        let s = samples();
        let lookup = s.clone();
        let mut i = 0;
        let rows = evaluate_with(
            |_| {
                let out = (lookup[i].target_kspace.clone(), lookup[i].image.clone());
                i += 1;
                Ok(out)
            },
            &s,
            &[LossKind::ImageL1, LossKind::Ssim],
            "oracle",
            "none",
        )
        .unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(median_of(&rows, LossKind::ImageL1), Some(0.0));
        assert!((median_of(&rows, LossKind::Ssim).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_predictor_scores_mean_magnitude() {
        let s = samples();
        let rows = evaluate_with(
            |k| Ok((Tensor::zeros(k.shape()), Tensor::zeros(k.shape()))),
            &s,
            &[LossKind::ImageL1],
            "zero",
            "none",
        )
        .unwrap();
        for (row, sample) in rows.iter().zip(&s) {
            let want = sample.image.data().iter().map(|v| v.abs()).sum::<f64>() / sample.image.len() as f64;
            assert!((row.value - want).abs() < 1e-12);
        }
        let mut values: Vec<f64> = rows[..5].iter().map(|r| r.value).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(median_of(&rows, LossKind::ImageL1), Some(values[2]));
    }
}
