//! Finite-difference verification helpers shared by unit, integration and
//! acceptance tests.

use rand::seq::index::sample;
use rand::Rng;

use crate::tensor::{Real, Shape, Tensor};

/// Uniform samples in `[-2, 2)`.
pub fn random_tensor<T: Real>(shape: Shape, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-2.0..2.0)))
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)`.
pub fn max_relative_error<T: Real>(analytic: &Tensor<T>, numeric: &Tensor<T>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let (a, n) = (a.to_f64_lossy(), n.to_f64_lossy());
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Outcome of checking sampled coordinates of one parameter group.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

/// Compares `analytic` against central differences of `f` at up to
/// `samples` coordinates of `x`.
///
/// Coordinates whose one-sided difference quotients disagree by more than
/// `kink_tol` (relative) straddle a non-differentiable point of a
/// piecewise-linear activation; they are skipped and replaced by another
/// coordinate. A wrong analytic gradient leaves both quotients in agreement,
/// so it is still caught. With `kink_tol` equal to the pass tolerance, a
/// kink that survives the filter perturbs the central difference by at most
/// half that tolerance.
pub fn check_sampled(
    name: &str,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    samples: usize,
    h: f64,
    floor: f64,
    kink_tol: f64,
    rng: &mut impl Rng,
) -> GroupCheck {
    let base = f(x);
    let order = sample(rng, x.len(), x.len()).into_vec();
    let mut probe = x.clone();
    let mut report = GroupCheck { name: name.to_string(), checked: 0, skipped_kinks: 0, max_rel_err: 0.0 };
    for i in order {
        if report.checked >= samples {
            break;
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let fwd = (up - base) / h;
        let bwd = (base - down) / h;
        let scale_ = fwd.abs().max(bwd.abs()).max(floor);
        if (fwd - bwd).abs() / scale_ > kink_tol {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        report.max_rel_err = report.max_rel_err.max(err);
        report.checked += 1;
    }
    report
}
