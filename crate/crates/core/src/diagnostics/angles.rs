use ndarray::ArrayView1;

use super::log::TrajectoryLog;
use crate::guidance::ZERO_NORM;
use crate::Scalar;

/// Unsigned angle in degrees; 90 when either vector is (numerically) zero.
///
/// Uses `2·atan2(‖û − v̂‖, ‖û + v̂‖)`, which stays accurate near 0° and 180°
/// where `acos` of the cosine loses half the digits.
pub fn angle_between<S: Scalar>(u: ArrayView1<S>, v: ArrayView1<S>) -> S {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    let tiny = S::lit(ZERO_NORM);
    if nu < tiny || nv < tiny {
        return S::lit(90.0);
    }
    let a = &u / nu;
    let b = &v / nv;
    let diff = &a - &b;
    let sum = &a + &b;
    (S::lit(2.0) * diff.dot(&diff).sqrt().atan2(sum.dot(&sum).sqrt())).to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary<S> {
    pub mean: Option<S>,
    pub max: Option<S>,
    /// `(outer_t, angle)` in log order.
    pub series: Vec<(usize, S)>,
}

impl<S: Scalar> CurveSummary<S> {
    fn from_series(series: Vec<(usize, S)>) -> Self {
        let n = series.len();
        let (mean, max) = if n == 0 {
            (None, None)
        } else {
            let total: S = series.iter().map(|p| p.1).sum();
            let max = series.iter().map(|p| p.1).fold(S::neg_infinity(), S::max);
            (Some(total / S::lit(n as f64)), Some(max))
        };
        Self { mean, max, series }
    }
}

/// Per-curve statistics of a trajectory's gradient angles.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSummary<S> {
    /// angle(g_l, g_d) per step
    pub likelihood_vs_denoise: CurveSummary<S>,
    /// angle(g_l(x_t), g_l(x_{t+1}))
    pub likelihood_consecutive: CurveSummary<S>,
    /// angle(g_d(x_t), g_d(x_{t+1}))
    pub denoise_consecutive: CurveSummary<S>,
    /// Consecutive angle of the applied likelihood direction across outer steps.
    pub applied_consecutive: CurveSummary<S>,
    /// Mean angle between consecutive raw gradients inside warm-up loops.
    pub warmup_raw_mean: Option<S>,
    /// Mean angle between consecutive smoothed gradients inside warm-up loops.
    pub warmup_smoothed_mean: Option<S>,
}

fn collect<S: Scalar>(
    log: &TrajectoryLog<S>,
    pick: impl Fn(&super::log::StepRecord<S>) -> Option<S>,
) -> CurveSummary<S> {
    CurveSummary::from_series(
        log.steps
            .iter()
            .filter_map(|s| pick(s).map(|a| (s.outer_t, a)))
            .collect(),
    )
}

fn mean<S: Scalar>(values: impl Iterator<Item = S>) -> Option<S> {
    let (sum, n) = values.fold((S::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / S::lit(n as f64))
}

pub fn angle_summary<S: Scalar>(log: &TrajectoryLog<S>) -> AngleSummary<S> {
    AngleSummary {
        likelihood_vs_denoise: collect(log, |s| s.angle_gl_gd_deg),
        likelihood_consecutive: collect(log, |s| s.angle_gl_prev_deg),
        denoise_consecutive: collect(log, |s| s.angle_gd_prev_deg),
        applied_consecutive: collect(log, |s| s.angle_applied_prev_deg),
        warmup_raw_mean: mean(log.inner_records().filter_map(|(_, r)| r.angle_raw_prev_deg)),
        warmup_smoothed_mean: mean(log.inner_records().filter_map(|(_, r)| r.angle_smoothed_prev_deg)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::StepRecord;
    use ndarray::{array, Array1};

    #[test]
    fn basic_angles() {
        let u = array![1.0f64, 2.0];
        assert!(angle_between(u.view(), (&u * 3.0).view()).abs() < 1e-6);
        assert!((angle_between(u.view(), (-&u).view()) - 180.0).abs() < 1e-9);
        assert!((angle_between(array![1.0f64, 0.0].view(), array![0.0, 2.0].view()) - 90.0).abs() < 1e-12);
        assert_eq!(angle_between(array![0.0, 0.0].view(), u.view()), 90.0);
    }

    fn record(t: usize, a: Option<f64>, b: Option<f64>, c: Option<f64>) -> StepRecord<f64> {
        StepRecord {
            outer_t: t,
            x_before: Array1::zeros(1),
            x_after: Array1::zeros(1),
            denoise_norm: 1.0,
            likelihood_norm: Some(1.0),
            final_objective: None,
            angle_gl_gd_deg: a,
            angle_gl_prev_deg: b,
            angle_gd_prev_deg: c,
            angle_applied_prev_deg: b,
            inner: vec![],
        }
    }

    #[test]
    fn summary_reproduces_known_angles() {
        let log = TrajectoryLog {
            steps: vec![
                record(3, Some(80.0), None, None),
                record(2, Some(100.0), Some(30.0), Some(2.0)),
                record(1, Some(90.0), Some(60.0), Some(4.0)),
            ],
        };
        let s = angle_summary(&log);
        assert_eq!(s.likelihood_vs_denoise.series, vec![(3, 80.0), (2, 100.0), (1, 90.0)]);
        assert_eq!(s.likelihood_vs_denoise.mean, Some(90.0));
        assert_eq!(s.likelihood_vs_denoise.max, Some(100.0));
        assert_eq!(s.likelihood_consecutive.mean, Some(45.0));
        assert_eq!(s.denoise_consecutive.series, vec![(2, 2.0), (1, 4.0)]);
        assert_eq!(s.denoise_consecutive.max, Some(4.0));
        assert_eq!(s.warmup_raw_mean, None);
    }
}
