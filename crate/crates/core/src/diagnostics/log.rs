use ndarray::Array1;

use super::descent::WarmupTrace;
use crate::Scalar;

/// One warm-up iteration (or the single guidance evaluation of a DPS step).
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRecord<S> {
    pub j: usize,
    /// L_t at x_t^{(j)}
    pub objective: S,
    /// ADM weight α_j; absent for j = 0.
    pub alpha: Option<S>,
    pub raw_gradient_norm: S,
    pub smoothed_gradient_norm: S,
    /// Angle between raw gradients at j and j−1.
    pub angle_raw_prev_deg: Option<S>,
    /// Angle between smoothed gradients at j and j−1.
    pub angle_smoothed_prev_deg: Option<S>,
}

/// One outer reverse step `t → t−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<S> {
    pub outer_t: usize,
    pub x_before: Array1<S>,
    pub x_after: Array1<S>,
    /// ‖g_d‖ at the denoising input.
    pub denoise_norm: S,
    /// ‖g_l(x_t)‖ of the raw gradient at the start of the step, if guided.
    pub likelihood_norm: Option<S>,
    /// L_t at the denoising input (x_t^{(N)} for SPGD, x_t otherwise).
    pub final_objective: Option<S>,
    /// angle(g_l(x_t), g_d)
    pub angle_gl_gd_deg: Option<S>,
    /// angle(g_l(x_t), g_l(x_{t+1}))
    pub angle_gl_prev_deg: Option<S>,
    /// angle(g_d(x_t), g_d(x_{t+1}))
    pub angle_gd_prev_deg: Option<S>,
    /// Angle between the likelihood directions actually applied at t and t+1.
    pub angle_applied_prev_deg: Option<S>,
    pub inner: Vec<InnerRecord<S>>,
}

impl<S: Scalar> StepRecord<S> {
    /// Objectives `L_t(x^{(0..=N)})` and `‖∇L_t(x^{(0..N)})‖` (halved convention).
    pub fn warmup_trace(&self) -> Option<WarmupTrace<S>> {
        let last = self.final_objective?;
        if self.inner.is_empty() {
            return None;
        }
        let mut objectives: Vec<S> = self.inner.iter().map(|r| r.objective).collect();
        objectives.push(last);
        let half = S::lit(0.5);
        let gradient_norms = self.inner.iter().map(|r| r.raw_gradient_norm * half).collect();
        Some(WarmupTrace {
            objectives,
            gradient_norms,
        })
    }
}

/// Per-step diagnostics of one trajectory, ordered by decreasing `outer_t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog<S> {
    pub steps: Vec<StepRecord<S>>,
}

impl<S: Scalar> TrajectoryLog<S> {
    pub fn new() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn inner_records(&self) -> impl Iterator<Item = (&StepRecord<S>, &InnerRecord<S>)> {
        self.steps.iter().flat_map(|s| s.inner.iter().map(move |r| (s, r)))
    }
}
