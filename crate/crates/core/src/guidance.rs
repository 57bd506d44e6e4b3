//! Likelihood guidance: the measurement objective, its exact gradient through
//! the Tweedie estimate, and adaptive directional momentum (ADM).
//!
//! Two conventions coexist. The objective `L_t = ½‖y − A x̂₀(x_t)‖²` carries
//! the ½, while the guidance gradient `g_l = ∇‖y − A x̂₀(x_t)‖²` does not, so
//! `g_l = 2 ∇L_t`.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::operator::MeasurementModel;
use crate::prior::{PriorEval, ScorePrior};
use crate::schedule::NoiseSchedule;
use crate::Scalar;

/// Restoration tasks with their default guidance step sizes (FFHQ settings).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Inpainting,
    GaussianDeblur,
    MotionDeblur,
    SuperResolution,
}

impl Task {
    pub fn default_zeta(self) -> f64 {
        match self {
            Task::Inpainting => 2.5,
            Task::GaussianDeblur => 1.5,
            Task::MotionDeblur => 1.0,
            Task::SuperResolution => 8.0,
        }
    }
}

pub const DEFAULT_WARMUP_STEPS: usize = 5;
pub const DEFAULT_MOMENTUM_BETA: f64 = 0.95;

/// Norms below this count as zero in [`cosine_sim`].
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig<S> {
    /// Total guidance step ζ per outer step; each warm-up step uses ζ/N.
    pub zeta: S,
    /// Warm-up iterations N.
    pub warmup_steps: usize,
    /// Base momentum β.
    pub momentum_beta: S,
}

impl<S: Scalar> GuidanceConfig<S> {
    pub fn new(zeta: S, warmup_steps: usize, momentum_beta: S) -> Result<Self> {
        let cfg = Self {
            zeta,
            warmup_steps,
            momentum_beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Task default ζ with N = 5 and β = 0.95.
    pub fn for_task(task: Task) -> Self {
        Self {
            zeta: S::lit(task.default_zeta()),
            warmup_steps: DEFAULT_WARMUP_STEPS,
            momentum_beta: S::lit(DEFAULT_MOMENTUM_BETA),
        }
    }

    pub fn validate(&self) -> Result<()> {
        // ζ = 0 is accepted: it switches guidance off, which the reduction
        // checks rely on.
        if !(self.zeta >= S::zero()) || !self.zeta.is_finite() {
            return Err(Error::InvalidConfig(format!("zeta must be >= 0, got {}", self.zeta)));
        }
        if self.warmup_steps == 0 {
            return Err(Error::InvalidConfig("warmup_steps must be at least 1".into()));
        }
        if !(self.momentum_beta >= S::zero() && self.momentum_beta < S::one()) {
            return Err(Error::InvalidConfig(format!(
                "momentum_beta must be in [0, 1), got {}",
                self.momentum_beta
            )));
        }
        Ok(())
    }

    /// Per-inner-step learning rate ζ/N.
    pub fn inner_step(&self) -> S {
        self.zeta / S::lit(self.warmup_steps as f64)
    }
}

/// Objective value and guidance gradient at one point, plus the prior
/// evaluation they were derived from.
#[derive(Debug, Clone)]
pub struct LikelihoodEval<S> {
    /// ½‖y − A x̂₀‖²
    pub objective: S,
    /// ∇‖y − A x̂₀‖² (no ½)
    pub gradient: Array1<S>,
    pub x0_hat: Array1<S>,
    pub prior: PriorEval<S>,
}

/// Evaluates `L_t` and `g_l` from an existing prior evaluation.
pub fn likelihood_from_eval<S: Scalar>(meas: &MeasurementModel<S>, prior: PriorEval<S>) -> Result<LikelihoodEval<S>> {
    let x0_hat = prior.tweedie_x0();
    let forward = meas.operator.apply(x0_hat.view())?;
    let misfit = &forward - &meas.measurement;
    let objective = S::lit(0.5) * misfit.dot(&misfit);
    let back = meas.operator.adjoint(misfit.view())? * S::lit(2.0);
    let gradient = prior.tweedie_jvp(back.view());
    Ok(LikelihoodEval {
        objective,
        gradient,
        x0_hat,
        prior,
    })
}

pub fn evaluate_likelihood<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<LikelihoodEval<S>> {
    likelihood_from_eval(meas, prior.evaluate(schedule, x_t, t)?)
}

/// `L_t(x_t) = ½‖y − A x̂₀(x_t)‖²`
pub fn likelihood_objective<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<S> {
    let x0_hat = prior.tweedie_x0(schedule, x_t, t)?;
    let r = meas.residual(x0_hat.view())?;
    Ok(S::lit(0.5) * r.dot(&r))
}

/// `g_l = 2 Jᵀ Aᵀ (A x̂₀ − y)` with `J = ∂x̂₀/∂x_t`.
pub fn likelihood_gradient<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<Array1<S>> {
    Ok(evaluate_likelihood(prior, schedule, meas, x_t, t)?.gradient)
}

/// Central finite differences of `‖y − A x̂₀(x_t)‖²` (2d objective evaluations).
pub fn likelihood_gradient_fd<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    x_t: ArrayView1<S>,
    t: usize,
    step: S,
) -> Result<Array1<S>> {
    if !(step > S::zero()) {
        return Err(Error::InvalidRange {
            name: "step",
            detail: format!("finite-difference step must be positive, got {step}"),
        });
    }
    let two = S::lit(2.0);
    let mut probe = x_t.to_owned();
    let mut out = Array1::zeros(x_t.len());
    for i in 0..x_t.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = two * likelihood_objective(prior, schedule, meas, probe.view(), t)?;
        probe[i] = orig - step;
        let minus = two * likelihood_objective(prior, schedule, meas, probe.view(), t)?;
        probe[i] = orig;
        out[i] = (plus - minus) / (two * step);
    }
    Ok(out)
}

/// Cosine similarity; 0 when either vector has norm below [`ZERO_NORM`].
pub fn cosine_sim<S: Scalar>(u: ArrayView1<S>, v: ArrayView1<S>) -> S {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    let tiny = S::lit(ZERO_NORM);
    if nu < tiny || nv < tiny {
        return S::zero();
    }
    (u.dot(&v) / (nu * nv)).max(-S::one()).min(S::one())
}

/// Running ADM state for one warm-up loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmState<S> {
    pub smoothed: Option<Array1<S>>,
    pub last_alpha: Option<S>,
}

impl<S: Scalar> AdmState<S> {
    pub fn new() -> Self {
        Self {
            smoothed: None,
            last_alpha: None,
        }
    }

    pub fn reset(&mut self) {
        self.smoothed = None;
        self.last_alpha = None;
    }

    /// Folds a raw gradient into the state and returns the smoothed gradient.
    ///
    /// The first call passes `g_raw` through. Afterwards
    /// `α = (sim(g̃_prev, g_raw) + 1)/2` and `g̃ = αβ·g̃_prev + (1 − αβ)·g_raw`.
    pub fn update(&mut self, g_raw: ArrayView1<S>, beta: S) -> Array1<S> {
        let next = match &self.smoothed {
            None => {
                self.last_alpha = None;
                g_raw.to_owned()
            }
            Some(prev) => {
                let alpha = (cosine_sim(prev.view(), g_raw) + S::one()) * S::lit(0.5);
                let keep = alpha * beta;
                self.last_alpha = Some(alpha);
                let mut g = g_raw.to_owned() * (S::one() - keep);
                g.scaled_add(keep, prev);
                g
            }
        };
        self.smoothed = Some(next.clone());
        next
    }
}

/// Functional form of [`AdmState::update`].
pub fn adm_update<S: Scalar>(state: &AdmState<S>, g_raw: ArrayView1<S>, beta: S) -> (AdmState<S>, Array1<S>) {
    let mut next = state.clone();
    let g = next.update(g_raw, beta);
    (next, g)
}
