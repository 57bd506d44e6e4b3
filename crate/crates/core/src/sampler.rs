//! Reverse-process drivers: unconditional DDIM, the DPS baseline and SPGD.
//!
//! Updates are computed in the `x̂₀`/`ε` form of DDIM. The equivalent
//! decomposed form `x_{t−1} = (1/√α_t)·x − g_d(x) − (guidance)`, with the
//! denoising gradient `g_d(x) = denoise_coeff·ε(x, t)`, is what the
//! diagnostics log.

use ndarray::{Array1, ArrayView1};

use crate::diagnostics::{angle_between, InnerRecord, StepRecord, TrajectoryLog};
use crate::error::{check_dim, Error, Result};
use crate::guidance::{likelihood_from_eval, AdmState, GuidanceConfig};
use crate::linalg::is_finite;
use crate::operator::MeasurementModel;
use crate::prior::{PriorEval, ScorePrior};
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::Scalar;

/// A warm-up loop aborts once `L_t` exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    DdimUnconditional,
    Dps,
    Spgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DdimUnconditional => "ddim_unconditional",
            Method::Dps => "dps",
            Method::Spgd => "spgd",
        }
    }

    pub fn is_guided(self) -> bool {
        !matches!(self, Method::DdimUnconditional)
    }

    /// Prior (ε) evaluations per trajectory of `steps` outer steps.
    pub fn nfe(self, steps: usize, warmup_steps: usize) -> usize {
        match self {
            Method::DdimUnconditional | Method::Dps => steps,
            Method::Spgd => steps * (warmup_steps + 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig<S> {
    pub method: Method,
    pub schedule: NoiseSchedule<S>,
    /// Ignored by [`Method::DdimUnconditional`]; DPS ignores the warm-up fields.
    pub guidance: GuidanceConfig<S>,
    pub seed: u64,
    pub record_diagnostics: bool,
}

/// `√ᾱ_{t−1}·x̂₀ + √(1−ᾱ_{t−1})·ε` with `x̂₀ = (x − √(1−ᾱ_t)·ε)/√ᾱ_t`.
fn ddim_from_epsilon<S: Scalar>(schedule: &NoiseSchedule<S>, t: usize, x: ArrayView1<S>, eps: &Array1<S>) -> Array1<S> {
    let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    let mut x0 = x.to_owned();
    x0.scaled_add(-(S::one() - ab).sqrt(), eps);
    x0.mapv_inplace(|v| v / ab.sqrt());
    let mut out = x0 * ab_prev.sqrt();
    out.scaled_add((S::one() - ab_prev).sqrt(), eps);
    out
}

/// `g_d(x) = denoise_coeff·ε(x, t)`
pub fn denoise_gradient<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<Array1<S>> {
    let c = schedule.coefficients(t)?;
    Ok(prior.epsilon(schedule, x_t, t)? * c.denoise_coeff)
}

/// Deterministic DDIM step `√ᾱ_{t−1}·x̂₀(x_t) + √(1−ᾱ_{t−1})·ε(x_t, t)`,
/// algebraically equal to `(1/√α_t)·x_t − g_d(x_t)`.
pub fn ddim_step<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<Array1<S>> {
    schedule.check_t(t)?;
    let eps = prior.epsilon(schedule, x_t, t)?;
    Ok(ddim_from_epsilon(schedule, t, x_t, &eps))
}

/// DPS: denoise first, then subtract `ζ·g_l` evaluated at `x_t`.
pub fn dps_step<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    guidance: &GuidanceConfig<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<Array1<S>> {
    schedule.check_t(t)?;
    let eval = prior.evaluate(schedule, x_t, t)?;
    let mut out = ddim_from_epsilon(schedule, t, x_t, &eval.epsilon());
    let lik = likelihood_from_eval(meas, eval)?;
    out.scaled_add(-guidance.zeta, &lik.gradient);
    Ok(out)
}

/// Result of one warm-up loop.
#[derive(Debug, Clone)]
pub struct Warmup<S> {
    /// x_t^{(N)}
    pub x: Array1<S>,
    pub adm: AdmState<S>,
    /// Per-j records; empty unless recording was requested.
    pub inner: Vec<InnerRecord<S>>,
    /// L_t(x_t^{(N)})
    pub final_objective: S,
    /// Raw g_l at x_t^{(0)}.
    pub initial_gradient: Array1<S>,
    /// Prior evaluation at x_t^{(N)}, reused by the denoising update.
    pub final_eval: PriorEval<S>,
}

fn objective_from_eval<S: Scalar>(meas: &MeasurementModel<S>, eval: &PriorEval<S>) -> Result<S> {
    let r = meas.residual(eval.tweedie_x0().view())?;
    Ok(S::lit(0.5) * r.dot(&r))
}

fn check_divergence<S: Scalar>(t: usize, j: usize, objective: S, initial: S) -> Result<()> {
    let factor = S::lit(DIVERGENCE_FACTOR);
    if objective > factor * initial.max(S::min_positive_value()) || !objective.is_finite() {
        return Err(Error::Diverged {
            t,
            j,
            objective: objective.as_f64(),
            initial: initial.as_f64(),
            factor: DIVERGENCE_FACTOR,
        });
    }
    Ok(())
}

/// Runs `x^{(j+1)} = x^{(j)} − (ζ/N)·g̃_l` for `j = 0..N`, with `g̃_l` the
/// ADM-smoothed likelihood gradient. The momentum state starts fresh.
pub fn spgd_warmup<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    guidance: &GuidanceConfig<S>,
    x_t: ArrayView1<S>,
    t: usize,
    record: bool,
) -> Result<Warmup<S>> {
    schedule.check_t(t)?;
    guidance.validate()?;
    let lr = guidance.inner_step();
    let mut adm = AdmState::new();
    let mut x = x_t.to_owned();
    let mut inner = Vec::new();
    let mut initial_objective = S::zero();
    let mut initial_gradient = None;
    let mut prev_raw: Option<Array1<S>> = None;
    for j in 0..guidance.warmup_steps {
        let lik = likelihood_from_eval(meas, prior.evaluate(schedule, x.view(), t)?)?;
        if j == 0 {
            initial_objective = lik.objective;
        } else {
            check_divergence(t, j, lik.objective, initial_objective)?;
        }
        let prev_smoothed = if record { adm.smoothed.clone() } else { None };
        let smoothed = adm.update(lik.gradient.view(), guidance.momentum_beta);
        if record {
            inner.push(InnerRecord {
                j,
                objective: lik.objective,
                alpha: adm.last_alpha,
                raw_gradient_norm: lik.gradient.dot(&lik.gradient).sqrt(),
                smoothed_gradient_norm: smoothed.dot(&smoothed).sqrt(),
                angle_raw_prev_deg: prev_raw.as_ref().map(|p| angle_between(p.view(), lik.gradient.view())),
                angle_smoothed_prev_deg: prev_smoothed.as_ref().map(|p| angle_between(p.view(), smoothed.view())),
            });
            prev_raw = Some(lik.gradient.clone());
        }
        x.scaled_add(-lr, &smoothed);
        if !is_finite(x.view()) {
            return Err(Error::NonFinite { t, stage: "warm-up" });
        }
        if j == 0 {
            initial_gradient = Some(lik.gradient);
        }
    }
    let final_eval = prior.evaluate(schedule, x.view(), t)?;
    let final_objective = objective_from_eval(meas, &final_eval)?;
    check_divergence(t, guidance.warmup_steps, final_objective, initial_objective)?;
    Ok(Warmup {
        x,
        adm,
        inner,
        final_objective,
        initial_gradient: initial_gradient.expect("warm-up runs at least once"),
        final_eval,
    })
}

/// Warm-up followed by a DDIM update of `x_t^{(N)}`.
pub fn spgd_step<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    guidance: &GuidanceConfig<S>,
    x_t: ArrayView1<S>,
    t: usize,
) -> Result<Array1<S>> {
    let w = spgd_warmup(prior, schedule, meas, guidance, x_t, t, false)?;
    Ok(ddim_from_epsilon(schedule, t, w.x.view(), &w.final_eval.epsilon()))
}

/// Terminal sample and diagnostics of one trajectory.
#[derive(Debug, Clone)]
pub struct SamplerOutput<S> {
    pub x0: Array1<S>,
    pub log: TrajectoryLog<S>,
    /// Prior evaluations performed.
    pub nfe: usize,
}

/// Draws `x_T ~ N(0, I)` from the seed's latent stream and runs `t = T..1`.
pub fn run_sampler<S: Scalar>(
    prior: &ScorePrior<S>,
    meas: Option<&MeasurementModel<S>>,
    config: &SamplerConfig<S>,
) -> Result<SamplerOutput<S>> {
    let mut r = rng::stream(config.seed, rng::streams::INITIAL_LATENT);
    let x_init = rng::standard_normal(&mut r, prior.dim());
    run_sampler_from(prior, meas, config, x_init)
}

/// Outcome of one outer step before logging.
struct Step<S> {
    next: Array1<S>,
    g_d: Array1<S>,
    g_l: Option<Array1<S>>,
    applied: Option<Array1<S>>,
    inner: Vec<InnerRecord<S>>,
    final_objective: Option<S>,
    evals: usize,
}

/// Directions of the previous outer step, kept for the angle log.
struct StepDirections<S> {
    g_d: Array1<S>,
    g_l: Option<Array1<S>>,
    applied: Option<Array1<S>>,
}

/// [`run_sampler`] from a given initial latent.
pub fn run_sampler_from<S: Scalar>(
    prior: &ScorePrior<S>,
    meas: Option<&MeasurementModel<S>>,
    config: &SamplerConfig<S>,
    x_init: Array1<S>,
) -> Result<SamplerOutput<S>> {
    check_dim("initial latent", prior.dim(), x_init.len())?;
    let meas = match (config.method.is_guided(), meas) {
        (true, None) => {
            return Err(Error::InvalidConfig(format!(
                "method {} needs a measurement",
                config.method.name()
            )))
        }
        (true, Some(m)) => {
            config.guidance.validate()?;
            check_dim("measurement operator", prior.dim(), m.operator.input_dim())?;
            Some(m)
        }
        (false, _) => None,
    };
    if !is_finite(x_init.view()) {
        return Err(Error::NonFinite {
            t: config.schedule.num_steps(),
            stage: "initial latent",
        });
    }
    let schedule = &config.schedule;
    let record = config.record_diagnostics;
    let mut log = TrajectoryLog::new();
    let mut nfe = 0;
    let mut x = x_init;
    let mut prev: Option<StepDirections<S>> = None;

    for t in (1..=schedule.num_steps()).rev() {
        let c = schedule.coefficients(t)?;
        let step = match (config.method, meas) {
            (Method::Spgd, Some(m)) => {
                let w = spgd_warmup(prior, schedule, m, &config.guidance, x.view(), t, record)?;
                let eps = w.final_eval.epsilon();
                let next = ddim_from_epsilon(schedule, t, w.x.view(), &eps);
                Step {
                    next,
                    g_d: eps * c.denoise_coeff,
                    applied: Some(&x - &w.x),
                    g_l: Some(w.initial_gradient),
                    inner: w.inner,
                    final_objective: Some(w.final_objective),
                    evals: config.guidance.warmup_steps + 1,
                }
            }
            (Method::Dps, Some(m)) => {
                let eval = prior.evaluate(schedule, x.view(), t)?;
                let eps = eval.epsilon();
                let mut next = ddim_from_epsilon(schedule, t, x.view(), &eps);
                let lik = likelihood_from_eval(m, eval)?;
                next.scaled_add(-config.guidance.zeta, &lik.gradient);
                let inner = if record {
                    let norm = lik.gradient.dot(&lik.gradient).sqrt();
                    vec![InnerRecord {
                        j: 0,
                        objective: lik.objective,
                        alpha: None,
                        raw_gradient_norm: norm,
                        smoothed_gradient_norm: norm,
                        angle_raw_prev_deg: None,
                        angle_smoothed_prev_deg: None,
                    }]
                } else {
                    Vec::new()
                };
                Step {
                    next,
                    g_d: eps * c.denoise_coeff,
                    applied: Some(lik.gradient.clone()),
                    g_l: Some(lik.gradient),
                    inner,
                    final_objective: None,
                    evals: 1,
                }
            }
            _ => {
                let eps = prior.epsilon(schedule, x.view(), t)?;
                Step {
                    next: ddim_from_epsilon(schedule, t, x.view(), &eps),
                    g_d: eps * c.denoise_coeff,
                    g_l: None,
                    applied: None,
                    inner: Vec::new(),
                    final_objective: None,
                    evals: 1,
                }
            }
        };
        nfe += step.evals;
        if !is_finite(step.next.view()) {
            return Err(Error::NonFinite {
                t,
                stage: "reverse step",
            });
        }
        if record {
            let angle = |a: &Option<Array1<S>>, b: &Option<Array1<S>>| match (a, b) {
                (Some(a), Some(b)) => Some(angle_between(a.view(), b.view())),
                _ => None,
            };
            let (prev_gd, prev_gl, prev_applied) = match &prev {
                Some(p) => (Some(p.g_d.clone()), p.g_l.clone(), p.applied.clone()),
                None => (None, None, None),
            };
            let g_d = Some(step.g_d.clone());
            log.steps.push(StepRecord {
                outer_t: t,
                x_before: x.clone(),
                x_after: step.next.clone(),
                denoise_norm: step.g_d.dot(&step.g_d).sqrt(),
                likelihood_norm: step.g_l.as_ref().map(|g| g.dot(g).sqrt()),
                final_objective: step.final_objective,
                angle_gl_gd_deg: angle(&step.g_l, &g_d),
                angle_gl_prev_deg: angle(&step.g_l, &prev_gl),
                angle_gd_prev_deg: angle(&g_d, &prev_gd),
                angle_applied_prev_deg: angle(&step.applied, &prev_applied),
                inner: step.inner,
            });
            prev = Some(StepDirections {
                g_d: step.g_d,
                g_l: step.g_l,
                applied: step.applied,
            });
        }
        x = step.next;
    }
    Ok(SamplerOutput { x0: x, log, nfe })
}
