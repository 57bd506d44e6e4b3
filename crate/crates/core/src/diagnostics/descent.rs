//! Descent-lemma bookkeeping for the warm-up loop.
//!
//! Everything here uses the halved objective `L_t = ½‖y − A x̂₀‖²` and its
//! own gradient `∇L_t = g_l/2`. A warm-up step `x ← x − (ζ/N)·g_l` is a
//! gradient step on `L_t` with step `η = 2ζ/N`, and if `g_l` is
//! `L̂`-Lipschitz then `∇L_t` is `L̂/2`-Lipschitz; [`LipschitzProbe`] and
//! [`WarmupTrace`] carry these conversions so the lemma's constants apply
//! unchanged.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::guidance::likelihood_gradient;
use crate::operator::MeasurementModel;
use crate::prior::ScorePrior;
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::Scalar;

/// Objective values `L_t(x^{(0)}) … L_t(x^{(N)})` and gradient norms
/// `‖∇L_t(x^{(0)})‖ … ‖∇L_t(x^{(N−1)})‖` of one warm-up loop.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmupTrace<S> {
    pub objectives: Vec<S>,
    pub gradient_norms: Vec<S>,
}

/// Per-step and telescoped verdicts of the descent check.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport<S> {
    /// `L(x^{(j+1)}) ≤ L(x^{(j)}) + tol`
    pub decreased: Vec<bool>,
    /// `L(x^{(j+1)}) ≤ L(x^{(j)}) − η(1 − Lη/2)‖∇L(x^{(j)})‖² + tol`
    pub lemma_bound: Vec<bool>,
    /// `L(x^{(N)}) ≤ L(x^{(0)}) − η(1 − Lη/2) Σ_j ‖∇L(x^{(j)})‖² + tol`
    pub telescoped: bool,
    /// `rhs − lhs` of the telescoped inequality (before tolerance).
    pub telescoped_slack: S,
    /// Whether `ηL < 1`, the step-size condition of the guarantee.
    pub step_condition: bool,
    pub tolerance: S,
}

impl<S: Scalar> DescentReport<S> {
    pub fn passed(&self) -> bool {
        self.decreased.iter().all(|&b| b) && self.lemma_bound.iter().all(|&b| b) && self.telescoped
    }

    pub fn steps(&self) -> usize {
        self.decreased.len()
    }
}

/// Checks a warm-up trace against the descent lemma with step `eta` and
/// gradient-Lipschitz constant `lipschitz`, both for the halved objective.
pub fn descent_check<S: Scalar>(trace: &WarmupTrace<S>, eta: S, lipschitz: S) -> Result<DescentReport<S>> {
    let n = trace.gradient_norms.len();
    if n == 0 || trace.objectives.len() != n + 1 {
        return Err(Error::InvalidRange {
            name: "warm-up trace",
            detail: format!(
                "need N+1 objectives for N gradient norms, got {} and {}",
                trace.objectives.len(),
                n
            ),
        });
    }
    let l0 = trace.objectives[0];
    let tol = S::lit(1e-10) * (S::one() + l0.abs());
    let factor = eta * (S::one() - lipschitz * eta * S::lit(0.5));
    let mut decreased = Vec::with_capacity(n);
    let mut lemma_bound = Vec::with_capacity(n);
    let mut total_sq = S::zero();
    for j in 0..n {
        let (cur, next) = (trace.objectives[j], trace.objectives[j + 1]);
        let g2 = trace.gradient_norms[j] * trace.gradient_norms[j];
        total_sq += g2;
        decreased.push(next <= cur + tol);
        lemma_bound.push(next <= cur - factor * g2 + tol);
    }
    let slack = (l0 - factor * total_sq) - trace.objectives[n];
    Ok(DescentReport {
        decreased,
        lemma_bound,
        telescoped: slack + tol >= S::zero(),
        telescoped_slack: slack,
        step_condition: eta * lipschitz < S::one(),
        tolerance: tol,
    })
}

/// Settings for [`estimate_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzProbe<S> {
    pub probes: usize,
    /// Ball radius; `None` uses `0.1·‖x_t‖ + 0.01`.
    pub radius: Option<S>,
    pub seed: u64,
    /// Secant power-iteration refinements after the random probes.
    pub power_steps: usize,
}

impl<S: Scalar> Default for LipschitzProbe<S> {
    fn default() -> Self {
        Self {
            probes: 32,
            radius: None,
            seed: 0,
            power_steps: 32,
        }
    }
}

impl<S: Scalar> LipschitzProbe<S> {
    pub fn radius_at(&self, x: ArrayView1<S>) -> S {
        self.radius
            .unwrap_or_else(|| S::lit(0.1) * x.dot(&x).sqrt() + S::lit(0.01))
    }
}

fn uniform_in_ball<S: Scalar, R: Rng + ?Sized>(rng: &mut R, center: ArrayView1<S>, radius: S) -> Array1<S> {
    let d = center.len();
    let dir = rng::standard_normal::<S, _>(rng, d);
    let n = dir.dot(&dir).sqrt();
    let u: f64 = rng.random();
    let r = radius * S::lit(u.powf(1.0 / d as f64));
    &center + &(dir * (r / n))
}

/// Local estimate of the Lipschitz constant of `g_l` (un-halved) around `x_t`:
/// the largest secant ratio `‖g_l(u) − g_l(v)‖/‖u − v‖` over random probe
/// pairs in a ball, sharpened by a few secant power iterations from the
/// centre along the best direction found.
pub fn estimate_lipschitz<S: Scalar>(
    prior: &ScorePrior<S>,
    schedule: &NoiseSchedule<S>,
    meas: &MeasurementModel<S>,
    x_t: ArrayView1<S>,
    t: usize,
    probe: &LipschitzProbe<S>,
) -> Result<S> {
    if probe.probes < 2 {
        return Err(Error::InvalidRange {
            name: "probes",
            detail: format!("need at least 2 probes, got {}", probe.probes),
        });
    }
    let radius = probe.radius_at(x_t);
    if !(radius > S::zero()) {
        return Err(Error::InvalidRange {
            name: "radius",
            detail: format!("probe radius must be positive, got {radius}"),
        });
    }
    let mut rng = rng::stream(probe.seed, rng::streams::PROBES);
    let mut points = Vec::with_capacity(probe.probes);
    for _ in 0..probe.probes {
        points.push(uniform_in_ball(&mut rng, x_t, radius));
    }
    let grads = points
        .iter()
        .map(|p| likelihood_gradient(prior, schedule, meas, p.view(), t))
        .collect::<Result<Vec<_>>>()?;

    let mut best = S::zero();
    let mut best_dir: Option<Array1<S>> = None;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let dx = &points[a] - &points[b];
            let nx = dx.dot(&dx).sqrt();
            if nx == S::zero() {
                continue;
            }
            let dg = &grads[a] - &grads[b];
            let ratio = dg.dot(&dg).sqrt() / nx;
            if ratio > best {
                best = ratio;
                best_dir = Some(dx / nx);
            }
        }
    }

    if let Some(mut dir) = best_dir {
        let g0 = likelihood_gradient(prior, schedule, meas, x_t, t)?;
        let h = radius * S::lit(0.5);
        for _ in 0..probe.power_steps {
            let p = &x_t + &(&dir * h);
            let dg = &likelihood_gradient(prior, schedule, meas, p.view(), t)? - &g0;
            let ng = dg.dot(&dg).sqrt();
            best = best.max(ng / h);
            if ng == S::zero() {
                break;
            }
            dir = dg / ng;
        }
    }
    Ok(best)
}
