//! Discrete noise schedule and the DDIM update coefficients.
//!
//! Timesteps are indexed `t = 1..=T`; `alpha_bar(0) == 1` is the boundary
//! value used by the final reverse step.

use crate::error::{Error, Result};
use crate::Scalar;

/// Reference step count the default linear schedule is calibrated for.
const REFERENCE_STEPS: f64 = 1000.0;
const REFERENCE_BETA_START: f64 = 1e-4;
const REFERENCE_BETA_END: f64 = 0.02;
/// Upper clamp for rescaled β when T is too small for the plain rescaling.
const MAX_RESCALED_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<S> {
    betas: Vec<S>,
    alphas: Vec<S>,
    /// `alpha_bars[0] = 1`, `alpha_bars[t] = ∏_{i ≤ t} α_i`.
    alpha_bars: Vec<S>,
}

impl<S: Scalar> NoiseSchedule<S> {
    /// Linear β from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(num_steps: usize, beta_start: S, beta_end: S) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidRange {
                name: "num_steps",
                detail: "must be at least 1".into(),
            });
        }
        if !(beta_start > S::zero() && beta_start <= beta_end && beta_end < S::one()) {
            return Err(Error::InvalidRange {
                name: "beta",
                detail: format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"),
            });
        }
        let betas = if num_steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            let denom = S::lit((num_steps - 1) as f64);
            (0..num_steps)
                .map(|i| beta_start + span * S::lit(i as f64) / denom)
                .collect()
        };
        Self::from_betas(betas)
    }

    /// Linear schedule with endpoints `1e-4·(1000/T)` and `0.02·(1000/T)`, so
    /// the terminal noise level stays comparable across step counts. Both
    /// endpoints are clamped to 0.999, which only matters for `T < 21`.
    pub fn rescaled_linear(num_steps: usize) -> Result<Self> {
        let scale = REFERENCE_STEPS / num_steps.max(1) as f64;
        Self::linear(
            num_steps,
            S::lit((REFERENCE_BETA_START * scale).min(MAX_RESCALED_BETA)),
            S::lit((REFERENCE_BETA_END * scale).min(MAX_RESCALED_BETA)),
        )
    }

    pub fn from_betas(betas: Vec<S>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidRange {
                name: "betas",
                detail: "schedule needs at least one step".into(),
            });
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > S::zero() && b < S::one()) {
                return Err(Error::InvalidRange {
                    name: "betas",
                    detail: format!("beta_{} = {b} not in (0, 1)", i + 1),
                });
            }
            if i > 0 && b < betas[i - 1] {
                return Err(Error::InvalidRange {
                    name: "betas",
                    detail: format!("beta must be non-decreasing (beta_{} < beta_{})", i + 1, i),
                });
            }
        }
        let alphas: Vec<S> = betas.iter().map(|&b| S::one() - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(S::one());
        for &a in &alphas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * a);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t >= 1 && t <= self.num_steps() {
            Ok(())
        } else {
            Err(Error::TimestepOutOfRange {
                t,
                num_steps: self.num_steps(),
            })
        }
    }

    /// β_t for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> S {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> S {
        self.alphas[t - 1]
    }

    /// ᾱ_t for `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> S {
        self.alpha_bars[t]
    }

    pub fn betas(&self) -> &[S] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[S] {
        &self.alpha_bars
    }

    /// √(1 − ᾱ_T), the noise standard deviation at the start of sampling.
    pub fn terminal_noise_std(&self) -> S {
        (S::one() - self.alpha_bar(self.num_steps())).sqrt()
    }

    pub fn coefficients(&self, t: usize) -> Result<DdimCoefficients<S>> {
        self.check_t(t)?;
        Ok(DdimCoefficients::from_alphas(
            self.alpha(t),
            self.alpha_bar(t),
            self.alpha_bar(t - 1),
        ))
    }
}

/// Coefficients of the decomposed deterministic update
/// `x_{t-1} = scale·x_t − denoise_coeff·ε(x_t, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdimCoefficients<S> {
    /// 1/√α_t
    pub scale: S,
    /// √(1−ᾱ_t)/√α_t − √(1−ᾱ_{t−1})
    pub denoise_coeff: S,
    /// Reverse-process standard deviation; always zero here.
    pub sigma_t: S,
}

impl<S: Scalar> DdimCoefficients<S> {
    pub fn from_alphas(alpha_t: S, alpha_bar_t: S, alpha_bar_prev: S) -> Self {
        let sqrt_alpha = alpha_t.sqrt();
        Self {
            scale: S::one() / sqrt_alpha,
            denoise_coeff: (S::one() - alpha_bar_t).sqrt() / sqrt_alpha - (S::one() - alpha_bar_prev).sqrt(),
            sigma_t: S::zero(),
        }
    }
}
