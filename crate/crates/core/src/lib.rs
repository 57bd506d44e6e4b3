//! Guided reverse diffusion for linear inverse problems with analytic
//! Gaussian-mixture score priors.
//!
//! The crate provides the noise schedule and DDIM coefficients, an exact
//! score/Tweedie model for Gaussian mixtures, linear degradation operators,
//! likelihood guidance with adaptive directional momentum, the DDIM / DPS /
//! SPGD samplers, and diagnostics (gradient angles, descent checks, PSNR and
//! SSIM, exact Gaussian posteriors).
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
mod error;
pub mod guidance;
pub mod linalg;
pub mod operator;
pub mod prior;
pub mod rng;
pub mod sampler;
mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use guidance::{AdmState, GuidanceConfig, LikelihoodEval, Task};
pub use operator::{ImageGeometry, Kernel2d, LinearOperator, MeasurementModel, OperatorKind};
pub use prior::{Covariance, GaussianComponent, PriorEval, ScorePrior};
pub use sampler::{Method, SamplerConfig, SamplerOutput};
pub use scalar::Scalar;
pub use schedule::{DdimCoefficients, NoiseSchedule};

pub type NoiseSchedule64 = NoiseSchedule<f64>;
pub type NoiseSchedule32 = NoiseSchedule<f32>;
pub type ScorePrior64 = ScorePrior<f64>;
pub type ScorePrior32 = ScorePrior<f32>;
pub type LinearOperator64 = LinearOperator<f64>;
pub type LinearOperator32 = LinearOperator<f32>;
pub type MeasurementModel64 = MeasurementModel<f64>;
pub type MeasurementModel32 = MeasurementModel<f32>;
pub type GuidanceConfig64 = GuidanceConfig<f64>;
pub type GuidanceConfig32 = GuidanceConfig<f32>;
pub type SamplerConfig64 = SamplerConfig<f64>;
pub type SamplerConfig32 = SamplerConfig<f32>;
pub type TrajectoryLog64 = diagnostics::TrajectoryLog<f64>;
pub type TrajectoryLog32 = diagnostics::TrajectoryLog<f32>;
