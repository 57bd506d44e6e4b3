//! Analysis tooling: gradient-angle logs, descent-lemma checks, local
//! Lipschitz estimates, image metrics and the exact Gaussian posterior.

mod angles;
mod descent;
mod log;
mod metrics;
mod posterior;

pub use angles::{angle_between, angle_summary, AngleSummary, CurveSummary};
pub use descent::{descent_check, estimate_lipschitz, DescentReport, LipschitzProbe, WarmupTrace};
pub use log::{InnerRecord, StepRecord, TrajectoryLog};
pub use metrics::{psnr, ssim, ssim_default, MetricsReport, SsimParams, PSNR_CAP_DB};
pub use posterior::gaussian_posterior_mean;
