//! Seeded trajectory batches and parameter sweeps.
//!
//! Each seed draws its ground truth from the prior (ground-truth stream),
//! synthesizes the measurement (measurement-noise stream), runs the sampler
//! and writes its own files under `seed_<s>/`. The summary is assembled after
//! every seed has finished; a failing seed is recorded, never fatal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use spgd::diagnostics::{angle_summary, gaussian_posterior_mean, MetricsReport};
use spgd::sampler::run_sampler;
use spgd::{MeasurementModel, Method};

use crate::config::{MethodSpec, RunConfig};
use crate::csv_log::{format_value, write_trajectory_csv};
use crate::error::{HarnessError, Result};
use crate::image::write_image;

pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
/// Key of every timing field; [`strip_wall_clock`] removes them.
pub const WALL_CLOCK_KEY: &str = "wall_clock_seconds";

/// Prior evaluations per trajectory under both bookkeeping conventions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfeReport {
    /// Evaluations actually performed: T(N+1) for SPGD, T otherwise.
    pub evaluations: usize,
    /// T·N for SPGD (the denoising evaluation folded into the last warm-up
    /// evaluation), T otherwise. Budgets are matched on this figure.
    pub t_times_n: usize,
    pub used_in_comparisons: String,
}

impl NfeReport {
    pub fn new(method: Method, num_steps: usize, warmup_steps: usize) -> Self {
        let t_times_n = match method {
            Method::Spgd => num_steps * warmup_steps,
            _ => num_steps,
        };
        Self {
            evaluations: method.nfe(num_steps, warmup_steps),
            t_times_n,
            used_in_comparisons: "t_times_n".into(),
        }
    }
}

/// Mean angles of one trajectory, present when diagnostics are on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStats {
    pub likelihood_vs_denoise_deg: Option<f64>,
    pub likelihood_consecutive_deg: Option<f64>,
    pub denoise_consecutive_deg: Option<f64>,
    pub applied_consecutive_deg: Option<f64>,
    pub warmup_raw_consecutive_deg: Option<f64>,
    pub warmup_smoothed_consecutive_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    /// ‖x̂₀ − μ_post‖ for single-Gaussian priors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nfe: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<AngleStats>,
    pub wall_clock_seconds: f64,
}

impl SeedResult {
    fn failed(seed: u64, error: String, seconds: f64) -> Self {
        Self {
            seed,
            ok: false,
            error: Some(error),
            psnr_db: None,
            ssim: None,
            residual_norm: None,
            posterior_error: None,
            nfe: None,
            angles: None,
            wall_clock_seconds: seconds,
        }
    }

    /// Named scalar metrics, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        let a = self.angles.as_ref();
        vec![
            ("psnr_db", self.psnr_db),
            ("ssim", self.ssim),
            ("residual_norm", self.residual_norm),
            ("posterior_error", self.posterior_error),
            (
                "angle_likelihood_vs_denoise_deg",
                a.and_then(|a| a.likelihood_vs_denoise_deg),
            ),
            (
                "angle_likelihood_consecutive_deg",
                a.and_then(|a| a.likelihood_consecutive_deg),
            ),
            (
                "angle_denoise_consecutive_deg",
                a.and_then(|a| a.denoise_consecutive_deg),
            ),
            (
                "angle_applied_consecutive_deg",
                a.and_then(|a| a.applied_consecutive_deg),
            ),
            (
                "angle_warmup_raw_consecutive_deg",
                a.and_then(|a| a.warmup_raw_consecutive_deg),
            ),
            (
                "angle_warmup_smoothed_consecutive_deg",
                a.and_then(|a| a.warmup_smoothed_consecutive_deg),
            ),
        ]
    }
}

/// Mean and sample standard deviation (n − 1; 0 for a single value) over the
/// seeds that produced the metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub method: String,
    pub nfe_per_trajectory: NfeReport,
    pub per_seed: Vec<SeedResult>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub failed_seeds: usize,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).map(|a| a.mean)
    }

    /// Per-seed values of `metric` in seed order; `None` for failed seeds.
    pub fn per_seed_metric(&self, metric: &str) -> Vec<Option<f64>> {
        self.per_seed
            .iter()
            .map(|s| s.metrics().into_iter().find(|(k, _)| *k == metric).and_then(|(_, v)| v))
            .collect()
    }
}

/// Runs every seed of `config` (concurrently), writes per-seed outputs and
/// `summary.json` under `config.output_dir`. Fails only on I/O errors for the
/// output directory or when every seed fails.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let per_seed: Vec<SeedResult> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let t0 = Instant::now();
            match run_seed(config, seed) {
                Ok(mut r) => {
                    r.wall_clock_seconds = t0.elapsed().as_secs_f64();
                    r
                }
                Err(e) => SeedResult::failed(seed, e.to_string(), t0.elapsed().as_secs_f64()),
            }
        })
        .collect();

    let mut aggregate = BTreeMap::new();
    if let Some(first) = per_seed.first() {
        for (name, _) in first.metrics() {
            let values: Vec<f64> = per_seed
                .iter()
                .filter_map(|s| s.metrics().into_iter().find(|(k, _)| *k == name).and_then(|(_, v)| v))
                .filter(|v| v.is_finite())
                .collect();
            if let Some(a) = Aggregate::of(&values) {
                aggregate.insert(name.to_string(), a);
            }
        }
    }
    let failed_seeds = per_seed.iter().filter(|s| !s.ok).count();
    let summary = RunSummary {
        config: config.clone(),
        method: config.method().name().to_string(),
        nfe_per_trajectory: NfeReport::new(config.method(), config.schedule.num_steps, config.guidance.warmup_steps),
        per_seed,
        aggregate,
        failed_seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&summary, &out.join(SUMMARY_FILE))?;
    if failed_seeds == config.seeds.len() {
        return Err(HarnessError::AllSeedsFailed(failed_seeds));
    }
    Ok(summary)
}

fn run_seed(config: &RunConfig, seed: u64) -> Result<SeedResult> {
    let problem = config.build(seed)?;
    let truth = problem.prior.sample(seed);
    let meas = MeasurementModel::synthesize(problem.operator, truth.view(), config.noise_std, seed)?;
    let output = run_sampler(&problem.prior, Some(&meas), &problem.sampler)?;
    let expected = config
        .method()
        .nfe(config.schedule.num_steps, config.guidance.warmup_steps);
    if output.nfe != expected {
        return Err(spgd::Error::InvalidConfig(format!(
            "NFE accounting mismatch: counted {}, formula gives {expected}",
            output.nfe
        ))
        .into());
    }

    // A singular noiseless posterior leaves the error undefined, not the seed failed.
    let posterior = match problem.prior.components() {
        [single] => gaussian_posterior_mean(single, &meas.operator, meas.measurement.view(), meas.noise_std).ok(),
        _ => None,
    };
    let residual = meas.residual(output.x0.view())?;
    let geometry = config.geometry();
    let report = MetricsReport::compute(
        output.x0.view(),
        truth.view(),
        geometry,
        residual.view(),
        posterior.as_ref(),
    )?;
    if !report.residual_norm.is_finite() {
        return Err(HarnessError::NonFiniteMetric {
            metric: "residual_norm",
            value: report.residual_norm,
        });
    }
    let angles = config.diagnostics.then(|| {
        let s = angle_summary(&output.log);
        AngleStats {
            likelihood_vs_denoise_deg: s.likelihood_vs_denoise.mean,
            likelihood_consecutive_deg: s.likelihood_consecutive.mean,
            denoise_consecutive_deg: s.denoise_consecutive.mean,
            applied_consecutive_deg: s.applied_consecutive.mean,
            warmup_raw_consecutive_deg: s.warmup_raw_mean,
            warmup_smoothed_consecutive_deg: s.warmup_smoothed_mean,
        }
    });

    let dir = config.output_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    write_signal(&output.x0, geometry, &dir, "restored")?;
    write_signal(&truth, geometry, &dir, "truth")?;
    if config.diagnostics {
        write_trajectory_csv(&output.log, &dir.join(TRAJECTORY_FILE))?;
    }

    Ok(SeedResult {
        seed,
        ok: true,
        error: None,
        psnr_db: Some(report.psnr_db),
        ssim: report.ssim,
        residual_norm: Some(report.residual_norm),
        posterior_error: report.posterior_error,
        nfe: Some(output.nfe),
        angles,
        wall_clock_seconds: 0.0,
    })
}

/// Netpbm for 1- and 3-channel images, otherwise one value per line.
fn write_signal(x: &Array1<f64>, geometry: Option<spgd::ImageGeometry>, dir: &Path, stem: &str) -> Result<()> {
    match geometry {
        Some(g) if g.channels == 1 => write_image(x.view(), g, &dir.join(format!("{stem}.pgm"))),
        Some(g) if g.channels == 3 => write_image(x.view(), g, &dir.join(format!("{stem}.ppm"))),
        _ => {
            let path = dir.join(format!("{stem}.txt"));
            let mut text = String::new();
            for &v in x {
                text.push_str(&format_value(v));
                text.push('\n');
            }
            fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Removes every `wall_clock_seconds` field, recursively.
pub fn strip_wall_clock(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove(WALL_CLOCK_KEY);
            map.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

/// One sweep point's headline figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub method: MethodSpec,
    pub num_steps: usize,
    pub warmup_steps: usize,
    pub momentum_beta: f64,
    pub zeta: f64,
    pub nfe_per_trajectory: NfeReport,
    pub output_dir: PathBuf,
    pub failed_seeds: usize,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: RunConfig,
    pub points: Vec<SweepEntry>,
    pub wall_clock_seconds: f64,
}

/// Runs every sweep point in turn (seeds of a point run concurrently) and
/// writes `sweep.json` next to the per-point directories. A point whose seeds
/// all fail is recorded with its failure count.
pub fn run_sweep(config: &RunConfig) -> Result<SweepSummary> {
    let start = Instant::now();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut points = Vec::new();
    for point in config.sweep_points() {
        let c = &point.config;
        let zeta = c.guidance_config()?.zeta;
        let (failed_seeds, aggregate, seconds) = match run_experiment(c) {
            Ok(s) => (s.failed_seeds, s.aggregate, s.wall_clock_seconds),
            Err(HarnessError::AllSeedsFailed(n)) => (n, BTreeMap::new(), 0.0),
            Err(e) => return Err(e),
        };
        points.push(SweepEntry {
            label: point.label.clone(),
            method: c.method,
            num_steps: c.schedule.num_steps,
            warmup_steps: c.guidance.warmup_steps,
            momentum_beta: c.guidance.momentum_beta,
            zeta,
            nfe_per_trajectory: NfeReport::new(c.method(), c.schedule.num_steps, c.guidance.warmup_steps),
            output_dir: c.output_dir.clone(),
            failed_seeds,
            aggregate,
            wall_clock_seconds: seconds,
        });
    }
    let summary = SweepSummary {
        config: config.clone(),
        points,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&summary, &out.join(SWEEP_FILE))?;
    if summary.points.iter().all(|p| p.failed_seeds == config.seeds.len()) {
        return Err(HarnessError::AllSeedsFailed(config.seeds.len() * summary.points.len()));
    }
    Ok(summary)
}
