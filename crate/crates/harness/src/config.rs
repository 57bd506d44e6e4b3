//! JSON run configuration: strict parsing, validation and construction of the
//! prior, operator, schedule and guidance it describes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use spgd::{
    GaussianComponent, GuidanceConfig, ImageGeometry, LinearOperator, Method, NoiseSchedule, SamplerConfig, ScorePrior,
    Task,
};

use crate::error::{HarnessError, Result};
use crate::image::read_image;
use crate::templates::{builtin_template, BUILTIN_TEMPLATES, DEFAULT_TEMPLATE_SET};

pub const DEFAULT_NOISE_STD: f64 = 0.01;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorSpec,
    /// Signal geometry; required by image priors, geometric operators and image output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSpec>,
    pub operator: OperatorSpec,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub guidance: GuidanceSpec,
    pub method: MethodSpec,
    /// Task label; supplies the default ζ when `guidance.zeta` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_noise_std() -> f64 {
    DEFAULT_NOISE_STD
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl ImageSpec {
    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry::new(self.width, self.height, self.channels)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Explicit mixture components.
    Gmm { components: Vec<ComponentSpec> },
    /// Isotropic mixture centred on template images.
    ImageGmm {
        templates: TemplateList,
        variance: f64,
        /// Mixture weights; equal when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance; exactly one of `variance` and `covariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

/// `"builtin"` for the default template set, or a list of `"builtin:<name>"`
/// entries and netpbm paths (relative to the config file).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TemplateList {
    Preset(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    Mask {
        keep_fraction: f64,
        /// Mask seed; the run seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    GaussianBlur {
        kernel_size: usize,
        sigma: f64,
    },
    MotionBlur {
        kernel_size: usize,
        angle_degrees: f64,
        length: f64,
    },
    Downsample {
        factor: usize,
    },
    Dense {
        matrix: Vec<Vec<f64>>,
    },
}

impl OperatorSpec {
    fn needs_geometry(&self) -> bool {
        !matches!(self, OperatorSpec::Identity | OperatorSpec::Dense { .. })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub num_steps: usize,
    /// Linear β endpoints; the step-count-rescaled default when both are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_beta")]
    pub momentum_beta: f64,
}

fn default_warmup() -> usize {
    spgd::guidance::DEFAULT_WARMUP_STEPS
}

fn default_beta() -> f64 {
    spgd::guidance::DEFAULT_MOMENTUM_BETA
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            zeta: None,
            warmup_steps: default_warmup(),
            momentum_beta: default_beta(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    DdimUnconditional,
    Dps,
    Spgd,
}

impl From<MethodSpec> for Method {
    fn from(m: MethodSpec) -> Self {
        match m {
            MethodSpec::DdimUnconditional => Method::DdimUnconditional,
            MethodSpec::Dps => Method::Dps,
            MethodSpec::Spgd => Method::Spgd,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TaskSpec {
    Inpainting,
    GaussianDeblur,
    MotionDeblur,
    SuperResolution,
}

impl From<TaskSpec> for Task {
    fn from(t: TaskSpec) -> Self {
        match t {
            TaskSpec::Inpainting => Task::Inpainting,
            TaskSpec::GaussianDeblur => Task::GaussianDeblur,
            TaskSpec::MotionDeblur => Task::MotionDeblur,
            TaskSpec::SuperResolution => Task::SuperResolution,
        }
    }
}

/// Sweep grid. Either the cartesian product of the non-empty axis lists
/// (empty axes keep the base value) or an explicit list of allocations.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub momentum_beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warmup_steps: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub num_steps: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allocations: Vec<AllocationSpec>,
}

/// One point of an explicit sweep, e.g. `T = 500, N = 1` with DPS.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    pub num_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_beta: Option<f64>,
}

/// Reads, parses and validates a config file. Relative template paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(&label, e.to_string()))?;
    let mut cfg = parse_config_str(&text, &label)?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    cfg.validate(&label)?;
    Ok(cfg)
}

/// Parses without validation; `label` names the source in errors.
pub fn parse_config_str(text: &str, label: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| HarnessError::config(label, e.to_string()))
}

/// Fully built inputs for one seed.
pub struct Problem {
    pub prior: ScorePrior<f64>,
    pub operator: LinearOperator<f64>,
    pub sampler: SamplerConfig<f64>,
}

impl RunConfig {
    fn resolve_paths(&mut self, dir: &Path) {
        if let PriorSpec::ImageGmm {
            templates: TemplateList::List(items),
            ..
        } = &mut self.prior
        {
            for item in items.iter_mut() {
                if !item.starts_with("builtin:") && Path::new(item.as_str()).is_relative() {
                    *item = dir.join(item.as_str()).display().to_string();
                }
            }
        }
    }

    pub fn geometry(&self) -> Option<ImageGeometry> {
        self.image.map(|i| i.geometry())
    }

    pub fn method(&self) -> Method {
        self.method.into()
    }

    /// Signal dimension implied by the image geometry or the prior.
    pub fn dim(&self) -> Option<usize> {
        if let Some(g) = self.geometry() {
            return Some(g.len());
        }
        match &self.prior {
            PriorSpec::Gmm { components } => components.first().map(|c| c.mean.len()),
            PriorSpec::ImageGmm { .. } => None,
        }
    }

    /// Checks every constraint by building each piece once.
    pub fn validate(&self, label: &str) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::config(label, msg));
        if self.seeds.is_empty() {
            return fail("seeds: at least one seed is required".into());
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return fail(format!("seeds: seed {s} is listed twice"));
            }
        }
        if let Some(img) = self.image {
            if img.width == 0 || img.height == 0 || img.channels == 0 {
                return fail(format!("image: dimensions must be positive, got {img:?}"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!(
                "noise_std: must be a finite value >= 0, got {}",
                self.noise_std
            ));
        }
        if self.operator.needs_geometry() && self.image.is_none() {
            return fail("operator: this operator kind needs an `image` block".into());
        }
        if matches!(self.prior, PriorSpec::ImageGmm { .. }) && self.image.is_none() {
            return fail("prior: image_gmm needs an `image` block".into());
        }
        let prior = self
            .build_prior()
            .map_err(|e| HarnessError::config(label, format!("prior: {e}")))?;
        if let Some(g) = self.geometry() {
            if prior.dim() != g.len() {
                return fail(format!(
                    "prior: dimension {} does not match image {}x{}x{} = {}",
                    prior.dim(),
                    g.width,
                    g.height,
                    g.channels,
                    g.len()
                ));
            }
        }
        let op = self
            .build_operator(self.seeds[0])
            .map_err(|e| HarnessError::config(label, format!("operator: {e}")))?;
        if op.input_dim() != prior.dim() {
            return fail(format!(
                "operator: input dimension {} does not match prior dimension {}",
                op.input_dim(),
                prior.dim()
            ));
        }
        self.build_schedule()
            .map_err(|e| HarnessError::config(label, format!("schedule: {e}")))?;
        if self.method().is_guided() {
            self.guidance_config()
                .map_err(|e| HarnessError::config(label, format!("guidance: {e}")))?;
        }
        if let Some(sweep) = &self.sweep {
            sweep
                .validate()
                .map_err(|m| HarnessError::config(label, format!("sweep: {m}")))?;
            for point in self.sweep_points() {
                point
                    .config
                    .build_schedule()
                    .map_err(|e| HarnessError::config(label, format!("sweep point {}: {e}", point.label)))?;
                if point.config.method().is_guided() {
                    point
                        .config
                        .guidance_config()
                        .map_err(|e| HarnessError::config(label, format!("sweep point {}: {e}", point.label)))?;
                }
            }
        }
        Ok(())
    }

    pub fn build_prior(&self) -> std::result::Result<ScorePrior<f64>, String> {
        match &self.prior {
            PriorSpec::Gmm { components } => {
                if components.is_empty() {
                    return Err("gmm needs at least one component".into());
                }
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.build().map_err(|e| format!("component {k}: {e}")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                ScorePrior::new(comps).map_err(|e| e.to_string())
            }
            PriorSpec::ImageGmm {
                templates,
                variance,
                weights,
            } => {
                let g = self.geometry().ok_or("image_gmm needs an `image` block")?;
                let names: Vec<String> = match templates {
                    TemplateList::Preset(p) if p == "builtin" => {
                        DEFAULT_TEMPLATE_SET.iter().map(|n| format!("builtin:{n}")).collect()
                    }
                    TemplateList::Preset(p) => return Err(format!("unknown template preset {p:?}")),
                    TemplateList::List(items) => items.clone(),
                };
                if names.is_empty() {
                    return Err("image_gmm needs at least one template".into());
                }
                let means = names
                    .iter()
                    .map(|n| load_template(n, g))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let weights = match weights {
                    Some(w) if w.len() != means.len() => {
                        return Err(format!("{} weights for {} templates", w.len(), means.len()))
                    }
                    Some(w) => w.clone(),
                    None => vec![1.0 / means.len() as f64; means.len()],
                };
                let comps = means
                    .into_iter()
                    .zip(weights)
                    .map(|(m, w)| GaussianComponent::isotropic(w, m, *variance))
                    .collect::<spgd::Result<Vec<_>>>()
                    .map_err(|e| e.to_string())?;
                ScorePrior::new(comps).map_err(|e| e.to_string())
            }
        }
    }

    /// Operator for `seed`; masks without an explicit seed use the run seed.
    pub fn build_operator(&self, seed: u64) -> spgd::Result<LinearOperator<f64>> {
        let geom = || {
            self.geometry()
                .ok_or_else(|| spgd::Error::InvalidConfig("operator needs an `image` block".into()))
        };
        match &self.operator {
            OperatorSpec::Identity => {
                let d = self
                    .dim()
                    .ok_or_else(|| spgd::Error::InvalidConfig("cannot infer signal dimension".into()))?;
                Ok(LinearOperator::identity(d))
            }
            OperatorSpec::Mask {
                keep_fraction,
                seed: mask_seed,
            } => LinearOperator::random_mask(geom()?, *keep_fraction, mask_seed.unwrap_or(seed)),
            OperatorSpec::GaussianBlur { kernel_size, sigma } => {
                LinearOperator::gaussian_blur(geom()?, *kernel_size, *sigma)
            }
            OperatorSpec::MotionBlur {
                kernel_size,
                angle_degrees,
                length,
            } => LinearOperator::motion_blur(geom()?, *kernel_size, *angle_degrees, *length),
            OperatorSpec::Downsample { factor } => LinearOperator::downsample(geom()?, *factor),
            OperatorSpec::Dense { matrix } => Ok(LinearOperator::dense(
                to_matrix(matrix).map_err(spgd::Error::InvalidConfig)?,
            )),
        }
    }

    pub fn build_schedule(&self) -> spgd::Result<NoiseSchedule<f64>> {
        let s = self.schedule;
        match (s.beta_start, s.beta_end) {
            (None, None) => NoiseSchedule::rescaled_linear(s.num_steps),
            (Some(a), Some(b)) => NoiseSchedule::linear(s.num_steps, a, b),
            _ => Err(spgd::Error::InvalidConfig(
                "beta_start and beta_end must be given together".into(),
            )),
        }
    }

    /// ζ from the config, else the task default; unguided runs get ζ = 0.
    pub fn guidance_config(&self) -> spgd::Result<GuidanceConfig<f64>> {
        let zeta = match (self.guidance.zeta, self.task, self.method().is_guided()) {
            (Some(z), _, _) => z,
            (None, Some(t), _) => Task::from(t).default_zeta(),
            (None, None, false) => 0.0,
            (None, None, true) => {
                return Err(spgd::Error::InvalidConfig(
                    "guided methods need guidance.zeta or a task".into(),
                ))
            }
        };
        GuidanceConfig::new(zeta, self.guidance.warmup_steps, self.guidance.momentum_beta)
    }

    pub fn build(&self, seed: u64) -> spgd::Result<Problem> {
        let prior = self.build_prior().map_err(spgd::Error::InvalidConfig)?;
        Ok(Problem {
            operator: self.build_operator(seed)?,
            sampler: SamplerConfig {
                method: self.method(),
                schedule: self.build_schedule()?,
                guidance: self.guidance_config()?,
                seed,
                record_diagnostics: self.diagnostics,
            },
            prior,
        })
    }

    /// Expands the sweep block into labelled configs, each writing to its own
    /// subdirectory of `output_dir`. Without a sweep block this is the config itself.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut base = self.clone();
        base.sweep = None;
        let Some(sweep) = &self.sweep else {
            return vec![SweepPoint {
                label: "base".into(),
                config: base,
            }];
        };
        let mut points = Vec::new();
        if !sweep.allocations.is_empty() {
            for a in &sweep.allocations {
                let mut c = base.clone();
                c.schedule.num_steps = a.num_steps;
                if let Some(n) = a.warmup_steps {
                    c.guidance.warmup_steps = n;
                }
                if let Some(m) = a.method {
                    c.method = m;
                }
                if let Some(z) = a.zeta {
                    c.guidance.zeta = Some(z);
                }
                if let Some(b) = a.momentum_beta {
                    c.guidance.momentum_beta = b;
                }
                let label = c.point_label();
                points.push(SweepPoint { label, config: c });
            }
        } else {
            let or_base = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
            let or_base_n = |v: &[usize], b: usize| if v.is_empty() { vec![b] } else { v.to_vec() };
            for &t in &or_base_n(&sweep.num_steps, base.schedule.num_steps) {
                for &n in &or_base_n(&sweep.warmup_steps, base.guidance.warmup_steps) {
                    for &b in &or_base(&sweep.momentum_beta, base.guidance.momentum_beta) {
                        let mut c = base.clone();
                        c.schedule.num_steps = t;
                        c.guidance.warmup_steps = n;
                        c.guidance.momentum_beta = b;
                        let label = c.point_label();
                        points.push(SweepPoint { label, config: c });
                    }
                }
            }
        }
        for p in &mut points {
            p.config.output_dir = self.output_dir.join(&p.label);
        }
        points
    }

    fn point_label(&self) -> String {
        let m: Method = self.method();
        let mut label = format!("{}_T{}", m.name(), self.schedule.num_steps);
        if m == Method::Spgd {
            label.push_str(&format!(
                "_N{}_beta{}",
                self.guidance.warmup_steps, self.guidance.momentum_beta
            ));
        }
        if let Some(z) = self.guidance.zeta {
            label.push_str(&format!("_zeta{z}"));
        }
        label
    }
}

/// One expanded sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub config: RunConfig,
}

impl SweepSpec {
    fn validate(&self) -> std::result::Result<(), String> {
        let grid = !(self.momentum_beta.is_empty() && self.warmup_steps.is_empty() && self.num_steps.is_empty());
        match (grid, self.allocations.is_empty()) {
            (false, true) => Err("empty sweep: give grid axes or allocations".into()),
            (true, false) => Err("grid axes and allocations are mutually exclusive".into()),
            _ => Ok(()),
        }
    }
}

impl ComponentSpec {
    fn build(&self) -> std::result::Result<GaussianComponent<f64>, String> {
        let mean = Array1::from(self.mean.clone());
        match (&self.variance, &self.covariance) {
            (Some(v), None) => GaussianComponent::isotropic(self.weight, mean, *v).map_err(|e| e.to_string()),
            (None, Some(c)) => GaussianComponent::full(self.weight, mean, to_matrix(c)?).map_err(|e| e.to_string()),
            _ => Err("give exactly one of `variance` and `covariance`".into()),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> std::result::Result<Array2<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err("matrix must be non-empty".into());
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(format!("matrix row {i} has {} entries, expected {m}", r.len()));
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

fn load_template(name: &str, g: ImageGeometry) -> std::result::Result<Array1<f64>, String> {
    if let Some(builtin) = name.strip_prefix("builtin:") {
        if g.channels != 1 {
            return Err(format!(
                "builtin template {builtin:?} is grayscale, image has {} channels",
                g.channels
            ));
        }
        return builtin_template(builtin, g).ok_or_else(|| {
            format!(
                "unknown builtin template {builtin:?} (known: {})",
                BUILTIN_TEMPLATES.join(", ")
            )
        });
    }
    let img = read_image(Path::new(name)).map_err(|e| e.to_string())?;
    if img.geometry != g {
        return Err(format!(
            "template {name} is {}x{}x{}, config image is {}x{}x{}",
            img.geometry.width, img.geometry.height, img.geometry.channels, g.width, g.height, g.channels
        ));
    }
    Ok(img.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "prior": {"kind": "image_gmm", "templates": "builtin", "variance": 0.01},
        "image": {"width": 8, "height": 8},
        "operator": {"kind": "mask", "keep_fraction": 0.5},
        "schedule": {"num_steps": 20},
        "method": "spgd",
        "task": "inpainting",
        "seeds": [0, 1],
        "output_dir": "out"
    }"#;

    fn validated(text: &str) -> Result<RunConfig> {
        let c = parse_config_str(text, "test")?;
        c.validate("test")?;
        Ok(c)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = validated(MINIMAL).unwrap();
        assert_eq!(c.guidance.warmup_steps, 5);
        assert_eq!(c.guidance.momentum_beta, 0.95);
        assert_eq!(c.noise_std, DEFAULT_NOISE_STD);
        assert!(!c.diagnostics);
        assert_eq!(c.guidance_config().unwrap().zeta, 2.5);
        assert_eq!(c.dim(), Some(64));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"method\"", "\"guidance\": {\"warmup_stepz\": 3}, \"method\"");
        let err = validated(&text).unwrap_err().to_string();
        assert!(err.contains("warmup_stepz"), "{err}");
        let text = MINIMAL.replace("\"method\"", "\"metod\": 1, \"method\"");
        assert!(validated(&text).unwrap_err().to_string().contains("metod"));
        let text = MINIMAL.replace("\"keep_fraction\": 0.5", "\"keep_fraction\": 0.5, \"sigma\": 1");
        assert!(validated(&text).unwrap_err().to_string().contains("sigma"));
    }

    #[test]
    fn keep_fraction_zero_is_rejected() {
        let text = MINIMAL.replace("0.5}", "0.0}");
        let err = validated(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("keep_fraction"), "{err}");
    }

    #[test]
    fn seed_constraints() {
        assert!(validated(&MINIMAL.replace("[0, 1]", "[]"))
            .unwrap_err()
            .to_string()
            .contains("seed"));
        assert!(validated(&MINIMAL.replace("[0, 1]", "[3, 3]"))
            .unwrap_err()
            .to_string()
            .contains("twice"));
    }

    #[test]
    fn dimension_mismatches_are_caught() {
        let text = r#"{
            "prior": {"kind": "gmm", "components": [{"weight": 1.0, "mean": [0, 0, 0], "variance": 0.1}]},
            "operator": {"kind": "dense", "matrix": [[1, 0], [0, 1]]},
            "schedule": {"num_steps": 10}, "method": "dps", "guidance": {"zeta": 0.1},
            "seeds": [0], "output_dir": "o"
        }"#;
        assert!(validated(text).unwrap_err().to_string().contains("input dimension"));
        let text = MINIMAL.replace("\"width\": 8", "\"width\": 8, \"channels\": 3");
        assert!(validated(&text).is_err());
    }

    #[test]
    fn guided_run_needs_a_step_size() {
        let text = MINIMAL.replace("\"task\": \"inpainting\",", "");
        assert!(validated(&text).unwrap_err().to_string().contains("zeta"));
        let text = text.replace("\"spgd\"", "\"ddim_unconditional\"");
        assert!(validated(&text).is_ok());
    }

    #[test]
    fn sweep_expansion() {
        let text = MINIMAL.replace(
            "\"seeds\"",
            "\"sweep\": {\"momentum_beta\": [0.0, 0.5], \"warmup_steps\": [1, 5]}, \"seeds\"",
        );
        let c = validated(&text).unwrap();
        let points = c.sweep_points();
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|p| p.config.sweep.is_none()));
        assert_eq!(points[0].config.output_dir, Path::new("out").join(&points[0].label));
        let text = MINIMAL.replace(
            "\"seeds\"",
            "\"sweep\": {\"allocations\": [{\"num_steps\": 100, \"warmup_steps\": 5}, {\"num_steps\": 500, \"method\": \"dps\"}]}, \"seeds\"",
        );
        let points = validated(&text).unwrap().sweep_points();
        assert_eq!(points[1].config.method, MethodSpec::Dps);
        assert_eq!(points[1].config.schedule.num_steps, 500);
        let text = MINIMAL.replace("\"seeds\"", "\"sweep\": {}, \"seeds\"");
        assert!(validated(&text).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = validated(MINIMAL).unwrap();
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }
}
