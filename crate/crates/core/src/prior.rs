//! Analytic score priors.
//!
//! A Gaussian mixture `Σ_k w_k N(μ_k, Σ_k)` pushed through the forward
//! process has the closed-form timestep marginal
//! `p_t(x) = Σ_k w_k N(x; √ᾱ_t μ_k, ᾱ_t Σ_k + (1−ᾱ_t) I)`, so its score,
//! score Hessian, ε-prediction and Tweedie estimate are all exact. These stand
//! in for a trained denoiser.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{asymmetry, Cholesky};
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::Scalar;

#[derive(Debug, Clone)]
pub enum Covariance<S> {
    /// `variance · I`
    Isotropic(S),
    Full(Array2<S>),
}

#[derive(Debug, Clone)]
pub struct GaussianComponent<S> {
    pub weight: S,
    pub mean: Array1<S>,
    pub covariance: Covariance<S>,
    /// Cholesky factor of a full covariance, used for sampling.
    sqrt_cov: Option<Cholesky<S>>,
}

impl<S: Scalar> GaussianComponent<S> {
    pub fn isotropic(weight: S, mean: Array1<S>, variance: S) -> Result<Self> {
        if !(variance > S::zero()) || !variance.is_finite() {
            return Err(Error::InvalidRange {
                name: "variance",
                detail: format!("isotropic variance must be positive, got {variance}"),
            });
        }
        Self::check_weight(weight)?;
        Ok(Self {
            weight,
            mean,
            covariance: Covariance::Isotropic(variance),
            sqrt_cov: None,
        })
    }

    pub fn full(weight: S, mean: Array1<S>, covariance: Array2<S>) -> Result<Self> {
        Self::check_weight(weight)?;
        check_dim("component covariance rows", mean.len(), covariance.nrows())?;
        check_dim("component covariance cols", mean.len(), covariance.ncols())?;
        let scale = covariance.iter().fold(S::one(), |m, v| m.max(v.abs()));
        if asymmetry(covariance.view()) > S::lit(1e-12) * scale {
            return Err(Error::NotPositiveDefinite {
                context: "component covariance is not symmetric",
            });
        }
        let chol = Cholesky::new(covariance.view()).map_err(|_| Error::NotPositiveDefinite {
            context: "component covariance",
        })?;
        Ok(Self {
            weight,
            mean,
            covariance: Covariance::Full(covariance),
            sqrt_cov: Some(chol),
        })
    }

    fn check_weight(weight: S) -> Result<()> {
        if weight > S::zero() && weight <= S::one() {
            Ok(())
        } else {
            Err(Error::InvalidRange {
                name: "weight",
                detail: format!("component weight must be in (0, 1], got {weight}"),
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Dense covariance matrix.
    pub fn covariance_matrix(&self) -> Array2<S> {
        match &self.covariance {
            Covariance::Isotropic(v) => Array2::eye(self.dim()) * *v,
            Covariance::Full(m) => m.clone(),
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<S> {
        let z = rng::standard_normal::<S, _>(rng, self.dim());
        match (&self.covariance, &self.sqrt_cov) {
            (Covariance::Isotropic(v), _) => &self.mean + &(z * v.sqrt()),
            (Covariance::Full(_), Some(chol)) => &self.mean + &chol.lower().dot(&z),
            (Covariance::Full(_), None) => unreachable!("full covariance is always factorized"),
        }
    }
}

/// Per-component data of the timestep marginal at one ᾱ.
#[derive(Debug)]
enum MarginalCovariance<S> {
    Isotropic { variance: S },
    Full { chol: Cholesky<S>, precision: Array2<S> },
}

#[derive(Debug)]
struct MarginalComponent<S> {
    log_weight: S,
    /// √ᾱ μ_k
    center: Array1<S>,
    /// -½ log det C_k − (d/2) log 2π
    log_norm: S,
    cov: MarginalCovariance<S>,
}

impl<S: Scalar> MarginalComponent<S> {
    fn precision_times(&self, v: ArrayView1<S>) -> Array1<S> {
        match &self.cov {
            MarginalCovariance::Isotropic { variance } => v.to_owned() / *variance,
            MarginalCovariance::Full { chol, .. } => chol.solve(v),
        }
    }
}

/// Timestep marginal of a mixture at a fixed ᾱ.
#[derive(Debug)]
pub struct TimeMarginal<S> {
    alpha_bar: S,
    dim: usize,
    components: Vec<MarginalComponent<S>>,
}

impl<S: Scalar> TimeMarginal<S> {
    pub fn alpha_bar(&self) -> S {
        self.alpha_bar
    }

    fn build(prior: &ScorePrior<S>, alpha_bar: S) -> Result<Self> {
        let d = prior.dim;
        let sqrt_ab = alpha_bar.sqrt();
        let noise = S::one() - alpha_bar;
        let half_log_2pi = S::lit(0.5 * (2.0 * PI).ln()) * S::lit(d as f64);
        let half = S::lit(0.5);
        let mut components = Vec::with_capacity(prior.components.len());
        for c in &prior.components {
            let center = &c.mean * sqrt_ab;
            let (cov, log_det) = match &c.covariance {
                Covariance::Isotropic(v) => {
                    let variance = alpha_bar * *v + noise;
                    (
                        MarginalCovariance::Isotropic { variance },
                        S::lit(d as f64) * variance.ln(),
                    )
                }
                Covariance::Full(sigma) => {
                    let mut m = sigma * alpha_bar;
                    for i in 0..d {
                        m[[i, i]] += noise;
                    }
                    let chol = Cholesky::new(m.view()).map_err(|_| Error::NotPositiveDefinite {
                        context: "timestep-marginal covariance",
                    })?;
                    let log_det = chol.log_det();
                    let precision = chol.inverse();
                    (MarginalCovariance::Full { chol, precision }, log_det)
                }
            };
            components.push(MarginalComponent {
                log_weight: c.weight.ln(),
                center,
                log_norm: -half * log_det - half_log_2pi,
                cov,
            });
        }
        Ok(Self {
            alpha_bar,
            dim: d,
            components,
        })
    }

    /// Evaluates the marginal at `x`: responsibilities, per-component
    /// precision-weighted residuals and the mixture score.
    pub fn evaluate(self: &Arc<Self>, x: ArrayView1<S>) -> Result<PriorEval<S>> {
        check_dim("prior evaluation", self.dim, x.len())?;
        let half = S::lit(0.5);
        let mut log_terms = Vec::with_capacity(self.components.len());
        let mut residuals = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let delta = &x - &c.center;
            let u = c.precision_times(delta.view());
            log_terms.push(c.log_weight + c.log_norm - half * delta.dot(&u));
            residuals.push(u);
        }
        let max = log_terms.iter().copied().fold(S::neg_infinity(), S::max);
        let weights: Vec<S> = log_terms.iter().map(|&l| (l - max).exp()).collect();
        let total: S = weights.iter().copied().sum();
        let responsibilities: Vec<S> = weights.iter().map(|&w| w / total).collect();
        let mut score = Array1::<S>::zeros(self.dim);
        for (r, u) in responsibilities.iter().zip(&residuals) {
            score.scaled_add(-*r, u);
        }
        Ok(PriorEval {
            marginal: Arc::clone(self),
            x: x.to_owned(),
            log_density: max + total.ln(),
            responsibilities,
            residuals,
            score,
        })
    }
}

/// Everything one ε-evaluation yields at a point `x_t`.
#[derive(Debug, Clone)]
pub struct PriorEval<S> {
    marginal: Arc<TimeMarginal<S>>,
    x: Array1<S>,
    log_density: S,
    responsibilities: Vec<S>,
    /// `P_k (x − √ᾱ μ_k)` per component.
    residuals: Vec<Array1<S>>,
    score: Array1<S>,
}

impl<S: Scalar> PriorEval<S> {
    pub fn alpha_bar(&self) -> S {
        self.marginal.alpha_bar
    }

    pub fn point(&self) -> ArrayView1<'_, S> {
        self.x.view()
    }

    pub fn log_density(&self) -> S {
        self.log_density
    }

    pub fn responsibilities(&self) -> &[S] {
        &self.responsibilities
    }

    pub fn score(&self) -> &Array1<S> {
        &self.score
    }

    /// ε = −√(1−ᾱ) · score
    pub fn epsilon(&self) -> Array1<S> {
        &self.score * -(S::one() - self.alpha_bar()).sqrt()
    }

    /// x̂_0 = (x + (1−ᾱ)·score) / √ᾱ
    pub fn tweedie_x0(&self) -> Array1<S> {
        let ab = self.alpha_bar();
        let mut out = self.x.clone();
        out.scaled_add(S::one() - ab, &self.score);
        out / ab.sqrt()
    }

    /// Hessian-vector product `∇² log p_t(x) · v`.
    pub fn hessian_times(&self, v: ArrayView1<S>) -> Array1<S> {
        let mut out = Array1::<S>::zeros(self.x.len());
        for ((c, r), u) in self
            .marginal
            .components
            .iter()
            .zip(&self.responsibilities)
            .zip(&self.residuals)
        {
            let pv = c.precision_times(v);
            out.scaled_add(-*r, &pv);
            if self.residuals.len() > 1 {
                let dev = u + &self.score;
                out.scaled_add(*r * dev.dot(&v), &dev);
            }
        }
        out
    }

    /// Closed-form `∇² log p_t(x) = −Σ_k r_k P_k + Σ_k r_k (u_k − ū)(u_k − ū)ᵀ`
    /// with `ū = Σ_k r_k u_k = −s`. The centred outer products avoid the
    /// cancellation of `Σ r_k u_k u_kᵀ − s sᵀ` far from the component means.
    pub fn hessian(&self) -> Array2<S> {
        let d = self.x.len();
        let mut h = Array2::<S>::zeros((d, d));
        for ((c, r), u) in self
            .marginal
            .components
            .iter()
            .zip(&self.responsibilities)
            .zip(&self.residuals)
        {
            match &c.cov {
                MarginalCovariance::Isotropic { variance } => {
                    let p = *r / *variance;
                    for i in 0..d {
                        h[[i, i]] -= p;
                    }
                }
                MarginalCovariance::Full { precision, .. } => {
                    h.scaled_add(-*r, precision);
                }
            }
            if self.residuals.len() > 1 {
                add_outer(&mut h, *r, (u + &self.score).view());
            }
        }
        symmetrize(&mut h);
        h
    }

    /// `∂x̂_0/∂x · v = (v + (1−ᾱ)·H v)/√ᾱ`. The Jacobian is symmetric, so this
    /// is also the vector-Jacobian product.
    pub fn tweedie_jvp(&self, v: ArrayView1<S>) -> Array1<S> {
        let ab = self.alpha_bar();
        let mut out = v.to_owned();
        out.scaled_add(S::one() - ab, &self.hessian_times(v));
        out / ab.sqrt()
    }

    /// Dense Jacobian `(I + (1−ᾱ)·∇² log p_t) / √ᾱ`.
    pub fn tweedie_jacobian(&self) -> Array2<S> {
        let ab = self.alpha_bar();
        let mut j = self.hessian() * (S::one() - ab);
        for i in 0..self.x.len() {
            j[[i, i]] += S::one();
        }
        j / ab.sqrt()
    }
}

fn add_outer<S: Scalar>(m: &mut Array2<S>, scale: S, u: ArrayView1<S>) {
    let d = u.len();
    for i in 0..d {
        let ui = scale * u[i];
        for j in 0..d {
            m[[i, j]] += ui * u[j];
        }
    }
}

fn symmetrize<S: Scalar>(m: &mut Array2<S>) {
    let half = S::lit(0.5);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = half * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Gaussian-mixture prior with exact timestep-marginal quantities.
///
/// Marginal factorizations are cached per ᾱ behind a lock, so a shared prior
/// can be evaluated from several threads; readers only ever see complete
/// entries.
#[derive(Debug)]
pub struct ScorePrior<S> {
    components: Vec<GaussianComponent<S>>,
    dim: usize,
    cache: RwLock<HashMap<u64, Arc<TimeMarginal<S>>>>,
}

impl<S: Scalar> Clone for ScorePrior<S> {
    fn clone(&self) -> Self {
        Self {
            components: self.components.clone(),
            dim: self.dim,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl<S: Scalar> ScorePrior<S> {
    pub fn new(components: Vec<GaussianComponent<S>>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidRange {
            name: "components",
            detail: "a prior needs at least one component".into(),
        })?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidRange {
                name: "dimension",
                detail: "prior dimension must be positive".into(),
            });
        }
        for c in &components {
            check_dim("prior component mean", dim, c.dim())?;
        }
        let total: f64 = components.iter().map(|c| c.weight.as_f64()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidRange {
                name: "weights",
                detail: format!("mixture weights sum to {total}, expected 1"),
            });
        }
        Ok(Self {
            components,
            dim,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Single isotropic Gaussian `N(mean, variance·I)`.
    pub fn gaussian(mean: Array1<S>, variance: S) -> Result<Self> {
        Self::new(vec![GaussianComponent::isotropic(S::one(), mean, variance)?])
    }

    /// Equal-weight mixture of isotropic components with a shared variance.
    pub fn isotropic_mixture(means: Vec<Array1<S>>, variance: S) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::InvalidRange {
                name: "components",
                detail: "a prior needs at least one component".into(),
            });
        }
        let w = S::one() / S::lit(k as f64);
        let comps = means
            .into_iter()
            .map(|m| GaussianComponent::isotropic(w, m, variance))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent<S>] {
        &self.components
    }

    /// Timestep marginal at ᾱ, built once and cached.
    pub fn marginal(&self, alpha_bar: S) -> Result<Arc<TimeMarginal<S>>> {
        let key = alpha_bar.as_f64().to_bits();
        if let Some(m) = self.cache.read().expect("prior cache poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let built = Arc::new(TimeMarginal::build(self, alpha_bar)?);
        let mut cache = self.cache.write().expect("prior cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(built)))
    }

    /// Evaluates the prior at `(x_t, t)`; this is one network-equivalent evaluation.
    pub fn evaluate(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<PriorEval<S>> {
        schedule.check_t(t)?;
        self.marginal(schedule.alpha_bar(t))?.evaluate(x)
    }

    pub fn log_density(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<S> {
        Ok(self.evaluate(schedule, x, t)?.log_density())
    }

    pub fn score(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<Array1<S>> {
        Ok(self.evaluate(schedule, x, t)?.score)
    }

    pub fn score_hessian(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<Array2<S>> {
        Ok(self.evaluate(schedule, x, t)?.hessian())
    }

    pub fn epsilon(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<Array1<S>> {
        Ok(self.evaluate(schedule, x, t)?.epsilon())
    }

    pub fn tweedie_x0(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<Array1<S>> {
        Ok(self.evaluate(schedule, x, t)?.tweedie_x0())
    }

    /// x̂_0 through the ε form `(x − √(1−ᾱ)·ε)/√ᾱ`.
    pub fn tweedie_x0_from_epsilon(
        &self,
        schedule: &NoiseSchedule<S>,
        x: ArrayView1<S>,
        t: usize,
    ) -> Result<Array1<S>> {
        let eps = self.epsilon(schedule, x, t)?;
        let ab = schedule.alpha_bar(t);
        let mut out = x.to_owned();
        out.scaled_add(-(S::one() - ab).sqrt(), &eps);
        Ok(out / ab.sqrt())
    }

    pub fn tweedie_jacobian(&self, schedule: &NoiseSchedule<S>, x: ArrayView1<S>, t: usize) -> Result<Array2<S>> {
        Ok(self.evaluate(schedule, x, t)?.tweedie_jacobian())
    }

    /// Draws a component by weight, then a Gaussian sample from it.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<S> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight.as_f64();
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.components[chosen].sample_with(rng)
    }

    pub fn sample(&self, seed: u64) -> Array1<S> {
        self.sample_with(&mut rng::stream(seed, rng::streams::GROUND_TRUTH))
    }
}
