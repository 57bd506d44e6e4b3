#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spgd::{GaussianComponent, ImageGeometry, LinearOperator, MeasurementModel, NoiseSchedule, ScorePrior};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(r: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    spgd::rng::standard_normal(r, d)
}

pub fn uniform_vec(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| r.random_range(lo..hi))
}

pub fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let d = a - b;
    d.dot(&d).sqrt() / b.dot(b).sqrt().max(1e-300)
}

pub fn max_abs_diff2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Random SPD matrix `B Bᵀ/d + floor·I`.
pub fn random_spd(r: &mut ChaCha8Rng, d: usize, scale: f64, floor: f64) -> Array2<f64> {
    let b = Array2::from_shape_fn((d, d), |_| spgd::rng::standard_normal::<f64, _>(r, 1)[0]);
    let mut m = b.dot(&b.t()) * (scale / d as f64);
    for i in 0..d {
        m[[i, i]] += floor;
    }
    m
}

/// Mixture with `k` components; full covariances when `full`.
pub fn random_mixture(r: &mut ChaCha8Rng, d: usize, k: usize, full: bool) -> ScorePrior<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut comps = Vec::new();
    let mut acc = 0.0;
    for (i, w) in raw.iter().enumerate() {
        // Last weight absorbs rounding so the sum is exactly 1.
        let w = if i + 1 == k { 1.0 - acc } else { w / total };
        acc += w;
        let mean = uniform_vec(r, d, -1.0, 1.0);
        let c = if full {
            GaussianComponent::full(w, mean, random_spd(r, d, 0.3, 0.05)).unwrap()
        } else {
            GaussianComponent::isotropic(w, mean, r.random_range(0.05..0.5)).unwrap()
        };
        comps.push(c);
    }
    ScorePrior::new(comps).unwrap()
}

/// Geometries with `len() ≤ 64` and even sides (so factor-2 downsampling applies).
pub const GEOMETRIES: &[(usize, usize, usize)] = &[(4, 4, 1), (6, 4, 1), (8, 8, 1), (4, 4, 3), (2, 6, 2)];

pub const OPERATOR_KINDS: &[&str] = &[
    "identity",
    "mask",
    "gaussian_blur",
    "motion_blur",
    "downsample",
    "dense",
];

pub fn operator(kind: &str, g: ImageGeometry, r: &mut ChaCha8Rng) -> LinearOperator<f64> {
    match kind {
        "identity" => LinearOperator::identity(g.len()),
        "mask" => LinearOperator::random_mask(g, r.random_range(0.2..0.9), r.random()).unwrap(),
        "gaussian_blur" => LinearOperator::gaussian_blur(g, 5, r.random_range(0.5..2.0)).unwrap(),
        "motion_blur" => {
            LinearOperator::motion_blur(g, 5, r.random_range(0.0..180.0), r.random_range(1.0..5.0)).unwrap()
        }
        "downsample" => LinearOperator::downsample(g, 2).unwrap(),
        "dense" => {
            let m = r.random_range(1..=g.len());
            LinearOperator::dense(Array2::from_shape_fn((m, g.len()), |_| r.random_range(-1.0..1.0)))
        }
        _ => panic!("unknown operator kind {kind}"),
    }
}

pub fn geometry(i: usize) -> ImageGeometry {
    let (w, h, c) = GEOMETRIES[i % GEOMETRIES.len()];
    ImageGeometry::new(w, h, c)
}

/// Random guided-problem instance: mixture prior, operator, noisy measurement,
/// schedule, iterate and timestep.
pub struct Instance {
    pub prior: ScorePrior<f64>,
    pub meas: MeasurementModel<f64>,
    pub schedule: NoiseSchedule<f64>,
    pub x_t: Array1<f64>,
    pub t: usize,
    pub kind: &'static str,
}

pub fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let g = geometry(seed as usize);
    let kind = OPERATOR_KINDS[(seed as usize / GEOMETRIES.len()) % OPERATOR_KINDS.len()];
    let (k, full) = (r.random_range(1..=4), r.random());
    let prior = random_mixture(&mut r, g.len(), k, full);
    let op = operator(kind, g, &mut r);
    let x0 = prior.sample(seed);
    let meas = MeasurementModel::synthesize(op, x0.view(), 0.05, seed).unwrap();
    let schedule = NoiseSchedule::rescaled_linear(50).unwrap();
    let t = r.random_range(1..=50);
    let ab: f64 = schedule.alpha_bar(t);
    let x_t = &x0 * ab.sqrt() + &(normal_vec(&mut r, g.len()) * (1.0 - ab).sqrt());
    Instance {
        prior,
        meas,
        schedule,
        x_t,
        t,
        kind,
    }
}

/// Proptest settings without on-disk failure persistence.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}
