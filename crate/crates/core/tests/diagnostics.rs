mod common;

use common::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use spgd::diagnostics::{
    angle_between, descent_check, estimate_lipschitz, gaussian_posterior_mean, psnr, ssim, ssim_default,
    LipschitzProbe, MetricsReport, SsimParams, WarmupTrace,
};
use spgd::sampler::spgd_warmup;
use spgd::{
    Error, GaussianComponent, GuidanceConfig, ImageGeometry, LinearOperator, MeasurementModel, NoiseSchedule,
    ScorePrior,
};

/// Gaussian prior `N(μ, s²I)` under a random operator: x̂₀ is affine with slope
/// `c`, so `g_l` is linear with Lipschitz constant exactly `2c²‖AᵀA‖`.
struct Quadratic {
    prior: ScorePrior<f64>,
    meas: MeasurementModel<f64>,
    schedule: NoiseSchedule<f64>,
    x: Array1<f64>,
    t: usize,
    lipschitz: f64,
}

fn quadratic(seed: u64) -> Quadratic {
    let mut r = rng(seed);
    let g = geometry(seed as usize);
    let kind = OPERATOR_KINDS[seed as usize % OPERATOR_KINDS.len()];
    let op = operator(kind, g, &mut r);
    let var: f64 = r.random_range(0.1..1.0);
    let prior = ScorePrior::gaussian(uniform_vec(&mut r, g.len(), 0.0, 1.0), var).unwrap();
    let y = normal_vec(&mut r, op.output_dim());
    let schedule = NoiseSchedule::<f64>::rescaled_linear(50).unwrap();
    let t = r.random_range(1..=50);
    let ab = schedule.alpha_bar(t);
    let c = ab.sqrt() * var / (ab * var + 1.0 - ab);
    let m = op.to_matrix();
    let gram = m.t().dot(&m);
    let n = gram.nrows();
    let lambda = nalgebra::DMatrix::from_fn(n, n, |i, j| gram[[i, j]])
        .symmetric_eigenvalues()
        .max();
    Quadratic {
        prior,
        meas: MeasurementModel::new(op, 0.1, y).unwrap(),
        schedule,
        x: normal_vec(&mut r, g.len()),
        t,
        lipschitz: 2.0 * c * c * lambda,
    }
}

fn warmup_report(q: &Quadratic, lr: f64, n: usize) -> spgd::diagnostics::DescentReport<f64> {
    let cfg = GuidanceConfig::new(lr * n as f64, n, 0.0).unwrap();
    let w = spgd_warmup(&q.prior, &q.schedule, &q.meas, &cfg, q.x.view(), q.t, true).unwrap();
    let mut objectives: Vec<f64> = w.inner.iter().map(|r| r.objective).collect();
    objectives.push(w.final_objective);
    let trace = WarmupTrace {
        objectives,
        gradient_norms: w.inner.iter().map(|r| 0.5 * r.raw_gradient_norm).collect(),
    };
    // Halved objective: step 2·lr and Lipschitz constant L/2.
    descent_check(&trace, 2.0 * lr, 0.5 * q.lipschitz).unwrap()
}

#[test]
fn descent_holds_on_quadratics_at_half_over_l() {
    for seed in 0..30 {
        let q = quadratic(seed);
        let report = warmup_report(&q, 0.5 / q.lipschitz, 5);
        assert!(report.step_condition);
        assert!(report.passed(), "seed {seed}: {report:?}");
        assert!(
            report.telescoped_slack >= -1e-8,
            "seed {seed}: {}",
            report.telescoped_slack
        );
    }
}

#[test]
fn overlong_steps_break_monotonicity_but_not_the_lemma() {
    // At η = 3/L the top eigendirection is amplified by |1 − 3| = 2 per step.
    let mut increased = 0;
    for seed in 0..30 {
        let q = quadratic(seed);
        let report = warmup_report(&q, 3.0 / q.lipschitz, 5);
        assert!(!report.step_condition);
        if !report.decreased.iter().all(|&b| b) {
            increased += 1;
        }
    }
    assert!(increased >= 25, "only {increased}/30 runs increased");
}

#[test]
fn lipschitz_estimate_matches_quadratic_constant() {
    for seed in 0..30 {
        let q = quadratic(seed);
        let est = estimate_lipschitz(
            &q.prior,
            &q.schedule,
            &q.meas,
            q.x.view(),
            q.t,
            &LipschitzProbe::default(),
        )
        .unwrap();
        assert!(
            est <= q.lipschitz * (1.0 + 1e-6),
            "seed {seed}: {est} > {}",
            q.lipschitz
        );
        assert!(est >= 0.95 * q.lipschitz, "seed {seed}: {est} vs {}", q.lipschitz);
    }
}

#[test]
fn lipschitz_estimate_is_exact_for_identity_quadratics() {
    for seed in (0..60).step_by(OPERATOR_KINDS.len()) {
        let q = quadratic(seed);
        assert!(matches!(q.meas.operator.kind(), spgd::OperatorKind::Identity));
        let est = estimate_lipschitz(
            &q.prior,
            &q.schedule,
            &q.meas,
            q.x.view(),
            q.t,
            &LipschitzProbe::default(),
        )
        .unwrap();
        assert!(
            (est - q.lipschitz).abs() <= 1e-6 * q.lipschitz,
            "seed {seed}: {est} vs {}",
            q.lipschitz
        );
    }
}

#[test]
fn lipschitz_of_a_constant_field_is_zero() {
    let inst = instance(8);
    let d = inst.prior.dim();
    let meas = MeasurementModel::new(LinearOperator::dense(Array2::zeros((3, d))), 0.0, Array1::zeros(3)).unwrap();
    let est = estimate_lipschitz(
        &inst.prior,
        &inst.schedule,
        &meas,
        inst.x_t.view(),
        inst.t,
        &LipschitzProbe::default(),
    )
    .unwrap();
    assert_eq!(est, 0.0);
}

#[test]
fn lipschitz_estimate_grows_with_probe_count() {
    // Probe sets are nested prefixes of one stream, so the random-pair
    // maximum can only grow with the probe count, per seed and on average.
    let inst = instance(12);
    let mut last = 0.0;
    for probes in [2, 4, 8, 16, 32, 64] {
        let p = LipschitzProbe {
            probes,
            power_steps: 0,
            ..LipschitzProbe::default()
        };
        let est = estimate_lipschitz(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t, &p).unwrap();
        assert!(est >= last, "{probes} probes: {est} < {last}");
        last = est;
    }
    let mean_over_seeds = |probes: usize| {
        (0..20)
            .map(|seed| {
                let p = LipschitzProbe {
                    probes,
                    seed,
                    power_steps: 0,
                    ..LipschitzProbe::default()
                };
                estimate_lipschitz(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t, &p).unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    assert!(mean_over_seeds(4) < mean_over_seeds(32));
    let bad = LipschitzProbe {
        probes: 1,
        ..LipschitzProbe::default()
    };
    assert!(estimate_lipschitz(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t, &bad).is_err());
}

/// SSIM by direct window summation with two-pass moments.
fn ssim_direct(x: &Array1<f64>, y: &Array1<f64>, g: ImageGeometry, p: &SsimParams) -> f64 {
    let w1: Vec<f64> = p.window_weights();
    let k = p.window;
    let (c1, c2) = ((p.k1).powi(2), (p.k2).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for ch in 0..g.channels {
        for r0 in 0..=(g.height - k) {
            for c0 in 0..=(g.width - k) {
                let at = |v: &Array1<f64>, i: usize, j: usize| v[g.index(r0 + i, c0 + j, ch)];
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        mx += w1[i] * w1[j] * at(x, i, j);
                        my += w1[i] * w1[j] * at(y, i, j);
                    }
                }
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let (dx, dy) = (at(x, i, j) - mx, at(y, i, j) - my);
                        let w = w1[i] * w1[j];
                        sxx += w * dx * dx;
                        syy += w * dy * dy;
                        sxy += w * dx * dy;
                    }
                }
                total += (2.0 * mx * my + c1) * (2.0 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn ssim_matches_direct_summation(seed in any::<u64>(), w in 11usize..20, h in 11usize..18, ch in 1usize..=3, noise in 0.0f64..0.3) {
        let g = ImageGeometry::new(w, h, ch);
        let mut r = rng(seed);
        let x = uniform_vec(&mut r, g.len(), 0.0, 1.0);
        let y = (&x + &(normal_vec(&mut r, g.len()) * noise)).mapv(|v| v.clamp(0.0, 1.0));
        let p = SsimParams::default();
        let fast = ssim(x.view(), y.view(), g, &p).unwrap();
        let slow = ssim_direct(&x, &y, g, &p);
        prop_assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
        prop_assert!(fast <= 1.0 + 1e-12);
        prop_assert!((ssim(y.view(), x.view(), g, &p).unwrap() - fast).abs() <= 1e-12);
    }

    #[test]
    fn psnr_falls_as_error_grows(seed in any::<u64>(), a in 0.001f64..0.5, b in 0.001f64..0.5) {
        prop_assume!((a - b).abs() > 1e-6);
        let mut r = rng(seed);
        let x = uniform_vec(&mut r, 64, 0.0, 1.0);
        let e = normal_vec(&mut r, 64);
        let pa = psnr((&x + &(&e * a)).view(), x.view()).unwrap();
        let pb = psnr((&x + &(&e * b)).view(), x.view()).unwrap();
        prop_assert_eq!(a < b, pa > pb);
        // Scaling the error by k lowers PSNR by 20·log10(k).
        prop_assert!((pa - pb - 20.0 * (b / a).log10()).abs() <= 1e-9);
    }

    #[test]
    fn angles_are_symmetric_and_scale_free(seed in any::<u64>(), d in 1usize..10, a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let mut r = rng(seed);
        let u = normal_vec(&mut r, d);
        let v = normal_vec(&mut r, d);
        let ang = angle_between(u.view(), v.view());
        prop_assert!((0.0..=180.0).contains(&ang));
        prop_assert!((angle_between(v.view(), u.view()) - ang).abs() <= 1e-12);
        prop_assert!((angle_between((&u * a).view(), (&v * b).view()) - ang).abs() <= 1e-10);
        prop_assert!((angle_between(u.view(), (-&v).view()) - (180.0 - ang)).abs() <= 1e-10);
        let cos = u.dot(&v) / (u.dot(&u).sqrt() * v.dot(&v).sqrt());
        prop_assert!((ang.to_radians().cos() - cos).abs() <= 1e-12);
    }

    #[test]
    fn posterior_mean_solves_the_normal_equations(seed in any::<u64>(), gi in 0..GEOMETRIES.len(), ki in 0..OPERATOR_KINDS.len(), sigma in 0.01f64..1.0) {
        // (Σ⁻¹ + AᵀA/σ²) m = Σ⁻¹μ + Aᵀy/σ²
        let mut r = rng(seed);
        let g = geometry(gi);
        let op = operator(OPERATOR_KINDS[ki], g, &mut r);
        let mu = uniform_vec(&mut r, g.len(), 0.0, 1.0);
        let cov = random_spd(&mut r, g.len(), 0.5, 0.05);
        let prior = GaussianComponent::full(1.0, mu.clone(), cov.clone()).unwrap();
        let y = normal_vec(&mut r, op.output_dim());
        let m = gaussian_posterior_mean(&prior, &op, y.view(), sigma).unwrap();
        let a = op.to_matrix();
        let s2 = sigma * sigma;
        let prec = spgd::linalg::Cholesky::new(cov.view()).unwrap().inverse();
        let lhs = (&prec + &(a.t().dot(&a) / s2)).dot(&m);
        let rhs = prec.dot(&mu) + &(a.t().dot(&y) / s2);
        prop_assert!(rel_err(&lhs, &rhs) <= 1e-10, "{}", rel_err(&lhs, &rhs));
    }
}

#[test]
fn ssim_of_identical_images_is_one_and_small_images_are_rejected() {
    let g = ImageGeometry::new(12, 12, 2);
    let x = uniform_vec(&mut rng(1), g.len(), 0.0, 1.0);
    assert!((ssim_default(x.view(), x.view(), g).unwrap() - 1.0).abs() < 1e-12);
    let small = ImageGeometry::gray(10, 12);
    let z = Array1::<f64>::zeros(small.len());
    assert!(ssim_default(z.view(), z.view(), small).is_err());
    let even = SsimParams {
        window: 10,
        ..SsimParams::default()
    };
    assert!(ssim(x.view(), x.view(), g, &even).is_err());
}

#[test]
fn posterior_limits() {
    let mut r = rng(3);
    let d = 6;
    let mu = uniform_vec(&mut r, d, 0.0, 1.0);
    let prior = GaussianComponent::full(1.0, mu.clone(), random_spd(&mut r, d, 0.5, 0.05)).unwrap();
    let y = normal_vec(&mut r, d);
    let op = LinearOperator::identity(d);
    // Overwhelming noise leaves the prior mean; vanishing noise reproduces the measurement.
    let loose = gaussian_posterior_mean(&prior, &op, y.view(), 1e6).unwrap();
    assert!(rel_err(&loose, &mu) < 1e-9);
    let tight = gaussian_posterior_mean(&prior, &op, y.view(), 1e-7).unwrap();
    assert!(rel_err(&tight, &y) < 1e-9);
    let mask = LinearOperator::mask(d, vec![0, 1, 2, 3]).unwrap();
    assert!(gaussian_posterior_mean(&prior, &mask, y.view(), 0.1).is_err());
    let rank_deficient = LinearOperator::dense(Array2::from_shape_fn((3, d), |(i, j)| {
        if i < 2 {
            (i + j) as f64
        } else {
            (1 + j) as f64
        }
    }));
    assert!(matches!(
        gaussian_posterior_mean(&prior, &rank_deficient, ndarray::array![1.0, 2.0, 3.0].view(), 0.0),
        Err(Error::Singular(_))
    ));
}

#[test]
fn metrics_report_collects_the_figures() {
    let g = ImageGeometry::gray(12, 12);
    let x = uniform_vec(&mut rng(2), g.len(), 0.0, 1.0);
    let y = &x * 0.9;
    let residual = ndarray::array![3.0, 4.0];
    let report = MetricsReport::compute(y.view(), x.view(), Some(g), residual.view(), Some(&x)).unwrap();
    assert_eq!(report.residual_norm, 5.0);
    assert!(report.ssim.is_some());
    assert!((report.posterior_error.unwrap() - (&y - &x).dot(&(&y - &x)).sqrt()).abs() < 1e-15);
    assert_eq!(report.psnr_db, psnr(y.view(), x.view()).unwrap());
    let flat = MetricsReport::compute(y.view(), x.view(), None, residual.view(), None).unwrap();
    assert!(flat.ssim.is_none() && flat.posterior_error.is_none());
}
