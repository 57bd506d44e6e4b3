mod common;

use common::*;
use ndarray::Array1;
use proptest::prelude::*;
use spgd::guidance::{
    adm_update, cosine_sim, evaluate_likelihood, likelihood_gradient, likelihood_gradient_fd, likelihood_objective,
};
use spgd::{AdmState, LinearOperator, MeasurementModel, NoiseSchedule, ScorePrior};

proptest! {
    #![proptest_config(cases(96))]

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..10_000) {
        let inst = instance(seed);
        let g = likelihood_gradient(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t).unwrap();
        // 1e-4, not 1e-5: near t = T the difference quotient is roundoff-limited.
        let fd = likelihood_gradient_fd(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t, 1e-4).unwrap();
        let scale = g.dot(&g).sqrt().max(1e-8);
        let err = (&g - &fd).dot(&(&g - &fd)).sqrt();
        prop_assert!(err <= 1e-5 * scale, "{}: d={} t={} err {err} scale {scale}", inst.kind, inst.x_t.len(), inst.t);
    }

    #[test]
    fn objective_carries_the_half(seed in 0u64..10_000) {
        let inst = instance(seed);
        let eval = evaluate_likelihood(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t).unwrap();
        let r = inst.meas.residual(eval.x0_hat.view()).unwrap();
        prop_assert!((eval.objective - 0.5 * r.dot(&r)).abs() <= 1e-14 * (1.0 + eval.objective));
        let direct = likelihood_objective(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t).unwrap();
        prop_assert_eq!(direct, eval.objective);
        // Directional derivative of L_t along g_l/‖g_l‖ is ‖g_l‖/2.
        let gn = eval.gradient.dot(&eval.gradient).sqrt();
        prop_assume!(gn > 1e-6);
        let u = &eval.gradient / gn;
        let h = 1e-5;
        let at = |s: f64| likelihood_objective(&inst.prior, &inst.schedule, &inst.meas, (&inst.x_t + &(&u * s)).view(), inst.t).unwrap();
        let slope = (at(h) - at(-h)) / (2.0 * h);
        prop_assert!((slope - 0.5 * gn).abs() <= 1e-5 * gn, "slope {slope} vs {}", 0.5 * gn);
    }

    #[test]
    fn adm_is_a_convex_combination(
        seed in any::<u64>(),
        d in 1usize..12,
        beta in 0.0f64..0.999,
        steps in 2usize..8,
    ) {
        let mut r = rng(seed);
        let mut st = AdmState::new();
        let mut prev: Option<Array1<f64>> = None;
        for k in 0..steps {
            let g = normal_vec(&mut r, d);
            let out = st.update(g.view(), beta);
            match &prev {
                None => {
                    prop_assert_eq!(&out, &g);
                    prop_assert!(st.last_alpha.is_none());
                }
                Some(p) => {
                    let alpha = st.last_alpha.unwrap();
                    prop_assert!((0.0..=1.0).contains(&alpha));
                    prop_assert!(alpha * beta <= beta);
                    let cos = p.dot(&g) / (p.dot(p).sqrt() * g.dot(&g).sqrt());
                    prop_assert!((alpha - (cos + 1.0) / 2.0).abs() <= 1e-14, "step {k}");
                    let keep = alpha * beta;
                    let want = p * keep + &(&g * (1.0 - keep));
                    prop_assert!(rel_err(&out, &want) <= 1e-14);
                    for i in 0..d {
                        let (lo, hi) = (p[i].min(g[i]), p[i].max(g[i]));
                        prop_assert!(out[i] >= lo - 1e-14 && out[i] <= hi + 1e-14);
                    }
                    let bound = p.dot(p).sqrt().max(g.dot(&g).sqrt());
                    prop_assert!(out.dot(&out).sqrt() <= bound * (1.0 + 1e-14));
                }
            }
            prev = Some(out);
        }
    }

    #[test]
    fn adm_with_zero_beta_passes_through(seed in any::<u64>(), d in 1usize..12) {
        let mut r = rng(seed);
        let mut st = AdmState::new();
        for _ in 0..6 {
            let g = normal_vec(&mut r, d);
            prop_assert_eq!(st.update(g.view(), 0.0), g);
        }
    }

    #[test]
    fn functional_and_stateful_adm_agree(seed in any::<u64>(), beta in 0.0f64..0.999) {
        let mut r = rng(seed);
        let mut st = AdmState::new();
        let mut fst = AdmState::new();
        for _ in 0..5 {
            let g = normal_vec(&mut r, 6);
            let a = st.update(g.view(), beta);
            let (next, b) = adm_update(&fst, g.view(), beta);
            prop_assert_eq!(a, b);
            fst = next;
        }
        prop_assert_eq!(st, fst);
    }

    #[test]
    fn cosine_is_scale_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let mut r = rng(seed);
        let u = normal_vec(&mut r, 7);
        let v = normal_vec(&mut r, 7);
        let c = cosine_sim(u.view(), v.view());
        prop_assert!((cosine_sim((&u * a).view(), (&v * b).view()) - c).abs() <= 1e-14);
        prop_assert!((cosine_sim(v.view(), u.view()) - c).abs() <= 1e-15);
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}

#[test]
fn gaussian_prior_gradient_matches_closed_form() {
    // N(μ, s²I): x̂₀ = μ + c(x − √ᾱμ) with c = √ᾱ s²/(ᾱ s² + 1 − ᾱ), so g_l = 2c Aᵀ(A x̂₀ − y).
    let s = NoiseSchedule::<f64>::rescaled_linear(100).unwrap();
    for seed in 0..12 {
        let mut r = rng(seed);
        let g = geometry(seed as usize);
        let op = operator(OPERATOR_KINDS[seed as usize % OPERATOR_KINDS.len()], g, &mut r);
        let mu = uniform_vec(&mut r, g.len(), 0.0, 1.0);
        let var = 0.3;
        let prior = ScorePrior::gaussian(mu.clone(), var).unwrap();
        let y = normal_vec(&mut r, op.output_dim());
        let meas = MeasurementModel::new(op.clone(), 0.1, y.clone()).unwrap();
        for t in [1, 40, 100] {
            let ab = s.alpha_bar(t);
            let x = normal_vec(&mut r, g.len());
            let c = ab.sqrt() * var / (ab * var + 1.0 - ab);
            let x0 = &mu + &((&x - &(&mu * ab.sqrt())) * c);
            let misfit = op.apply(x0.view()).unwrap() - &y;
            let want = op.adjoint(misfit.view()).unwrap() * (2.0 * c);
            let got = likelihood_gradient(&prior, &s, &meas, x.view(), t).unwrap();
            // The score form of x̂₀ divides a cancelling sum by √ᾱ.
            assert!(
                rel_err(&got, &want) <= 1e-12 / ab.sqrt(),
                "seed {seed} t {t}: {}",
                rel_err(&got, &want)
            );
        }
    }
}

#[test]
fn consistent_measurement_has_zero_gradient() {
    let inst = instance(3);
    let x0 = inst.prior.tweedie_x0(&inst.schedule, inst.x_t.view(), inst.t).unwrap();
    let y = inst.meas.operator.apply(x0.view()).unwrap();
    let meas = MeasurementModel::new(inst.meas.operator.clone(), 0.0, y).unwrap();
    let eval = evaluate_likelihood(&inst.prior, &inst.schedule, &meas, inst.x_t.view(), inst.t).unwrap();
    assert_eq!(eval.objective, 0.0);
    assert!(eval.gradient.iter().all(|&v| v == 0.0));
}

#[test]
fn fd_rejects_nonpositive_step() {
    let inst = instance(0);
    assert!(likelihood_gradient_fd(&inst.prior, &inst.schedule, &inst.meas, inst.x_t.view(), inst.t, 0.0).is_err());
}

#[test]
fn dimension_mismatch_is_reported() {
    let inst = instance(1);
    let meas = MeasurementModel::new(
        LinearOperator::identity(inst.x_t.len() + 1),
        0.0,
        Array1::zeros(inst.x_t.len() + 1),
    )
    .unwrap();
    assert!(likelihood_gradient(&inst.prior, &inst.schedule, &meas, inst.x_t.view(), inst.t).is_err());
}
