mod common;

use approx::assert_abs_diff_eq;
use csde::dictionary::GramMatrix;
use csde::solver::{empirical_moments, kkt_check, kkt_residuals};
use csde::weights::{concentration_weights, csde_weights, theorem1_c, v_half_delta, v_half_delta_over_w};
use csde::{fit, fit_orthogonal, fit_variant, FitOptions, Problem, Sample, Variant, VariantParams, WeightSpec};
use proptest::prelude::*;

#[test]
fn one_dimensional_soft_threshold() {
    let g = GramMatrix::identity(1);
    for (bt, w, c, expect) in [(0.5, 0.1, 0.0, 0.4), (0.5, 0.1, 1.0, 0.2), (0.05, 0.1, 0.0, 0.0)] {
        let p = Problem::new(vec![bt], &g, WeightSpec::flat(1, w, c).unwrap()).unwrap();
        let r = fit(&p, &FitOptions::default()).unwrap();
        assert_abs_diff_eq!(r.beta_hat[0], expect, epsilon = 1e-14);
        assert!(r.converged);
    }
}

#[test]
fn negative_moments_clip_to_zero() {
    let r = fit_orthogonal(&[-0.3, 0.2], &[0.05, 0.05], 0.0).unwrap();
    assert_eq!(r.beta_hat[0], 0.0);
    assert_abs_diff_eq!(r.beta_hat[1], 0.15, epsilon = 1e-15);
    assert_eq!(r.support, vec![1]);
}

#[test]
fn large_penalty_gives_zero_fit() {
    let mut rng = common::rng(3);
    let g = common::random_psd(&mut rng, 6);
    let bt = vec![0.2, 0.1, 0.4, 0.3, 0.0, 0.05];
    let p = Problem::new(bt, &g, WeightSpec::flat(6, 10.0, 0.0).unwrap()).unwrap();
    let r = fit(&p, &FitOptions::default()).unwrap();
    assert!(r.beta_hat.iter().all(|b| *b == 0.0));
    assert!(r.support.is_empty());
    assert_eq!(r.renormalized(), r.beta_hat);
}

#[test]
fn problem_rejects_mismatched_lengths() {
    let g = GramMatrix::identity(3);
    assert!(Problem::new(vec![0.1, 0.2], &g, WeightSpec::flat(3, 0.1, 0.0).unwrap()).is_err());
    assert!(Problem::new(vec![0.1, 0.2, 0.3], &g, WeightSpec::flat(2, 0.1, 0.0).unwrap()).is_err());
    assert!(Problem::new(vec![0.1, f64::NAN, 0.3], &g, WeightSpec::flat(3, 0.1, 0.0).unwrap()).is_err());
}

#[test]
fn variant_weights() {
    let d = csde::Dictionary::gaussian(&[0.0, 1.0, 2.0], &[1.0, 0.5, 2.0]).unwrap();
    let lmax = d.sup_norms()[1];
    let ada = Variant::AdaLasso.weights(&d, 0.1, 0.3, 1.0).unwrap();
    assert_eq!(ada.c, 0.0);
    assert_abs_diff_eq!(ada.omega[0], 0.1 * d.sup_norms()[0] / lmax, epsilon = 1e-15);
    let cs = Variant::Csde.weights(&d, 0.1, 0.3, 2.0).unwrap();
    assert_eq!(cs.c, 0.3);
    assert_abs_diff_eq!(cs.omega[1], 0.1 + 0.6, epsilon = 1e-15);
    let en = Variant::Enet.weights(&d, 0.1, 0.3, 1.0).unwrap();
    assert_eq!(en.omega, vec![0.1; 3]);
    assert_eq!(en.shift, 0.0);
    assert_eq!("CSDE".parse::<Variant>().unwrap(), Variant::Csde);
    assert!("ridge".parse::<Variant>().is_err());
}

#[test]
fn concentration_weight_values() {
    let v = v_half_delta(0.1, 100, 81).unwrap();
    assert_abs_diff_eq!(v, (1620.0f64.ln() / 100.0).sqrt(), epsilon = 1e-15);
    let vd = v_half_delta_over_w(0.1, 100, 81).unwrap();
    assert_abs_diff_eq!(vd, ((2.0 * 81.0 * 81.0 / 0.1f64).ln() / 100.0).sqrt(), epsilon = 1e-15);
    let spec = concentration_weights(&[0.5, 1.0], 200, 0.1, 0.0, 1.0).unwrap();
    let f = 2.0 * std::f64::consts::SQRT_2 * v_half_delta(0.1, 200, 2).unwrap();
    assert_abs_diff_eq!(spec.omega_tilde[0], f * 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(spec.omega_tilde[1], f, epsilon = 1e-15);
    let c = theorem1_c(&spec.omega_tilde, 1.0).unwrap();
    assert_abs_diff_eq!(c * 1.0, f * 0.5, epsilon = 1e-12);
    assert!(v_half_delta(0.0, 100, 10).is_err());
    assert!(v_half_delta(0.1, 0, 10).is_err());
}

#[test]
fn sample_fit_on_separated_mixture() {
    let d = common::orthogonal_gaussians(4);
    let g = d.gram().unwrap();
    let mut rng = common::rng(11);
    let beta = [0.5, 0.0, 0.5, 0.0];
    let x = common::draw_mixture(&d, &beta, 4000, &mut rng);
    let r = fit_variant(
        Variant::Lasso,
        &Sample::Continuous(x),
        &d,
        &g,
        VariantParams::new(0.01, 0.0),
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(r.support, vec![0, 2]);
    assert!((r.beta_hat[0] - 0.5).abs() < 0.1);
}

#[test]
fn csde_weights_track_sample_size() {
    let d = common::orthogonal_gaussians(3);
    let small = csde_weights(&d, 50, 0.1, 0.0, 1.0).unwrap();
    let big = csde_weights(&d, 5000, 0.1, 0.0, 1.0).unwrap();
    assert!(big.omega[0] < small.omega[0]);
    assert_abs_diff_eq!(small.omega[0] / big.omega[0], (5000.0f64 / 50.0).sqrt(), epsilon = 1e-10);
}

#[test]
fn moments_average_atom_values() {
    let d = csde::Dictionary::gaussian(&[0.0], &[1.0]).unwrap();
    let m = empirical_moments(&d, &Sample::Continuous(vec![0.0, 1.0])).unwrap();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert_abs_diff_eq!(m[0], 0.5 * (phi(0.0) + phi(1.0)), epsilon = 1e-15);
    assert!(empirical_moments(&d, &Sample::Discrete(vec![1])).is_err());
}

fn arb_problem() -> impl Strategy<Value = (u64, usize, f64, f64)> {
    (any::<u64>(), 1usize..20, 0.0f64..0.3, 0.0f64..0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_fits_satisfy_kkt((seed, w, lam, c) in arb_problem()) {
        let mut rng = common::rng(seed);
        let g = common::random_psd(&mut rng, w);
        let bt: Vec<f64> = (0..w).map(|_| rand::Rng::random_range(&mut rng, -0.2..0.8)).collect();
        let p = Problem::new(bt, &g, WeightSpec::flat(w, lam, c).unwrap()).unwrap();
        let opts = FitOptions { record_objective: true, ..FitOptions::default() };
        let r = fit(&p, &opts).unwrap();
        prop_assert!(r.beta_hat.iter().all(|b| *b >= 0.0));
        if r.converged {
            prop_assert!(r.max_kkt_residual() <= 1e-6);
            prop_assert!(kkt_check(&r, &p, 1e-6).unwrap().violations.is_empty());
        }
        // objective never rises between sweeps
        for pair in r.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
        prop_assert!(p.objective(&r.beta_hat) <= p.objective(&vec![0.0; w]) + 1e-12);
    }

    #[test]
    fn orthonormal_matches_closed_form(bt in prop::collection::vec(-0.5f64..1.0, 1..30),
                                       lam in 0.0f64..0.4, c in 0.0f64..1.0) {
        let w = bt.len();
        let g = GramMatrix::identity(w);
        let p = Problem::new(bt.clone(), &g, WeightSpec::flat(w, lam, c).unwrap()).unwrap();
        let cd = fit(&p, &FitOptions::default()).unwrap();
        let cf = fit_orthogonal(&bt, &vec![lam; w], c).unwrap();
        for (a, b) in cd.beta_hat.iter().zip(&cf.beta_hat) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(kkt_residuals(&p, &cf.beta_hat).iter().all(|r| *r <= 1e-12));
    }

    #[test]
    fn shrinkage_monotone_in_lambda(seed in any::<u64>(), w in 1usize..10) {
        let mut rng = common::rng(seed);
        let g = common::random_psd(&mut rng, w);
        let bt: Vec<f64> = (0..w).map(|_| rand::Rng::random_range(&mut rng, 0.0..0.5)).collect();
        let l1 = |lam: f64| {
            let p = Problem::new(bt.clone(), &g, WeightSpec::flat(w, lam, 0.1).unwrap()).unwrap();
            fit(&p, &FitOptions::default()).unwrap().beta_hat.iter().sum::<f64>()
        };
        // ℓ1 norm of the fit is nonincreasing in a flat penalty
        prop_assert!(l1(0.2) <= l1(0.05) + 1e-9);
    }
}
