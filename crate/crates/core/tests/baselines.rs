mod common;

use csde::{em_fit, Dictionary, EmConfig, Sample};
use proptest::prelude::*;

#[test]
fn recovers_separated_mixture() {
    let d = common::orthogonal_gaussians(4);
    let mut rng = common::rng(2);
    let x = common::draw_mixture(&d, &[0.2, 0.3, 0.5, 0.0], 5000, &mut rng);
    let r = em_fit(&Sample::Continuous(x), &d, &EmConfig::default()).unwrap();
    assert!(r.converged);
    assert!((r.weights[0] - 0.2).abs() < 0.03);
    assert!((r.weights[2] - 0.5).abs() < 0.03);
    assert!(r.weights[3] < 1e-3);
}

#[test]
fn normalized_dictionary_gives_same_weights() {
    let d = Dictionary::gaussian(&[0.0, 1.0, 3.0], &[0.5, 1.0, 0.8]).unwrap();
    let (nd, _) = d.normalize().unwrap();
    let s = Sample::Continuous(vec![-0.2, 0.1, 0.9, 1.4, 2.7, 3.1, 3.3]);
    let a = em_fit(&s, &d, &EmConfig::default()).unwrap();
    let b = em_fit(&s, &nd, &EmConfig::default()).unwrap();
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn rejects_bad_inputs() {
    let d = Dictionary::gaussian(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
    assert!(em_fit(&Sample::Continuous(vec![]), &d, &EmConfig::default()).is_err());
    assert!(em_fit(&Sample::Discrete(vec![1]), &d, &EmConfig::default()).is_err());
    let bad = EmConfig {
        init: Some(vec![0.7, 0.7]),
        ..EmConfig::default()
    };
    assert!(em_fit(&Sample::Continuous(vec![0.0]), &d, &bad).is_err());
    let far = Dictionary::gaussian(&[0.0], &[0.01]).unwrap();
    assert!(em_fit(&Sample::Continuous(vec![1e3]), &far, &EmConfig::default()).is_err());
}

#[test]
fn discrete_em() {
    let d = Dictionary::poisson(&[1.0, 10.0]).unwrap();
    let s = Sample::Discrete(vec![0, 1, 1, 2, 9, 10, 11, 12, 0, 1]);
    let r = em_fit(&s, &d, &EmConfig::default()).unwrap();
    assert!((r.weights[0] - 0.6).abs() < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weights_on_simplex_and_likelihood_monotone(seed in any::<u64>(), n in 5usize..80) {
        let d = Dictionary::gaussian(&[0.0, 1.0, 2.0, 4.0], &[0.6, 0.4, 1.0, 0.8]).unwrap();
        let mut rng = common::rng(seed);
        let x = common::draw_mixture(&d, &[0.25, 0.25, 0.25, 0.25], n, &mut rng);
        let r = em_fit(&Sample::Continuous(x), &d, &EmConfig::default()).unwrap();
        prop_assert!(r.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for pair in r.log_likelihood.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0));
        }
    }
}
