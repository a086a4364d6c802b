#![allow(dead_code)]

use csde::dictionary::{Dictionary, GramMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `AᵀA/m` for a random `m × w` matrix, so the result is PSD and usually
/// strongly correlated.
pub fn random_psd(rng: &mut ChaCha8Rng, w: usize) -> GramMatrix {
    let m = w + rng.random_range(0..w.max(2));
    let a: Vec<f64> = (0..m * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..w)
        .map(|i| {
            (0..w)
                .map(|j| (0..m).map(|r| a[r * w + i] * a[r * w + j]).sum::<f64>() / m as f64)
                .collect()
        })
        .collect();
    GramMatrix::from_rows(&rows).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `w` unit-variance Gaussians 20 apart; off-diagonal Gram entries are
/// below 1e-40.
pub fn orthogonal_gaussians(w: usize) -> Dictionary {
    let mus: Vec<f64> = (0..w).map(|j| 20.0 * j as f64).collect();
    Dictionary::gaussian(&mus, &vec![1.0; w]).unwrap()
}

pub fn draw_mixture(dict: &Dictionary, beta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::distr::{weighted::WeightedIndex, Distribution};
    use rand_distr::Normal;
    let pick = WeightedIndex::new(beta).unwrap();
    (0..n)
        .map(|_| {
            let j = pick.sample(rng);
            let (mu, sd) = match dict.atom(j).kind() {
                csde::dictionary::BaseKind::Gaussian { mu, sigma } => (*mu, *sigma),
                other => panic!("not gaussian: {other:?}"),
            };
            Normal::new(mu, sd).unwrap().sample(rng)
        })
        .collect()
}
