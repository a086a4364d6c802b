//! Split-sample selection of `(λ1, λ2)`.
//!
//! The sample is split at random into two halves, the estimator is fitted
//! on each, and the score is the squared L2 distance between the two fitted
//! densities, `(β̂₁ − β̂₂)ᵀ ψ (β̂₁ − β̂₂)`. The pair minimizing the score is
//! found by alternating golden-section searches, λ1 first, at precision ξ.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{Dictionary, GramMatrix, Sample};
use crate::error::{invalid, Result};
use crate::solver::{empirical_moments, fit_variant_moments, FitOptions, Variant, VariantParams};
use crate::weights::DEFAULT_B;

pub const DEFAULT_XI: f64 = 0.001;
pub const DEFAULT_MAX_ROUNDS: usize = 20;
pub const DEFAULT_LAMBDA1_RANGE: (f64, f64) = (0.0, 0.5);
pub const DEFAULT_LAMBDA2_RANGE: (f64, f64) = (0.0, 0.1);

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneConfig {
    pub lambda1_range: (f64, f64),
    pub lambda2_range: (f64, f64),
    pub xi: f64,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            lambda1_range: DEFAULT_LAMBDA1_RANGE,
            lambda2_range: DEFAULT_LAMBDA2_RANGE,
            xi: DEFAULT_XI,
            seed: 0,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lambda1", self.lambda1_range), ("lambda2", self.lambda2_range)] {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(invalid(format!(
                    "{name} range must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.xi > 0.0) {
            return Err(invalid(format!("xi must be positive, got {}", self.xi)));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds must be >= 1"));
        }
        Ok(())
    }
}

/// Random halves of sizes `⌊n/2⌋` and `⌈n/2⌉`.
pub fn cv_split(sample: &Sample, seed: u64) -> Result<(Sample, Sample)> {
    let n = sample.len();
    if n < 2 {
        return Err(invalid(format!("cross-validation split needs n >= 2, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (a, b) = idx.split_at(n / 2);
    Ok((sample.select(a), sample.select(b)))
}

/// Precomputed halves for repeated scoring.
#[derive(Debug, Clone)]
pub struct CvProblem<'a> {
    pub variant: Variant,
    pub dict: &'a Dictionary,
    pub gram: &'a GramMatrix,
    moments_a: Vec<f64>,
    moments_b: Vec<f64>,
    pub b: f64,
    pub options: FitOptions,
}

impl<'a> CvProblem<'a> {
    pub fn new(
        variant: Variant,
        sample: &Sample,
        dict: &'a Dictionary,
        gram: &'a GramMatrix,
        seed: u64,
    ) -> Result<Self> {
        let (a, b) = cv_split(sample, seed)?;
        Self::from_halves(variant, &a, &b, dict, gram)
    }

    pub fn from_halves(
        variant: Variant,
        half_a: &Sample,
        half_b: &Sample,
        dict: &'a Dictionary,
        gram: &'a GramMatrix,
    ) -> Result<Self> {
        Ok(Self {
            variant,
            dict,
            gram,
            moments_a: empirical_moments(dict, half_a)?,
            moments_b: empirical_moments(dict, half_b)?,
            b: DEFAULT_B,
            options: FitOptions::default(),
        })
    }

    /// Score of one `(λ1, λ2)` pair. Both halves fitting to zero scores
    /// `+∞`.
    pub fn score(&self, lambda1: f64, lambda2: f64) -> Result<f64> {
        let params = VariantParams {
            lambda1,
            lambda2,
            b: self.b,
        };
        let fa = fit_variant_moments(
            self.variant,
            self.moments_a.clone(),
            self.dict,
            self.gram,
            params,
            &self.options,
        )?;
        let fb = fit_variant_moments(
            self.variant,
            self.moments_b.clone(),
            self.dict,
            self.gram,
            params,
            &self.options,
        )?;
        Ok(fit_distance(&fa.beta_hat, &fb.beta_hat, self.gram))
    }
}

/// `(a − b)ᵀ ψ (a − b)`, or `+∞` when both vectors are zero.
pub fn fit_distance(a: &[f64], b: &[f64], gram: &GramMatrix) -> f64 {
    let a_zero = a.iter().all(|v| *v == 0.0);
    let b_zero = b.iter().all(|v| *v == 0.0);
    if a_zero && b_zero {
        return f64::INFINITY;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    gram.quad_form(&d).max(0.0)
}

/// Split-sample score of `(λ1, λ2)` on `sample`.
pub fn cv_score(
    variant: Variant,
    lambda1: f64,
    lambda2: f64,
    sample: &Sample,
    dict: &Dictionary,
    gram: &GramMatrix,
    seed: u64,
) -> Result<f64> {
    CvProblem::new(variant, sample, dict, gram, seed)?.score(lambda1, lambda2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub score: f64,
    pub rounds: usize,
    pub converged: bool,
}

/// Golden-section search on `[lo, hi]` until the bracket is narrower than
/// `xi`. Ties move towards `lo`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, xi: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > xi {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x)?;
    // the midpoint may be worse than an interior probe on a flat-bottomed surface
    Ok([(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best }))
}

/// Alternating golden-section search over an arbitrary score surface.
/// A move is accepted only when it strictly improves the best score.
pub fn tune_with<F>(config: &TuneConfig, mut score: F) -> Result<TuneResult>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    config.validate()?;
    let (l1lo, l1hi) = config.lambda1_range;
    let (l2lo, l2hi) = config.lambda2_range;
    let mut l1 = 0.5 * (l1lo + l1hi);
    let mut l2 = 0.5 * (l2lo + l2hi);
    let mut best = score(l1, l2)?;
    let mut rounds = 0;
    let mut converged = false;
    while rounds < config.max_rounds {
        rounds += 1;
        let fixed2 = l2;
        let (c1, s1) = golden_section(|x| score(x, fixed2), l1lo, l1hi, config.xi)?;
        let mut moved1 = 0.0;
        if s1 < best {
            moved1 = (c1 - l1).abs();
            l1 = c1;
            best = s1;
        }
        let fixed1 = l1;
        let (c2, s2) = golden_section(|y| score(fixed1, y), l2lo, l2hi, config.xi)?;
        let mut moved2 = 0.0;
        if s2 < best {
            moved2 = (c2 - l2).abs();
            l2 = c2;
            best = s2;
        }
        if moved1 <= config.xi && moved2 <= config.xi {
            converged = true;
            break;
        }
    }
    Ok(TuneResult {
        lambda1: l1,
        lambda2: l2,
        score: best,
        rounds,
        converged,
    })
}

/// Selects `(λ1, λ2)` for `variant` on `sample`.
pub fn tune(
    config: &TuneConfig,
    sample: &Sample,
    dict: &Dictionary,
    gram: &GramMatrix,
    variant: Variant,
) -> Result<TuneResult> {
    config.validate()?;
    let cv = CvProblem::new(variant, sample, dict, gram, config.seed)?;
    tune_cv(config, &cv)
}

/// Like [`tune`] on a prepared split. Variants without an ℓ2 term
/// (lasso, adalasso) search λ1 only and report λ2 = 0.
pub fn tune_cv(config: &TuneConfig, cv: &CvProblem<'_>) -> Result<TuneResult> {
    match cv.variant {
        Variant::Lasso | Variant::AdaLasso => {
            config.validate()?;
            let (lo, hi) = config.lambda1_range;
            let mid = 0.5 * (lo + hi);
            let s_mid = cv.score(mid, 0.0)?;
            let (x, s) = golden_section(|x| cv.score(x, 0.0), lo, hi, config.xi)?;
            let (lambda1, score) = if s < s_mid { (x, s) } else { (mid, s_mid) };
            Ok(TuneResult {
                lambda1,
                lambda2: 0.0,
                score,
                rounds: 1,
                converged: true,
            })
        }
        Variant::Enet | Variant::Csde => tune_with(config, |a, b| cv.score(a, b)),
    }
}
