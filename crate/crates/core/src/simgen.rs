//! Synthetic mixture experiments and Monte-Carlo replication.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal, Poisson};
use rayon::prelude::*;

use crate::baselines::{em_fit, EmConfig};
use crate::dictionary::{Dictionary, GramMatrix, Sample};
use crate::error::{invalid, CsdeError, Result};
use crate::metrics::ErrorReport;
use crate::solver::{empirical_moments, fit, fit_variant_moments, FitOptions, Problem, Variant, VariantParams};
use crate::weights::csde_weights;
use crate::tuning::{tune_cv, CvProblem, TuneConfig};

/// Length of the high-dimensional β* template.
pub const TEMPLATE_LEN: usize = 76;
pub const GAUSSIAN_SPACING: f64 = 0.5;
pub const POISSON_SPACING: f64 = 0.1;
pub const DEFAULT_INFLATION: f64 = 1.1;
pub const DEFAULT_DISPERSION: f64 = 6.0;
pub const DEFAULT_N: usize = 100;
pub const DEFAULT_REPS: usize = 100;
pub const LOWDIM_N: usize = 50;

// (1-based position, weight)
const TEMPLATE_SUPPORT: [(usize, f64); 8] = [
    (9, 0.2),
    (20, 0.1),
    (26, 0.1),
    (37, 0.1),
    (48, 0.1),
    (54, 0.15),
    (65, 0.15),
    (76, 0.1),
];
const SIGMA_BLOCKS: [(usize, f64); 6] = [(20, 1.0), (6, 0.8), (11, 0.6), (11, 0.4), (6, 0.6), (11, 0.8)];
const SIGMA_TAIL: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Poisson,
    LowDim1,
    LowDim2,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian-4.2",
            Family::Poisson => "poisson-4.3",
            Family::LowDim1 => "lowdim-4.4-s1",
            Family::LowDim2 => "lowdim-4.4-s2",
        }
    }

    pub fn is_lowdim(&self) -> bool {
        matches!(self, Family::LowDim1 | Family::LowDim2)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = CsdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian-4.2" | "gaussian" => Ok(Family::Gaussian),
            "poisson-4.3" | "poisson" => Ok(Family::Poisson),
            "lowdim-4.4-s1" => Ok(Family::LowDim1),
            "lowdim-4.4-s2" => Ok(Family::LowDim2),
            other => Err(invalid(format!("unknown family '{other}'"))),
        }
    }
}

/// Measurement-error channel applied to each draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Clean,
    /// Gaussian component variance multiplied by `factor`.
    VarianceInflated { factor: f64 },
    /// Poisson component replaced by a negative binomial with the same mean
    /// and dispersion `r`; `r = ∞` is plain Poisson.
    NegBinomial { r: f64 },
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Clean => f.write_str("clean"),
            Channel::VarianceInflated { factor } => write!(f, "variance-inflated:{factor}"),
            Channel::NegBinomial { r } => write!(f, "neg-binomial:{r}"),
        }
    }
}

impl FromStr for Channel {
    type Err = CsdeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad channel parameter '{a}'"))),
            }
        };
        match name {
            "clean" => Ok(Channel::Clean),
            "variance-inflated" => Ok(Channel::VarianceInflated {
                factor: num(DEFAULT_INFLATION)?,
            }),
            "neg-binomial" => Ok(Channel::NegBinomial {
                r: num(DEFAULT_DISPERSION)?,
            }),
            other => Err(invalid(format!("unknown channel '{other}'"))),
        }
    }
}

/// One synthetic experiment. `locations` holds μ_j (Gaussian) or λ_j
/// (Poisson); `scales` holds σ_j and is empty for Poisson.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub w: usize,
    pub n: usize,
    pub n_reps: usize,
    pub base_seed: u64,
    pub channel: Channel,
    pub beta_star: Vec<f64>,
    pub locations: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        if self.n_reps == 0 {
            return Err(invalid("N_reps must be >= 1"));
        }
        if self.beta_star.len() != self.w || self.locations.len() != self.w {
            return Err(invalid("beta* and location templates must have length W"));
        }
        if self.family != Family::Poisson && self.scales.len() != self.w {
            return Err(invalid("sigma template must have length W"));
        }
        if matches!(self.family, Family::Gaussian | Family::Poisson) && self.w < TEMPLATE_LEN {
            return Err(invalid(format!("W must be >= {TEMPLATE_LEN}, got {}", self.w)));
        }
        if self.beta_star.iter().any(|b| !(*b >= 0.0)) {
            return Err(invalid("beta* must be nonnegative"));
        }
        let s: f64 = self.beta_star.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("beta* must sum to 1, sums to {s}")));
        }
        match (self.family, self.channel) {
            (Family::Poisson, Channel::VarianceInflated { .. }) => {
                Err(invalid("variance-inflated channel needs a gaussian family"))
            }
            (Family::Poisson, Channel::NegBinomial { r }) if !(r > 0.0) => {
                Err(invalid(format!("dispersion r must be positive, got {r}")))
            }
            (Family::Poisson, _) => Ok(()),
            (_, Channel::NegBinomial { .. }) => Err(invalid("neg-binomial channel needs the poisson family")),
            (_, Channel::VarianceInflated { factor }) if !(factor > 0.0) => {
                Err(invalid(format!("variance factor must be positive, got {factor}")))
            }
            _ => Ok(()),
        }
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        match self.family {
            Family::Poisson => Dictionary::poisson(&self.locations),
            _ => Dictionary::gaussian(&self.locations, &self.scales),
        }
    }

    /// 0-based support of β*.
    pub fn support(&self) -> Vec<usize> {
        crate::solver::support_of(&self.beta_star)
    }

    /// Seed of replication `rep`.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        rep_seed(self.base_seed, rep)
    }

    pub fn sample(&self, rep: usize) -> Result<Sample> {
        match self.family {
            Family::Poisson => sample_poisson_contaminated(self, rep),
            _ => sample_gaussian_contaminated(self, rep),
        }
    }
}

/// β* template padded with zeros to length `w`.
pub fn template_beta(w: usize) -> Result<Vec<f64>> {
    if w < TEMPLATE_LEN {
        return Err(invalid(format!("W must be >= {TEMPLATE_LEN}, got {w}")));
    }
    let mut beta = vec![0.0; w];
    for (pos, val) in TEMPLATE_SUPPORT {
        beta[pos - 1] = val;
    }
    Ok(beta)
}

/// σ template: fixed blocks, then 1.2 up to length `w`.
pub fn template_sigma(w: usize) -> Result<Vec<f64>> {
    if w < TEMPLATE_LEN {
        return Err(invalid(format!("W must be >= {TEMPLATE_LEN}, got {w}")));
    }
    let mut sigma: Vec<f64> = SIGMA_BLOCKS
        .iter()
        .flat_map(|&(len, s)| std::iter::repeat_n(s, len))
        .collect();
    sigma.resize(w, SIGMA_TAIL);
    Ok(sigma)
}

pub fn gaussian_config(w: usize) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        family: Family::Gaussian,
        w,
        n: DEFAULT_N,
        n_reps: DEFAULT_REPS,
        base_seed: 0,
        channel: Channel::VarianceInflated {
            factor: DEFAULT_INFLATION,
        },
        beta_star: template_beta(w)?,
        locations: (1..=w).map(|j| GAUSSIAN_SPACING * j as f64).collect(),
        scales: template_sigma(w)?,
    })
}

pub fn poisson_config(w: usize) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        family: Family::Poisson,
        w,
        n: DEFAULT_N,
        n_reps: DEFAULT_REPS,
        base_seed: 0,
        channel: Channel::NegBinomial {
            r: DEFAULT_DISPERSION,
        },
        beta_star: template_beta(w)?,
        locations: (1..=w).map(|j| POISSON_SPACING * j as f64).collect(),
        scales: Vec::new(),
    })
}

/// The two low-dimensional Gaussian scenarios.
pub fn lowdim_configs() -> [ExperimentConfig; 2] {
    let s1 = ExperimentConfig {
        family: Family::LowDim1,
        w: 6,
        n: LOWDIM_N,
        n_reps: DEFAULT_REPS,
        base_seed: 0,
        channel: Channel::Clean,
        beta_star: vec![0.3, 0.0, 0.0, 0.3, 0.0, 0.4],
        locations: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
        scales: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    };
    let s2 = ExperimentConfig {
        family: Family::LowDim2,
        w: 7,
        n: LOWDIM_N,
        n_reps: DEFAULT_REPS,
        base_seed: 0,
        channel: Channel::Clean,
        beta_star: vec![0.1, 0.0, 0.0, 0.8, 0.0, 0.0, 0.1],
        locations: (0..7).map(|j| j as f64).collect(),
        scales: vec![0.3, 0.2, 0.2, 0.1, 0.2, 0.2, 0.3],
    };
    [s1, s2]
}

/// Config for `family` at dimension `w` (ignored for the low-dimensional
/// scenarios).
pub fn family_config(family: Family, w: usize) -> Result<ExperimentConfig> {
    match family {
        Family::Gaussian => gaussian_config(w),
        Family::Poisson => poisson_config(w),
        Family::LowDim1 => Ok(lowdim_configs()[0].clone()),
        Family::LowDim2 => Ok(lowdim_configs()[1].clone()),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `base_seed ⊕ splitmix64(rep)`.
pub fn rep_seed(base_seed: u64, rep: usize) -> u64 {
    base_seed ^ splitmix64(rep as u64)
}

fn components(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let pick = WeightedIndex::new(&config.beta_star).map_err(|e| invalid(format!("beta*: {e}")))?;
    Ok((0..config.n).map(|_| pick.sample(rng)).collect())
}

pub fn sample_gaussian_contaminated(config: &ExperimentConfig, rep: usize) -> Result<Sample> {
    if config.family == Family::Poisson {
        return Err(CsdeError::DomainMismatch("gaussian sampler on a poisson config".into()));
    }
    let factor = match config.channel {
        Channel::Clean => 1.0,
        Channel::VarianceInflated { factor } => factor,
        Channel::NegBinomial { .. } => return Err(invalid("neg-binomial channel on a gaussian config")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rep_seed(rep));
    let comp = components(config, &mut rng)?;
    let mut out = Vec::with_capacity(config.n);
    for j in comp {
        let sd = config.scales[j] * factor.sqrt();
        let z: f64 = Normal::new(config.locations[j], sd)
            .map_err(|e| invalid(format!("normal({}, {sd}): {e}", config.locations[j])))?
            .sample(&mut rng);
        out.push(z);
    }
    Ok(Sample::Continuous(out))
}

pub fn sample_poisson_contaminated(config: &ExperimentConfig, rep: usize) -> Result<Sample> {
    if config.family != Family::Poisson {
        return Err(CsdeError::DomainMismatch("poisson sampler on a gaussian config".into()));
    }
    let r = match config.channel {
        Channel::Clean => f64::INFINITY,
        Channel::NegBinomial { r } => r,
        Channel::VarianceInflated { .. } => return Err(invalid("variance-inflated channel on a poisson config")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rep_seed(rep));
    let comp = components(config, &mut rng)?;
    let mut out = Vec::with_capacity(config.n);
    for j in comp {
        out.push(draw_neg_binomial(&mut rng, config.locations[j], r)?);
    }
    Ok(Sample::Discrete(out))
}

/// Negative binomial with mean `mean` and variance `mean + mean²/r`, drawn
/// as a gamma-mixed Poisson. `r = ∞` draws a plain Poisson.
pub fn draw_neg_binomial<R: Rng + ?Sized>(rng: &mut R, mean: f64, r: f64) -> Result<u64> {
    if !(mean >= 0.0) {
        return Err(invalid(format!("negative binomial mean must be >= 0, got {mean}")));
    }
    let rate = if r.is_infinite() {
        mean
    } else {
        Gamma::new(r, mean / r)
            .map_err(|e| invalid(format!("gamma({r}, {}): {e}", mean / r)))?
            .sample(rng)
    };
    if rate <= 0.0 {
        return Ok(0);
    }
    let k: f64 = Poisson::new(rate)
        .map_err(|e| invalid(format!("poisson({rate}): {e}")))?
        .sample(rng);
    Ok(k as u64)
}

/// How an estimator's tuning parameters are chosen in each replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tuning {
    Fixed(VariantParams),
    /// Split-sample selection per replication.
    Cv(TuneConfig),
    /// Concentration weights `ω = ω̃ + cB` at level δ (the ℓ2 coefficient is
    /// `c`); the variant is ignored.
    Concentration { delta: f64, c: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Penalized { variant: Variant, tuning: Tuning },
    Em(EmConfig),
}

impl EstimatorSpec {
    pub fn fixed(variant: Variant, lambda1: f64, lambda2: f64) -> Self {
        EstimatorSpec::Penalized {
            variant,
            tuning: Tuning::Fixed(VariantParams::new(lambda1, lambda2)),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorSpec::Penalized { variant, .. } => variant.name(),
            EstimatorSpec::Em(_) => "em",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub fit: FitOptions,
    /// Rescale penalized fits to sum to one before scoring.
    pub renormalize: bool,
}

/// Per-estimator aggregate over the successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub label: String,
    pub l1_mean: f64,
    pub l1_std: f64,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub support_exact_rate: f64,
    /// Mean of the λ1 (λ2) actually used; NaN for EM.
    pub lambda1_used: f64,
    pub lambda2_used: f64,
    pub failures: usize,
    /// Replication index of each entry in `l1`, `tv` and `support_exact`.
    pub reps: Vec<usize>,
    pub l1: Vec<f64>,
    pub tv: Vec<f64>,
    pub support_exact: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub family: Family,
    pub w: usize,
    pub n: usize,
    pub n_reps: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, Copy)]
struct RepOutcome {
    report: ErrorReport,
    lambda1: f64,
    lambda2: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

// tag mixed into per-replication CV split seeds
const CV_SEED_TAG: u64 = 0x5eed_c0de_0000_0001;

fn run_one(
    config: &ExperimentConfig,
    dict: &Dictionary,
    gram: &GramMatrix,
    estimators: &[EstimatorSpec],
    options: &RunOptions,
    rep: usize,
) -> Vec<Result<RepOutcome>> {
    let sample = match config.sample(rep) {
        Ok(s) => s,
        Err(e) => return estimators.iter().map(|_| Err(e.clone())).collect(),
    };
    let moments = empirical_moments(dict, &sample);
    estimators
        .iter()
        .map(|spec| -> Result<RepOutcome> {
            let (beta, l1, l2) = match spec {
                EstimatorSpec::Em(cfg) => (em_fit(&sample, dict, cfg)?.weights, f64::NAN, f64::NAN),
                EstimatorSpec::Penalized {
                    tuning: Tuning::Concentration { delta, c, b },
                    ..
                } => {
                    let weights = csde_weights(dict, sample.len(), *delta, *c, *b)?;
                    let problem = Problem::new(moments.clone()?, gram, weights)?;
                    let fit = fit(&problem, &options.fit)?;
                    if !fit.converged {
                        return Err(CsdeError::NumericalFailure(format!(
                            "concentration-weight fit did not converge in {} sweeps",
                            fit.iterations
                        )));
                    }
                    let beta = if options.renormalize {
                        fit.renormalized()
                    } else {
                        fit.beta_hat
                    };
                    (beta, f64::NAN, *c)
                }
                EstimatorSpec::Penalized { variant, tuning } => {
                    let params = match tuning {
                        Tuning::Concentration { .. } => unreachable!("handled above"),
                        Tuning::Fixed(p) => *p,
                        Tuning::Cv(tc) => {
                            let seed = config.rep_seed(rep) ^ tc.seed ^ CV_SEED_TAG;
                            let mut cv = CvProblem::new(*variant, &sample, dict, gram, seed)?;
                            cv.options = options.fit;
                            let t = tune_cv(tc, &cv)?;
                            VariantParams::new(t.lambda1, t.lambda2)
                        }
                    };
                    let bt = moments.clone()?;
                    let fit = fit_variant_moments(*variant, bt, dict, gram, params, &options.fit)?;
                    if !fit.converged {
                        return Err(CsdeError::NumericalFailure(format!(
                            "{variant} did not converge in {} sweeps",
                            fit.iterations
                        )));
                    }
                    let beta = if options.renormalize {
                        fit.renormalized()
                    } else {
                        fit.beta_hat
                    };
                    (beta, params.lambda1, params.lambda2)
                }
            };
            Ok(RepOutcome {
                report: ErrorReport::compute(dict, &beta, &config.beta_star)?,
                lambda1: l1,
                lambda2: l2,
            })
        })
        .collect()
}

/// Draws `config.n_reps` samples, fits every estimator on each and
/// aggregates the errors against β*. Replications run in parallel on the
/// current rayon pool; results do not depend on the thread count.
pub fn run_replications(
    config: &ExperimentConfig,
    estimators: &[EstimatorSpec],
    options: &RunOptions,
) -> Result<ReplicationReport> {
    config.validate()?;
    if estimators.is_empty() {
        return Err(invalid("estimator list is empty"));
    }
    let dict = config.dictionary()?;
    let gram = dict.gram()?;
    let outcomes: Vec<Vec<Result<RepOutcome>>> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| run_one(config, &dict, &gram, estimators, options, rep))
        .collect();

    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let (reps, ok): (Vec<usize>, Vec<RepOutcome>) = outcomes
                .iter()
                .enumerate()
                .filter_map(|(r, o)| o[e].as_ref().ok().map(|v| (r, *v)))
                .unzip();
            let l1: Vec<f64> = ok.iter().map(|o| o.report.l1).collect();
            let tv: Vec<f64> = ok.iter().map(|o| o.report.tv).collect();
            let exact: Vec<bool> = ok.iter().map(|o| o.report.support_exact).collect();
            let (l1_mean, l1_std) = mean_std(&l1);
            let (tv_mean, tv_std) = mean_std(&tv);
            let lam1: Vec<f64> = ok.iter().map(|o| o.lambda1).collect();
            let lam2: Vec<f64> = ok.iter().map(|o| o.lambda2).collect();
            EstimatorSummary {
                label: spec.label().to_string(),
                l1_mean,
                l1_std,
                tv_mean,
                tv_std,
                support_exact_rate: if exact.is_empty() {
                    0.0
                } else {
                    exact.iter().filter(|b| **b).count() as f64 / exact.len() as f64
                },
                lambda1_used: mean_std(&lam1).0,
                lambda2_used: mean_std(&lam2).0,
                failures: config.n_reps - ok.len(),
                reps,
                l1,
                tv,
                support_exact: exact,
            }
        })
        .collect();

    Ok(ReplicationReport {
        family: config.family,
        w: config.w,
        n: config.n,
        n_reps: config.n_reps,
        base_seed: config.base_seed,
        seeds: (0..config.n_reps).map(|r| config.rep_seed(r)).collect(),
        estimators: summaries,
    })
}

/// Fixed `(λ1, λ2)` used in the published high-dimensional tables, keyed
/// by family, W and variant. Lasso/Enet share λ1, as do AdaLasso/CSDE.
pub fn preset_params(family: Family, w: usize, variant: Variant) -> Option<VariantParams> {
    let (flat, adaptive, c_enet, c_adaptive) = match (family, w) {
        (Family::Gaussian, 81) => (0.065, 0.053, 0.002, 0.027),
        (Family::Gaussian, 131) => (0.068, 0.056, 0.002, 0.027),
        (Family::Gaussian, 211) => (0.071, 0.058, 0.002, 0.027),
        (Family::Gaussian, 321) => (0.074, 0.061, 0.002, 0.027),
        (Family::Poisson, 81) => (0.048, 0.138, 0.005, 0.203),
        (Family::Poisson, 131) => (0.051, 0.145, 0.005, 0.203),
        (Family::Poisson, 211) => (0.053, 0.152, 0.005, 0.203),
        (Family::Poisson, 321) => (0.055, 0.158, 0.005, 0.203),
        _ => return None,
    };
    Some(match variant {
        Variant::Lasso => VariantParams::new(flat, 0.0),
        Variant::Enet => VariantParams::new(flat, c_enet),
        Variant::AdaLasso => VariantParams::new(adaptive, 0.0),
        Variant::Csde => VariantParams::new(adaptive, c_adaptive),
    })
}
