//! EM for mixture weights when every component law is known.

use crate::dictionary::{Dictionary, Point, Sample};
use crate::error::{check_len, invalid, CsdeError, Result};

pub const DEFAULT_EM_XI: f64 = 1e-4;
pub const DEFAULT_EM_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Starting weights; `None` means uniform `1/W`.
    pub init: Option<Vec<f64>>,
    /// Stop once the largest weight change falls below this.
    pub xi: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            init: None,
            xi: DEFAULT_EM_XI,
            max_iter: DEFAULT_EM_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Observed-data log-likelihood after each update.
    pub log_likelihood: Vec<f64>,
}

/// Known-component EM:
///
/// ```text
/// r_ij = p_j h_j(x_i) / Σ_s p_s h_s(x_i),    p_j ← (1/n) Σ_i r_ij
/// ```
pub fn em_fit(sample: &Sample, dict: &Dictionary, config: &EmConfig) -> Result<EmResult> {
    let w = dict.len();
    let n = sample.len();
    if n == 0 {
        return Err(invalid("empty sample"));
    }
    if sample.kind() != dict.domain() {
        return Err(CsdeError::DomainMismatch(format!(
            "{:?} sample for a {:?} dictionary",
            sample.kind(),
            dict.domain()
        )));
    }
    if !(config.xi > 0.0) || config.max_iter == 0 {
        return Err(invalid("EM needs xi > 0 and max_iter >= 1"));
    }
    let mut p = match &config.init {
        Some(init) => {
            check_len(w, init.len())?;
            let s: f64 = init.iter().sum();
            if init.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-12 {
                return Err(invalid("EM init must be nonnegative and sum to 1"));
            }
            init.clone()
        }
        None => vec![1.0 / w as f64; w],
    };

    // component likelihoods f_ij = h_j(x_i), unscaled if the dictionary was normalized
    let mut lik = vec![0.0; n * w];
    let points: Vec<Point> = match sample {
        Sample::Continuous(v) => v.iter().map(|&x| Point::Continuous(x)).collect(),
        Sample::Discrete(v) => v.iter().map(|&k| Point::Discrete(k)).collect(),
    };
    for (i, &x) in points.iter().enumerate() {
        for (j, atom) in dict.atoms().iter().enumerate() {
            lik[i * w + j] = atom.evaluate(x)? / atom.scale();
        }
    }

    let log_lik = |p: &[f64]| -> Result<f64> {
        let mut ll = 0.0;
        for i in 0..n {
            let mix: f64 = (0..w).map(|j| p[j] * lik[i * w + j]).sum();
            if !(mix > 0.0) {
                return Err(CsdeError::DegenerateLikelihood(format!(
                    "observation {i} has zero likelihood under every component"
                )));
            }
            ll += mix.ln();
        }
        Ok(ll)
    };

    let mut history = vec![log_lik(&p)?];
    let mut iterations = 0;
    let mut converged = false;
    let mut next = vec![0.0; w];
    while iterations < config.max_iter {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &lik[i * w..(i + 1) * w];
            let mix: f64 = row.iter().zip(&p).map(|(f, q)| f * q).sum();
            for j in 0..w {
                next[j] += p[j] * row[j] / mix;
            }
        }
        let total: f64 = next.iter().sum();
        let mut change = 0.0f64;
        for j in 0..w {
            let v = next[j] / total;
            change = change.max((v - p[j]).abs());
            p[j] = v;
        }
        let ll = log_lik(&p)?;
        debug_assert!(
            ll >= history.last().unwrap() - 1e-9 * (1.0 + ll.abs()),
            "EM log-likelihood decreased"
        );
        history.push(ll);
        if change < config.xi {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        weights: p,
        iterations,
        converged,
        log_likelihood: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component() {
        let d = Dictionary::gaussian(&[0.0], &[1.0]).unwrap();
        let r = em_fit(&Sample::Continuous(vec![0.3, -1.0]), &d, &EmConfig::default()).unwrap();
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn symmetric_fixed_point() {
        let d = Dictionary::gaussian(&[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        let s = Sample::Continuous(vec![-2.0, -0.5, 0.5, 2.0]);
        let r = em_fit(&s, &d, &EmConfig::default()).unwrap();
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        assert!((r.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_likelihood() {
        let d = Dictionary::gaussian(&[0.0], &[0.1]).unwrap();
        let err = em_fit(&Sample::Continuous(vec![1e4]), &d, &EmConfig::default());
        assert!(matches!(err, Err(CsdeError::DegenerateLikelihood(_))));
    }

    #[test]
    fn bad_init_rejected() {
        let d = Dictionary::gaussian(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let cfg = EmConfig {
            init: Some(vec![0.7, 0.7]),
            ..Default::default()
        };
        assert!(em_fit(&Sample::Continuous(vec![0.0]), &d, &cfg).is_err());
    }

    #[test]
    fn poisson_components() {
        let d = Dictionary::poisson(&[1.0, 8.0]).unwrap();
        let s = Sample::Discrete(vec![0, 1, 1, 2, 7, 8, 9, 0, 1, 2]);
        let r = em_fit(&s, &d, &EmConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(r.weights[0] > r.weights[1]);
    }
}
