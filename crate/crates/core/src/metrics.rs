//! Estimation error metrics.

use crate::dictionary::{Dictionary, DomainKind};
use crate::error::{check_len, Result};

/// Number of grid points for continuous TV integration.
pub const TV_GRID_POINTS: usize = 20_001;
/// Padding, in units of the largest atom scale, around the atom locations.
pub const TV_PADDING_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub l1: f64,
    pub tv: f64,
    pub support_exact: bool,
    pub precision: f64,
    pub recall: f64,
}

impl ErrorReport {
    pub fn compute(dict: &Dictionary, beta_hat: &[f64], beta_star: &[f64]) -> Result<Self> {
        let l1 = l1_error(beta_hat, beta_star)?;
        let tv = tv_error(dict, beta_hat, beta_star)?;
        let s = support_metrics(&nonzero(beta_hat), &nonzero(beta_star));
        Ok(Self {
            l1,
            tv,
            support_exact: s.exact,
            precision: s.precision,
            recall: s.recall,
        })
    }
}

fn nonzero(beta: &[f64]) -> Vec<usize> {
    crate::solver::support_of(beta)
}

/// `Σ_j |a_j − b_j|`.
pub fn l1_error(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `∫ |h_a − h_b|` (or the sum over the integers) with the default grid.
pub fn tv_error(dict: &Dictionary, beta_a: &[f64], beta_b: &[f64]) -> Result<f64> {
    tv_error_with_grid(dict, beta_a, beta_b, TV_GRID_POINTS)
}

/// Like [`tv_error`] with an explicit number of grid points for continuous
/// dictionaries (ignored for discrete ones).
pub fn tv_error_with_grid(
    dict: &Dictionary,
    beta_a: &[f64],
    beta_b: &[f64],
    points: usize,
) -> Result<f64> {
    check_len(dict.len(), beta_a.len())?;
    check_len(dict.len(), beta_b.len())?;
    let diff: Vec<(usize, f64)> = beta_a
        .iter()
        .zip(beta_b)
        .map(|(a, b)| a - b)
        .enumerate()
        .filter(|(_, d)| *d != 0.0)
        .collect();
    if diff.is_empty() {
        return Ok(0.0);
    }
    let value = match dict.domain() {
        DomainKind::Continuous => {
            let (lo, hi) = dict
                .continuous_range(TV_PADDING_SIGMAS)
                .expect("continuous dictionary has gaussian atoms");
            let step = (hi - lo) / (points - 1) as f64;
            let f = |x: f64| -> f64 {
                diff.iter()
                    .map(|&(j, d)| d * dict.atom(j).eval_continuous(x))
                    .sum::<f64>()
                    .abs()
            };
            let mut acc = 0.5 * (f(lo) + f(hi));
            for i in 1..points - 1 {
                acc += f(lo + i as f64 * step);
            }
            acc * step
        }
        DomainKind::Discrete => {
            let cutoff = diff
                .iter()
                .map(|&(j, _)| dict.atom(j).tail_index())
                .max()
                .unwrap_or(0);
            (0..=cutoff)
                .map(|k| {
                    diff.iter()
                        .map(|&(j, d)| d * dict.atom(j).eval_discrete(k))
                        .sum::<f64>()
                        .abs()
                })
                .sum()
        }
    };
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub exact: bool,
    pub precision: f64,
    pub recall: f64,
}

/// Set agreement between an estimated and a true support. Empty estimated
/// support has precision 1; empty true support has recall 1.
pub fn support_metrics(support_hat: &[usize], support_star: &[usize]) -> SupportMetrics {
    let mut hat = support_hat.to_vec();
    let mut star = support_star.to_vec();
    hat.sort_unstable();
    hat.dedup();
    star.sort_unstable();
    star.dedup();
    let common = hat.iter().filter(|i| star.binary_search(i).is_ok()).count();
    SupportMetrics {
        exact: hat == star,
        precision: if hat.is_empty() {
            1.0
        } else {
            common as f64 / hat.len() as f64
        },
        recall: if star.is_empty() {
            1.0
        } else {
            common as f64 / star.len() as f64
        },
    }
}
