//! Oracle-inequality right-hand sides, coherence conditions and the
//! support-recovery probability bound.
//!
//! Every function takes the already-evaluated `v` it needs, since three
//! different deflations of δ appear: `v(δ/2) = sqrt(log(2W/δ)/n)` for the
//! density bounds and `v(δ/2W) = sqrt(log(2W²/δ)/n)` for the ℓ1 bounds
//! and the support conditions.

use std::f64::consts::SQRT_2;

use crate::dictionary::{inner_product, BaseDensity, Dictionary, GramMatrix};
use crate::error::{check_len, invalid, CsdeError, Result};
use crate::weights::{v_half_delta, v_half_delta_over_w, WeightSpec};

/// `12 · F · H · ρ* · sqrt(W(β)) ≤ γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub holds: bool,
}

pub fn coherence_condition_t1(h: f64, f: f64, rho_star: f64, w_beta: usize, gamma: f64) -> Result<ConditionCheck> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let lhs = 12.0 * f * h * rho_star * (w_beta as f64).sqrt();
    Ok(ConditionCheck {
        lhs,
        holds: lhs <= gamma,
    })
}

/// Optimal α and the bound value at that α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBound {
    pub alpha: f64,
    pub rhs: f64,
}

/// Right-hand side of the coherence-based density oracle inequality at
/// `α`: `(α+1)/(α−1)·A + 18α²/(α−1)·H²v²W(β)`.
pub fn oracle_rhs_t1(alpha: f64, approx_error: f64, h: f64, v_half: f64, w_beta: usize) -> f64 {
    let rem = h * h * v_half * v_half * w_beta as f64;
    (alpha + 1.0) / (alpha - 1.0) * approx_error + 18.0 * alpha * alpha / (alpha - 1.0) * rem
}

pub fn oracle_bound_t1(approx_error: f64, h: f64, v_half: f64, w_beta: usize) -> Result<OracleBound> {
    if !(approx_error >= 0.0) {
        return Err(invalid(format!("approximation error must be >= 0, got {approx_error}")));
    }
    if w_beta == 0 || !(h > 0.0) || !(v_half > 0.0) {
        return Err(invalid("oracle bound needs W(beta) >= 1, H > 0, v > 0"));
    }
    let rem = h * h * v_half * v_half * w_beta as f64;
    let alpha = 1.0 + (1.0 + approx_error / (9.0 * rem)).sqrt();
    Ok(OracleBound {
        alpha,
        rhs: oracle_rhs_t1(alpha, approx_error, h, v_half, w_beta),
    })
}

/// Right-hand side of the eigenvalue-based density oracle inequality at `α`.
pub fn oracle_rhs_t2(alpha: f64, approx_error: f64, g: f64, lambda_w: f64, v_half: f64) -> f64 {
    (alpha + 1.0) / (alpha - 1.0) * approx_error
        + 576.0 * alpha * alpha / (alpha - 1.0) * g / lambda_w * v_half * v_half
}

pub fn oracle_bound_t2(approx_error: f64, g: f64, lambda_w: f64, v_half: f64) -> Result<OracleBound> {
    if !(lambda_w > 0.0) {
        return Err(CsdeError::ConditionViolated(format!(
            "Gram matrix is not positive definite (lambda_W = {lambda_w})"
        )));
    }
    if !(approx_error >= 0.0) {
        return Err(invalid(format!("approximation error must be >= 0, got {approx_error}")));
    }
    let scale = 288.0 * g / lambda_w * v_half * v_half;
    let alpha = if scale > 0.0 {
        1.0 + (1.0 + approx_error / scale).sqrt()
    } else if approx_error == 0.0 {
        2.0
    } else {
        f64::INFINITY
    };
    let rhs = if alpha.is_finite() {
        oracle_rhs_t2(alpha, approx_error, g, lambda_w, v_half)
    } else {
        approx_error
    };
    Ok(OracleBound { alpha, rhs })
}

/// ℓ1 bound `72√2 v W(β*) / (1−γ) · (L + L_min)² / L_min`.
pub fn corollary1_bound(v_dw: f64, w_star: usize, l: f64, l_min: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(l_min > 0.0 && l >= l_min) {
        return Err(invalid(format!("need L >= L_min > 0, got L = {l}, L_min = {l_min}")));
    }
    Ok(72.0 * SQRT_2 * v_dw * w_star as f64 / (1.0 - gamma) * (l + l_min).powi(2) / l_min)
}

/// ℓ1 bound `288√2 v G* / (L_min λ_W)`.
pub fn corollary2_bound(v_dw: f64, g_star: f64, l_min: f64, lambda_w: f64) -> Result<f64> {
    if !(lambda_w > 0.0) {
        return Err(CsdeError::ConditionViolated(format!("lambda_W = {lambda_w} must be positive")));
    }
    if !(l_min > 0.0) {
        return Err(invalid(format!("L_min = {l_min} must be positive")));
    }
    Ok(288.0 * SQRT_2 * v_dw * g_star / (l_min * lambda_w))
}

/// `ρ*(β*) ≤ L·L_min·λ_W / (288 G*)`.
pub fn check_condition_a(rho_star: f64, l: f64, l_min: f64, lambda_w: f64, g_star: f64) -> Result<bool> {
    if !(g_star > 0.0) {
        return Err(invalid(format!("G* = {g_star} must be positive")));
    }
    Ok(rho_star <= l * l_min * lambda_w / (288.0 * g_star))
}

/// Beta-min: `min_{j∈I*} |β*_j| ≥ 4√2 v L`. An empty support passes.
pub fn check_condition_b(beta_star: &[f64], v_dw: f64, l: f64) -> bool {
    let min_signal = beta_star
        .iter()
        .filter(|b| **b != 0.0)
        .map(|b| b.abs())
        .fold(f64::INFINITY, f64::min);
    if !min_signal.is_finite() {
        return true;
    }
    min_signal >= 4.0 * SQRT_2 * v_dw * l
}

/// Lower bound `1 − (4W (δ/(2W²))^{(1−ε*)²} + 2δ)` on the probability of
/// exact support recovery. May be negative.
pub fn theorem3_probability(w: usize, delta: f64, eps_star: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    if !(0.0..1.0).contains(&eps_star) {
        return Err(invalid(format!("eps* must lie in [0, 1), got {eps_star}")));
    }
    let wf = w as f64;
    let base = delta / (2.0 * wf * wf);
    Ok(1.0 - (4.0 * wf * base.powf((1.0 - eps_star).powi(2)) + 2.0 * delta))
}

/// A law known in closed form as a finite mixture of base densities.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLaw {
    pub components: Vec<(f64, BaseDensity)>,
}

impl MixtureLaw {
    pub fn single(base: BaseDensity) -> Self {
        Self {
            components: vec![(1.0, base)],
        }
    }

    /// `E h(Y)` for `Y` drawn from this law.
    pub fn expectation_of(&self, h: &BaseDensity) -> Result<f64> {
        self.components
            .iter()
            .map(|(w, comp)| inner_product(h, comp).map(|ip| w * ip))
            .sum()
    }
}

/// `ε_k = |E h_k(X) − E h_k(Z)|`.
pub fn contamination_bias(base: &BaseDensity, clean: &MixtureLaw, contaminated: &MixtureLaw) -> Result<f64> {
    Ok((contaminated.expectation_of(base)? - clean.expectation_of(base)?).abs())
}

/// `ε*_k = ε_k / (√2 v(δ/2W) L)`.
pub fn eps_star(eps: f64, v_dw: f64, l: f64) -> f64 {
    eps / (SQRT_2 * v_dw * l)
}

/// Fraction of replications with `lhs ≤ bound`.
pub fn empirical_coverage(lhs: &[f64], bounds: &[f64]) -> Result<f64> {
    check_len(lhs.len(), bounds.len())?;
    if lhs.is_empty() {
        return Ok(0.0);
    }
    let hit = lhs.iter().zip(bounds).filter(|(a, b)| a <= b).count();
    Ok(hit as f64 / lhs.len() as f64)
}

/// Inputs for [`diagnose`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseParams {
    pub n: usize,
    pub delta: f64,
    pub gamma: f64,
    /// `‖h_β − h‖²`; 0 when β is the truth.
    pub approx_error: f64,
    /// Largest contamination bias `max_k ε_k`, if known.
    pub max_eps: Option<f64>,
}

impl Default for DiagnoseParams {
    fn default() -> Self {
        Self {
            n: 100,
            delta: 0.1,
            gamma: 0.5,
            approx_error: 0.0,
            max_eps: None,
        }
    }
}

/// Full set of theory quantities for a coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDiagnostics {
    pub w: usize,
    pub n: usize,
    pub delta: f64,
    pub gamma: f64,
    pub v_half: f64,
    pub v_dw: f64,
    pub h: f64,
    pub f: f64,
    pub rho_max: f64,
    pub rho_star: f64,
    pub sparse_index: usize,
    pub w_beta: usize,
    pub lambda_w: f64,
    pub g: f64,
    pub g_star: f64,
    pub l: f64,
    pub l_min: f64,
    pub gamma_condition_lhs: f64,
    pub gamma_condition_holds: bool,
    pub alpha_opt1: Option<f64>,
    pub bound_t1: Option<f64>,
    /// `None` when λ_W ≤ 0.
    pub alpha_opt2: Option<f64>,
    pub bound_t2: Option<f64>,
    pub bound_c1: Option<f64>,
    pub bound_c2: Option<f64>,
    pub condition_a: Option<bool>,
    pub condition_b: bool,
    pub theorem3_probability: Option<f64>,
    pub theorem3_vacuous: bool,
}

/// Evaluates every diagnostic for `beta` (treated as the reference
/// coefficient vector) under concentration weights with `c = 0`.
pub fn diagnose(dict: &Dictionary, gram: &GramMatrix, beta: &[f64], params: &DiagnoseParams) -> Result<OracleDiagnostics> {
    let w = dict.len();
    check_len(w, beta.len())?;
    let n = params.n;
    let v_half = v_half_delta(params.delta, n, w)?;
    let v_dw = v_half_delta_over_w(params.delta, n, w)?;
    let weights = WeightSpec {
        c: 0.0,
        ..crate::weights::csde_weights(dict, n, params.delta, 0.0, 1.0)?
    };
    let support: Vec<usize> = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect();
    let norms = dict.l2_norms();
    let sup = dict.sup_norms();
    let h = support
        .iter()
        .map(|&j| weights.omega[j] / (v_half * norms[j]))
        .fold(0.0, f64::max);
    let f = (0..w)
        .map(|j| norms[j] / (2.0 * SQRT_2 * sup[j]))
        .fold(0.0, f64::max);
    let coh = gram.coherence_stats(&support)?;
    let lambda_w = gram.min_eigenvalue();
    let g: f64 = support.iter().map(|&j| sup[j] * sup[j]).sum();
    let l = sup.iter().copied().fold(0.0, f64::max);
    let l_min = sup.iter().copied().fold(f64::INFINITY, f64::min);
    let w_beta = support.len();
    let cond = coherence_condition_t1(h, f, coh.rho_star, w_beta, params.gamma)?;

    let t1 = if w_beta > 0 {
        Some(oracle_bound_t1(params.approx_error, h, v_half, w_beta)?)
    } else {
        None
    };
    let t2 = if lambda_w > 0.0 {
        Some(oracle_bound_t2(params.approx_error, g, lambda_w, v_half)?)
    } else {
        None
    };
    let gamma_open = params.gamma < 1.0;
    let bound_c1 = if gamma_open {
        Some(corollary1_bound(v_dw, w_beta, l, l_min, params.gamma)?)
    } else {
        None
    };
    let bound_c2 = if lambda_w > 0.0 {
        Some(corollary2_bound(v_dw, g, l_min, lambda_w)?)
    } else {
        None
    };
    let condition_a = if lambda_w > 0.0 && g > 0.0 {
        Some(check_condition_a(coh.rho_star, l, l_min, lambda_w, g)?)
    } else {
        None
    };
    let eps = params.max_eps.unwrap_or(0.0);
    let es = eps_star(eps, v_dw, l);
    let t3 = if params.delta < 0.5 && es < 1.0 {
        Some(theorem3_probability(w, params.delta, es)?)
    } else {
        None
    };
    Ok(OracleDiagnostics {
        w,
        n,
        delta: params.delta,
        gamma: params.gamma,
        v_half,
        v_dw,
        h,
        f,
        rho_max: coh.rho_max,
        rho_star: coh.rho_star,
        sparse_index: coh.sparse_index,
        w_beta,
        lambda_w,
        g,
        g_star: g,
        l,
        l_min,
        gamma_condition_lhs: cond.lhs,
        gamma_condition_holds: cond.holds,
        alpha_opt1: t1.map(|b| b.alpha),
        bound_t1: t1.map(|b| b.rhs),
        alpha_opt2: t2.map(|b| b.alpha),
        bound_t2: t2.map(|b| b.rhs),
        bound_c1,
        bound_c2,
        condition_a,
        condition_b: check_condition_b(beta, v_dw, l),
        theorem3_probability: t3,
        theorem3_vacuous: t3.is_none_or(|p| p <= 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coherence_condition_examples() {
        let c = coherence_condition_t1(5.0, 2.0, 0.0, 8, 0.01).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);
        let c = coherence_condition_t1(1.0, 1.0, 0.01, 4, 0.5).unwrap();
        assert_abs_diff_eq!(c.lhs, 0.24, epsilon = 1e-15);
        assert!(c.holds);
        assert!(!coherence_condition_t1(1.0, 1.0, 0.01, 4, 0.1).unwrap().holds);
        assert!(coherence_condition_t1(1.0, 1.0, 0.01, 4, 0.0).is_err());
    }

    #[test]
    fn t1_examples() {
        let b = oracle_bound_t1(0.0, 1.0, 0.3, 8).unwrap();
        assert_eq!(b.alpha, 2.0);
        assert_abs_diff_eq!(b.rhs, 51.84, epsilon = 1e-12);
        // rhs/A − 1 decays like 1/sqrt(A): about 1.02% at A = 1e6
        let b = oracle_bound_t1(1e6, 1.0, 0.3, 8).unwrap();
        assert_abs_diff_eq!(b.rhs / 1e6, 1.010_208_290_6, epsilon = 1e-9);
        let b = oracle_bound_t1(1e8, 1.0, 0.3, 8).unwrap();
        assert!(b.rhs / 1e8 - 1.0 < 0.01);
        assert!(oracle_bound_t1(-1.0, 1.0, 0.3, 8).is_err());
    }

    #[test]
    fn t2_examples() {
        let b = oracle_bound_t2(0.0, 0.8, 0.5, 0.3).unwrap();
        assert_eq!(b.alpha, 2.0);
        assert_abs_diff_eq!(b.rhs, 331.776, epsilon = 1e-10);
        assert!(matches!(
            oracle_bound_t2(0.0, 0.8, 0.0, 0.3),
            Err(CsdeError::ConditionViolated(_))
        ));
    }

    #[test]
    fn corollary_examples() {
        let c1 = corollary1_bound(0.35, 8, 0.4, 0.4, 0.5).unwrap();
        assert_abs_diff_eq!(c1, 72.0 * SQRT_2 * 0.35 * 8.0 * 2.0 * 1.6, epsilon = 1e-10);
        assert_abs_diff_eq!(c1, 912.34, epsilon = 0.01);
        assert_eq!(corollary1_bound(0.35, 0, 0.4, 0.4, 0.5).unwrap(), 0.0);
        assert!(corollary1_bound(0.35, 8, 0.4, 0.4, 1.0).is_err());

        let c2 = corollary2_bound(0.35, 1.28, 0.4, 0.5).unwrap();
        assert_abs_diff_eq!(c2, 912.34, epsilon = 0.01);
        assert_eq!(corollary2_bound(0.35, 0.0, 0.4, 0.5).unwrap(), 0.0);
        let half = corollary2_bound(0.35, 1.28, 0.4, 0.25).unwrap();
        assert_abs_diff_eq!(half, 2.0 * c2, epsilon = 1e-9);
        assert!(corollary2_bound(0.35, 1.28, 0.0, 0.5).is_err());
    }

    #[test]
    fn condition_examples() {
        assert!(check_condition_a(0.0, 0.4, 0.4, 1.0, 0.32).unwrap());
        assert!(!check_condition_a(0.01, 0.4, 0.4, 1.0, 0.32).unwrap());
        let thr = 0.4 * 0.4 * 1.0 / (288.0 * 0.32);
        assert!(check_condition_a(thr, 0.4, 0.4, 1.0, 0.32).unwrap());

        assert!(check_condition_b(&[0.1, 0.0, 0.9], 0.01, 0.4));
        assert!(!check_condition_b(&[0.01, 0.0, 0.99], 0.01, 0.4));
        assert!(check_condition_b(&[1e-9], 0.0, 0.4));
        assert!(check_condition_b(&[0.0, 0.0], 0.3, 0.4));
    }

    #[test]
    fn theorem3_examples() {
        assert_abs_diff_eq!(theorem3_probability(10, 0.1, 0.0).unwrap(), 0.78, epsilon = 1e-12);
        let near_one = theorem3_probability(10, 0.1, 1.0 - 1e-9).unwrap();
        assert!((near_one - (1.0 - (40.0 + 0.2))).abs() < 1e-6);
        assert!(theorem3_probability(10, 0.5, 0.0).is_err());
        let a = theorem3_probability(2, 0.48, 0.0).unwrap();
        let b = theorem3_probability(2, 0.49, 0.0).unwrap();
        assert!(b < a);
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(empirical_coverage(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), 1.0);
        assert_eq!(empirical_coverage(&[4.0, 5.0], &[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(empirical_coverage(&[1.0, 5.0], &[3.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn identical_laws_have_no_bias() {
        let g = BaseDensity::gaussian(0.0, 1.0).unwrap();
        let law = MixtureLaw::single(g.clone());
        assert_eq!(contamination_bias(&g, &law, &law).unwrap(), 0.0);
    }
}
