//! Coordinate descent for the corrected sparse density objective
//!
//! ```text
//! F(β) = −2 Σ_j β_j β̃_j + βᵀ ψ β + 2 Σ_j ω_j |β_j| + c Σ_j β_j²
//! ```
//!
//! where `β̃_j = (1/n) Σ_i h_j(X_i)` and `ψ` is the Gram matrix. The
//! constant `‖h‖²` is omitted. Each coordinate step is the exact
//! minimizer along that axis, a (nonnegative) soft threshold. Once the
//! signed support stops changing between sweeps, the quadratic restricted
//! to that support is solved exactly, which removes the slow tail of
//! coordinate descent on strongly correlated atoms.

use std::fmt;
use std::str::FromStr;

use crate::dictionary::{Dictionary, GramMatrix, Point, Sample};
use crate::error::{check_len, invalid, CsdeError, Result};
use crate::weights::{WeightSpec, DEFAULT_B};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// `β̃_j = (1/n) Σ_i h_j(X_i)`.
pub fn empirical_moments(dict: &Dictionary, sample: &Sample) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(invalid("empty sample"));
    }
    if sample.kind() != dict.domain() {
        return Err(CsdeError::DomainMismatch(format!(
            "{:?} sample for a {:?} dictionary",
            sample.kind(),
            dict.domain()
        )));
    }
    let w = dict.len();
    let mut acc = vec![0.0; w];
    let mut row = vec![0.0; w];
    let n = sample.len();
    let points: Box<dyn Iterator<Item = Point>> = match sample {
        Sample::Continuous(v) => Box::new(v.iter().map(|&x| Point::Continuous(x))),
        Sample::Discrete(v) => Box::new(v.iter().map(|&k| Point::Discrete(k))),
    };
    for p in points {
        dict.evaluate_all(p, &mut row)?;
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += r;
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

/// One instance of the penalized objective.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub beta_tilde: Vec<f64>,
    pub gram: &'a GramMatrix,
    pub weights: WeightSpec,
    pub nonneg: bool,
}

impl<'a> Problem<'a> {
    pub fn new(beta_tilde: Vec<f64>, gram: &'a GramMatrix, weights: WeightSpec) -> Result<Self> {
        let w = gram.dim();
        check_len(w, beta_tilde.len())?;
        check_len(w, weights.omega.len())?;
        if beta_tilde.iter().any(|b| !b.is_finite()) {
            return Err(invalid("non-finite empirical moment"));
        }
        if weights.omega.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if !(weights.c.is_finite() && weights.c >= 0.0) {
            return Err(invalid(format!("c must be finite and nonnegative, got {}", weights.c)));
        }
        Ok(Self {
            beta_tilde,
            gram,
            weights,
            nonneg: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.beta_tilde.len()
    }

    /// Objective value without the constant `‖h‖²`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let quad = self.gram.quad_form(beta);
        let lin: f64 = beta.iter().zip(&self.beta_tilde).map(|(b, t)| b * t).sum();
        let l1: f64 = beta
            .iter()
            .zip(&self.weights.omega)
            .map(|(b, w)| w * b.abs())
            .sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        -2.0 * lin + quad + 2.0 * l1 + self.weights.c * l2
    }

    /// Same as [`Problem::objective`] with `ψβ` supplied.
    pub(crate) fn objective_given(&self, beta: &[f64], psi_beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..beta.len() {
            let b = beta[k];
            if b != 0.0 {
                acc += b * (psi_beta[k] - 2.0 * self.beta_tilde[k])
                    + 2.0 * self.weights.omega[k] * b.abs()
                    + self.weights.c * b * b;
            }
        }
        acc
    }

    /// `g_k = β̃_k − (ψβ)_k − cβ_k`.
    pub fn gradient_terms(&self, beta: &[f64]) -> Vec<f64> {
        let psi_beta = self.gram.mul_vec(beta);
        (0..self.dim())
            .map(|k| self.beta_tilde[k] - psi_beta[k] - self.weights.c * beta[k])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Keep the objective after every sweep in [`FitResult::objective_trace`].
    pub record_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    /// 0-based indices of the nonzero coefficients.
    pub support: Vec<usize>,
    pub objective: f64,
    pub kkt_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn max_kkt_residual(&self) -> f64 {
        self.kkt_residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Coefficients rescaled to sum to one. All-zero fits are returned
    /// unchanged.
    pub fn renormalized(&self) -> Vec<f64> {
        let s: f64 = self.beta_hat.iter().sum();
        if s > 0.0 {
            self.beta_hat.iter().map(|b| b / s).collect()
        } else {
            self.beta_hat.clone()
        }
    }
}

pub(crate) fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Cyclic coordinate descent from zero.
pub fn fit(problem: &Problem<'_>, options: &FitOptions) -> Result<FitResult> {
    if options.max_iter == 0 || !(options.tol > 0.0) {
        return Err(invalid("max_iter must be >= 1 and tol > 0"));
    }
    let w = problem.dim();
    let c = problem.weights.c;
    let omega = &problem.weights.omega;
    let gram = problem.gram;
    for k in 0..w {
        if !(gram.get(k, k) + c > 0.0) {
            return Err(invalid(format!(
                "coordinate {k} has zero curvature (psi_kk + c = {})",
                gram.get(k, k) + c
            )));
        }
    }

    let mut beta = vec![0.0; w];
    // ψβ, kept in sync with beta
    let mut psi_beta = vec![0.0; w];
    let mut trace = Vec::new();
    let mut prev_obj = problem.objective(&beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = Vec::new();

    while iterations < options.max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for k in 0..w {
            let diag = gram.get(k, k);
            let old = beta[k];
            let partial = problem.beta_tilde[k] - (psi_beta[k] - diag * old);
            let new = if problem.nonneg {
                (partial - omega[k]).max(0.0) / (diag + c)
            } else {
                soft_threshold(partial, omega[k]) / (diag + c)
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[k] = new;
                for (j, pb) in psi_beta.iter_mut().enumerate() {
                    *pb += gram.get(j, k) * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change >= options.tol {
            let support = signed_support(&beta);
            if !support.is_empty() {
                if let Some((b, pb)) = refine_on_face(problem, &beta, &psi_beta, &support) {
                    beta = b;
                    psi_beta = pb;
                }
            }
        }
        if cfg!(debug_assertions) || options.record_objective {
            let obj = problem.objective_given(&beta, &psi_beta);
            debug_assert!(
                obj <= prev_obj + 1e-10 * (1.0 + prev_obj.abs()),
                "objective increased from {prev_obj} to {obj}"
            );
            prev_obj = obj;
            if options.record_objective {
                trace.push(obj);
            }
        }
        if max_change < options.tol {
            // resync to shed accumulated rounding in psi_beta
            psi_beta = gram.mul_vec(&beta);
            kkt = kkt_residuals(problem, &beta);
            if kkt.iter().copied().fold(0.0, f64::max) <= 10.0 * options.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_residuals(problem, &beta);
        converged = kkt.iter().copied().fold(0.0, f64::max) <= 10.0 * options.tol;
    }
    Ok(FitResult {
        support: support_of(&beta),
        objective: problem.objective(&beta),
        kkt_residuals: kkt,
        iterations,
        converged,
        objective_trace: trace,
        beta_hat: beta,
    })
}

fn signed_support(beta: &[f64]) -> Vec<(usize, bool)> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, b)| (i, *b > 0.0))
        .collect()
}

// Active-set refinement. On the current signed support A the objective is
// a quadratic minimized by (ψ_AA + cI) x = β̃_A − ω_A·s_A. Step from β toward
// x; if a coordinate would change sign, stop there, drop it and repeat on the
// smaller face. Accepted only if the objective does not rise.
fn refine_on_face(
    problem: &Problem<'_>,
    beta: &[f64],
    psi_beta: &[f64],
    support: &[(usize, bool)],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut face = support.to_vec();
    let mut candidate = beta.to_vec();
    while !face.is_empty() {
        let (next, blocking) = face_step(problem, &candidate, &face)?;
        candidate = next;
        match blocking {
            Some(r) => {
                face.remove(r);
            }
            None => break,
        }
    }
    let mut psi_candidate = psi_beta.to_vec();
    for &(j, _) in support {
        let d = candidate[j] - beta[j];
        if d != 0.0 {
            for (k, p) in psi_candidate.iter_mut().enumerate() {
                *p += problem.gram.get(k, j) * d;
            }
        }
    }
    let before = problem.objective_given(beta, psi_beta);
    let after = problem.objective_given(&candidate, &psi_candidate);
    (after <= before).then_some((candidate, psi_candidate))
}

// One step toward the face minimizer; returns the new point and the
// position in `face` of the coordinate that hit zero, if any.
fn face_step(problem: &Problem<'_>, beta: &[f64], face: &[(usize, bool)]) -> Option<(Vec<f64>, Option<usize>)> {
    let m = face.len();
    let c = problem.weights.c;
    let a = nalgebra::DMatrix::from_fn(m, m, |r, q| {
        problem.gram.get(face[r].0, face[q].0) + if r == q { c } else { 0.0 }
    });
    let rhs = nalgebra::DVector::from_fn(m, |r, _| {
        let (j, pos) = face[r];
        let sgn = if pos { 1.0 } else { -1.0 };
        problem.beta_tilde[j] - problem.weights.omega[j] * sgn
    });
    let x = a.cholesky()?.solve(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut t = 1.0f64;
    let mut blocking = None;
    for (r, &(j, pos)) in face.iter().enumerate() {
        let crosses = if pos { x[r] <= 0.0 } else { x[r] >= 0.0 };
        if crosses {
            let tr = beta[j] / (beta[j] - x[r]);
            if tr < t || blocking.is_none() && tr <= t {
                t = tr;
                blocking = Some(r);
            }
        }
    }
    let mut next = beta.to_vec();
    for (r, &(j, _)) in face.iter().enumerate() {
        next[j] = beta[j] + t * (x[r] - beta[j]);
    }
    if let Some(r) = blocking {
        next[face[r].0] = 0.0;
    }
    Some((next, blocking))
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Closed-form solution for an orthonormal dictionary:
/// `β̂_j = (1 − ω_j/|β̃_j|)₊ β̃_j / (1 + c)`, clamped at zero.
pub fn fit_orthogonal(beta_tilde: &[f64], weights: &[f64], c: f64) -> Result<FitResult> {
    check_len(beta_tilde.len(), weights.len())?;
    if !(c >= 0.0) {
        return Err(invalid(format!("c must be nonnegative, got {c}")));
    }
    let beta: Vec<f64> = beta_tilde
        .iter()
        .zip(weights)
        .map(|(&t, &w)| {
            if t == 0.0 {
                0.0
            } else {
                ((1.0 - w / t.abs()).max(0.0) * t / (1.0 + c)).max(0.0)
            }
        })
        .collect();
    let w = beta.len();
    let gram = GramMatrix::identity(w);
    let spec = WeightSpec {
        omega: weights.to_vec(),
        omega_tilde: weights.to_vec(),
        c,
        b: DEFAULT_B,
        shift: 0.0,
        concentration: None,
    };
    let problem = Problem::new(beta_tilde.to_vec(), &gram, spec)?;
    let kkt = kkt_residuals(&problem, &beta);
    Ok(FitResult {
        support: support_of(&beta),
        objective: problem.objective(&beta),
        converged: true,
        kkt_residuals: kkt,
        iterations: 0,
        objective_trace: Vec::new(),
        beta_hat: beta,
    })
}

/// Per-coordinate optimality residuals.
pub fn kkt_residuals(problem: &Problem<'_>, beta: &[f64]) -> Vec<f64> {
    let g = problem.gradient_terms(beta);
    let omega = &problem.weights.omega;
    (0..beta.len())
        .map(|k| {
            if beta[k] != 0.0 {
                (g[k] - omega[k] * beta[k].signum()).abs()
            } else if problem.nonneg {
                // β_k = 0 sits on the boundary: only an upward pull violates
                (g[k] - omega[k]).max(0.0)
            } else {
                (g[k].abs() - omega[k]).max(0.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub max_residual: f64,
    /// 0-based coordinates whose residual exceeds the tolerance.
    pub violations: Vec<usize>,
}

pub fn kkt_check(result: &FitResult, problem: &Problem<'_>, tol: f64) -> Result<KktReport> {
    check_len(problem.dim(), result.beta_hat.len())?;
    let r = kkt_residuals(problem, &result.beta_hat);
    Ok(KktReport {
        max_residual: r.iter().copied().fold(0.0, f64::max),
        violations: r
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > tol)
            .map(|(i, _)| i)
            .collect(),
    })
}

/// Estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Flat weights, no ℓ2 term.
    Lasso,
    /// Flat weights with ℓ2 coefficient λ2.
    Enet,
    /// Sup-norm-adaptive weights, no ℓ2 term.
    AdaLasso,
    /// Sup-norm-adaptive weights shifted by cB, ℓ2 coefficient c = λ2.
    Csde,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lasso, Variant::Enet, Variant::AdaLasso, Variant::Csde];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Lasso => "lasso",
            Variant::Enet => "enet",
            Variant::AdaLasso => "adalasso",
            Variant::Csde => "csde",
        }
    }

    /// Penalty weights for this variant.
    pub fn weights(&self, dict: &Dictionary, lambda1: f64, lambda2: f64, b: f64) -> Result<WeightSpec> {
        let w = dict.len();
        match self {
            Variant::Lasso => WeightSpec::flat(w, lambda1, 0.0),
            Variant::Enet => WeightSpec::flat(w, lambda1, lambda2),
            Variant::AdaLasso => WeightSpec::adaptive(dict.sup_norms(), lambda1, 0.0, b, false),
            Variant::Csde => WeightSpec::adaptive(dict.sup_norms(), lambda1, lambda2, b, true),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CsdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lasso" => Ok(Variant::Lasso),
            "enet" => Ok(Variant::Enet),
            "adalasso" => Ok(Variant::AdaLasso),
            "csde" => Ok(Variant::Csde),
            other => Err(invalid(format!(
                "unknown variant '{other}' (expected lasso|enet|adalasso|csde)"
            ))),
        }
    }
}

/// Tuning knobs shared by all variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub b: f64,
}

impl VariantParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            b: DEFAULT_B,
        }
    }
}

/// Fits a variant from precomputed empirical moments.
pub fn fit_variant_moments(
    variant: Variant,
    beta_tilde: Vec<f64>,
    dict: &Dictionary,
    gram: &GramMatrix,
    params: VariantParams,
    options: &FitOptions,
) -> Result<FitResult> {
    let weights = variant.weights(dict, params.lambda1, params.lambda2, params.b)?;
    let problem = Problem::new(beta_tilde, gram, weights)?;
    fit(&problem, options)
}

/// Fits a variant on a sample.
pub fn fit_variant(
    variant: Variant,
    sample: &Sample,
    dict: &Dictionary,
    gram: &GramMatrix,
    params: VariantParams,
    options: &FitOptions,
) -> Result<FitResult> {
    let bt = empirical_moments(dict, sample)?;
    fit_variant_moments(variant, bt, dict, gram, params, options)
}
