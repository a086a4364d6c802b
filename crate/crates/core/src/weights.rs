//! Penalty weights.
//!
//! The concentration weights are
//!
//! ```text
//! ω̃_k = 2√2 · L_k · sqrt(log(2W/δ) / n),    ω_k = ω̃_k + c·B
//! ```
//!
//! where `L_k = ‖h_k‖_∞`. The deviation `|β̃_k − E β̃_k|` exceeds `ω̃_k`
//! with probability at most `δ/W` by the bounded-difference inequality,
//! so all `W` coordinates are simultaneously within their weights with
//! probability at least `1 − δ`.

use crate::dictionary::{Dictionary, DomainKind, Point, Sample};
use crate::error::{invalid, CsdeError, Result};

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_B: f64 = 1.0;

/// Per-coordinate ℓ1 weights together with the ℓ2 coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    /// Full weights `ω_k` used in the penalty.
    pub omega: Vec<f64>,
    /// Unshifted weights `ω̃_k = ω_k − shift`.
    pub omega_tilde: Vec<f64>,
    /// ℓ2 coefficient `c`.
    pub c: f64,
    /// Coefficient bound `B`.
    pub b: f64,
    /// Additive shift applied to every weight (`cB` for the corrected
    /// estimator, 0 for flat and unshifted adaptive weights).
    pub shift: f64,
    /// Concentration parameters, when the weights came from [`csde_weights`].
    pub concentration: Option<Concentration>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub n: usize,
    pub delta: f64,
    /// `v(δ/2) = sqrt(log(2W/δ)/n)`.
    pub v_value: f64,
}

impl WeightSpec {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Identical weight `lambda1` on every coordinate.
    pub fn flat(w: usize, lambda1: f64, c: f64) -> Result<Self> {
        check_nonneg("lambda1", lambda1)?;
        check_nonneg("c", c)?;
        Ok(Self {
            omega: vec![lambda1; w],
            omega_tilde: vec![lambda1; w],
            c,
            b: DEFAULT_B,
            shift: 0.0,
            concentration: None,
        })
    }

    /// Adaptive weights `λ1 · L_k / max_j L_j + cB` with ℓ2 coefficient `c`.
    /// `lambda1` stands in for `2√2 · v(δ/2) · max_j L_j`.
    pub fn adaptive(sup_norms: &[f64], lambda1: f64, c: f64, b: f64, shifted: bool) -> Result<Self> {
        check_nonneg("lambda1", lambda1)?;
        check_nonneg("c", c)?;
        if !(b > 0.0) {
            return Err(invalid(format!("B must be positive, got {b}")));
        }
        let lmax = sup_norms.iter().copied().fold(0.0, f64::max);
        if !(lmax > 0.0 && lmax.is_finite()) {
            return Err(invalid("sup-norms must be positive and finite"));
        }
        let omega_tilde: Vec<f64> = sup_norms.iter().map(|l| lambda1 * l / lmax).collect();
        let shift = if shifted { c * b } else { 0.0 };
        Ok(Self {
            omega: omega_tilde.iter().map(|w| w + shift).collect(),
            omega_tilde,
            c,
            b,
            shift,
            concentration: None,
        })
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

/// `v(δ) = sqrt(log(W/δ) / n)`. Callers pass `δ/2`, `δ/(2W)` or similar
/// as `delta_arg` depending on context.
pub fn v(delta_arg: f64, n: usize, w: usize) -> Result<f64> {
    if !(delta_arg > 0.0 && delta_arg < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta_arg}")));
    }
    if n == 0 || w == 0 {
        return Err(invalid("n and W must be positive"));
    }
    let ratio = w as f64 / delta_arg;
    if ratio <= 1.0 {
        return Err(invalid(format!("W/delta = {ratio} must exceed 1")));
    }
    Ok((ratio.ln() / n as f64).sqrt())
}

/// `v(δ/2)` = `sqrt(log(2W/δ)/n)`.
pub fn v_half_delta(delta: f64, n: usize, w: usize) -> Result<f64> {
    v(delta / 2.0, n, w)
}

/// `v(δ/(2W))` = `sqrt(log(2W²/δ)/n)`.
pub fn v_half_delta_over_w(delta: f64, n: usize, w: usize) -> Result<f64> {
    v(delta / (2.0 * w as f64), n, w)
}

/// Concentration weights from the dictionary sup-norms.
pub fn csde_weights(dict: &Dictionary, n: usize, delta: f64, c: f64, b: f64) -> Result<WeightSpec> {
    concentration_weights(dict.sup_norms(), n, delta, c, b)
}

/// Concentration weights from explicit sup-norms `L_k`.
pub fn concentration_weights(
    sup_norms: &[f64],
    n: usize,
    delta: f64,
    c: f64,
    b: f64,
) -> Result<WeightSpec> {
    check_nonneg("c", c)?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid(format!("B must be positive, got {b}")));
    }
    let w = sup_norms.len();
    let v_value = v_half_delta(delta, n, w)?;
    let factor = 2.0 * std::f64::consts::SQRT_2 * v_value;
    let omega_tilde: Vec<f64> = sup_norms.iter().map(|l| factor * l).collect();
    let shift = c * b;
    Ok(WeightSpec {
        omega: omega_tilde.iter().map(|t| t + shift).collect(),
        omega_tilde,
        c,
        b,
        shift,
        concentration: Some(Concentration { n, delta, v_value }),
    })
}

/// `c = min_j ω̃_j / B`.
pub fn theorem1_c(omega_tilde: &[f64], b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(invalid(format!("B must be positive, got {b}")));
    }
    let m = omega_tilde
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return Err(invalid("empty weight sequence"));
    }
    Ok(m / b)
}

/// Per-atom estimate of `L_j` for discrete dictionaries: each mass function
/// evaluated at the integer nearest the sample mean. The sample mean tracks
/// the median within `sqrt(2 Var)`, which places it next to the mode of a
/// unimodal count law.
pub fn discrete_sup_norm_estimate(sample: &Sample, dict: &Dictionary) -> Result<Vec<f64>> {
    let data = match sample {
        Sample::Discrete(v) => v,
        Sample::Continuous(_) => {
            return Err(CsdeError::DomainMismatch(
                "discrete sup-norm estimate needs a count sample".into(),
            ))
        }
    };
    if data.is_empty() {
        return Err(invalid("empty sample"));
    }
    if dict.domain() != DomainKind::Discrete {
        return Err(CsdeError::DomainMismatch(
            "discrete sup-norm estimate needs a discrete dictionary".into(),
        ));
    }
    let mean = data.iter().map(|&k| k as f64).sum::<f64>() / data.len() as f64;
    let at = Point::Discrete(mean.round() as u64);
    dict.atoms().iter().map(|a| a.evaluate(at)).collect()
}
