//! Base densities, dictionaries and their Gram matrices.
//!
//! A [`Dictionary`] is an ordered list of atoms sharing one domain kind
//! (the real line, or the nonnegative integers). Inner products between
//! Gaussian atoms use the convolution identity
//! `<N(a, s²), N(b, t²)> = φ(a - b; 0, s² + t²)`; discrete inner products
//! are truncated sums whose tail is bounded by the remaining mass of each
//! factor.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_len, CsdeError, Result};
use crate::quadrature;

/// Remaining-mass threshold below which a discrete sum is truncated.
pub const DISCRETE_TAIL_MASS: f64 = 1e-12;
/// Hard cap on the truncation index of discrete sums.
pub const DISCRETE_HARD_CAP: u64 = 1_000_000;
/// Off-diagonal Gram entries with magnitude at or below this count as zero.
pub const SPARSE_INDEX_EPS: f64 = 1e-12;

/// Domain on which a base density lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Continuous,
    Discrete,
}

/// A point of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Continuous(f64),
    Discrete(u64),
}

impl Point {
    pub fn kind(&self) -> DomainKind {
        match self {
            Point::Continuous(_) => DomainKind::Continuous,
            Point::Discrete(_) => DomainKind::Discrete,
        }
    }
}

/// Observed data, all of one domain kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Continuous(Vec<f64>),
    Discrete(Vec<u64>),
}

impl Sample {
    pub fn len(&self) -> usize {
        match self {
            Sample::Continuous(v) => v.len(),
            Sample::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            Sample::Continuous(_) => DomainKind::Continuous,
            Sample::Discrete(_) => DomainKind::Discrete,
        }
    }

    /// Sub-sample at the given positions, in order.
    pub fn select(&self, idx: &[usize]) -> Sample {
        match self {
            Sample::Continuous(v) => Sample::Continuous(idx.iter().map(|&i| v[i]).collect()),
            Sample::Discrete(v) => Sample::Discrete(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            Sample::Continuous(v) => v.clone(),
            Sample::Discrete(v) => v.iter().map(|&k| k as f64).collect(),
        }
    }
}

/// The parametric family of an atom.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseKind {
    Gaussian { mu: f64, sigma: f64 },
    Poisson { lambda: f64 },
    /// `r` successes with success probability `p`; mean `r(1-p)/p`.
    NegBinomial { r: f64, p: f64 },
    /// Mass function over an explicit finite support; zero elsewhere.
    Tabulated { values: BTreeMap<u64, f64> },
}

/// One dictionary atom: a density times a positive scale factor.
///
/// The scale is 1 for a genuine density and `1/‖h‖` after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDensity {
    kind: BaseKind,
    scale: f64,
}

fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

impl BaseDensity {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CsdeError::InvalidArgument(format!(
                "gaussian needs finite mu and positive sigma, got ({mu}, {sigma})"
            )));
        }
        Ok(Self::from_kind(BaseKind::Gaussian { mu, sigma }))
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CsdeError::InvalidArgument(format!(
                "poisson rate must be positive, got {lambda}"
            )));
        }
        Ok(Self::from_kind(BaseKind::Poisson { lambda }))
    }

    pub fn neg_binomial(r: f64, p: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) || !(p > 0.0 && p <= 1.0) {
            return Err(CsdeError::InvalidArgument(format!(
                "negative binomial needs r > 0 and p in (0, 1], got ({r}, {p})"
            )));
        }
        Ok(Self::from_kind(BaseKind::NegBinomial { r, p }))
    }

    /// Negative binomial with mean `mean` and variance `mean + mean²/r`.
    pub fn neg_binomial_with_mean(r: f64, mean: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(CsdeError::InvalidArgument(format!(
                "negative binomial mean must be positive, got {mean}"
            )));
        }
        Self::neg_binomial(r, r / (mean + r))
    }

    pub fn tabulated(values: BTreeMap<u64, f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CsdeError::InvalidArgument("empty tabulated support".into()));
        }
        if values.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CsdeError::InvalidArgument(
                "tabulated values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self::from_kind(BaseKind::Tabulated { values }))
    }

    fn from_kind(kind: BaseKind) -> Self {
        Self { kind, scale: 1.0 }
    }

    pub fn kind(&self) -> &BaseKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same atom multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            scale: self.scale * factor,
        }
    }

    pub fn domain(&self) -> DomainKind {
        match self.kind {
            BaseKind::Gaussian { .. } => DomainKind::Continuous,
            _ => DomainKind::Discrete,
        }
    }

    /// Mean of the underlying (unscaled) law.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            BaseKind::Gaussian { mu, .. } => *mu,
            BaseKind::Poisson { lambda } => *lambda,
            BaseKind::NegBinomial { r, p } => r * (1.0 - p) / p,
            BaseKind::Tabulated { values } => {
                let total: f64 = values.values().sum();
                values.iter().map(|(k, v)| *k as f64 * v).sum::<f64>() / total
            }
        }
    }

    /// Pointwise value `h(x)`.
    pub fn evaluate(&self, x: Point) -> Result<f64> {
        match (self.domain(), x) {
            (DomainKind::Continuous, Point::Continuous(x)) => Ok(self.eval_continuous(x)),
            (DomainKind::Discrete, Point::Discrete(k)) => Ok(self.eval_discrete(k)),
            (d, p) => Err(CsdeError::DomainMismatch(format!(
                "{:?} point passed to a {d:?} base density",
                p.kind()
            ))),
        }
    }

    /// Density at a real point. Discrete atoms return 0.
    pub(crate) fn eval_continuous(&self, x: f64) -> f64 {
        match self.kind {
            BaseKind::Gaussian { mu, sigma } => self.scale * gaussian_pdf(x, mu, sigma),
            _ => 0.0,
        }
    }

    /// Mass at an integer point. Continuous atoms return 0.
    pub(crate) fn eval_discrete(&self, k: u64) -> f64 {
        let kf = k as f64;
        let mass = match &self.kind {
            BaseKind::Gaussian { .. } => 0.0,
            BaseKind::Poisson { lambda } => {
                (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp()
            }
            BaseKind::NegBinomial { r, p } => {
                if *p == 1.0 {
                    if k == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (ln_gamma(kf + r) - ln_gamma(*r) - ln_gamma(kf + 1.0)
                        + r * p.ln()
                        + kf * (1.0 - p).ln())
                    .exp()
                }
            }
            BaseKind::Tabulated { values } => values.get(&k).copied().unwrap_or(0.0),
        };
        self.scale * mass
    }

    /// Integer mode(s) candidates of a discrete atom.
    fn discrete_mode(&self) -> u64 {
        match &self.kind {
            BaseKind::Poisson { lambda } => lambda.floor() as u64,
            BaseKind::NegBinomial { r, p } => {
                if *r > 1.0 {
                    ((r - 1.0) * (1.0 - p) / p).floor() as u64
                } else {
                    0
                }
            }
            BaseKind::Tabulated { values } => values
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| *k)
                .unwrap_or(0),
            BaseKind::Gaussian { .. } => 0,
        }
    }

    /// `‖h‖_∞`: the value at the mode.
    pub fn sup_norm(&self) -> f64 {
        match &self.kind {
            BaseKind::Gaussian { mu, .. } => self.eval_continuous(*mu),
            BaseKind::Tabulated { values } => {
                self.scale * values.values().copied().fold(0.0, f64::max)
            }
            _ => {
                let m = self.discrete_mode();
                let lo = m.saturating_sub(1);
                (lo..=m + 1)
                    .map(|k| self.eval_discrete(k))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Total mass of the unscaled law (1 for the parametric kinds).
    fn unscaled_total(&self) -> f64 {
        match &self.kind {
            BaseKind::Tabulated { values } => values.values().sum(),
            _ => 1.0,
        }
    }

    /// Smallest `K` such that the unscaled mass beyond `K` is below
    /// [`DISCRETE_TAIL_MASS`], capped at [`DISCRETE_HARD_CAP`].
    pub fn tail_index(&self) -> u64 {
        if let BaseKind::Tabulated { values } = &self.kind {
            return *values.keys().next_back().unwrap_or(&0);
        }
        let total = self.unscaled_total();
        let mode = self.discrete_mode();
        let mut cum = 0.0;
        let mut k = 0u64;
        loop {
            let m = self.eval_discrete(k) / self.scale;
            cum += m;
            if total - cum < DISCRETE_TAIL_MASS {
                return k;
            }
            if k > mode && m < f64::MIN_POSITIVE {
                return k;
            }
            if k >= DISCRETE_HARD_CAP {
                return DISCRETE_HARD_CAP;
            }
            k += 1;
        }
    }

    /// Integration window covering all but a negligible tail of a
    /// continuous atom.
    pub(crate) fn continuous_window(&self) -> (f64, f64) {
        match self.kind {
            BaseKind::Gaussian { mu, sigma } => (mu - 40.0 * sigma, mu + 40.0 * sigma),
            _ => (0.0, 0.0),
        }
    }

    /// `‖h‖ = (∫ h²)^{1/2}` (or the square root of `Σ h(k)²`).
    pub fn l2_norm(&self) -> Result<f64> {
        let sq = match &self.kind {
            BaseKind::Gaussian { sigma, .. } => {
                self.scale * self.scale / (2.0 * sigma * PI.sqrt())
            }
            _ => inner_product(self, self)?,
        };
        if !(sq.is_finite() && sq >= 0.0) {
            return Err(CsdeError::NumericalFailure(format!(
                "squared L2 norm is {sq} for {:?}",
                self.kind
            )));
        }
        Ok(sq.sqrt())
    }
}

/// `<a, b>` by the closed form for Gaussians, truncated summation for
/// discrete atoms.
pub fn inner_product(a: &BaseDensity, b: &BaseDensity) -> Result<f64> {
    if a.domain() != b.domain() {
        return Err(CsdeError::DomainMismatch(format!(
            "inner product of {:?} and {:?} atoms",
            a.domain(),
            b.domain()
        )));
    }
    match (&a.kind, &b.kind) {
        (
            BaseKind::Gaussian { mu: m1, sigma: s1 },
            BaseKind::Gaussian { mu: m2, sigma: s2 },
        ) => {
            let s = (s1 * s1 + s2 * s2).sqrt();
            Ok(a.scale * b.scale * gaussian_pdf(m1 - m2, 0.0, s))
        }
        _ => {
            let cutoff = a.tail_index().max(b.tail_index());
            Ok(inner_product_truncated(a, b, cutoff))
        }
    }
}

/// `Σ_{k=0}^{cutoff} a(k) b(k)` for discrete atoms.
pub fn inner_product_truncated(a: &BaseDensity, b: &BaseDensity, cutoff: u64) -> f64 {
    (0..=cutoff)
        .map(|k| a.eval_discrete(k) * b.eval_discrete(k))
        .sum()
}

/// `<a, b>` for continuous atoms by adaptive quadrature. Test oracle and
/// fallback path.
pub fn inner_product_quadrature(a: &BaseDensity, b: &BaseDensity) -> Result<f64> {
    if a.domain() != DomainKind::Continuous || b.domain() != DomainKind::Continuous {
        return Err(CsdeError::DomainMismatch(
            "quadrature inner product needs continuous atoms".into(),
        ));
    }
    let (lo_a, hi_a) = a.continuous_window();
    let (lo_b, hi_b) = b.continuous_window();
    let (lo, hi) = (lo_a.max(lo_b), hi_a.min(hi_b));
    if lo >= hi {
        return Ok(0.0);
    }
    let r = quadrature::integrate(
        |x| a.eval_continuous(x) * b.eval_continuous(x),
        lo,
        hi,
        1e-300,
        1e-12,
    )?;
    Ok(r.value)
}

/// Symmetric matrix of pairwise inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

/// Local-coherence summary over a support set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceStats {
    /// `max_{i∈I} max_{j≠i} |ρ(i,j)|`.
    pub rho_max: f64,
    /// `Σ_{i∈I} Σ_{j>i} |ρ(i,j)|`.
    pub rho_star: f64,
    /// Number of strictly-lower-triangle nonzeros.
    pub sparse_index: usize,
}

impl GramMatrix {
    /// Wraps a square matrix, mirroring the upper triangle to enforce exact
    /// symmetry.
    pub fn from_matrix(mut entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(CsdeError::InvalidArgument(format!(
                "gram matrix must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(CsdeError::InvalidArgument("non-finite gram entry".into()));
        }
        let w = entries.nrows();
        for i in 0..w {
            for j in 0..i {
                entries[(i, j)] = entries[(j, i)];
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let w = rows.len();
        for r in rows {
            check_len(w, r.len())?;
        }
        Self::from_matrix(DMatrix::from_fn(w, w, |i, j| rows[i][j]))
    }

    pub fn identity(w: usize) -> Self {
        Self {
            entries: DMatrix::identity(w, w),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `ψ x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let w = self.dim();
        (0..w)
            .map(|i| (0..w).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `xᵀ ψ x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Smallest eigenvalue from a symmetric eigendecomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Normalized correlation `ρ(i,j) = ψ_ij / sqrt(ψ_ii ψ_jj)`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.get(i, j) / (self.get(i, i) * self.get(j, j)).sqrt()
    }

    pub fn sparse_index(&self) -> usize {
        let w = self.dim();
        (0..w)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j).abs() > SPARSE_INDEX_EPS)
            .count()
    }

    /// Coherence statistics over a 0-based support. An empty support gives
    /// `rho_max = rho_star = 0`.
    pub fn coherence_stats(&self, support: &[usize]) -> Result<CoherenceStats> {
        let w = self.dim();
        if let Some(&bad) = support.iter().find(|&&i| i >= w) {
            return Err(CsdeError::InvalidArgument(format!(
                "support index {bad} out of range for W = {w}"
            )));
        }
        let mut rho_max = 0.0f64;
        let mut rho_star = 0.0;
        for &i in support {
            for j in 0..w {
                if j == i {
                    continue;
                }
                let r = self.correlation(i, j).abs();
                rho_max = rho_max.max(r);
                if j > i {
                    rho_star += r;
                }
            }
        }
        Ok(CoherenceStats {
            rho_max,
            rho_star,
            sparse_index: self.sparse_index(),
        })
    }
}

/// Per-atom factors mapping normalized-dictionary coefficients back to the
/// original densities: `β_j = scale_j · β'_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord {
    pub scales: Vec<f64>,
}

impl ScalingRecord {
    pub fn to_original(&self, beta_normalized: &[f64]) -> Vec<f64> {
        beta_normalized
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b * s)
            .collect()
    }

    pub fn to_normalized(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.scales).map(|(b, s)| b / s).collect()
    }
}

/// Ordered collection of atoms over one domain kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<BaseDensity>,
    domain: DomainKind,
    l2_norms: Vec<f64>,
    sup_norms: Vec<f64>,
    normalized: bool,
}

impl Dictionary {
    pub fn new(atoms: Vec<BaseDensity>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| CsdeError::InvalidDictionary("dictionary needs W >= 1".into()))?;
        let domain = first.domain();
        if let Some(pos) = atoms.iter().position(|a| a.domain() != domain) {
            return Err(CsdeError::DomainMismatch(format!(
                "atom {pos} is {:?} but atom 0 is {domain:?}",
                atoms[pos].domain()
            )));
        }
        let l2_norms = atoms
            .par_iter()
            .map(|a| a.l2_norm())
            .collect::<Result<Vec<_>>>()?;
        let sup_norms = atoms.iter().map(|a| a.sup_norm()).collect();
        Ok(Self {
            atoms,
            domain,
            l2_norms,
            sup_norms,
            normalized: false,
        })
    }

    /// Gaussian atoms `N(mu_j, sigma_j²)`.
    pub fn gaussian(mus: &[f64], sigmas: &[f64]) -> Result<Self> {
        check_len(mus.len(), sigmas.len())?;
        let atoms = mus
            .iter()
            .zip(sigmas)
            .map(|(&m, &s)| BaseDensity::gaussian(m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn poisson(lambdas: &[f64]) -> Result<Self> {
        let atoms = lambdas
            .iter()
            .map(|&l| BaseDensity::poisson(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[BaseDensity] {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &BaseDensity {
        &self.atoms[j]
    }

    pub fn domain(&self) -> DomainKind {
        self.domain
    }

    pub fn l2_norms(&self) -> &[f64] {
        &self.l2_norms
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Largest truncation index over all atoms (discrete dictionaries).
    pub fn tail_index(&self) -> u64 {
        self.atoms.iter().map(|a| a.tail_index()).max().unwrap_or(0)
    }

    /// Gram matrix `ψ_W`.
    pub fn gram(&self) -> Result<GramMatrix> {
        let w = self.len();
        let mut m = DMatrix::zeros(w, w);
        match self.domain {
            DomainKind::Continuous => {
                let rows: Vec<Vec<f64>> = (0..w)
                    .into_par_iter()
                    .map(|i| {
                        (i..w)
                            .map(|j| {
                                inner_product(&self.atoms[i], &self.atoms[j]).map_err(|e| {
                                    CsdeError::GramEntry {
                                        i,
                                        j,
                                        source: Box::new(e),
                                    }
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (i, row) in rows.into_iter().enumerate() {
                    for (off, v) in row.into_iter().enumerate() {
                        m[(i, i + off)] = v;
                    }
                }
            }
            DomainKind::Discrete => {
                // tabulate every atom once up to its own tail index; a pair is
                // summed up to the larger of the two indices
                let tails: Vec<u64> = self.atoms.iter().map(|a| a.tail_index()).collect();
                let kmax = *tails.iter().max().unwrap() as usize;
                let tables: Vec<Vec<f64>> = self
                    .atoms
                    .par_iter()
                    .map(|a| (0..=kmax as u64).map(|k| a.eval_discrete(k)).collect())
                    .collect();
                for i in 0..w {
                    for j in i..w {
                        let cutoff = tails[i].max(tails[j]) as usize;
                        let v: f64 = tables[i][..=cutoff]
                            .iter()
                            .zip(&tables[j][..=cutoff])
                            .map(|(a, b)| a * b)
                            .sum();
                        if !v.is_finite() {
                            return Err(CsdeError::GramEntry {
                                i,
                                j,
                                source: Box::new(CsdeError::NumericalFailure(format!(
                                    "non-finite sum {v}"
                                ))),
                            });
                        }
                        m[(i, j)] = v;
                    }
                }
            }
        }
        GramMatrix::from_matrix(m)
    }

    /// Scales every atom to unit L2 norm.
    pub fn normalize(&self) -> Result<(Dictionary, ScalingRecord)> {
        if self.normalized {
            return Ok((
                self.clone(),
                ScalingRecord {
                    scales: vec![1.0; self.len()],
                },
            ));
        }
        if let Some(j) = self
            .l2_norms
            .iter()
            .position(|n| !(n.is_finite() && *n > 0.0))
        {
            return Err(CsdeError::InvalidDictionary(format!(
                "atom {j} has L2 norm {}",
                self.l2_norms[j]
            )));
        }
        let scales: Vec<f64> = self.l2_norms.iter().map(|n| 1.0 / n).collect();
        let atoms: Vec<BaseDensity> = self
            .atoms
            .iter()
            .zip(&scales)
            .map(|(a, s)| a.scaled(*s))
            .collect();
        let sup_norms = self
            .sup_norms
            .iter()
            .zip(&scales)
            .map(|(l, s)| l * s)
            .collect();
        Ok((
            Dictionary {
                atoms,
                domain: self.domain,
                l2_norms: vec![1.0; self.len()],
                sup_norms,
                normalized: true,
            },
            ScalingRecord { scales },
        ))
    }

    /// `h_β(x) = Σ β_j h_j(x)`.
    pub fn mixture_value(&self, beta: &[f64], x: Point) -> Result<f64> {
        check_len(self.len(), beta.len())?;
        let mut acc = 0.0;
        for (a, b) in self.atoms.iter().zip(beta) {
            if *b != 0.0 {
                acc += b * a.evaluate(x)?;
            }
        }
        Ok(acc)
    }

    /// Row vector `(h_1(x), ..., h_W(x))` for one observation.
    pub fn evaluate_all(&self, x: Point, out: &mut [f64]) -> Result<()> {
        for (o, a) in out.iter_mut().zip(&self.atoms) {
            *o = a.evaluate(x)?;
        }
        Ok(())
    }

    /// Continuous window `[min μ − pad·σ_max, max μ + pad·σ_max]`.
    pub fn continuous_range(&self, pad: f64) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut smax = 0.0f64;
        for a in &self.atoms {
            if let BaseKind::Gaussian { mu, sigma } = a.kind {
                lo = lo.min(mu);
                hi = hi.max(mu);
                smax = smax.max(sigma);
            } else {
                return None;
            }
        }
        Some((lo - pad * smax, hi + pad * smax))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_evaluation() {
        let g = BaseDensity::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            g.evaluate(Point::Continuous(0.0)).unwrap(),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        let h = BaseDensity::gaussian(3.0, 0.25).unwrap();
        assert_abs_diff_eq!(
            h.evaluate(Point::Continuous(3.0)).unwrap(),
            1.0 / (0.25 * (2.0 * PI).sqrt()),
            epsilon = 1e-14
        );
    }

    #[test]
    fn poisson_evaluation() {
        let p = BaseDensity::poisson(1.0).unwrap();
        assert_abs_diff_eq!(
            p.evaluate(Point::Discrete(0)).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn domain_mismatch_on_evaluate() {
        let p = BaseDensity::poisson(1.0).unwrap();
        assert!(matches!(
            p.evaluate(Point::Continuous(0.5)),
            Err(CsdeError::DomainMismatch(_))
        ));
        let g = BaseDensity::gaussian(0.0, 1.0).unwrap();
        assert!(g.evaluate(Point::Discrete(1)).is_err());
    }

    #[test]
    fn sup_norms() {
        assert_abs_diff_eq!(
            BaseDensity::gaussian(0.0, 1.0).unwrap().sup_norm(),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            BaseDensity::poisson(0.5).unwrap().sup_norm(),
            (-0.5f64).exp(),
            epsilon = 1e-14
        );
        // tie at k = 0 and k = 1
        assert_abs_diff_eq!(
            BaseDensity::poisson(1.0).unwrap().sup_norm(),
            (-1.0f64).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn point_mass_norm() {
        let t = BaseDensity::tabulated(BTreeMap::from([(0, 1.0)])).unwrap();
        assert_abs_diff_eq!(t.l2_norm().unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(t.evaluate(Point::Discrete(5)).unwrap(), 0.0);
    }

    #[test]
    fn mixed_domain_inner_product_fails() {
        let g = BaseDensity::gaussian(0.0, 1.0).unwrap();
        let p = BaseDensity::poisson(1.0).unwrap();
        assert!(matches!(
            inner_product(&g, &p),
            Err(CsdeError::DomainMismatch(_))
        ));
        assert!(Dictionary::new(vec![g, p]).is_err());
    }

    #[test]
    fn empty_dictionary_rejected() {
        assert!(matches!(
            Dictionary::new(vec![]),
            Err(CsdeError::InvalidDictionary(_))
        ));
    }

    #[test]
    fn neg_binomial_moments() {
        let nb = BaseDensity::neg_binomial_with_mean(6.0, 2.0).unwrap();
        let k = nb.tail_index();
        let mut mean = 0.0;
        let mut second = 0.0;
        for i in 0..=k {
            let m = nb.eval_discrete(i);
            mean += i as f64 * m;
            second += (i * i) as f64 * m;
        }
        assert_abs_diff_eq!(mean, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(second - mean * mean, 2.0 + 4.0 / 6.0, epsilon = 1e-8);
    }

    #[test]
    fn coherence_examples() {
        let id = GramMatrix::identity(3);
        let s = id.coherence_stats(&[0, 2]).unwrap();
        assert_eq!((s.rho_max, s.rho_star, s.sparse_index), (0.0, 0.0, 0));

        let g = GramMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = g.coherence_stats(&[0]).unwrap();
        assert_eq!((s.rho_max, s.rho_star, s.sparse_index), (0.5, 0.5, 1));

        let s = g.coherence_stats(&[]).unwrap();
        assert_eq!((s.rho_max, s.rho_star, s.sparse_index), (0.0, 0.0, 1));

        assert!(g.coherence_stats(&[2]).is_err());
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert_abs_diff_eq!(GramMatrix::identity(4).min_eigenvalue(), 1.0, epsilon = 1e-12);
        let g = GramMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_abs_diff_eq!(g.min_eigenvalue(), 0.5, epsilon = 1e-12);
        let g = GramMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(g.min_eigenvalue(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = Dictionary::gaussian(&[0.0, 1.0], &[1.0, 0.5]).unwrap();
        let (n1, rec) = d.normalize().unwrap();
        assert!(n1.is_normalized());
        assert_abs_diff_eq!(rec.scales[0], 1.0 / 0.531_125_966_013_598_4, epsilon = 1e-12);
        for a in n1.atoms() {
            assert_abs_diff_eq!(a.l2_norm().unwrap(), 1.0, epsilon = 1e-10);
        }
        let (n2, rec2) = n1.normalize().unwrap();
        assert_eq!(n1, n2);
        assert!(rec2.scales.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn gram_reports_bad_entry_pair() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(GramMatrix::from_matrix(bad).is_err());
    }
}
