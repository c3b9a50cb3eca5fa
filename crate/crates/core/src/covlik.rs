//! Model covariance `Σ(γ) = A diag(γ) Aᴴ + σ² I`, the covariance-fitting
//! objective `ℓ(γ) = tr(Σ⁻¹ S) + log|Σ|`, its gradient, and the rank-one
//! downdate used to strip one device out of `Σ⁻¹ a_i`.
//!
//! Single solves go through the cached Cholesky factor. The per-iteration
//! forms for all devices at once use an explicit `Σ⁻¹` so that the heavy
//! products run on real matrix kernels.

use std::ops::Deref;

use nalgebra::{Cholesky, Dyn};
use serde::{Deserialize, Serialize};

use crate::linalg::Split;
use crate::model::{hermitian_part, SampleCovariance};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Floor applied to quadratic forms that are positive analytically.
pub const FORM_FLOOR: f64 = 1e-15;
/// Smallest admissible Sherman–Morrison denominator.
pub const DOWNDATE_FLOOR: f64 = 1e-12;

/// Nonnegative per-device power vector `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if let Some((i, g)) = gamma
            .iter()
            .enumerate()
            .find(|(_, g)| !(**g >= 0.0 && g.is_finite()))
        {
            return Err(Error::Domain(format!(
                "power {i} is {g}; powers must be finite and >= 0"
            )));
        }
        Ok(PowerVector(gamma))
    }

    pub fn zeros(n: usize) -> Self {
        PowerVector(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Clamps every entry at zero. Used for iterates that are nonnegative
    /// analytically but may carry `-0.0` or roundoff.
    pub(crate) fn from_clamped(mut gamma: Vec<f64>) -> Self {
        for g in &mut gamma {
            *g = g.max(0.0);
        }
        PowerVector(gamma)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PowerVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PowerVector::new(v)
    }
}

impl From<PowerVector> for Vec<f64> {
    fn from(p: PowerVector) -> Vec<f64> {
        p.0
    }
}

/// `Σ` together with its lower Cholesky factor.
#[derive(Clone, Debug)]
pub struct ModelCovariance {
    sigma: CMatrix,
    chol: Cholesky<C64, Dyn>,
}

impl ModelCovariance {
    /// Factors an explicit Hermitian positive definite matrix.
    pub fn from_matrix(sigma: CMatrix) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::InvalidDims("covariance must be square".into()));
        }
        let sigma = hermitian_part(sigma);
        let chol = checked_cholesky(&sigma)
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        Ok(ModelCovariance { sigma, chol })
    }

    pub fn sigma(&self) -> &CMatrix {
        &self.sigma
    }

    /// Lower-triangular factor `L` with `Σ = L Lᴴ`.
    pub fn factor(&self) -> CMatrix {
        self.chol.l()
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|k| l[(k, k)].re.ln()).sum::<f64>()
    }

    /// `Σ⁻¹ B` by two triangular solves.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        self.chol.solve(b)
    }

    /// Explicit `Σ⁻¹`, Hermitian.
    pub fn inverse(&self) -> CMatrix {
        hermitian_part(self.chol.inverse())
    }

    /// `tr(Σ⁻¹ S)` as a real number.
    pub fn trace_inv_times(&self, s: &CMatrix) -> f64 {
        self.chol.solve(s).trace().re
    }
}

/// `Σ = A diag(γ) Aᴴ + σ² I`, Hermitian by construction, with cached Cholesky.
pub fn assemble_covariance(a: &CMatrix, gamma: &[f64], noise_var: f64) -> Result<ModelCovariance> {
    assemble_split(&Split::new(a), gamma, noise_var)
}

fn assemble_split(a: &Split, gamma: &[f64], noise_var: f64) -> Result<ModelCovariance> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if gamma.len() != a.re.ncols() {
        return Err(Error::InvalidDims(format!(
            "gamma has length {}, pilot matrix has {} columns",
            gamma.len(),
            a.re.ncols()
        )));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(Error::Domain(format!("negative or non-finite power {g}")));
    }
    let sigma = weighted_gram(a, gamma, noise_var);
    let chol = checked_cholesky(&sigma)
        .ok_or_else(|| Error::Domain("assembled covariance is not positive definite".into()))?;
    Ok(ModelCovariance { sigma, chol })
}

/// Cholesky of a Hermitian matrix, `None` unless it is positive definite.
/// nalgebra takes complex square roots of the pivots, so a negative pivot
/// shows up as an imaginary diagonal entry instead of a failure.
fn checked_cholesky(sigma: &CMatrix) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(sigma.clone())?;
    let l = chol.l_dirty();
    let pd = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    pd.then_some(chol)
}

/// `A diag(w) Aᴴ + shift·I` for nonnegative `w`, skipping zero weights.
fn weighted_gram(a: &Split, w: &[f64], shift: f64) -> CMatrix {
    let l = a.re.nrows();
    let active: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
    let mut sigma = if active.is_empty() {
        CMatrix::zeros(l, l)
    } else {
        let root: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        a.scaled_columns(&active, &root).gram().to_complex()
    };
    for k in 0..l {
        sigma[(k, k)] += shift;
    }
    hermitian_part(sigma)
}

/// Per-device quadratic forms at the current covariance:
/// `p_i = Re(a_iᴴ Σ⁻¹ a_i)` and `q_i = Re(a_iᴴ Σ⁻¹ S Σ⁻¹ a_i)`, floored at
/// [`FORM_FLOOR`], plus `B = Σ⁻¹ A`.
#[derive(Debug, Clone)]
pub struct CoordinateForms {
    pub b: CMatrix,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn coordinate_forms(s: &CMatrix, a: &CMatrix, cov: &ModelCovariance) -> CoordinateForms {
    FormsWorkspace::new(s, a).forms(cov)
}

/// `A` and `S` held in split form across the iterations of one solve.
#[derive(Debug, Clone)]
pub(crate) struct FormsWorkspace {
    a: Split,
    s: Split,
}

impl FormsWorkspace {
    pub fn new(s: &CMatrix, a: &CMatrix) -> Self {
        FormsWorkspace {
            a: Split::new(a),
            s: Split::new(s),
        }
    }

    pub fn covariance(&self, gamma: &[f64], noise_var: f64) -> Result<ModelCovariance> {
        assemble_split(&self.a, gamma, noise_var)
    }

    pub fn forms(&self, cov: &ModelCovariance) -> CoordinateForms {
        let (b, p, q) = self.split_forms(&Split::new(&cov.inverse()));
        CoordinateForms {
            b: b.to_complex(),
            p,
            q,
        }
    }

    fn split_forms(&self, inv: &Split) -> (Split, Vec<f64>, Vec<f64>) {
        let b = inv.mul(&self.a);
        let sb = self.s.mul(&b);
        let p = self
            .a
            .column_real_dots(&b)
            .into_iter()
            .map(|x| x.max(FORM_FLOOR))
            .collect();
        let q = b
            .column_real_dots(&sb)
            .into_iter()
            .map(|x| x.max(FORM_FLOOR))
            .collect();
        (b, p, q)
    }

    /// `ℓ(γ)` and the forms `p`, `q` at `γ`, sharing one explicit inverse.
    pub fn evaluate(&self, gamma: &[f64], noise_var: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let cov = self.covariance(gamma, noise_var)?;
        let inv = Split::new(&cov.inverse());
        // S is Hermitian, so tr(Σ⁻¹ S) = Σ_jk Re(Σ⁻¹_jk conj(S_jk))
        let trace = inv.re.dot(&self.s.re) + inv.im.dot(&self.s.im);
        let (_, p, q) = self.split_forms(&inv);
        Ok((trace + cov.log_det(), p, q))
    }
}

/// `ℓ = tr(Σ⁻¹ S) + log|Σ|`.
pub fn negative_llf(s: &SampleCovariance, cov: &ModelCovariance) -> f64 {
    cov.trace_inv_times(s.matrix()) + cov.log_det()
}

/// `∂ℓ/∂γ_i = a_iᴴ Σ⁻¹ a_i − a_iᴴ Σ⁻¹ S Σ⁻¹ a_i`.
pub fn llf_gradient(s: &SampleCovariance, a: &CMatrix, cov: &ModelCovariance) -> Vec<f64> {
    let b = cov.solve(a);
    let sb = s.matrix() * &b;
    (0..a.ncols())
        .map(|i| a.column(i).dotc(&b.column(i)).re - b.column(i).dotc(&sb.column(i)).re)
        .collect()
}

/// `c_i = Σ_{∖i}⁻¹ a_i` from `b_i = Σ⁻¹ a_i`, where `Σ_{∖i} = Σ − γ_i a_i a_iᴴ`.
pub fn downdate_direction(b_i: &CVector, a_i: &CVector, gamma_i: f64) -> Result<CVector> {
    if !(gamma_i >= 0.0) {
        return Err(Error::Domain(format!("power must be >= 0, got {gamma_i}")));
    }
    if gamma_i == 0.0 {
        return Ok(b_i.clone());
    }
    let denom = 1.0 - gamma_i * a_i.dotc(b_i).re;
    if denom <= DOWNDATE_FLOOR {
        return Err(Error::Degenerate(format!(
            "rank-one downdate denominator {denom:e} is not positive"
        )));
    }
    Ok(b_i / C64::from(denom))
}
