//! Operators of the form `X·Y·diag(D)·Y†·X†` and the probabilistic
//! quantities computed on them: trace, normalisation, orthonormal form,
//! probability, entropy, divergence and conditionalisation.
//!
//! `D` always stores operator eigen-weights (not their square roots), so an
//! orthonormal decomposition has spectrum exactly `D`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::feature::FeatureMatrix;
use crate::linalg::{sym_eigen, thin_sym_evd, Matrix, DEFAULT_REL_TOL};

/// Tolerance on `Y†·K·Y = Id` for decompositions flagged orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Tolerance on `tr(ρ) = 1` for operations that require a normalized density.
pub const NORMALIZED_TOL: f64 = 1e-8;

/// Traces below this are treated as zero.
pub const ZERO_TRACE: f64 = 1e-14;

/// Orthonormality error above which a refinement pass is run.
const GRAM_NOISE: f64 = 1e-12;
const REFINE_TOL: f64 = 1e-13;

/// Low-rank operator `X·Y·diag(D)·Y†·X†` over kernel pre-images.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOperator {
    x: FeatureMatrix,
    y: Matrix,
    d: Vec<f64>,
    orthonormal: bool,
}

impl KernelOperator {
    /// Validates shapes, drops columns with zero weight or zero coefficients,
    /// and checks `Y†·K·Y = Id` when `orthonormal` is set.
    pub fn new(x: FeatureMatrix, y: Matrix, d: Vec<f64>, orthonormal: bool) -> Result<Self> {
        if y.rows() != x.len() {
            return Err(invalid("Y must have one row per pre-image"));
        }
        if y.cols() != d.len() {
            return Err(invalid("Y must have one column per weight"));
        }
        if !y.is_finite() || d.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coefficients"));
        }
        let op = Self::assemble(x, y, d, orthonormal);
        if orthonormal && op.orthonormality_error() > ORTHONORMAL_TOL {
            return Err(Error::Precondition("decomposition flagged orthonormal but Y†KY != Id"));
        }
        Ok(op)
    }

    /// Empty operator (rank 0) over `x`.
    pub fn zero(x: FeatureMatrix) -> Self {
        let n = x.len();
        Self { x, y: Matrix::zeros(n, 0), d: Vec::new(), orthonormal: true }
    }

    pub(crate) fn assemble(x: FeatureMatrix, y: Matrix, d: Vec<f64>, orthonormal: bool) -> Self {
        let keep: Vec<usize> = (0..d.len()).filter(|&j| d[j] != 0.0 && y.column(j).iter().any(|v| *v != 0.0)).collect();
        if keep.len() == d.len() {
            Self { x, y, d, orthonormal }
        } else {
            let d = keep.iter().map(|&j| d[j]).collect();
            Self { y: y.select_columns(&keep), x, d, orthonormal }
        }
    }

    pub fn preimages(&self) -> &FeatureMatrix {
        &self.x
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn into_parts(self) -> (FeatureMatrix, Matrix, Vec<f64>, bool) {
        (self.x, self.y, self.d, self.orthonormal)
    }

    /// `Y†·K·Y`.
    pub fn coefficient_gram(&self) -> Matrix {
        let ky = &self.x.gram() * &self.y;
        self.y.tr_mul(&ky).symmetrized()
    }

    /// `max |Y†·K·Y − Id|`.
    pub fn orthonormality_error(&self) -> f64 {
        self.coefficient_gram().sub(&Matrix::identity(self.rank())).max_abs()
    }

    /// `tr(diag(D)·Y†·K·Y)`.
    pub fn trace(&self) -> f64 {
        if self.orthonormal {
            return self.d.iter().sum();
        }
        let g = self.coefficient_gram();
        self.d.iter().enumerate().map(|(i, di)| di * g[(i, i)]).sum()
    }

    /// Same operator with every weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> KernelOperator {
        let d = self.d.iter().map(|v| v * s).collect();
        Self::assemble(self.x.clone(), self.y.clone(), d, self.orthonormal)
    }

    /// `Y·diag(D)·Y†`: the operator expressed in the pre-image basis.
    pub fn coefficient_operator(&self) -> Matrix {
        (&self.y.scale_columns(&self.d) * &self.y.transpose()).symmetrized()
    }

    /// Orthonormal decomposition of the same operator.
    ///
    /// Non-negative weights go through a single thin EVD of
    /// `(Y·D^½)†·K·(Y·D^½)`. Mixed signs orthonormalize the positive
    /// semi-definite part `X·B·B†·X†` with `B = Y·|D|^½`, then fold
    /// `−2·X·C·C†·X†` (`C` the negative columns) back in and re-diagonalize.
    pub fn orthonormalize(&self) -> Result<KernelOperator> {
        if self.rank() == 0 {
            return Ok(Self::zero(self.x.clone()));
        }
        let k = self.x.gram();
        let sqrt_abs: Vec<f64> = self.d.iter().map(|v| libm::sqrt(libm::fabs(*v))).collect();
        let b = self.y.scale_columns(&sqrt_abs);
        let (y1, s1) = psd_orthonormal(&k, &b)?;
        if self.d.iter().all(|&v| v >= 0.0) {
            return Ok(Self::assemble(self.x.clone(), y1, s1, true));
        }
        let neg: Vec<usize> = (0..self.d.len()).filter(|&j| self.d[j] < 0.0).collect();
        let c = b.select_columns(&neg);
        let z = y1.tr_mul(&(&k * &c));
        let mut small = (&z * &z.transpose()).scale(-2.0);
        for (i, s) in s1.iter().enumerate() {
            small[(i, i)] += s;
        }
        let evd = thin_sym_evd(&small.symmetrized(), DEFAULT_REL_TOL)?;
        let y = &y1 * &evd.vectors;
        Ok(Self::assemble(self.x.clone(), y, evd.values, true))
    }

    /// Frobenius norm of the operator.
    pub fn frobenius_norm(&self) -> Result<f64> {
        if self.orthonormal {
            return Ok(libm::sqrt(self.d.iter().map(|v| v * v).sum()));
        }
        weighted_norm(&self.x.gram(), &self.coefficient_operator())
    }

    /// `‖self − other‖_F`, computed from the joint Gram matrix only.
    pub fn distance(&self, other: &KernelOperator) -> Result<f64> {
        let x = self.x.concat(&other.x)?;
        let y = Matrix::block_diag(&[&self.y, &other.y]);
        let mut d = self.d.clone();
        d.extend(other.d.iter().map(|v| -v));
        let m = (&y.scale_columns(&d) * &y.transpose()).symmetrized();
        weighted_norm(&x.gram(), &m)
    }

    /// `‖self − other‖_F / ‖self‖_F` (0 when both vanish).
    pub fn relative_distance(&self, other: &KernelOperator) -> Result<f64> {
        let num = self.distance(other)?;
        let den = self.frobenius_norm()?;
        if den == 0.0 {
            return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok(num / den)
    }
}

/// `‖X·M·X†‖_F` as `‖Λ^½·E†·M·E·Λ^½‖_F` with `K = E·Λ·E†`, avoiding the
/// cancellation of `tr(M·K·M·K)`.
///
/// Gram eigenvalues below `GRAM_NOISE·λ_max` are roundoff of a singular
/// Gram and are treated as zero; their square roots would otherwise leak
/// `√ε`-sized errors into the norm.
pub(crate) fn weighted_norm(k: &Matrix, m: &Matrix) -> Result<f64> {
    if k.rows() == 0 {
        return Ok(0.0);
    }
    let (lambda, e) = sym_eigen(k)?;
    let cutoff = GRAM_NOISE * lambda.iter().fold(0.0f64, |a, l| a.max(*l));
    let root: Vec<f64> = lambda.iter().map(|&l| if l > cutoff { libm::sqrt(l) } else { 0.0 }).collect();
    let r = e.tr_mul(&(m * &e)).scale_rows(&root).scale_columns(&root);
    Ok(r.frobenius_norm())
}

/// Orthonormal form of `X·A·A†·X†`: returns `(Y, D)` with `Y = A·E·D^{-½}`
/// where `E·D·E† = A†·K·A`.
///
/// A second pass on `Y·D^½` removes the orthonormality loss caused by an
/// ill-conditioned `A†·K·A`.
pub(crate) fn psd_orthonormal(k: &Matrix, a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let (y, values) = psd_orthonormal_pass(k, a)?;
    let gram = y.tr_mul(&(k * &y));
    if gram.sub(&Matrix::identity(values.len())).max_abs() <= REFINE_TOL {
        return Ok((y, values));
    }
    let root: Vec<f64> = values.iter().map(|v| libm::sqrt(*v)).collect();
    psd_orthonormal_pass(k, &y.scale_columns(&root))
}

fn psd_orthonormal_pass(k: &Matrix, a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let g = a.tr_mul(&(k * a)).symmetrized();
    let evd = thin_sym_evd(&g, DEFAULT_REL_TOL)?;
    let keep: Vec<usize> = (0..evd.rank()).filter(|&i| evd.values[i] > 0.0).collect();
    let values: Vec<f64> = keep.iter().map(|&i| evd.values[i]).collect();
    let inv_root: Vec<f64> = values.iter().map(|v| 1.0 / libm::sqrt(*v)).collect();
    let y = (a * &evd.vectors.select_columns(&keep)).scale_columns(&inv_root);
    Ok((y, values))
}

/// Kind of quantum event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// A projector (all weights equal to one).
    Observable,
    /// An operator with spectrum in (0, 1].
    StrictEffect,
}

/// An observable or strict effect.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    op: KernelOperator,
    kind: EventKind,
}

impl Event {
    pub fn new(op: KernelOperator, kind: EventKind) -> Result<Self> {
        match kind {
            EventKind::Observable => {
                if let Some(&v) = op.d.iter().find(|v| libm::fabs(**v - 1.0) > 1e-8) {
                    return Err(Error::InvalidEffect { value: v });
                }
            }
            EventKind::StrictEffect => {
                if let Some(&v) = op.d.iter().find(|v| !(**v > 0.0 && **v <= 1.0 + 1e-12)) {
                    return Err(Error::InvalidEffect { value: v });
                }
            }
        }
        Ok(Self { op, kind })
    }

    /// Projector onto the span of `op`.
    pub fn observable_from_span(op: &KernelOperator) -> Result<Self> {
        let o = op.orthonormalize()?;
        let r = o.rank();
        let (x, y, _, _) = o.into_parts();
        Self::new(KernelOperator::assemble(x, y, alloc::vec![1.0; r], true), EventKind::Observable)
    }

    pub fn operator(&self) -> &KernelOperator {
        &self.op
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }
}

/// Result of a divergence evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Divergence {
    Finite(f64),
    /// The support of `ρ` leaks outside the support of `τ` and no noise was added.
    Infinite,
}

impl Divergence {
    pub fn value(&self) -> f64 {
        match *self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }
}

/// A positive semi-definite operator meant to be used as a quantum density.
///
/// Densities need not be normalized: conditionalisation returns
/// unnormalized densities and [`Density::normalize`] rescales them.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    op: KernelOperator,
}

impl Density {
    pub fn new(op: KernelOperator) -> Result<Self> {
        if let Some(&v) = op.d.iter().find(|v| **v < 0.0) {
            return Err(Error::Domain { value: v });
        }
        Ok(Self { op })
    }

    pub fn operator(&self) -> &KernelOperator {
        &self.op
    }

    pub fn into_operator(self) -> KernelOperator {
        self.op
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }

    /// Zero-trace outcome of a conditionalisation.
    pub fn is_degenerate(&self) -> bool {
        self.trace() <= ZERO_TRACE
    }

    /// `ρ / tr(ρ)`.
    pub fn normalize(&self) -> Result<Density> {
        let t = self.trace();
        if !(t > ZERO_TRACE) {
            return Err(Error::DegenerateDensity);
        }
        Ok(Density { op: self.op.scaled(1.0 / t) })
    }

    fn ensure_normalized(&self) -> Result<()> {
        let t = self.trace();
        if libm::fabs(t - 1.0) > NORMALIZED_TOL {
            return Err(Error::NotNormalized { trace: t });
        }
        Ok(())
    }

    /// `diag(D_a)^½ · Y_a† · k(X_a, X_b) · Y_b · diag(D_b)^½`.
    fn overlap(a: &KernelOperator, b: &KernelOperator) -> Result<Matrix> {
        let kab = a.x.cross_gram(&b.x)?;
        let m = a.y.tr_mul(&(&kab * &b.y));
        let ra: Vec<f64> = a.d.iter().map(|v| libm::sqrt(v.max(0.0))).collect();
        let rb: Vec<f64> = b.d.iter().map(|v| libm::sqrt(v.max(0.0))).collect();
        Ok(m.scale_rows(&ra).scale_columns(&rb))
    }

    /// `tr(ρ·E) = ‖D_E^½·Y_E†·k(X_E, X_ρ)·Y_ρ·D_ρ^½‖²_F`.
    pub fn probability(&self, event: &Event) -> Result<f64> {
        self.ensure_normalized()?;
        let m = Self::overlap(&event.op, &self.op)?;
        let f = m.frobenius_norm();
        Ok(f * f)
    }

    /// `tr(ρ·ln ρ) = Σ dᵢ·ln dᵢ` (natural log; non-positive).
    pub fn entropy(&self) -> Result<f64> {
        if !self.op.orthonormal {
            return Err(Error::Precondition("entropy requires an orthonormal decomposition"));
        }
        self.ensure_normalized()?;
        let mut s = 0.0;
        for &d in &self.op.d {
            if !(d > 0.0) {
                return Err(Error::Domain { value: d });
            }
            s += d * libm::log(d);
        }
        Ok(s)
    }

    /// Umegaki divergence `tr(ρ·ln ρ) − tr(ρ·ln τ′)` against the smoothed
    /// density `τ′ = (1−ε)·τ + ε·α·Id`.
    pub fn divergence(&self, tau: &Density, epsilon: f64, alpha: f64) -> Result<Divergence> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(invalid("epsilon must lie in [0, 1)"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha must be positive"));
        }
        if !tau.op.orthonormal {
            return Err(Error::Precondition("divergence requires an orthonormal reference density"));
        }
        tau.ensure_normalized()?;
        let h = self.entropy()?;
        let kab = self.op.x.cross_gram(&tau.op.x)?;
        let root: Vec<f64> = self.op.d.iter().map(|v| libm::sqrt(*v)).collect();
        let m = self.op.y.tr_mul(&(&kab * &tau.op.y)).scale_rows(&root);
        // log-weighted column sum: Σ_j ln(λ_j)·‖M_j‖²
        let mut in_support = 0.0;
        let mut cross = 0.0;
        for (j, &dj) in tau.op.d.iter().enumerate() {
            let w: f64 = m.column(j).iter().map(|v| v * v).sum();
            let lambda = (1.0 - epsilon) * dj + epsilon * alpha;
            if !(lambda > 0.0) {
                return Err(Error::Domain { value: lambda });
            }
            cross += libm::log(lambda) * w;
            in_support += w;
        }
        let leak = 1.0 - in_support;
        if epsilon == 0.0 {
            if libm::fabs(leak) > NORMALIZED_TOL {
                return Ok(Divergence::Infinite);
            }
        } else {
            cross += libm::log(epsilon * alpha) * leak;
        }
        Ok(Divergence::Finite(h - cross))
    }

    /// Unnormalized conditional density `E^½·ρ·E^½` (or
    /// `(Id−E)^½·ρ·(Id−E)^½` when `orthogonal`).
    pub fn condition_on(&self, event: &Event, orthogonal: bool) -> Result<Density> {
        let e = &event.op;
        if !e.x.compatible(&self.op.x) {
            return Err(Error::KernelMismatch);
        }
        if (orthogonal || event.kind == EventKind::StrictEffect) && !e.orthonormal {
            return Err(Error::Precondition("conditioning on this event requires an orthonormal decomposition"));
        }
        if let Some(&v) = e.d.iter().find(|v| **v > 1.0 + 1e-12) {
            return Err(Error::InvalidEffect { value: v });
        }
        let k_er = e.x.cross_gram(&self.op.x)?;
        let proj = e.y.tr_mul(&(&k_er * &self.op.y));
        let op = if !orthogonal {
            let w: Vec<f64> = match event.kind {
                EventKind::Observable => e.d.clone(),
                EventKind::StrictEffect => e.d.iter().map(|v| libm::sqrt(*v)).collect(),
            };
            let y = &e.y.scale_columns(&w) * &proj;
            KernelOperator::assemble(e.x.clone(), y, self.op.d.clone(), false)
        } else {
            // Id − (Id − D_E)^½, clamping 1 − d at 0 for roundoff on observables
            let w: Vec<f64> = e.d.iter().map(|v| 1.0 - libm::sqrt((1.0 - v).max(0.0))).collect();
            let lower = (&e.y.scale_columns(&w) * &proj).scale(-1.0);
            let y = self.op.y.vstack(&lower);
            KernelOperator::assemble(self.op.x.concat(&e.x)?, y, self.op.d.clone(), false)
        };
        Ok(Density { op })
    }
}
