//! Kernel EVD builders.
//!
//! [`accumulator_build`] collects every update term and diagonalizes once;
//! [`IncrementalState`] folds terms in one at a time while honoring an error
//! budget, a rank cap and a pre-image budget.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::feature::{FeatureMatrix, KernelSpec};
use crate::linalg::{rank_p_diag_update, thin_sym_evd_abs, Matrix};
use crate::operator::KernelOperator;
use crate::reduction::reduce_to_budget;

/// Eigenvalues of `k(V, V)` below this fraction of `tr(A†·k(U,U)·A)` are
/// treated as null directions of the update.
const RESIDUAL_REL_TOL: f64 = 1e-10;

/// Budgets of the incremental builder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuilderConfig {
    /// Relative Frobenius error allowed when truncating eigenvalues.
    pub eta: f64,
    /// Maximum rank.
    pub r_max: usize,
    /// Pre-image budget factor `c`: at most `c·rank` pre-images are kept.
    pub preimage_ratio: f64,
}

impl BuilderConfig {
    pub fn new(eta: f64, r_max: usize, preimage_ratio: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid("eta must lie in (0, 1]"));
        }
        if r_max < 1 {
            return Err(invalid("r_max must be at least 1"));
        }
        if !(preimage_ratio >= 1.0) {
            return Err(invalid("pre-image ratio must be at least 1"));
        }
        Ok(Self { eta, r_max, preimage_ratio })
    }
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self { eta: 1e-12, r_max: usize::MAX, preimage_ratio: 2.0 }
    }
}

/// One term `alpha · U·A·A†·U†` of a sum being approximated.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateTerm {
    pub u: FeatureMatrix,
    pub a: Matrix,
    pub alpha: f64,
}

impl UpdateTerm {
    pub fn new(u: FeatureMatrix, a: Matrix, alpha: f64) -> Result<Self> {
        if u.is_empty() {
            return Err(invalid("update term needs at least one pre-image"));
        }
        if a.rows() != u.len() || a.cols() == 0 {
            return Err(invalid("update coefficients must be |U| x p with p >= 1"));
        }
        if !alpha.is_finite() || !a.is_finite() {
            return Err(invalid("non-finite update term"));
        }
        Ok(Self { u, a, alpha })
    }

    /// `alpha · φ(x)·φ(x)†` for a single pre-image.
    pub fn rank_one(kernel: KernelSpec, point: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::new(FeatureMatrix::new(kernel, vec![point])?, Matrix::identity(1), alpha)
    }
}

/// Orthonormal decomposition of `Σ αᵢ·Uᵢ·Aᵢ·Aᵢ†·Uᵢ†`, obtained by stacking
/// all pre-images, forming the block-diagonal coefficient matrix and running
/// a direct EVD.
pub fn accumulator_build(terms: &[UpdateTerm]) -> Result<KernelOperator> {
    let first = terms.first().ok_or_else(|| invalid("no update terms"))?;
    let mut x = FeatureMatrix::empty(first.u.kernel(), first.u.dim());
    let mut weights = Vec::new();
    for t in terms {
        x = x.concat(&t.u)?;
        weights.extend(core::iter::repeat_n(t.alpha, t.a.cols()));
    }
    let blocks: Vec<&Matrix> = terms.iter().map(|t| &t.a).collect();
    let a = Matrix::block_diag(&blocks);
    KernelOperator::assemble(x, a, weights, false).orthonormalize()
}

/// State of the incremental builder, representing `X·Y·Z·diag(D)·Z†·Y†·X†`
/// with `X·Y` orthonormal and `Z` orthogonal.
#[derive(Clone, Debug)]
pub struct IncrementalState {
    x: FeatureMatrix,
    y: Matrix,
    z: Matrix,
    d: Vec<f64>,
    config: BuilderConfig,
}

impl IncrementalState {
    pub fn new(kernel: KernelSpec, config: BuilderConfig) -> Self {
        Self { x: FeatureMatrix::empty(kernel, 0), y: Matrix::zeros(0, 0), z: Matrix::zeros(0, 0), d: Vec::new(), config }
    }

    pub fn config(&self) -> &BuilderConfig {
        &self.config
    }

    pub fn preimages(&self) -> &FeatureMatrix {
        &self.x
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.y
    }

    pub fn rotation(&self) -> &Matrix {
        &self.z
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    /// Snapshot `(X, Y·Z, D)` in orthonormal form.
    pub fn decomposition(&self) -> KernelOperator {
        KernelOperator::assemble(self.x.clone(), &self.y * &self.z, self.d.clone(), true)
    }

    /// Adds `term` to the represented operator.
    pub fn add(&mut self, term: &UpdateTerm) -> Result<()> {
        if !self.x.compatible(&term.u) {
            return Err(Error::KernelMismatch);
        }
        let r = self.rank();
        let k = term.a.cols();

        // projection of U·A onto the current basis and the Gram of the residual V
        let w = self.y.tr_mul(&(&self.x.cross_gram(&term.u)? * &term.a));
        let aka = term.a.tr_mul(&(&term.u.gram() * &term.a)).symmetrized();
        let scale = aka.trace();
        if !(scale > 0.0) {
            return Ok(());
        }
        let gv = aka.sub(&w.tr_mul(&w)).symmetrized();
        let evd = thin_sym_evd_abs(&gv, |_| RESIDUAL_REL_TOL * scale)?;
        if evd.values.iter().any(|&v| v < 0.0) {
            return Err(Error::NumericalBreakdown("residual Gram has a negative eigenvalue"));
        }
        let s = evd.rank();
        let dv_root: Vec<f64> = evd.values.iter().map(|v| libm::sqrt(*v)).collect();
        let dv_inv_root: Vec<f64> = dv_root.iter().map(|v| 1.0 / v).collect();
        let q = evd.vectors.scale_columns(&dv_inv_root);
        let q0 = if s == 0 { Matrix::identity(k) } else { evd.null_basis.clone() };

        // [[Z†·W·Q·D_v^½, Z†·W·Q0], [D_v^½, 0]]
        let ztw = self.z.tr_mul(&w);
        let mut p = Matrix::zeros(r + s, k);
        p.set_block(0, 0, &(&ztw * &q.scale_columns(&dv_root)));
        p.set_block(0, s, &(&ztw * &q0));
        p.set_block(r, 0, &Matrix::from_diag(&dv_root));
        let mut diag = self.d.clone();
        diag.resize(r + s, 0.0);
        let upd = rank_p_diag_update(&diag, term.alpha, &p)?;

        // rotation of the (X·Y | V·Q) basis
        let rot = &Matrix::block_diag(&[&self.z, &Matrix::identity(s)]) * &upd.vectors;
        let keep = truncation_rank(&upd.values, self.config.eta, self.config.r_max);
        let values = upd.values[..keep].to_vec();
        let rot_kept = rot.select_columns(&(0..keep).collect::<Vec<_>>());

        // V·Q rewritten over (X U): [[Y, −Y·W·Q], [0, A·Q]]
        let (x, y) = if s == 0 {
            (self.x.clone(), self.y.clone())
        } else {
            let n = self.x.len();
            let m = term.u.len();
            let mut y = Matrix::zeros(n + m, r + s);
            y.set_block(0, 0, &self.y);
            y.set_block(0, r, &(&(&self.y * &w) * &q).scale(-1.0));
            y.set_block(n, r, &(&term.a * &q));
            (self.x.concat(&term.u)?, y)
        };

        if keep == rot.cols() && rot.is_square() {
            self.z = rot;
            self.y = y;
        } else {
            self.y = &y * &rot_kept;
            self.z = Matrix::identity(keep);
        }
        self.x = x;
        self.d = values;
        self.enforce_preimage_budget()
    }

    fn enforce_preimage_budget(&mut self) -> Result<()> {
        let budget = self.config.preimage_ratio * self.rank() as f64;
        if (self.x.len() as f64) <= budget {
            return Ok(());
        }
        let max_preimages = libm::floor(budget) as usize;
        let (op, _) = reduce_to_budget(&self.decomposition(), max_preimages)?;
        let (x, y, d, _) = op.into_parts();
        self.z = Matrix::identity(d.len());
        self.x = x;
        self.y = y;
        self.d = d;
        Ok(())
    }
}

/// Number of leading eigenvalues (sorted by decreasing magnitude) to keep so
/// that the dropped tail has squared mass at most `(eta·‖λ‖)²` and at most
/// `r_max` remain.
fn truncation_rank(values: &[f64], eta: f64, r_max: usize) -> usize {
    let total: f64 = values.iter().map(|v| v * v).sum();
    let budget = eta * eta * total;
    let mut dropped = 0.0;
    let mut keep = values.len();
    while keep > 0 {
        let v = values[keep - 1];
        if dropped + v * v > budget {
            break;
        }
        dropped += v * v;
        keep -= 1;
    }
    keep.min(r_max)
}
