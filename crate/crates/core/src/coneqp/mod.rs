//! Cone QP for L1-regularized pre-image fitting.
//!
//! The problem solved is
//!
//! ```text
//! minimize   Σ_q β_q†·K′·β_q − 2·α_q†·K″·β_q + λ·Σ_i ξ_i
//! subject to ν_q·|(G0·β_q)_k| ≤ (J·ξ)_k   for every block q
//! ```
//!
//! over `x = (β_1, …, β_r, ξ)`. For real kernels `K′ = K″ = K`, `G0 = Id`
//! and `J = Id`; complex kernels are embedded as real matrices of twice the
//! size. The variables `ξ` bound the largest scaled coefficient of each
//! pre-image, so a positive `λ` pushes whole rows of coefficients to zero.
//!
//! [`kkt_factorize`] exploits the block structure of the Newton system and
//! [`ipm_solve`] runs a primal-dual interior-point method on top of it.

mod ipm;
mod kkt;

pub use ipm::{ipm_solve, IpmConfig, IpmSolution, IpmStatus};
pub use kkt::{dense_kkt, kkt_factorize, kkt_solve, KktFactor, KktVector};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, solve_triangular, Matrix, Side, Triangle, SYMMETRY_TOL};
use crate::operator::KernelOperator;

/// Whether the kernel is real or complex valued.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

/// Real embedding of a Gram matrix `K = Re K + i·Im K` of `n` pre-images.
#[derive(Clone, Debug, PartialEq)]
pub struct GramEmbedding {
    pub field: Field,
    /// Number of pre-images.
    pub n: usize,
    /// `K` (real) or `[[Re K, −Im K], [Im K, Re K]]` (complex).
    pub k_prime: Matrix,
    /// `K` (real) or `[[Re K, Im K], [−Im K, Re K]]` (complex).
    pub k_dprime: Matrix,
    /// `Id` (real) or `[[Id, Id], [Id, −Id]]` (complex).
    pub g0: Matrix,
    /// Lower Cholesky factor of `K′`.
    pub chol: Matrix,
}

impl GramEmbedding {
    /// Length of one coefficient block `β_q`: `n` or `2n`.
    pub fn block_len(&self) -> usize {
        match self.field {
            Field::Real => self.n,
            Field::Complex => 2 * self.n,
        }
    }

    /// `J·ξ` for one block.
    pub(crate) fn j_mul(&self, xi: &[f64]) -> Vec<f64> {
        match self.field {
            Field::Real => xi.to_vec(),
            Field::Complex => xi.iter().chain(xi).copied().collect(),
        }
    }

    /// `J†·w` for one block.
    pub(crate) fn jt_mul(&self, w: &[f64]) -> Vec<f64> {
        match self.field {
            Field::Real => w.to_vec(),
            Field::Complex => (0..self.n).map(|i| w[i] + w[i + self.n]).collect(),
        }
    }

    /// Dense `J`.
    pub fn j(&self) -> Matrix {
        match self.field {
            Field::Real => Matrix::identity(self.n),
            Field::Complex => Matrix::identity(self.n).vstack(&Matrix::identity(self.n)),
        }
    }
}

/// Builds the real embedding of `k_re + i·k_im` and factors `K′`.
///
/// `k_re` must be symmetric, `k_im` (when given) antisymmetric, and the
/// resulting Hermitian matrix positive definite.
pub fn embed_gram(k_re: &Matrix, k_im: Option<&Matrix>) -> Result<GramEmbedding> {
    if !k_re.is_square() || !k_re.is_finite() {
        return Err(invalid("Gram matrix must be square and finite"));
    }
    let n = k_re.rows();
    if n == 0 {
        return Err(invalid("Gram matrix must be non-empty"));
    }
    let scale = k_re.max_abs().max(k_im.map_or(0.0, Matrix::max_abs)).max(f64::MIN_POSITIVE);
    if k_re.asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric);
    }
    let Some(k_im) = k_im else {
        let k = k_re.symmetrized();
        let chol = cholesky(&k).map_err(|_| Error::Factorization { block: "K" })?;
        return Ok(GramEmbedding { field: Field::Real, n, k_dprime: k.clone(), k_prime: k, g0: Matrix::identity(n), chol });
    };
    if k_im.rows() != n || k_im.cols() != n || !k_im.is_finite() {
        return Err(invalid("imaginary part must match the real part"));
    }
    if k_im.add(&k_im.transpose()).max_abs() > SYMMETRY_TOL * scale {
        return Err(invalid("imaginary part must be antisymmetric"));
    }
    let re = k_re.symmetrized();
    let im = k_im.sub(&k_im.transpose()).scale(0.5);
    let neg_im = im.scale(-1.0);
    let mut kp = Matrix::zeros(2 * n, 2 * n);
    kp.set_block(0, 0, &re);
    kp.set_block(0, n, &neg_im);
    kp.set_block(n, 0, &im);
    kp.set_block(n, n, &re);
    let kdp = kp.transpose();

    // block Cholesky: A11·A11† = Re K, A21·A11† = Im K, A22·A22† = Re K − A21·A21†
    let a11 = cholesky(&re).map_err(|_| Error::Factorization { block: "K" })?;
    let a21 = solve_triangular(&a11, &im, Triangle::Lower, true, Side::Right)?;
    let schur = re.sub(&(&a21 * &a21.transpose())).symmetrized();
    let a22 = cholesky(&schur).map_err(|_| Error::Factorization { block: "K" })?;
    let mut chol = Matrix::zeros(2 * n, 2 * n);
    chol.set_block(0, 0, &a11);
    chol.set_block(n, 0, &a21);
    chol.set_block(n, n, &a22);

    let id = Matrix::identity(n);
    let mut g0 = Matrix::zeros(2 * n, 2 * n);
    g0.set_block(0, 0, &id);
    g0.set_block(0, n, &id);
    g0.set_block(n, 0, &id);
    g0.set_block(n, n, &id.scale(-1.0));
    Ok(GramEmbedding { field: Field::Complex, n, k_prime: kp, k_dprime: kdp, g0, chol })
}

/// One instance of the cone QP.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub embedding: GramEmbedding,
    /// Targets `α_q`, one per block, each of length `block_len`.
    pub alphas: Vec<Vec<f64>>,
    /// Constraint scales `ν_q > 0`.
    pub nus: Vec<f64>,
    pub lambda: f64,
}

impl QpProblem {
    pub fn new(embedding: GramEmbedding, alphas: Vec<Vec<f64>>, nus: Vec<f64>, lambda: f64) -> Result<Self> {
        let len = embedding.block_len();
        if alphas.is_empty() || alphas.len() != nus.len() {
            return Err(invalid("need one scale per target block and at least one block"));
        }
        if alphas.iter().any(|a| a.len() != len || a.iter().any(|v| !v.is_finite())) {
            return Err(invalid("target blocks must match the embedded Gram size"));
        }
        if nus.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("constraint scales must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda must be non-negative"));
        }
        Ok(Self { embedding, alphas, nus, lambda })
    }

    /// Number of blocks `r`.
    pub fn blocks(&self) -> usize {
        self.alphas.len()
    }

    /// Length of `x = (β_1, …, β_r, ξ)`.
    pub fn num_vars(&self) -> usize {
        self.blocks() * self.embedding.block_len() + self.embedding.n
    }

    /// Number of inequality constraints.
    pub fn num_constraints(&self) -> usize {
        2 * self.blocks() * self.embedding.block_len()
    }

    /// Linear term `c = (−K″·α_1, …, −K″·α_r, λ/2·1)`, so that the objective
    /// is `x†·H·x + 2·c†·x`.
    pub fn linear_term(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.num_vars());
        for a in &self.alphas {
            c.extend(self.embedding.k_dprime.mul_vec(a).into_iter().map(|v| -v));
        }
        c.extend(core::iter::repeat_n(0.5 * self.lambda, self.embedding.n));
        c
    }

    /// Dense `H = blockdiag(K′, …, K′, 0)`.
    pub fn dense_h(&self) -> Matrix {
        let len = self.embedding.block_len();
        let mut h = Matrix::zeros(self.num_vars(), self.num_vars());
        for q in 0..self.blocks() {
            h.set_block(q * len, q * len, &self.embedding.k_prime);
        }
        h
    }

    /// Dense `G = [[−S, −J_r], [S, −J_r]]` with `S = blockdiag(ν_q·G0)`, so
    /// that the constraints read `G·x ≤ 0`.
    pub fn dense_g(&self) -> Matrix {
        let len = self.embedding.block_len();
        let r = self.blocks();
        let half = r * len;
        let j = self.embedding.j();
        let mut g = Matrix::zeros(2 * half, self.num_vars());
        for q in 0..r {
            let s = self.embedding.g0.scale(self.nus[q]);
            g.set_block(q * len, q * len, &s.scale(-1.0));
            g.set_block(half + q * len, q * len, &s);
            g.set_block(q * len, half, &j.scale(-1.0));
            g.set_block(half + q * len, half, &j.scale(-1.0));
        }
        g
    }

    /// `x†·H·x + 2·c†·x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h_mul(x);
        let c = self.linear_term();
        x.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>() + 2.0 * x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
    }

    pub(crate) fn h_mul(&self, x: &[f64]) -> Vec<f64> {
        let len = self.embedding.block_len();
        let mut out = vec![0.0; x.len()];
        for q in 0..self.blocks() {
            let b = self.embedding.k_prime.mul_vec(&x[q * len..(q + 1) * len]);
            out[q * len..(q + 1) * len].copy_from_slice(&b);
        }
        out
    }

    pub(crate) fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        let len = self.embedding.block_len();
        let half = self.blocks() * len;
        let jxi = self.embedding.j_mul(&x[half..]);
        let mut out = vec![0.0; 2 * half];
        for q in 0..self.blocks() {
            let sb = self.embedding.g0.mul_vec(&x[q * len..(q + 1) * len]);
            for k in 0..len {
                let v = self.nus[q] * sb[k];
                out[q * len + k] = -v - jxi[k];
                out[half + q * len + k] = v - jxi[k];
            }
        }
        out
    }

    pub(crate) fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let len = self.embedding.block_len();
        let half = self.blocks() * len;
        let mut out = vec![0.0; self.num_vars()];
        let mut xi = vec![0.0; self.embedding.n];
        for q in 0..self.blocks() {
            let (z1, z2) = (&z[q * len..(q + 1) * len], &z[half + q * len..half + (q + 1) * len]);
            let diff: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| b - a).collect();
            let sum: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| a + b).collect();
            let gd = self.embedding.g0.tr_mul_vec(&diff);
            for k in 0..len {
                out[q * len + k] = self.nus[q] * gd[k];
            }
            for (acc, v) in xi.iter_mut().zip(self.embedding.jt_mul(&sum)) {
                *acc -= v;
            }
        }
        out[half..].copy_from_slice(&xi);
        out
    }
}

/// QP fitting an orthonormal operator `(X, A, D)` with `α_q = σ_q·A_q` and
/// `ν_q = σ_q = |D_q|^½` for a real kernel.
pub fn build_problem(op: &KernelOperator, lambda: f64) -> Result<QpProblem> {
    if !op.is_orthonormal() {
        return Err(Error::Precondition("operator must be in orthonormal form"));
    }
    if op.rank() == 0 {
        return Err(invalid("operator has rank 0"));
    }
    let emb = embed_gram(&op.preimages().gram(), None)?;
    let sigma: Vec<f64> = op.weights().iter().map(|d| libm::sqrt(d.abs())).collect();
    let a = op.coefficients();
    let alphas = (0..a.cols()).map(|q| a.column(q).iter().map(|v| v * sigma[q]).collect()).collect();
    QpProblem::new(emb, alphas, sigma, lambda)
}
