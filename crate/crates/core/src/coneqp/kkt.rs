//! Structured factorization of the interior-point Newton system.
//!
//! With unknowns ordered as `(β, z, t, ξ)` (`z`, `t` the multipliers of the
//! two constraint halves) the system matrix is
//!
//! ```text
//! [ diag(K′)   −S†    S†     0   ]
//! [   −S       −U     0    −J_r  ]
//! [    S        0    −V    −J_r  ]
//! [    0      −J_r†  −J_r†   0   ]
//! ```
//!
//! and is factored as `L·diag(Id, −Id, −Id, Id)·L†` where every block of `L`
//! except the last is block diagonal over `q`.

use alloc::vec::Vec;

use super::{Field, QpProblem};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, solve_lower_vec, solve_triangular, Matrix, Side, Triangle};

/// Vector laid out like the unknowns of the Newton system.
#[derive(Clone, Debug, PartialEq)]
pub struct KktVector {
    pub beta: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
}

impl KktVector {
    pub fn zeros(blocks: usize, block_len: usize, n: usize) -> Self {
        let b = alloc::vec![alloc::vec![0.0; block_len]; blocks];
        Self { beta: b.clone(), z: b.clone(), t: b, xi: alloc::vec![0.0; n] }
    }

    /// `(β_1, …, β_r, z_1, …, z_r, t_1, …, t_r, ξ)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.beta.iter().flatten().copied().collect();
        out.extend(self.z.iter().flatten());
        out.extend(self.t.iter().flatten());
        out.extend(&self.xi);
        out
    }

    pub fn from_flat(v: &[f64], blocks: usize, block_len: usize, n: usize) -> Result<Self> {
        if v.len() != 3 * blocks * block_len + n {
            return Err(invalid("flat vector has the wrong length"));
        }
        let take = |off: usize| (0..blocks).map(|q| v[off + q * block_len..off + (q + 1) * block_len].to_vec()).collect();
        let span = blocks * block_len;
        Ok(Self { beta: take(0), z: take(span), t: take(2 * span), xi: v[3 * span..].to_vec() })
    }
}

/// Block factors of the Newton system.
#[derive(Clone, Debug)]
pub struct KktFactor {
    nus: Vec<f64>,
    /// `A` with `A·A† = K′`.
    a: Matrix,
    /// `B` with `B·A† = G0`.
    b: Matrix,
    l22: Vec<Matrix>,
    l32: Vec<Matrix>,
    l33: Vec<Matrix>,
    l42: Vec<Matrix>,
    l43: Vec<Matrix>,
    l44: Matrix,
    n: usize,
}

/// Factors the Newton system for the diagonal scalings `u` (first constraint
/// half) and `v` (second half), each of length `r·block_len` and positive.
pub fn kkt_factorize(p: &QpProblem, u: &[f64], v: &[f64]) -> Result<KktFactor> {
    let emb = &p.embedding;
    let len = emb.block_len();
    let r = p.blocks();
    if u.len() != r * len || v.len() != r * len {
        return Err(invalid("scaling vectors must have one entry per constraint"));
    }
    if u.iter().chain(v).any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(invalid("scaling entries must be positive"));
    }
    let a = emb.chol.clone();
    let b = solve_triangular(&a, &emb.g0, Triangle::Lower, true, Side::Right)?;
    let bbt = (&b * &b.transpose()).symmetrized();
    // (B·B†)⁻¹ = G0⁻†·K′·G0⁻¹, with G0⁻¹ = G0 (real) or G0/2 (complex)
    let g0_inv = match emb.field {
        Field::Real => emb.g0.clone(),
        Field::Complex => emb.g0.scale(0.5),
    };
    let bbt_inv = g0_inv.tr_mul(&(&emb.k_prime * &g0_inv)).symmetrized();
    let jt = emb.j().transpose();

    let (mut l22, mut l32, mut l33, mut l42, mut l43) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut acc = Matrix::zeros(emb.n, emb.n);
    for q in 0..r {
        let nu2 = p.nus[q] * p.nus[q];
        let nbb = bbt.scale(nu2);
        let mut m22 = nbb.clone();
        for k in 0..len {
            m22[(k, k)] += u[q * len + k];
        }
        let c22 = cholesky(&m22).map_err(|_| Error::Factorization { block: "L22" })?;
        let c32 = solve_triangular(&c22, &nbb.scale(-1.0), Triangle::Lower, true, Side::Right)?;
        // V + N − N·(U + N)⁻¹·N evaluated as V + (N⁻¹ + U⁻¹)⁻¹: the direct
        // form cancels when both constraint halves are active (U, V → 0)
        let mut pm = bbt_inv.scale(1.0 / nu2);
        for k in 0..len {
            pm[(k, k)] += 1.0 / u[q * len + k];
        }
        let cp = cholesky(&pm).map_err(|_| Error::Factorization { block: "L33" })?;
        let cp_inv = solve_triangular(&cp, &Matrix::identity(len), Triangle::Lower, false, Side::Left)?;
        let mut m33 = cp_inv.tr_mul(&cp_inv).symmetrized();
        for k in 0..len {
            m33[(k, k)] += v[q * len + k];
        }
        let c33 = cholesky(&m33).map_err(|_| Error::Factorization { block: "L33" })?;
        let c42 = solve_triangular(&c22, &jt, Triangle::Lower, true, Side::Right)?;
        let rhs43 = jt.sub(&(&c42 * &c32.transpose()));
        let c43 = solve_triangular(&c33, &rhs43, Triangle::Lower, true, Side::Right)?;
        acc = acc.add(&(&c42 * &c42.transpose())).add(&(&c43 * &c43.transpose()));
        l22.push(c22);
        l32.push(c32);
        l33.push(c33);
        l42.push(c42);
        l43.push(c43);
    }
    let l44 = cholesky(&acc.symmetrized()).map_err(|_| Error::Factorization { block: "L44" })?;
    Ok(KktFactor { nus: p.nus.clone(), a, b, l22, l32, l33, l42, l43, l44, n: emb.n })
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

/// Solves the Newton system for `rhs`.
pub fn kkt_solve(f: &KktFactor, rhs: &KktVector) -> Result<KktVector> {
    let r = f.nus.len();
    let len = f.a.rows();
    if rhs.beta.len() != r || rhs.z.len() != r || rhs.t.len() != r || rhs.xi.len() != f.n {
        return Err(invalid("right-hand side does not match the factorization"));
    }
    if rhs.beta.iter().chain(&rhs.z).chain(&rhs.t).any(|b| b.len() != len) {
        return Err(invalid("right-hand side block has the wrong length"));
    }
    let mut xp = Vec::with_capacity(r);
    let mut zh = Vec::with_capacity(r);
    let mut th = Vec::with_capacity(r);
    let mut y = rhs.xi.clone();
    for q in 0..r {
        let nu = f.nus[q];
        let x1 = solve_lower_vec(&f.a, &rhs.beta[q], false);
        let bx = f.b.mul_vec(&x1);
        let mut w: Vec<f64> = rhs.z[q].iter().map(|v| -v).collect();
        axpy(&mut w, -nu, &bx);
        let z1 = solve_lower_vec(&f.l22[q], &w, false);
        let mut w: Vec<f64> = rhs.t[q].iter().map(|v| -v).collect();
        axpy(&mut w, nu, &bx);
        axpy(&mut w, -1.0, &f.l32[q].mul_vec(&z1));
        let t1 = solve_lower_vec(&f.l33[q], &w, false);
        axpy(&mut y, 1.0, &f.l43[q].mul_vec(&t1));
        axpy(&mut y, 1.0, &f.l42[q].mul_vec(&z1));
        xp.push(x1);
        zh.push(z1);
        th.push(t1);
    }
    let y1 = solve_lower_vec(&f.l44, &y, false);
    let xi = solve_lower_vec(&f.l44, &y1, true);

    let mut out = KktVector { beta: Vec::with_capacity(r), z: Vec::with_capacity(r), t: Vec::with_capacity(r), xi };
    for q in 0..r {
        let nu = f.nus[q];
        let mut w = th[q].clone();
        axpy(&mut w, -1.0, &f.l43[q].tr_mul_vec(&out.xi));
        let t = solve_lower_vec(&f.l33[q], &w, true);
        let mut w = zh[q].clone();
        axpy(&mut w, -1.0, &f.l32[q].tr_mul_vec(&t));
        axpy(&mut w, -1.0, &f.l42[q].tr_mul_vec(&out.xi));
        let z = solve_lower_vec(&f.l22[q], &w, true);
        let mut w = xp[q].clone();
        let diff: Vec<f64> = z.iter().zip(&t).map(|(a, b)| a - b).collect();
        axpy(&mut w, nu, &f.b.tr_mul_vec(&diff));
        out.beta.push(solve_lower_vec(&f.a, &w, true));
        out.z.push(z);
        out.t.push(t);
    }
    Ok(out)
}

impl KktFactor {
    /// Dense `(L, signs)` with `L·diag(signs)·L†` equal to the Newton matrix
    /// in `(β, z, t, ξ)` order. Meant for diagnostics on small problems.
    pub fn to_dense(&self) -> (Matrix, Vec<f64>) {
        let r = self.nus.len();
        let len = self.a.rows();
        let span = r * len;
        let size = 3 * span + self.n;
        let mut l = Matrix::zeros(size, size);
        for q in 0..r {
            let (b0, z0, t0) = (q * len, span + q * len, 2 * span + q * len);
            let nb = self.b.scale(self.nus[q]);
            l.set_block(b0, b0, &self.a);
            l.set_block(z0, b0, &nb.scale(-1.0));
            l.set_block(t0, b0, &nb);
            l.set_block(z0, z0, &self.l22[q]);
            l.set_block(t0, z0, &self.l32[q]);
            l.set_block(t0, t0, &self.l33[q]);
            l.set_block(3 * span, z0, &self.l42[q]);
            l.set_block(3 * span, t0, &self.l43[q]);
        }
        l.set_block(3 * span, 3 * span, &self.l44);
        let mut signs = alloc::vec![1.0; span];
        signs.extend(core::iter::repeat_n(-1.0, 2 * span));
        signs.extend(core::iter::repeat_n(1.0, self.n));
        (l, signs)
    }
}

/// Dense Newton matrix in `(β, z, t, ξ)` order, for diagnostics.
pub fn dense_kkt(p: &QpProblem, u: &[f64], v: &[f64]) -> Matrix {
    let len = p.embedding.block_len();
    let r = p.blocks();
    let span = r * len;
    let size = 3 * span + p.embedding.n;
    let j = p.embedding.j();
    let mut m = Matrix::zeros(size, size);
    for q in 0..r {
        let (b0, z0, t0) = (q * len, span + q * len, 2 * span + q * len);
        let s = p.embedding.g0.scale(p.nus[q]);
        m.set_block(b0, b0, &p.embedding.k_prime);
        m.set_block(b0, z0, &s.transpose().scale(-1.0));
        m.set_block(b0, t0, &s.transpose());
        m.set_block(z0, b0, &s.scale(-1.0));
        m.set_block(t0, b0, &s);
        for k in 0..len {
            m[(z0 + k, z0 + k)] = -u[q * len + k];
            m[(t0 + k, t0 + k)] = -v[q * len + k];
        }
        m.set_block(z0, 3 * span, &j.scale(-1.0));
        m.set_block(t0, 3 * span, &j.scale(-1.0));
        m.set_block(3 * span, z0, &j.transpose().scale(-1.0));
        m.set_block(3 * span, t0, &j.transpose().scale(-1.0));
    }
    m
}
