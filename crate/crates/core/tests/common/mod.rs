#![allow(dead_code)]

use kqp_core::coneqp::{embed_gram, KktVector, QpProblem};
use kqp_core::{Density, Event, EventKind, FeatureMatrix, KernelOperator, KernelSpec, Matrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    a.add(&a.transpose()).scale(0.5)
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    (&a * &a.transpose()).add(&Matrix::identity(n)).symmetrized()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

pub fn linear(points: Vec<Vec<f64>>) -> FeatureMatrix {
    FeatureMatrix::new(KernelSpec::Linear, points).unwrap()
}

/// Coordinates of a linear-kernel feature matrix, one column per pre-image.
pub fn coords(x: &FeatureMatrix, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, x.len(), |i, j| x.point(j)[i])
}

/// The operator `X·Y·diag(D)·Y†·X†` as a dense `dim × dim` matrix.
pub fn dense(op: &KernelOperator, dim: usize) -> DMatrix<f64> {
    let x = coords(op.preimages(), dim);
    let y = to_na(op.coefficients());
    let d = DMatrix::from_diagonal(&DVector::from_row_slice(op.weights()));
    &x * &y * d * y.transpose() * x.transpose()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// `f` applied to the spectrum of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Orthonormal operator over `n` random pre-images in `R^dim` with weights `d`.
pub fn orthonormal_with_weights(rng: &mut ChaCha8Rng, dim: usize, n: usize, d: &[f64]) -> KernelOperator {
    let x = linear(random_points(rng, n, dim));
    let a = random_matrix(rng, n, d.len());
    let basis = KernelOperator::new(x, a, vec![1.0; d.len()], false).unwrap();
    // weight-1 EVD of A·A† yields an orthonormal basis; reuse it with the requested weights
    let on = basis.orthonormalize().unwrap();
    let (x, y, _, _) = on.into_parts();
    assert_eq!(y.cols(), d.len());
    KernelOperator::new(x, y, d.to_vec(), true).unwrap()
}

pub fn random_density(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Density {
    let d: Vec<f64> = (0..rank).map(|_| rng.gen_range(0.1..1.0)).collect();
    let op = orthonormal_with_weights(rng, dim, rank + 1, &d);
    Density::new(op).unwrap().normalize().unwrap()
}

pub fn random_observable(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Event {
    let op = orthonormal_with_weights(rng, dim, rank, &vec![1.0; rank]);
    Event::new(op, EventKind::Observable).unwrap()
}

pub fn random_effect(rng: &mut ChaCha8Rng, dim: usize, d: &[f64]) -> Event {
    let op = orthonormal_with_weights(rng, dim, d.len(), d);
    Event::new(op, EventKind::StrictEffect).unwrap()
}

/// Hermitian positive-definite `(Re K, Im K)` of size `n`.
pub fn random_hermitian_pd(rng: &mut ChaCha8Rng, n: usize) -> (Matrix, Matrix) {
    let a = to_na(&random_matrix(rng, n, n + 1));
    let b = to_na(&random_matrix(rng, n, n + 1));
    let re = &a * a.transpose() + &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
    let im = &b * a.transpose() - &a * b.transpose();
    (from_na(&re), from_na(&im))
}

/// Reference minimizer of `x†·H·x + 2·c†·x` subject to `G·x ≤ 0`, by ADMM
/// with the constraint split `G·x = w, w ≤ 0` and adaptive penalty.
pub fn dense_qp_reference(h: &DMatrix<f64>, c: &DVector<f64>, g: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let p = h * 2.0;
    let q = c * 2.0;
    let nv = p.nrows();
    let nc = g.nrows();
    let sigma = 1e-6;
    let alpha = 1.6;
    let mut rho = 0.1;
    let mut x = DVector::zeros(nv);
    let mut w = DVector::zeros(nc);
    let mut y = DVector::zeros(nc);
    let gt = g.transpose();
    let factor = |rho: f64| (&p + DMatrix::identity(nv, nv) * sigma + &gt * g * rho).cholesky().unwrap();
    let mut chol = factor(rho);
    for it in 0..400_000 {
        let rhs = &x * sigma - &q + &gt * (&w * rho - &y);
        let xt = chol.solve(&rhs);
        let wt = g * &xt;
        x = &xt * alpha + &x * (1.0 - alpha);
        let what = &wt * alpha + &w * (1.0 - alpha);
        w = (&what + &y / rho).map(|v| v.min(0.0));
        y += (&what - &w) * rho;
        if it % 25 == 0 {
            let gx = g * &x;
            let rp = (&gx - &w).amax();
            let rd = (&p * &x + &q + &gt * &y).amax();
            let sp = gx.amax().max(w.amax()).max(1.0);
            let sd = (&p * &x).amax().max((&gt * &y).amax()).max(q.amax()).max(1.0);
            if rp <= 1e-11 * sp && rd <= 1e-11 * sd {
                break;
            }
            let ratio = ((rp / sp) / (rd / sd).max(1e-300)).sqrt();
            if !(0.2..=5.0).contains(&ratio) {
                rho = (rho * ratio).clamp(1e-6, 1e6);
                chol = factor(rho);
            }
        }
    }
    let obj = (x.transpose() * h * &x)[(0, 0)] + 2.0 * c.dot(&x);
    (x, obj)
}

pub fn dense_problem(p: &QpProblem) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    (to_na(&p.dense_h()), DVector::from_vec(p.linear_term()), to_na(&p.dense_g()))
}

/// Best residual `‖op − P_S(op)‖_F / ‖op‖_F` over all pre-image subsets of
/// size `k`, where `P_S` projects each basis vector onto the span of `S`.
pub fn best_subset_residual(op: &KernelOperator, dim: usize, k: usize) -> f64 {
    let n = op.preimages().len();
    let full = dense(op, dim);
    let xc = coords(op.preimages(), dim);
    let basis = &xc * to_na(op.coefficients());
    let d = DMatrix::from_diagonal(&DVector::from_row_slice(op.weights()));
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let xs = xc.select_columns(&cols);
        let pinv = xs.clone().pseudo_inverse(1e-12).unwrap();
        let proj = &xs * (&pinv * &basis);
        let approx = &proj * &d * proj.transpose();
        best = best.min(rel_err(&approx, &full));
    }
    best
}

/// `count` pre-images in `R^dim` whose span has dimension `rank`.
pub fn dependent_points(r: &mut ChaCha8Rng, count: usize, rank: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut pts = random_points(r, rank, dim);
    let mix = random_matrix(r, count - rank, rank);
    for k in 0..count - rank {
        pts.push((0..dim).map(|c| (0..rank).map(|i| mix[(k, i)] * pts[i][c]).sum()).collect());
    }
    pts
}

/// Orthonormal operator on 6 independent pre-images in `R^8` whose basis
/// lives mostly on the first three (the others carry rows scaled by `small`).
pub fn span_three(r: &mut ChaCha8Rng, small: f64) -> KernelOperator {
    let x = linear(random_points(r, 6, 8));
    let mut a = random_matrix(r, 6, 3);
    for i in 3..6 {
        for j in 0..3 {
            a[(i, j)] *= small;
        }
    }
    KernelOperator::new(x, a, vec![1.0; 3], false).unwrap().orthonormalize().unwrap()
}

/// Seeded problem over `n` pre-images and `r` blocks, complex when asked.
pub fn problem(r: &mut ChaCha8Rng, n: usize, blocks: usize, complex: bool, lambda: f64) -> QpProblem {
    let emb = if complex {
        let (re, im) = random_hermitian_pd(r, n);
        embed_gram(&re, Some(&im)).unwrap()
    } else {
        embed_gram(&random_spd(r, n), None).unwrap()
    };
    let len = emb.block_len();
    let alphas = (0..blocks).map(|_| (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let nus = (0..blocks).map(|_| r.gen_range(0.3..2.0)).collect();
    QpProblem::new(emb, alphas, nus, lambda).unwrap()
}

pub fn scalings(r: &mut ChaCha8Rng, p: &QpProblem) -> (Vec<f64>, Vec<f64>) {
    let m = p.blocks() * p.embedding.block_len();
    let mut draw = || (0..m).map(|_| r.gen_range(0.05..3.0)).collect::<Vec<f64>>();
    (draw(), draw())
}

/// Newton matrix in `(β, z, t, ξ)` order assembled from its definition.
pub fn kkt_oracle(p: &QpProblem, u: &[f64], v: &[f64]) -> DMatrix<f64> {
    let e = &p.embedding;
    let len = e.block_len();
    let r = p.blocks();
    let span = r * len;
    let kp = to_na(&e.k_prime);
    let g0 = to_na(&e.g0);
    let j = to_na(&e.j());
    let mut m = DMatrix::zeros(3 * span + e.n, 3 * span + e.n);
    for q in 0..r {
        let s = &g0 * p.nus[q];
        let (b0, z0, t0, x0) = (q * len, span + q * len, 2 * span + q * len, 3 * span);
        m.view_mut((b0, b0), (len, len)).copy_from(&kp);
        m.view_mut((z0, b0), (len, len)).copy_from(&(-&s));
        m.view_mut((t0, b0), (len, len)).copy_from(&s);
        m.view_mut((b0, z0), (len, len)).copy_from(&(-s.transpose()));
        m.view_mut((b0, t0), (len, len)).copy_from(&s.transpose());
        for k in 0..len {
            m[(z0 + k, z0 + k)] = -u[q * len + k];
            m[(t0 + k, t0 + k)] = -v[q * len + k];
        }
        m.view_mut((z0, x0), (len, e.n)).copy_from(&(-&j));
        m.view_mut((t0, x0), (len, e.n)).copy_from(&(-&j));
        m.view_mut((x0, z0), (e.n, len)).copy_from(&(-j.transpose()));
        m.view_mut((x0, t0), (e.n, len)).copy_from(&(-j.transpose()));
    }
    m
}

pub fn random_rhs(r: &mut ChaCha8Rng, p: &QpProblem) -> KktVector {
    let len = p.embedding.block_len();
    let size = 3 * p.blocks() * len + p.embedding.n;
    let flat: Vec<f64> = (0..size).map(|_| r.gen_range(-1.0..1.0)).collect();
    KktVector::from_flat(&flat, p.blocks(), len, p.embedding.n).unwrap()
}
