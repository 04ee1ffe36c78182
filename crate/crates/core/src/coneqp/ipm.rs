//! Primal-dual interior-point method (Mehrotra predictor-corrector).

use alloc::vec;
use alloc::vec::Vec;

use super::kkt::{kkt_factorize, kkt_solve, KktVector};
use super::QpProblem;
use crate::error::{invalid, Result};
use crate::linalg::{dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpmConfig {
    pub max_iters: usize,
    /// Tolerance on the scaled residuals and the duality gap.
    pub tol: f64,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-7, step_fraction: 0.99 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    MaxIters,
    /// The Newton system could not be factored or the iterates stopped being finite.
    Failure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpmSolution {
    pub beta: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    /// `x†·H·x + 2·c†·x` at the returned point.
    pub objective: f64,
    /// Objective at the start of every iteration.
    pub history: Vec<f64>,
    nus: Vec<f64>,
}

impl IpmSolution {
    /// Coefficient matrix with columns `β_q / ν_q`.
    pub fn coefficients(&self) -> Matrix {
        let len = self.beta.first().map_or(0, Vec::len);
        Matrix::from_fn(len, self.beta.len(), |i, q| self.beta[q][i] / self.nus[q])
    }

    /// `(β_1, …, β_r, ξ)`.
    pub fn x(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.beta.iter().flatten().copied().collect();
        x.extend(&self.xi);
        x
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(a, d)| -a / d).fold(f64::INFINITY, f64::min)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the Newton system with the diagonal scaling `w` for the
/// right-hand sides `rx` (primal rows) and `rz` (constraint rows).
fn newton(p: &QpProblem, w: &[f64], rx: &[f64], rz: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = p.embedding.block_len();
    let r = p.blocks();
    let half = r * len;
    let f = kkt_factorize(p, &w[..half], &w[half..])?;
    let mut rhs = KktVector::zeros(r, len, p.embedding.n);
    for q in 0..r {
        rhs.beta[q].copy_from_slice(&rx[q * len..(q + 1) * len]);
        rhs.z[q].copy_from_slice(&rz[q * len..(q + 1) * len]);
        rhs.t[q].copy_from_slice(&rz[half + q * len..half + (q + 1) * len]);
    }
    rhs.xi.copy_from_slice(&rx[half..]);
    let sol = kkt_solve(&f, &rhs)?;
    let mut dx: Vec<f64> = sol.beta.into_iter().flatten().collect();
    dx.extend(sol.xi);
    let mut dz: Vec<f64> = sol.z.into_iter().flatten().collect();
    dz.extend(sol.t.into_iter().flatten());
    Ok((dx, dz))
}

/// Runs the interior-point method from the strictly feasible point `β = 0`.
pub fn ipm_solve(p: &QpProblem, cfg: &IpmConfig) -> Result<IpmSolution> {
    if !(cfg.tol > 0.0) || !(cfg.step_fraction > 0.0 && cfg.step_fraction < 1.0) || cfg.max_iters == 0 {
        return Err(invalid("invalid interior-point settings"));
    }
    let len = p.embedding.block_len();
    let r = p.blocks();
    let half = r * len;
    let m = p.num_constraints() as f64;
    let c = p.linear_term();

    let bound = (0..r).map(|q| p.nus[q] * inf_norm(&p.embedding.g0.mul_vec(&p.alphas[q]))).fold(0.0, f64::max);
    let mut x = vec![0.0; p.num_vars()];
    for v in &mut x[half..] {
        *v = 1.0 + bound;
    }
    let mut s: Vec<f64> = p.g_mul(&x).iter().map(|v| -v).collect();
    let mut z = vec![1.0; s.len()];

    let mut history = Vec::new();
    let mut status = IpmStatus::MaxIters;
    let mut iterations = 0;
    let c_scale = 1.0 + inf_norm(&c);
    while iterations < cfg.max_iters {
        let gx = p.g_mul(&x);
        let rp: Vec<f64> = gx.iter().zip(&s).map(|(a, b)| a + b).collect();
        let hx = p.h_mul(&x);
        let gtz = p.gt_mul(&z);
        let rd: Vec<f64> = (0..x.len()).map(|i| hx[i] + c[i] + gtz[i]).collect();
        let gap = dot(&s, &z);
        let obj = dot(&x, &hx) + 2.0 * dot(&c, &x);
        if !obj.is_finite() || !gap.is_finite() {
            status = IpmStatus::Failure;
            break;
        }
        history.push(obj);
        if inf_norm(&rp) <= cfg.tol * (1.0 + inf_norm(&s)) && inf_norm(&rd) <= cfg.tol * c_scale && gap <= cfg.tol * (1.0 + obj.abs()) {
            status = IpmStatus::Optimal;
            break;
        }
        iterations += 1;
        let mu = gap / m;
        let w: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a / b).collect();
        let rx: Vec<f64> = rd.iter().map(|v| -v).collect();

        // predictor
        let rz: Vec<f64> = rp.iter().zip(&s).map(|(a, b)| -a + b).collect();
        let Ok((dx, dz)) = newton(p, &w, &rx, &rz) else {
            status = IpmStatus::Failure;
            break;
        };
        let gdx = p.g_mul(&dx);
        let ds: Vec<f64> = rp.iter().zip(&gdx).map(|(a, b)| -a - b).collect();
        let a_aff = max_step(&s, &ds).min(max_step(&z, &dz)).min(1.0);
        let mu_aff = (0..s.len()).map(|i| (s[i] + a_aff * ds[i]) * (z[i] + a_aff * dz[i])).sum::<f64>() / m;
        let ratio = (mu_aff / mu).clamp(0.0, 1.0);
        let sigma = ratio * ratio * ratio;

        // corrector
        let rc: Vec<f64> = (0..s.len()).map(|i| -s[i] * z[i] + sigma * mu - ds[i] * dz[i]).collect();
        let rz: Vec<f64> = (0..s.len()).map(|i| -rp[i] - rc[i] / z[i]).collect();
        let Ok((dx, dz)) = newton(p, &w, &rx, &rz) else {
            status = IpmStatus::Failure;
            break;
        };
        let gdx = p.g_mul(&dx);
        let ds: Vec<f64> = rp.iter().zip(&gdx).map(|(a, b)| -a - b).collect();
        let step = (cfg.step_fraction * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        for (v, d) in x.iter_mut().zip(&dx) {
            *v += step * d;
        }
        for (v, d) in s.iter_mut().zip(&ds) {
            *v += step * d;
        }
        for (v, d) in z.iter_mut().zip(&dz) {
            *v += step * d;
        }
    }

    let objective = p.objective(&x);
    let beta = (0..r).map(|q| x[q * len..(q + 1) * len].to_vec()).collect();
    Ok(IpmSolution { beta, xi: x[half..].to_vec(), status, iterations, objective, history, nus: p.nus.clone() })
}
