//! Pre-image reduction.
//!
//! Three strategies, from cheapest to most aggressive: dropping pre-images
//! with no weight ([`remove_unused`]), exact elimination of linearly
//! dependent pre-images ([`nullspace_reduce`]) and an L1-regularized fit
//! solved by the cone QP ([`qp_reduce`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::coneqp::{embed_gram, ipm_solve, IpmConfig, IpmStatus, QpProblem};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, norm2, solve_triangular, thin_sym_evd, Matrix, Side, Triangle, DEFAULT_REL_TOL};
use crate::operator::KernelOperator;

/// Rows of `Y·D·Y†` with norm below this fraction of its Frobenius norm are unused.
const UNUSED_REL_TOL: f64 = 1e-12;

/// Tikhonov floor added to the Gram matrix, relative to its trace.
const GRAM_FLOOR: f64 = 1e-12;
const ADAPTIVE_FLOOR: f64 = 1e-12;

/// Default pivot acceptance threshold for [`nullspace_reduce`].
pub const DEFAULT_PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionMethod {
    Unused,
    Nullspace,
    Qp,
}

/// Outcome of a reduction: indices refer to the pre-images of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub removed_indices: Vec<usize>,
    /// `‖before − after‖_F / ‖before‖_F`.
    pub residual: f64,
    pub method: ReductionMethod,
}

/// Settings of [`qp_reduce`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpReductionParams {
    /// Regularization weight; `None` selects it automatically from
    /// `target_removals`.
    pub lambda: Option<f64>,
    /// Minimum number of pre-images to remove when `lambda` is automatic.
    pub target_removals: usize,
    /// Rows of the fitted coefficients with norm at most this fraction of
    /// the largest row norm are dropped. All rows go when the largest is
    /// itself below this fraction of the input's largest row.
    pub row_threshold: f64,
    pub weighting: RowWeighting,
    pub ipm: IpmConfig,
}

/// Per-pre-image weight of the sparsity penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RowWeighting {
    /// Same weight for every row: `λ·Σ_i max_j |B_ij|`.
    Uniform,
    /// Rows weighted by the inverse norm of their input coefficients, so a
    /// pre-image the operator barely uses is cheap to drop even when its
    /// neighbours are strongly correlated with it.
    #[default]
    Adaptive,
}

impl QpReductionParams {
    pub fn auto(target_removals: usize) -> Self {
        Self { lambda: None, target_removals, ..Self::default() }
    }

    pub fn fixed(lambda: f64) -> Self {
        Self { lambda: Some(lambda), ..Self::default() }
    }
}

impl Default for QpReductionParams {
    fn default() -> Self {
        Self {
            lambda: None,
            target_removals: 1,
            row_threshold: 1e-6,
            weighting: RowWeighting::default(),
            ipm: IpmConfig { tol: 1e-8, ..IpmConfig::default() },
        }
    }
}

fn rebuild(op: &KernelOperator, keep: &[usize], y: Matrix) -> Result<KernelOperator> {
    let x = op.preimages().subset(keep)?;
    Ok(KernelOperator::assemble(x, y, op.weights().to_vec(), op.is_orthonormal()))
}

fn complement(n: usize, keep: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !keep.contains(i)).collect()
}

/// Drops pre-images whose row of `Y·D·Y†` is numerically zero.
pub fn remove_unused(op: &KernelOperator) -> Result<(KernelOperator, ReductionReport)> {
    let m = op.coefficient_operator();
    let thr = UNUSED_REL_TOL * m.frobenius_norm();
    let n = op.preimages().len();
    let keep: Vec<usize> = (0..n).filter(|&i| norm2(m.row(i)) > thr).collect();
    let reduced = rebuild(op, &keep, op.coefficients().select_rows(&keep))?;
    let residual = op.relative_distance(&reduced)?;
    Ok((reduced, ReductionReport { removed_indices: complement(n, &keep), residual, method: ReductionMethod::Unused }))
}

/// Removes linearly dependent pre-images without changing the operator.
///
/// For each null vector `z` of the Gram matrix, a pivot `j` with
/// `|z_j| ≥ delta·‖z‖∞` and the smallest `‖Y_j‖·‖x_j‖` is eliminated by
/// moving its coefficients onto the other pre-images. Unused pre-images are
/// dropped afterwards.
pub fn nullspace_reduce(op: &KernelOperator, delta: f64) -> Result<(KernelOperator, ReductionReport)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("pivot threshold must lie in (0, 1]"));
    }
    let x = op.preimages();
    let n = x.len();
    if n == 0 {
        return Ok((op.clone(), ReductionReport { removed_indices: Vec::new(), residual: 0.0, method: ReductionMethod::Nullspace }));
    }
    let null = thin_sym_evd(&x.gram(), DEFAULT_REL_TOL)?.null_basis;
    let mut nulls: Vec<Vec<f64>> = (0..null.cols()).map(|j| null.column(j)).collect();
    let mut y = op.coefficients().clone();
    let norms: Vec<f64> = (0..n).map(|j| x.norm(j)).collect();
    let mut alive = vec![true; n];

    while let Some(z) = nulls.pop() {
        let inf = (0..n).filter(|&i| alive[i]).map(|i| z[i].abs()).fold(0.0, f64::max);
        if inf == 0.0 {
            continue;
        }
        let cost = |j: usize| norm2(y.row(j)) * norms[j];
        let pivot = (0..n)
            .filter(|&j| alive[j] && z[j].abs() >= delta * inf)
            .min_by(|&a, &b| cost(a).partial_cmp(&cost(b)).unwrap_or(core::cmp::Ordering::Equal))
            .expect("the largest entry always qualifies");
        let yj = y.row(pivot).to_vec();
        for i in (0..n).filter(|&i| alive[i] && i != pivot) {
            let f = z[i] / z[pivot];
            for (v, w) in y.row_mut(i).iter_mut().zip(&yj) {
                *v -= f * w;
            }
        }
        alive[pivot] = false;
        for other in nulls.iter_mut() {
            let f = other[pivot] / z[pivot];
            for i in 0..n {
                other[i] -= f * z[i];
            }
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let eliminated = rebuild(op, &keep, y.select_rows(&keep))?;
    let (reduced, unused) = remove_unused(&eliminated)?;
    let mut kept = keep.clone();
    for &i in unused.removed_indices.iter().rev() {
        kept.remove(i);
    }
    let residual = op.relative_distance(&reduced)?;
    Ok((reduced, ReductionReport { removed_indices: complement(n, &kept), residual, method: ReductionMethod::Nullspace }))
}

fn require_orthonormal(op: &KernelOperator) -> Result<()> {
    if op.is_orthonormal() {
        Ok(())
    } else {
        Err(Error::Precondition("operator must be in orthonormal form"))
    }
}

/// Per-pre-image score `K_ii²·Σ_j σ_j³·(A_j†·K·A_j)·A_ij²` used to rank
/// removal candidates (`σ_j = |D_j|^½`).
pub fn removal_scores(op: &KernelOperator) -> Result<Vec<f64>> {
    require_orthonormal(op)?;
    let k = op.preimages().gram();
    let a = op.coefficients();
    let sigma: Vec<f64> = op.weights().iter().map(|d| libm::sqrt(d.abs())).collect();
    let aka = op.coefficient_gram().diagonal();
    Ok((0..a.rows())
        .map(|i| {
            let s: f64 = (0..a.cols()).map(|j| sigma[j] * sigma[j] * sigma[j] * aka[j] * a[(i, j)] * a[(i, j)]).sum();
            k[(i, i)] * k[(i, i)] * s
        })
        .collect())
}

/// Regularization weight expected to remove `m` pre-images: the `m` lowest
/// removal scores divided by their largest scaled coefficient, inflated by 5%.
pub fn select_lambda(op: &KernelOperator, m: usize) -> Result<f64> {
    let n = op.preimages().len();
    if m < 1 || m >= n {
        return Err(invalid("removal count must satisfy 1 <= m < number of pre-images"));
    }
    let scores = removal_scores(op)?;
    let a = op.coefficients();
    let root_sigma: Vec<f64> = op.weights().iter().map(|d| libm::pow(d.abs(), 0.25)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap_or(core::cmp::Ordering::Equal));
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &order[..m] {
        num += scores[i];
        den += (0..a.cols()).map(|j| (root_sigma[j] * a[(i, j)]).abs()).fold(0.0, f64::max);
    }
    if den <= 1e-14 {
        return Err(Error::CannotSelectLambda);
    }
    Ok(1.05 * num / den)
}

struct QpFit {
    kept: Vec<usize>,
}

fn fit(op: &KernelOperator, k: &Matrix, lambda: f64, params: &QpReductionParams) -> Result<QpFit> {
    let a = op.coefficients();
    let row_norms: Vec<f64> = (0..a.rows()).map(|i| norm2(a.row(i))).collect();
    // penalizing max_j |B_ij| / s_i is the plain problem on pre-images s_i·x_i
    let scale: Vec<f64> = match params.weighting {
        RowWeighting::Uniform => vec![1.0; a.rows()],
        RowWeighting::Adaptive => {
            let floor = ADAPTIVE_FLOOR * row_norms.iter().copied().fold(0.0, f64::max);
            row_norms.iter().map(|v| v.max(floor)).collect()
        }
    };
    let inv: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
    let a = a.scale_rows(&inv);
    let emb = embed_gram(&k.scale_rows(&scale).scale_columns(&scale), None)?;
    let sigma: Vec<f64> = op.weights().iter().map(|d| libm::sqrt(d.abs())).collect();
    let alphas = (0..a.cols()).map(|q| a.column(q).iter().map(|v| v * sigma[q]).collect()).collect();
    let problem = QpProblem::new(emb, alphas, sigma, lambda)?;
    let sol = ipm_solve(&problem, &params.ipm)?;
    if sol.status != IpmStatus::Optimal {
        return Err(Error::SolverFailure { iterations: sol.iterations });
    }
    let b = sol.coefficients();
    let norms: Vec<f64> = (0..b.rows()).map(|i| norm2(b.row(i))).collect();
    // every row shrunk to noise relative to the unpenalized coefficients
    let target = (0..a.rows()).map(|i| norm2(a.row(i))).fold(0.0, f64::max);
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max <= params.row_threshold * target {
        return Ok(QpFit { kept: Vec::new() });
    }
    Ok(QpFit { kept: (0..norms.len()).filter(|&i| norms[i] > params.row_threshold * max).collect() })
}

/// Orthonormal operator on the pre-images `keep` closest (in Frobenius norm
/// of `X·Y`) to `op`: each basis vector is projected onto their span.
fn reestimate(op: &KernelOperator, k: &Matrix, keep: &[usize]) -> Result<KernelOperator> {
    let floor = GRAM_FLOOR * k.trace() / k.rows() as f64;
    let mut kss = k.select_rows(keep).select_columns(keep);
    for i in 0..keep.len() {
        kss[(i, i)] += floor;
    }
    let rhs = &k.select_rows(keep) * op.coefficients();
    let l = cholesky(&kss.symmetrized())?;
    let half = solve_triangular(&l, &rhs, Triangle::Lower, false, Side::Left)?;
    let c = solve_triangular(&l, &half, Triangle::Lower, true, Side::Left)?;
    let x = op.preimages().subset(keep)?;
    KernelOperator::assemble(x, c, op.weights().to_vec(), false).orthonormalize()
}

/// Sparsifies the pre-image set with an L1-regularized fit.
///
/// Linearly dependent pre-images are first eliminated exactly. With an
/// automatic weight the QP is re-solved, doubling then bisecting `λ`, until
/// at least `target_removals` pre-images are gone in total. The surviving
/// pre-images carry re-estimated coefficients and the result is orthonormal.
pub fn qp_reduce(op: &KernelOperator, params: &QpReductionParams) -> Result<(KernelOperator, ReductionReport)> {
    require_orthonormal(op)?;
    let n = op.preimages().len();
    if n < 2 {
        return Err(invalid("QP reduction needs at least two pre-images"));
    }
    if params.lambda.is_none() && (params.target_removals < 1 || params.target_removals >= n) {
        return Err(invalid("target removals must satisfy 1 <= m < number of pre-images"));
    }
    if let Some(l) = params.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(invalid("lambda must be non-negative"));
        }
    }
    if !(params.row_threshold >= 0.0 && params.row_threshold < 1.0) {
        return Err(invalid("row threshold must lie in [0, 1)"));
    }

    let (base, pre) = nullspace_reduce(op, DEFAULT_PIVOT_THRESHOLD)?;
    let base_index: Vec<usize> = complement(n, &pre.removed_indices);
    let nb = base.preimages().len();
    let finish = |reduced: KernelOperator, kept_in_base: &[usize]| -> Result<(KernelOperator, ReductionReport)> {
        let kept: Vec<usize> = kept_in_base.iter().map(|&i| base_index[i]).collect();
        let residual = op.relative_distance(&reduced)?;
        Ok((reduced, ReductionReport { removed_indices: complement(n, &kept), residual, method: ReductionMethod::Qp }))
    };
    let all: Vec<usize> = (0..nb).collect();
    let need = match params.lambda {
        None => params.target_removals.saturating_sub(pre.removed_indices.len()),
        Some(_) => 1,
    };
    if need == 0 || nb < 2 {
        if params.lambda.is_none() && need > 0 {
            return Err(Error::DegenerateResult);
        }
        return finish(base, &all);
    }

    let mut k = base.preimages().gram();
    let floor = GRAM_FLOOR * k.trace() / nb as f64;
    for i in 0..nb {
        k[(i, i)] += floor;
    }

    let kept = match params.lambda {
        Some(lambda) => fit(&base, &k, lambda, params)?.kept,
        None => {
            if need >= nb {
                return Err(Error::DegenerateResult);
            }
            let enough = |f: &QpFit| nb - f.kept.len() >= need;
            // smallest-λ fit removing enough while keeping at least one pre-image
            let mut best: Option<QpFit> = None;
            let consider = |f: QpFit, best: &mut Option<QpFit>| {
                if enough(&f) && !f.kept.is_empty() {
                    *best = Some(f);
                }
            };
            let mut lambda = select_lambda(&base, need)?;
            let first = fit(&base, &k, lambda, params)?;
            let (mut lo, mut hi);
            if enough(&first) {
                consider(first, &mut best);
                hi = lambda;
                lo = 0.0;
                for _ in 0..20 {
                    let trial = 0.5 * hi;
                    let f = fit(&base, &k, trial, params)?;
                    if !enough(&f) {
                        lo = trial;
                        break;
                    }
                    hi = trial;
                    consider(f, &mut best);
                }
            } else {
                lo = lambda;
                let mut found = false;
                for _ in 0..60 {
                    lambda *= 2.0;
                    let f = fit(&base, &k, lambda, params)?;
                    if enough(&f) {
                        consider(f, &mut best);
                        found = true;
                        break;
                    }
                    lo = lambda;
                }
                if !found {
                    return Err(Error::CannotSelectLambda);
                }
                hi = lambda;
            }
            for _ in 0..12 {
                if hi - lo <= 1e-3 * hi && best.is_some() {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let f = fit(&base, &k, mid, params)?;
                if enough(&f) {
                    hi = mid;
                    consider(f, &mut best);
                } else {
                    lo = mid;
                }
            }
            best.map(|f| f.kept).unwrap_or_default()
        }
    };
    if kept.is_empty() {
        return Err(Error::DegenerateResult);
    }
    let reduced = reestimate(&base, &base.preimages().gram(), &kept)?;
    finish(reduced, &kept)
}

/// Brings `op` down to at most `max_preimages` pre-images, trying the
/// lossless strategies before the QP. Returns the reports of every step run.
pub fn reduce_to_budget(op: &KernelOperator, max_preimages: usize) -> Result<(KernelOperator, Vec<ReductionReport>)> {
    let mut reports = Vec::new();
    let n = op.preimages().len();
    if n <= max_preimages {
        return Ok((op.clone(), reports));
    }
    let (unused, rep) = remove_unused(op)?;
    let mut index: Vec<usize> = complement(n, &rep.removed_indices);
    reports.push(rep);
    if unused.preimages().len() <= max_preimages {
        return Ok((unused, reports));
    }
    let (lossless, rep) = nullspace_reduce(&unused, DEFAULT_PIVOT_THRESHOLD)?;
    let remap = |index: &[usize], rep: ReductionReport| ReductionReport {
        removed_indices: rep.removed_indices.iter().map(|&i| index[i]).collect(),
        ..rep
    };
    let kept_after: Vec<usize> = complement(index.len(), &rep.removed_indices).iter().map(|&i| index[i]).collect();
    let mut rep = remap(&index, rep);
    rep.residual = op.relative_distance(&lossless)?;
    reports.push(rep);
    index = kept_after;
    let nl = lossless.preimages().len();
    if nl <= max_preimages {
        return Ok((lossless, reports));
    }
    if max_preimages == 0 {
        return Err(Error::DegenerateResult);
    }
    let (reduced, rep) = qp_reduce(&lossless, &QpReductionParams::auto(nl - max_preimages))?;
    let mut rep = remap(&index, rep);
    rep.residual = op.relative_distance(&reduced)?;
    reports.push(rep);
    Ok((reduced, reports))
}
