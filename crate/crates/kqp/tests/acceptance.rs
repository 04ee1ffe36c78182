//! One pass/fail line per acceptance criterion; exits non-zero on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use kqp::Decomposition;
use kqp_core::coneqp::{build_problem, ipm_solve, kkt_factorize, kkt_solve, IpmConfig, IpmStatus};
use kqp_core::{
    accumulator_build, nullspace_reduce, qp_reduce, BuilderConfig, Density, IncrementalState, KernelOperator, KernelSpec,
    QpReductionParams, UpdateTerm,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn dense_density(rho: &Density, dim: usize) -> DMatrix<f64> {
    dense(rho.operator(), dim)
}

fn xlogx(v: f64) -> f64 {
    if v > 1e-300 {
        v * v.ln()
    } else {
        0.0
    }
}

fn probability() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(seed);
        let dim = 6 + (seed as usize % 7);
        let rho = random_density(&mut r, dim, 3);
        let p = dense_density(&rho, dim);
        for e in [random_observable(&mut r, dim, 2), random_effect(&mut r, dim, &[0.3, 0.9, 0.05])] {
            let got = rho.probability(&e).map_err(|e| e.to_string())?;
            worst = worst.max((got - (&p * dense(e.operator(), dim)).trace()).abs());
        }
    }
    check(worst <= 1e-10, format!("max |p - tr(rho E)| = {worst:.2e}"), format!("max error {worst:.2e} > 1e-10"))
}

fn entropy_divergence() -> Outcome {
    let mut worst = 0.0f64;
    let mut monotone = true;
    for seed in 0..20 {
        let mut r = rng(seed);
        let dim = 5;
        let alpha = 1.0 / dim as f64;
        let rho = random_density(&mut r, dim, 3);
        let tau = random_density(&mut r, dim, 2);
        let p = dense_density(&rho, dim);
        let h = rho.entropy().map_err(|e| e.to_string())?;
        worst = worst.max((h - sym_fn(&p, xlogx).trace()).abs());
        for eps in [1e-3, 0.3] {
            let div = rho.divergence(&tau, eps, alpha).map_err(|e| e.to_string())?.value();
            let t = dense_density(&tau, dim) * (1.0 - eps) + DMatrix::identity(dim, dim) * (eps * alpha);
            let oracle = sym_fn(&p, xlogx).trace() - (&p * sym_fn(&t, f64::ln)).trace();
            worst = worst.max((div - oracle).abs());
        }
        let vals: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| rho.divergence(&rho, e, alpha).unwrap().value()).collect();
        monotone &= vals[0] >= vals[1] && vals[1] >= vals[2] && vals[2] >= -1e-12;
    }
    check(
        worst <= 1e-8 && monotone,
        format!("max oracle error {worst:.2e}; self-divergence decreasing in epsilon"),
        format!("max oracle error {worst:.2e}, monotone = {monotone}"),
    )
}

fn conditioning() -> Outcome {
    let (mut worst, mut comp) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut r = rng(seed);
        let dim = 5;
        let rho = random_density(&mut r, dim, 3);
        let p = dense_density(&rho, dim);
        let root_of = |v: f64| if v > 1e-12 { v.sqrt() } else { 0.0 };
        let obs = random_observable(&mut r, dim, 2);
        for e in [random_effect(&mut r, dim, &[0.25, 0.81]), obs.clone()] {
            let ed = dense(e.operator(), dim);
            let root = sym_fn(&ed, root_of);
            let co = sym_fn(&(DMatrix::identity(dim, dim) - &ed), root_of);
            let inside = dense_density(&rho.condition_on(&e, false).map_err(|e| e.to_string())?, dim);
            let outside = dense_density(&rho.condition_on(&e, true).map_err(|e| e.to_string())?, dim);
            worst = worst.max((&inside - &root * &p * &root).norm()).max((&outside - &co * &p * &co).norm());
        }
        let total = rho.condition_on(&obs, false).unwrap().trace() + rho.condition_on(&obs, true).unwrap().trace();
        comp = comp.max((total - 1.0).abs());
    }
    check(
        worst <= 1e-9 && comp <= 1e-8,
        format!("max branch error {worst:.2e}; complementarity error {comp:.2e}"),
        format!("branch error {worst:.2e}, complementarity error {comp:.2e}"),
    )
}

fn direct_evd() -> Outcome {
    let (mut worst, mut ortho) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut r = rng(seed);
        let x = linear(random_points(&mut r, 6, 8));
        let y = random_matrix(&mut r, 6, 4);
        for d in [vec![1.0, 0.5, 2.0, 0.1], vec![1.0, -0.5, 2.0, -0.1]] {
            let op = KernelOperator::new(x.clone(), y.clone(), d, false).unwrap();
            let on = op.orthonormalize().map_err(|e| e.to_string())?;
            worst = worst.max(rel_err(&dense(&on, 8), &dense(&op, 8)));
            ortho = ortho.max(on.orthonormality_error());
        }
    }
    check(
        worst <= 1e-9 && ortho <= 1e-8,
        format!("max relative error {worst:.2e}; max |Y'KY - I| {ortho:.2e}"),
        format!("relative error {worst:.2e}, orthonormality {ortho:.2e}"),
    )
}

fn builders() -> Outcome {
    let (mut worst, mut ratio) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut r = rng(seed);
        let terms: Vec<UpdateTerm> =
            random_points(&mut r, 10, 10).into_iter().map(|p| UpdateTerm::rank_one(KernelSpec::Linear, p, 1.0).unwrap()).collect();
        let mut oracle = DMatrix::zeros(10, 10);
        for t in &terms {
            let u = coords(&t.u, 10);
            oracle += &u * u.transpose();
        }
        let acc = accumulator_build(&terms).map_err(|e| e.to_string())?;
        let mut inc = IncrementalState::new(KernelSpec::Linear, BuilderConfig::new(1e-12, 10, 2.0).unwrap());
        let mut capped = IncrementalState::new(KernelSpec::Linear, BuilderConfig::new(1e-12, 3, 1e6).unwrap());
        for t in &terms {
            inc.add(t).map_err(|e| e.to_string())?;
            capped.add(t).map_err(|e| e.to_string())?;
        }
        let inc = dense(&inc.decomposition(), 10);
        worst = worst.max(rel_err(&inc, &dense(&acc, 10))).max(rel_err(&inc, &oracle));
        let mut eig = sym_eigenvalues(&oracle);
        eig.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
        let optimal: f64 = eig[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
        ratio = ratio.max((dense(&capped.decomposition(), 10) - &oracle).norm() / optimal);
    }
    check(
        worst <= 1e-8 && ratio <= 2.0,
        format!("max relative error {worst:.2e}; rank-3 error at most {ratio:.3}x optimal"),
        format!("relative error {worst:.2e}, rank-3 ratio {ratio:.3}"),
    )
}

fn reduction() -> Outcome {
    let (mut lossless, mut ratio) = (0.0f64, 0.0f64);
    let mut counts_ok = true;
    for seed in 0..20 {
        let mut r = rng(seed);
        let deficiency = 1 + seed as usize % 3;
        let x = linear(dependent_points(&mut r, 6, 6 - deficiency, 8));
        let op = KernelOperator::new(x, random_matrix(&mut r, 6, 2), vec![1.5, 0.5], false).unwrap();
        let (out, rep) = nullspace_reduce(&op, 0.1).map_err(|e| e.to_string())?;
        counts_ok &= rep.removed_indices.len() == deficiency;
        lossless = lossless.max(rep.residual).max(rel_err(&dense(&out, 8), &dense(&op, 8)));

        let op = span_three(&mut r, 1e-3);
        let (_, rep) = qp_reduce(&op, &QpReductionParams::auto(3)).map_err(|e| format!("seed {seed}: {e}"))?;
        counts_ok &= rep.removed_indices.len() >= 3;
        let best = best_subset_residual(&op, 8, 3);
        ratio = ratio.max(rep.residual / best.max(1e-300));
    }
    check(
        lossless <= 1e-8 && counts_ok && ratio <= 2.0,
        format!("null-space residual {lossless:.2e}; QP residual at most {ratio:.3}x best subset"),
        format!("null-space residual {lossless:.2e}, counts ok = {counts_ok}, QP ratio {ratio:.3}"),
    )
}

fn kkt() -> Outcome {
    let (mut recon, mut solve) = (0.0f64, 0.0f64);
    let mut complex_seen = 0;
    for seed in 0..24u64 {
        let mut r = rng(seed);
        let complex = seed % 2 == 1;
        complex_seen += complex as usize;
        let p = problem(&mut r, 2 + seed as usize % 5, 1 + (seed as usize / 2) % 3, complex, 0.5);
        let (u, v) = scalings(&mut r, &p);
        let f = kkt_factorize(&p, &u, &v).map_err(|e| e.to_string())?;
        let (l, s) = f.to_dense();
        let oracle = kkt_oracle(&p, &u, &v);
        recon = recon.max((to_na(&(&l.scale_columns(&s) * &l.transpose())) - &oracle).norm() / oracle.norm());
        let rhs = random_rhs(&mut r, &p);
        let flat = DVector::from_vec(rhs.to_flat());
        let reference = oracle.lu().solve(&flat).ok_or("dense solve failed")?;
        let got = DVector::from_vec(kkt_solve(&f, &rhs).map_err(|e| e.to_string())?.to_flat());
        solve = solve.max((got - &reference).norm() / reference.norm());
    }
    check(
        recon <= 1e-8 && solve <= 1e-8 && complex_seen >= 10,
        format!("24 instances ({complex_seen} complex): reconstruction {recon:.2e}, solve {solve:.2e}"),
        format!("reconstruction {recon:.2e}, solve {solve:.2e}"),
    )
}

fn ipm() -> Outcome {
    let (mut obj, mut zero) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut r = rng(seed);
        let lambda = r.gen_range(0.1..1.0);
        let p = problem(&mut r, 2 + seed as usize % 5, 1 + seed as usize % 3, false, lambda);
        let sol = ipm_solve(&p, &IpmConfig::default()).map_err(|e| e.to_string())?;
        if sol.status != IpmStatus::Optimal {
            return Err(format!("seed {seed}: status {:?}", sol.status));
        }
        let (h, c, g) = dense_problem(&p);
        let (_, reference) = dense_qp_reference(&h, &c, &g);
        obj = obj.max((sol.objective - reference).abs() / reference.abs());

        let d: Vec<f64> = (0..3).map(|_| r.gen_range(0.2..2.0)).collect();
        let op = orthonormal_with_weights(&mut r, 6, 5, &d);
        // coefficient error scales with cond(K)·tol, so recovery is checked at a tighter tolerance
        let tight = IpmConfig { tol: 1e-9, ..IpmConfig::default() };
        let sol = ipm_solve(&build_problem(&op, 0.0).unwrap(), &tight).map_err(|e| e.to_string())?;
        if sol.status != IpmStatus::Optimal {
            return Err(format!("seed {seed}: lambda = 0 status {:?}", sol.status));
        }
        zero = zero.max(sol.coefficients().sub(op.coefficients()).max_abs());
    }
    check(
        obj <= 1e-5 && zero <= 1e-6,
        format!("objective relative error {obj:.2e}; lambda = 0 coefficient error {zero:.2e}"),
        format!("objective error {obj:.2e}, lambda = 0 error {zero:.2e}"),
    )
}

fn cli() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_kqp")).args(args).output().map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(String::from_utf8_lossy(&o.stdout).into_owned())
        } else {
            Err(format!("kqp {args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))
        }
    };
    let mut r = rng(2024);
    let csv = |pts: Vec<Vec<f64>>| {
        pts.iter().map(|p| p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n").collect::<String>()
    };
    fs::write(path("rho.csv"), csv(random_points(&mut r, 10, 10))).map_err(|e| e.to_string())?;
    fs::write(path("event.csv"), csv(random_points(&mut r, 3, 10))).map_err(|e| e.to_string())?;
    run(&["evd", &path("rho.csv"), "-o", &path("rho.json")])?;
    run(&["evd", &path("event.csv"), "-o", &path("event.json")])?;
    let out = run(&["prob", &path("rho.json"), &path("event.json")])?;
    let p: f64 = out.trim().strip_prefix("probability=").ok_or("no probability line")?.parse().map_err(|_| "bad probability")?;
    run(&["condition", &path("rho.json"), &path("event.json"), "-o", &path("in.json")])?;
    run(&["condition", &path("rho.json"), &path("event.json"), "--orthogonal", "-o", &path("out.json")])?;

    let mut drift = 0.0f64;
    for name in ["rho.json", "event.json", "in.json", "out.json"] {
        let doc = Decomposition::from_json(&fs::read_to_string(path(name)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let op = doc.to_operator().map_err(|e| e.to_string())?;
        let again = Decomposition::from_json(&Decomposition::from_operator(&op).to_json()).unwrap().to_operator().unwrap();
        drift = drift.max((dense(&again, 10) - dense(&op, 10)).amax());
    }
    check(
        (0.0..=1.0).contains(&p) && drift <= 1e-12,
        format!("probability {p}; JSON round-trip drift {drift:.2e}"),
        format!("probability {p}, round-trip drift {drift:.2e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("probability vs dense trace", probability),
        ("entropy and divergence vs dense oracles", entropy_divergence),
        ("conditionalisation vs dense square roots", conditioning),
        ("direct EVD", direct_evd),
        ("batch vs incremental builders", builders),
        ("pre-image reduction", reduction),
        ("structured KKT factorization", kkt),
        ("interior-point solver", ipm),
        ("CLI scenario and JSON round-trip", cli),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 9 passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
