//! The `kqp` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kqp_core::{
    nullspace_reduce, qp_reduce, BuilderConfig, Density, Divergence, Event, EventKind, IncrementalState, KernelOperator, KernelSpec,
    QpReductionParams, ReductionReport, UpdateTerm, DEFAULT_PIVOT_THRESHOLD,
};

use crate::error::CliError;
use crate::format::{read_operator, read_vectors, read_weights, Decomposition};

/// Weights of an observable are exactly one up to this tolerance.
const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "kqp", version, about = "Kernel quantum probabilities over low-rank decompositions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds a decomposition of Σ α_i·φ(x_i)·φ(x_i)† from a CSV of vectors.
    Evd(EvdArgs),
    /// Prints tr(ρ·E).
    Prob(PairArgs),
    /// Prints tr(ρ·ln ρ).
    Entropy(EntropyArgs),
    /// Prints the divergence of ρ from the smoothed τ.
    Divergence(DivergenceArgs),
    /// Conditions ρ on an event and writes the normalized result.
    Condition(ConditionArgs),
    /// Removes pre-images from a decomposition.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Linear,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Observable,
    Effect,
}

#[derive(Debug, Args)]
pub struct EvdArgs {
    /// CSV file, one vector per row.
    pub vectors: PathBuf,
    /// One weight α_i per vector (default 1).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Relative Frobenius error allowed when truncating.
    #[arg(long, default_value_t = 1e-12)]
    pub eta: f64,
    /// Maximum rank.
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Pre-image budget factor.
    #[arg(short = 'c', long = "preimage-ratio", default_value_t = 2.0)]
    pub preimage_ratio: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    pub density: PathBuf,
    pub event: PathBuf,
    #[arg(long, value_enum, default_value = "observable")]
    pub kind: Kind,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    pub density: PathBuf,
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    pub rho: PathBuf,
    pub tau: PathBuf,
    /// Weight of the noise mixed into τ.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Noise level; defaults to 1/dim.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    pub density: PathBuf,
    pub event: PathBuf,
    #[arg(long, value_enum, default_value = "observable")]
    pub kind: Kind,
    /// Condition on the complement Id − E.
    #[arg(long)]
    pub orthogonal: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    pub input: PathBuf,
    /// Fixed regularization weight of the QP method.
    #[arg(long, conflicts_with_all = ["target_removals", "delta"])]
    pub lambda: Option<f64>,
    /// QP method with the weight searched to remove at least this many.
    #[arg(long, conflicts_with = "delta")]
    pub target_removals: Option<usize>,
    /// Pivot threshold of the lossless null-space method (the default method).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Loads a density and scales it to unit trace.
pub fn load_density(path: &Path) -> Result<Density, CliError> {
    let op = read_operator(path)?;
    Ok(Density::new(op)?.normalize()?)
}

fn orthonormal(op: KernelOperator) -> Result<KernelOperator, CliError> {
    if op.is_orthonormal() {
        Ok(op)
    } else {
        Ok(op.orthonormalize()?)
    }
}

/// Loads an event. Observables are the projector onto the span of the
/// stored operator unless the file already holds a projector.
pub fn load_event(path: &Path, kind: Kind) -> Result<Event, CliError> {
    let op = read_operator(path)?;
    let event = match kind {
        Kind::Observable if op.is_orthonormal() && op.weights().iter().all(|d| (d - 1.0).abs() <= UNIT_TOL) => {
            Event::new(op, EventKind::Observable)?
        }
        Kind::Observable => Event::observable_from_span(&op)?,
        Kind::Effect => Event::new(orthonormal(op)?, EventKind::StrictEffect)?,
    };
    Ok(event)
}

/// Fixed-point rendering with 12 decimals and no negative zero.
pub fn fmt_value(v: f64) -> String {
    let s = format!("{v:.12}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn emit(op: &KernelOperator, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => crate::format::write_operator(op, p),
        None => writeln!(out, "{}", Decomposition::from_operator(op).to_json()).map_err(|e| CliError::input(e.to_string())),
    }
}

fn line(w: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(w, "{text}").map_err(|e| CliError::input(e.to_string()))
}

pub fn evd(args: &EvdArgs) -> Result<KernelOperator, CliError> {
    let rows = read_vectors(&args.vectors)?;
    let weights = match &args.weights {
        Some(p) => {
            let w = read_weights(p)?;
            if w.len() != rows.len() {
                return Err(CliError::input(format!("{} weights for {} vectors", w.len(), rows.len())));
            }
            w
        }
        None => vec![1.0; rows.len()],
    };
    let kernel = match args.kernel {
        KernelKind::Linear => KernelSpec::Linear,
        KernelKind::Gaussian => KernelSpec::gaussian(args.bandwidth)?,
    };
    let config = BuilderConfig::new(args.eta, args.r_max.unwrap_or(usize::MAX), args.preimage_ratio)?;
    let mut state = IncrementalState::new(kernel, config);
    for (row, alpha) in rows.into_iter().zip(weights) {
        state.add(&UpdateTerm::rank_one(kernel, row, alpha)?)?;
    }
    Ok(state.decomposition())
}

pub fn probability(args: &PairArgs) -> Result<f64, CliError> {
    let rho = load_density(&args.density)?;
    let event = load_event(&args.event, args.kind)?;
    Ok(rho.probability(&event)?)
}

pub fn entropy(args: &EntropyArgs) -> Result<f64, CliError> {
    let rho = load_density(&args.density)?;
    let rho = Density::new(orthonormal(rho.into_operator())?)?;
    Ok(rho.entropy()?)
}

pub fn divergence(args: &DivergenceArgs) -> Result<Divergence, CliError> {
    let rho = load_density(&args.rho)?;
    let rho = Density::new(orthonormal(rho.into_operator())?)?;
    let tau = load_density(&args.tau)?;
    let dim = tau.operator().preimages().dim();
    let tau = Density::new(orthonormal(tau.into_operator())?)?;
    let alpha = match args.alpha {
        Some(a) => a,
        None if dim > 0 => 1.0 / dim as f64,
        None => return Err(CliError::input("alpha is required when the dimension is unknown")),
    };
    Ok(rho.divergence(&tau, args.epsilon, alpha)?)
}

pub fn condition(args: &ConditionArgs) -> Result<KernelOperator, CliError> {
    let rho = load_density(&args.density)?;
    let event = load_event(&args.event, args.kind)?;
    let cond = rho.condition_on(&event, args.orthogonal)?;
    if cond.is_degenerate() {
        return Err(CliError::Degenerate("zero-trace result".into()));
    }
    Ok(cond.normalize()?.into_operator().orthonormalize()?)
}

pub fn reduce(args: &ReduceArgs) -> Result<(KernelOperator, ReductionReport), CliError> {
    let op = read_operator(&args.input)?;
    let params = match (args.lambda, args.target_removals) {
        (Some(l), _) => Some(QpReductionParams::fixed(l)),
        (None, Some(m)) => Some(QpReductionParams::auto(m)),
        (None, None) => None,
    };
    let res = match params {
        Some(p) => qp_reduce(&orthonormal(op)?, &p)?,
        None => nullspace_reduce(&op, args.delta.unwrap_or(DEFAULT_PIVOT_THRESHOLD))?,
    };
    Ok(res)
}

/// Runs one command. Values go to `out`; when a JSON document is written
/// to `out`, summaries go to `err` instead.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Evd(a) => emit(&evd(a)?, a.output.as_deref(), out),
        Command::Prob(a) => line(out, &format!("probability={}", fmt_value(probability(a)?))),
        Command::Entropy(a) => line(out, &format!("entropy={}", fmt_value(entropy(a)?))),
        Command::Divergence(a) => match divergence(a)? {
            Divergence::Finite(v) => line(out, &format!("divergence={}", fmt_value(v))),
            Divergence::Infinite => line(out, "divergence=inf"),
        },
        Command::Condition(a) => emit(&condition(a)?, a.output.as_deref(), out),
        Command::Reduce(a) => {
            let (op, rep) = reduce(a)?;
            emit(&op, a.output.as_deref(), out)?;
            let summary: &mut dyn Write = if a.output.is_some() { out } else { err };
            line(summary, &format!("removed={}", rep.removed_indices.len()))?;
            line(summary, &format!("residual={:.6e}", rep.residual))
        }
    }
}
