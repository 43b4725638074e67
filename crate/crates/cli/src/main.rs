use std::f64::consts::LN_2;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qadd_core::cqa::{cqa, cqa_in_basis, cr_upper_bound, uncertainty_relation, Solver, SolverOptions};
use qadd_core::matcore::{derive_seed, pauli_x, pauli_z, random_density, random_hermitian, rng_from_seed};
use qadd_core::verify::{replay, run_suite_detailed, write_instances_csv, EnsembleSpec, Instance, TheoremId};
use qadd_core::{DensityMatrix, HermitianObservable, MatrixRecord, StateKind};

/// Tolerance for Hermiticity, trace and positivity of state files.
const STATE_FILE_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "qadd", version, about = "Quantum addition, its coherence measure, and randomized theorem checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the coherence of quantum addition of a state file.
    Cqa(CqaArgs),
    /// Run a theorem suite over a random ensemble.
    Check(CheckArgs),
    /// Tabulate a quantity over a grid of α values.
    Sweep(SweepArgs),
    /// Re-evaluate one suite instance and dump every intermediate.
    Replay(ReplayArgs),
    /// Write a random state file.
    State(StateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Grid,
    #[value(alias = "nelder_mead", alias = "nelder-mead")]
    Nm,
    Multistart,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Grid => Solver::Grid,
            SolverArg::Nm => Solver::NelderMead,
            SolverArg::Multistart => Solver::Multistart,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LogBase {
    Nats,
    Bits,
}

impl LogBase {
    fn convert(self, nats: f64) -> f64 {
        match self {
            Self::Nats => nats,
            Self::Bits => nats / LN_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Quantity {
    Cqa,
    #[value(name = "bound_gap", alias = "bound-gap")]
    BoundGap,
    #[value(name = "uncertainty_margin", alias = "uncertainty-margin")]
    UncertaintyMargin,
}

#[derive(Args, Debug, Clone)]
struct SolverFlags {
    #[arg(long, value_enum, default_value = "nm")]
    solver: SolverArg,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Lattice spacing for the grid solver (default depends on dimension).
    #[arg(long)]
    grid_step: Option<f64>,
    /// Random starts for the multistart solver.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Objective evaluations per Nelder-Mead run (default 1000·d).
    #[arg(long)]
    max_evals: Option<usize>,
}

impl SolverFlags {
    fn options(&self, seed: u64) -> Result<SolverOptions, Exit> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Exit::config(anyhow!("--tol must be positive, got {}", self.tol)));
        }
        Ok(SolverOptions {
            solver: self.solver.into(),
            tol: self.tol,
            grid_step: self.grid_step,
            n_starts: self.starts,
            max_evals: self.max_evals.unwrap_or(0),
            seed,
            ..SolverOptions::default()
        })
    }
}

#[derive(Args, Debug, Clone)]
struct EnsembleFlags {
    /// Comma-separated qudit dimensions.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    dims: Vec<usize>,
    /// Samples per (dimension, α) pair.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, env = "QADD_SEED", default_value_t = 0)]
    seed: u64,
    /// pure_haar, ginibre_mixed or diagonal.
    #[arg(long, default_value = "ginibre_mixed")]
    kind: String,
}

impl EnsembleFlags {
    fn kind(&self) -> Result<StateKind, Exit> {
        self.kind.parse().map_err(|e| Exit::config(anyhow!("{e}")))
    }

    fn spec(&self, alphas: Vec<f64>) -> Result<EnsembleSpec, Exit> {
        let spec = EnsembleSpec::new(self.dims.clone(), self.n, self.kind()?, alphas, self.seed);
        spec.validate().map_err(|e| Exit::config(e.into()))?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct CqaArgs {
    /// State file: {"dim": d, "re": [...], "im": [...]}, row-major.
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Hermitian observable file (same format); coherence is measured in
    /// its eigenbasis.
    #[arg(long)]
    basis: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, value_enum, default_value = "nats")]
    log_base: LogBase,
    /// Seed for multistart starting points.
    #[arg(long, env = "QADD_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Theorem id, e.g. reverse_ep, corollary, monotonicity.
    theorem: String,
    #[command(flatten)]
    ensemble: EnsembleFlags,
    /// Comma-separated α values.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    alpha: Vec<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json writes the report, csv the per-instance margins.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(value_enum)]
    quantity: Quantity,
    /// Comma-separated α grid.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    alpha: Vec<f64>,
    /// Sweep a single state file instead of a random ensemble.
    #[arg(long)]
    state: Option<PathBuf>,
    #[command(flatten)]
    ensemble: EnsembleFlags,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, value_enum, default_value = "nats")]
    log_base: LogBase,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    theorem: String,
    /// Instance seed, as in a report's worst_instance_seed.
    #[arg(long)]
    instance_seed: u64,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value = "ginibre_mixed")]
    kind: String,
    #[command(flatten)]
    solver: SolverFlags,
    /// Seed the suite ran with (only multistart uses it).
    #[arg(long, env = "QADD_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StateArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value = "pure_haar")]
    kind: String,
    #[arg(long, env = "QADD_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
struct Exit {
    code: u8,
    err: anyhow::Error,
}

impl Exit {
    fn config(err: anyhow::Error) -> Self {
        Self { code: 2, err }
    }
}

impl From<io::Error> for Exit {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            err: e.into(),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Exit> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(|err| Exit { code: 1, err }),
        None => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_matrix(path: &Path) -> Result<MatrixRecord, Exit> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Exit::config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Exit::config)
}

fn read_state(path: &Path) -> Result<DensityMatrix, Exit> {
    read_matrix(path)?
        .to_density(STATE_FILE_TOL)
        .with_context(|| format!("{} is not a valid density matrix", path.display()))
        .map_err(Exit::config)
}

fn check_alpha(alpha: f64) -> Result<(), Exit> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Exit::config(anyhow!("alpha {alpha} not in [0,1]")))
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct CqaOutput {
    value: f64,
    log_base: LogBase,
    alpha: f64,
    minimizer: Vec<f64>,
    solver: Solver,
    n_evals: usize,
    converged: bool,
    multiplicity: usize,
    path_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    degenerate_basis: Option<bool>,
}

fn cmd_cqa(args: &CqaArgs) -> Result<u8, Exit> {
    check_alpha(args.alpha)?;
    let rho = read_state(&args.state)?;
    let opts = args.solver.options(args.seed)?;
    let (result, degenerate) = match &args.basis {
        Some(path) => {
            let obs = HermitianObservable::new(read_matrix(path)?.to_matrix().map_err(|e| Exit::config(e.into()))?)
                .map_err(|e| Exit::config(e.into()))?;
            let r = cqa_in_basis(&rho, &obs, args.alpha, &opts).map_err(|e| Exit::config(e.into()))?;
            (r.result, Some(r.degenerate_spectrum))
        }
        None => (cqa(&rho, args.alpha, &opts).map_err(|e| Exit::config(e.into()))?, None),
    };
    let out = CqaOutput {
        value: args.log_base.convert(result.value),
        log_base: args.log_base,
        alpha: result.alpha,
        minimizer: result.minimizer.weights().to_vec(),
        solver: result.solver,
        n_evals: result.n_evals,
        converged: result.converged,
        multiplicity: result.multiplicity,
        path_gap: result.path_gap,
        degenerate_basis: degenerate,
    };
    emit(None, &format!("{}\n", serde_json::to_string_pretty(&out).expect("serializable")))?;
    if result.converged {
        Ok(0)
    } else {
        eprintln!("error: solver did not converge within its evaluation budget");
        Ok(3)
    }
}

fn cmd_check(args: &CheckArgs) -> Result<u8, Exit> {
    let theorem: TheoremId = args.theorem.parse().map_err(|e: qadd_core::Error| Exit::config(e.into()))?;
    let spec = args.ensemble.spec(args.alpha.clone())?;
    let opts = args.solver.options(spec.seed)?;
    if args.workers == Some(0) {
        return Err(Exit::config(anyhow!("--workers must be at least 1")));
    }
    let run = run_suite_detailed(theorem, &spec, &opts, args.workers).map_err(|e| Exit::config(e.into()))?;
    let payload = match args.format {
        Format::Json => format!("{}\n", run.report.to_json()),
        Format::Csv => {
            let mut buf = Vec::new();
            write_instances_csv(&mut buf, &run.instances)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    emit(args.out.as_deref(), &payload)?;
    let summary = run.report.summary_line();
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(if run.report.passed() { 0 } else { 1 })
}

fn sweep_states(args: &SweepArgs) -> Result<Vec<(u64, DensityMatrix)>, Exit> {
    if let Some(path) = &args.state {
        return Ok(vec![(0, read_state(path)?)]);
    }
    let kind = args.ensemble.kind()?;
    let mut states = Vec::new();
    for &d in &args.ensemble.dims {
        if d < 2 {
            return Err(Exit::config(anyhow!("dimension {d} < 2")));
        }
        for _ in 0..args.ensemble.n {
            let seed = derive_seed(args.ensemble.seed, states.len() as u64);
            states.push((seed, random_density(d, kind, seed).map_err(|e| Exit::config(e.into()))?));
        }
    }
    Ok(states)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Exit> {
    for &a in &args.alpha {
        check_alpha(a)?;
    }
    let opts = args.solver.options(args.ensemble.seed)?;
    let states = sweep_states(args)?;
    let base = args.log_base;
    let mut out = String::new();
    out.push_str(match args.quantity {
        Quantity::Cqa => "instance_seed,dim,alpha,cqa,converged\n",
        Quantity::BoundGap => "instance_seed,dim,alpha,cqa,bound_cr,gap\n",
        Quantity::UncertaintyMargin => {
            "instance_seed,dim,alpha,lhs,rhs_paper,rhs_derived,margin_paper,margin_derived\n"
        }
    });
    let core = |e: qadd_core::Error| Exit::config(e.into());
    for (seed, rho) in &states {
        let d = rho.dim();
        let observables = match args.quantity {
            Quantity::UncertaintyMargin if d == 2 => Some((
                HermitianObservable::new(pauli_x()).map_err(core)?,
                HermitianObservable::new(pauli_z()).map_err(core)?,
            )),
            Quantity::UncertaintyMargin => {
                let mut rng = rng_from_seed(seed ^ 0x0B5E_4AB1E);
                Some((
                    HermitianObservable::new(random_hermitian(d, &mut rng)).map_err(core)?,
                    HermitianObservable::new(random_hermitian(d, &mut rng)).map_err(core)?,
                ))
            }
            _ => None,
        };
        for &alpha in &args.alpha {
            let prefix = format!("{seed},{d},{}", fmt17(alpha));
            match args.quantity {
                Quantity::Cqa => {
                    let r = cqa(rho, alpha, &opts).map_err(core)?;
                    out.push_str(&format!("{prefix},{},{}\n", fmt17(base.convert(r.value)), r.converged));
                }
                Quantity::BoundGap => {
                    let r = cqa(rho, alpha, &opts).map_err(core)?;
                    let bound = cr_upper_bound(rho, alpha).map_err(core)?;
                    out.push_str(&format!(
                        "{prefix},{},{},{}\n",
                        fmt17(base.convert(r.value)),
                        fmt17(base.convert(bound)),
                        fmt17(base.convert(bound - r.value))
                    ));
                }
                Quantity::UncertaintyMargin => {
                    let (a, b) = observables.as_ref().expect("observables drawn");
                    let row = if alpha == 0.0 || alpha == 1.0 {
                        [0.0; 5]
                    } else {
                        let r = uncertainty_relation(rho, a, b, alpha, &opts).map_err(core)?;
                        [r.lhs, r.rhs_paper, r.rhs_derived, r.margin_paper, r.margin_derived]
                    };
                    let cols: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
                    out.push_str(&format!("{prefix},{}\n", cols.join(",")));
                }
            }
        }
    }
    emit(args.out.as_deref(), &out)?;
    Ok(0)
}

fn cmd_replay(args: &ReplayArgs) -> Result<u8, Exit> {
    let theorem: TheoremId = args.theorem.parse().map_err(|e: qadd_core::Error| Exit::config(e.into()))?;
    let kind: StateKind = args.kind.parse().map_err(|e: qadd_core::Error| Exit::config(e.into()))?;
    check_alpha(args.alpha)?;
    let inst = Instance {
        theorem,
        seed: args.instance_seed,
        dim: args.dim,
        alpha: args.alpha,
        kind,
    };
    let dump = replay(&inst, &args.solver.options(args.seed)?).map_err(|e| Exit::config(e.into()))?;
    emit(
        args.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&dump).expect("serializable")),
    )?;
    Ok(0)
}

fn cmd_state(args: &StateArgs) -> Result<u8, Exit> {
    let kind: StateKind = args.kind.parse().map_err(|e: qadd_core::Error| Exit::config(e.into()))?;
    let rho = random_density(args.dim, kind, args.seed).map_err(|e| Exit::config(e.into()))?;
    let rec = MatrixRecord::from_matrix(rho.matrix()).map_err(|e| Exit::config(e.into()))?;
    emit(args.out.as_deref(), &format!("{}\n", serde_json::to_string(&rec).expect("serializable")))?;
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8, Exit> {
    match &cli.command {
        Command::Cqa(a) => cmd_cqa(a),
        Command::Check(a) => cmd_check(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Replay(a) => cmd_replay(a),
        Command::State(a) => cmd_state(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
