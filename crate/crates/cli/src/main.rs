//! `martinlab`: hitting probabilities, Martin kernels, harmonic measures and
//! mean value property checks for nearest-neighbour random walks on trees.
//!
//! Exit codes: 0 success, 1 a checked verdict is false, 2 input or
//! validation error, 3 the hitting solver did not converge.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use martinlab_core::io::parse_json;
use martinlab_core::mvp::MASS_THRESHOLD;
use martinlab_core::oracle::WalkConfig;
use martinlab_core::Error;
use serde_json::json;

use martinlab::commands::{self, Estimator, Mode, Outcome, Solved};
use martinlab::report::{digest, Report, SolverDiag, Tolerances, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "martinlab", version, about = "Random walks on trees: hitting probabilities, Martin kernels, harmonic measure and mean value properties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Tree description (JSON).
    #[arg(long)]
    tree: PathBuf,
    /// Relative tolerance for verdicts.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Stopping tolerance of the hitting solver.
    #[arg(long = "solver-tol", default_value_t = 1e-12)]
    solver_tol: f64,
    /// Iteration cap of the hitting solver.
    #[arg(long = "max-iter", default_value_t = 1_000_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Weak,
    Strong,
    Both,
    Cylinder,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateArg {
    Hitting,
    Cylinder,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tree description and echo it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Solve for all hitting probabilities and scan branches for transience.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Martin kernel k_o(x, y), its supremum, and boundary values near x.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Reference vertex o (defaults to the root).
        #[arg(long)]
        reference: Option<String>,
        x: String,
        y: Option<String>,
    },
    /// Harmonic measure of boundary cylinders seen through each vertex.
    Cylinder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: Option<String>,
        /// Starting vertex (defaults to the reference vertex).
        #[arg(long)]
        from: Option<String>,
        #[arg(required = true)]
        at: Vec<String>,
    },
    /// Harmonic extension of a locally constant boundary function.
    Extension {
        #[command(flatten)]
        common: Common,
        /// Cylinder function (JSON).
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        reference: Option<String>,
        /// Vertices to evaluate at (defaults to every core vertex).
        at: Vec<String>,
    },
    /// Classify the mean value properties of a signed measure.
    Mvp {
        #[command(flatten)]
        common: Common,
        /// Measure (JSON).
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Check whether every infinite branch carries harmonic measure.
    Trees1 {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimate of a hitting probability or cylinder measure.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = EstimateArg::Hitting)]
        estimate: EstimateArg,
        #[arg(long)]
        from: String,
        #[arg(long)]
        at: String,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tail depth at which a trial counts as escaped.
        #[arg(long, default_value_t = 30)]
        depth: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Solve { .. } => "solve",
            Command::Kernel { .. } => "kernel",
            Command::Cylinder { .. } => "cylinder",
            Command::Extension { .. } => "extension",
            Command::Mvp { .. } => "mvp",
            Command::Trees1 { .. } => "trees1",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Solve { common }
            | Command::Kernel { common, .. }
            | Command::Cylinder { common, .. }
            | Command::Extension { common, .. }
            | Command::Mvp { common, .. }
            | Command::Trees1 { common }
            | Command::Simulate { common, .. } => common,
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MaxIterExceeded { .. } | Error::NotConverged => 3,
        _ => 2,
    }
}

/// Reads an input file and records its digest.
fn load<T: for<'de> serde::Deserialize<'de>>(
    path: &Path,
    role: &str,
    digests: &mut BTreeMap<String, String>,
) -> Result<T, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    digests.insert(role.to_string(), digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_json(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn run(cmd: &Command, digests: &mut BTreeMap<String, String>, solver: &mut Option<SolverDiag>) -> Result<Outcome, Error> {
    let common = cmd.common();
    if !(common.tol > 0.0 && common.tol.is_finite() && common.solver_tol > 0.0 && common.solver_tol.is_finite()) {
        return Err(Error::InvalidArgument("tolerances must be positive and finite".into()));
    }
    let raw = load(&common.tree, "tree", digests)?;
    if let Command::Validate { .. } = cmd {
        return commands::validate(&raw);
    }
    let s = Solved::new(&raw, common.solver_tol, common.max_iter)?;
    *solver = Some(s.diag());
    s.ef.check()?;
    match cmd {
        Command::Validate { .. } => unreachable!("handled above"),
        Command::Solve { .. } => commands::solve(&s),
        Command::Kernel { reference, x, y, .. } => commands::kernel(&s, reference.as_deref(), x, y.as_deref()),
        Command::Cylinder { reference, from, at, .. } => {
            commands::cylinder(&s, reference.as_deref(), from.as_deref(), at)
        }
        Command::Extension { function, reference, at, .. } => {
            let f = load(function, "function", digests)?;
            commands::extension(&s, &f, reference.as_deref(), at)
        }
        Command::Mvp { measure, mode, .. } => {
            let m = load(measure, "measure", digests)?;
            let mode = match mode {
                ModeArg::Weak => Mode::Weak,
                ModeArg::Strong => Mode::Strong,
                ModeArg::Both => Mode::Both,
                ModeArg::Cylinder => Mode::Cylinder,
            };
            commands::mvp(&s, &m, mode, common.tol)
        }
        Command::Trees1 { .. } => commands::trees1(&s),
        Command::Simulate { estimate, from, at, reference, trials, horizon, seed, depth, .. } => {
            let cfg = WalkConfig { trials: *trials, horizon: *horizon, seed: *seed, depth: *depth, ..WalkConfig::default() };
            let est = match estimate {
                EstimateArg::Hitting => Estimator::Hitting,
                EstimateArg::Cylinder => Estimator::Cylinder,
            };
            commands::simulate(&s, est, from, at, reference.as_deref(), &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = &cli.command;
    let common = cmd.common();
    let mut digests = BTreeMap::new();
    let mut solver = None;
    let (results, warnings, status) = match run(cmd, &mut digests, &mut solver) {
        Ok(o) => (o.results, o.warnings, i32::from(!o.holds)),
        Err(e) => {
            eprintln!("error: {e}");
            let status = exit_code(&e);
            let mut results = json!({ "error": e.to_string() });
            if let Error::InvalidSpec(v) = &e {
                results["violations"] = json!(v.iter().map(ToString::to_string).collect::<Vec<_>>());
            }
            (results, Vec::new(), status)
        }
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: cmd.name().to_string(),
        arguments: std::env::args().skip(1).collect(),
        inputs_digest: digests,
        tolerances: Tolerances { tol: common.tol, solver_tol: common.solver_tol, mass_threshold: MASS_THRESHOLD },
        solver,
        results,
        warnings,
        exit_status: status,
    };
    let text = match common.format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report.to_text(),
    };
    // a closed pipe downstream is not an error of ours
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    ExitCode::from(status as u8)
}
