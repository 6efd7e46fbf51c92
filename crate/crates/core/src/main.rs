use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use popescu::chain::{DEFAULT_DECAY_TOL, DEFAULT_N_MAX};
use popescu::cli::{self, Output, TolOverrides};

/// Invariants of finite-dimensional Popescu systems.
#[derive(Parser)]
#[command(name = "popescu", version)]
struct Args {
    /// Accepted residual of the defining relation.
    #[arg(long, global = true)]
    tol_validate: Option<f64>,
    /// Unit-circle slack for peripheral eigenvalues.
    #[arg(long, global = true)]
    tol_peripheral: Option<f64>,
    /// Matching slack for spectral sets.
    #[arg(long, global = true)]
    tol_spectral_set: Option<f64>,
    /// Emit compact rather than pretty-printed JSON.
    #[arg(long, global = true)]
    compact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the defining relation of a system file.
    Validate { path: PathBuf },
    /// Full classification report.
    Analyze { path: PathBuf },
    /// Expectation of a local observable (file path or inline JSON).
    ChainEval { path: PathBuf, observable: String },
    /// Clustering defects of two observables over growing gaps.
    Cluster {
        path: PathBuf,
        x: String,
        y: String,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_DECAY_TOL)]
        decay_tol: f64,
    },
    /// Truncated dilation: quotient dimension and Cuntz residuals.
    Dilate {
        path: PathBuf,
        #[arg(long, default_value_t = 3)]
        level: usize,
    },
    /// Dual system residuals and spectral comparison.
    Dual { path: PathBuf },
    /// Intertwiners X with Σ W_i X V_i* = X.
    Intertwine { path_w: PathBuf, path_v: PathBuf },
    /// A random system file.
    Random { d: usize, n: usize, seed: u64 },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let tol = TolOverrides {
        validate: args.tol_validate,
        peripheral: args.tol_peripheral,
        spectral_set: args.tol_spectral_set,
    };
    let out: Output = match &args.command {
        Command::Validate { path } => cli::cmd_validate(path, &tol),
        Command::Analyze { path } => cli::cmd_analyze(path, &tol),
        Command::ChainEval { path, observable } => cli::cmd_chain_eval(path, observable, &tol),
        Command::Cluster { path, x, y, n_max, decay_tol } => {
            cli::cmd_cluster(path, x, y, *n_max, *decay_tol, &tol)
        }
        Command::Dilate { path, level } => cli::cmd_dilate(path, *level, &tol),
        Command::Dual { path } => cli::cmd_dual(path, &tol),
        Command::Intertwine { path_w, path_v } => cli::cmd_intertwine(path_w, path_v, &tol),
        Command::Random { d, n, seed } => cli::cmd_random(*d, *n, *seed),
    };
    let text = if args.compact {
        serde_json::to_string(&out.json)
    } else {
        serde_json::to_string_pretty(&out.json)
    }
    .expect("JSON output serializes");
    println!("{text}");
    if let Some(err) = out.json.get("error").and_then(|e| e.as_str()) {
        eprintln!("popescu: {err}");
    }
    ExitCode::from(out.exit_code as u8)
}
