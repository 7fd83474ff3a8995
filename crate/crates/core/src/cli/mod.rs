//! `hazrate` command-line front end.
//!
//! Every subcommand writes plain CSV into the output directory, which is
//! `--out-dir`, else `$HAZRATE_OUT_DIR`, else the working directory. A flat
//! `key = value` file given by `--config` supplies defaults for any flag;
//! explicit flags override it.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver non-convergence or a
//! divergent likelihood.

mod commands;
pub mod config;
pub mod format;

use std::collections::HashSet;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub const OUT_DIR_ENV: &str = "HAZRATE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "hazrate", version, about = "Hazards versus rates under time-varying treatment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key = value file supplying default flag values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Horizon of the time grid.
    #[arg(long, default_value_t = 3.0)]
    pub tmax: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.005)]
    pub step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Fixed-point tolerance on sup |rate ratio - e^beta|.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Relaxation weight of the new iterate.
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Constant initiation hazard λ01.
    #[arg(long, default_value_t = 0.3)]
    pub lambda01: f64,
    /// Treated hazard during the first `lag` time units on treatment.
    #[arg(long, default_value_t = 0.4)]
    pub early: f64,
    /// Treated hazard afterwards.
    #[arg(long, default_value_t = 0.2)]
    pub late: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lag: f64,
    /// Log rate ratio imposed by the construction.
    #[arg(long, default_value_t = (2.0f64 / 3.0).ln(), allow_hyphen_values = true)]
    pub beta: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelSource {
    /// Model CSV (`t,lambda01,lambda02`) written by `construct`; the kernel
    /// comes from --early/--late/--lag. Without it the model is constructed.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub params: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ekm,
    Na,
    Cox,
    CoxDuration,
    Aalen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrailtyKind {
    Gamma,
    Degenerate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build λ02 so that the treated rate is e^beta times λ02.
    Construct {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: ModelArgs,
    },
    /// Rates among treated and untreated for a model.
    Rates {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Simulate trajectories and write counting-process rows.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Administrative censoring time (default: the grid horizon).
        #[arg(long)]
        censor: Option<f64>,
        /// Rows CSV path (default: rows.csv in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate from counting-process rows.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Rows CSV with header id,start,stop,treat,event.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// True and rate-based survival curves and hazard ratios.
    Contrast {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        source: ModelSource,
        /// Time at which the survival differences are reported.
        #[arg(long)]
        at: Option<f64>,
    },
    /// Frailty-marginal hazards along two treatment paths.
    FrailtyDemo {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.3)]
        h0: f64,
        #[arg(long, default_value_t = 0.5)]
        h1: f64,
        #[arg(long, value_enum, default_value_t = FrailtyKind::Gamma)]
        frailty: FrailtyKind,
        /// Gamma frailty variance.
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        /// Degenerate frailty value.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.0)]
        u1: f64,
        #[arg(long, default_value_t = 1.5)]
        u2: f64,
        /// Time at which the gap is reported.
        #[arg(long, default_value_t = 2.0)]
        at: f64,
    },
    /// Exact two-period collider table.
    Collider {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.2)]
        p1: f64,
        #[arg(long, default_value_t = 0.5)]
        effect: f64,
        /// Comma-separated frailty values.
        #[arg(long, default_value = "0.5,1.5")]
        z: String,
        /// Comma-separated frailty probabilities.
        #[arg(long, default_value = "0.5,0.5")]
        pz: String,
    },
    /// Chain construct, contrast, simulate and estimate for the worked
    /// example and compare every headline number.
    Reproduce {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5)]
        section: u32,
        #[command(flatten)]
        params: ModelArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Self::Construct { common, .. }
            | Self::Rates { common, .. }
            | Self::Simulate { common, .. }
            | Self::Estimate { common, .. }
            | Self::Contrast { common, .. }
            | Self::FrailtyDemo { common, .. }
            | Self::Collider { common, .. }
            | Self::Reproduce { common, .. } => common,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence { .. } | Error::MonotoneLikelihood(_) => 2,
        _ => 1,
    }
}

/// Inserts config-file flags accepted by the chosen subcommand ahead of the
/// user's own flags, skipping any the user set explicitly.
fn merge_config(args: Vec<String>) -> Result<Vec<String>, Error> {
    let Some(path) = config::find_config_flag(&args) else {
        return Ok(args);
    };
    let entries = config::load(std::path::Path::new(&path))?;
    let Some(pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&args[pos]) else {
        return Ok(args);
    };
    let accepted: HashSet<String> = sub.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
    let known: HashSet<String> = cmd
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect::<Vec<_>>())
        .collect();
    let explicit: HashSet<String> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut injected = Vec::new();
    for (key, value) in entries {
        if !known.contains(&key) || key == "config" {
            return Err(Error::InvalidParameter(format!("unknown config key `{key}`")));
        }
        if accepted.contains(&key) && !explicit.contains(&key) {
            injected.push(format!("--{key}={value}"));
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_args(args: Vec<String>) -> i32 {
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out_dir = cli
        .command
        .common()
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        return 1;
    }
    match commands::run(&cli.command, &out_dir) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run_args(std::env::args().collect())
}
