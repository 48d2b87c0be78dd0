use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsrepro_cli::run::CACHE_ENV;
use nsrepro_cli::{run, CliError, Experiment, RunConfig, RunOptions};

/// Navier–Stokes with tangential wall data: Stokes eigenbasis, boundary
/// lift, Galerkin solves, estimate monitors and reproductive solutions.
///
/// Exit codes: 0 pass, 1 monitor failure, 2 usage/config error,
/// 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "nsrepro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute (or load) the Stokes eigenbasis and check it.
    Eigs(Common),
    /// Sweep the lift cutoff: divergence, β(ε) and smallness.
    Lift(Common),
    /// Integrate the Galerkin system and write traces and snapshots.
    Solve(Common),
    /// Solve and monitor the energy inequality, H¹ bound and determinism.
    Verify(Common),
    /// Decay of a perturbation against the e^{−νt} envelope.
    Stability(Common),
    /// Contraction measurement and Picard iteration to u(T) = u(0).
    Reproductive {
        #[command(flatten)]
        common: Common,
        /// Fixed-point tolerance (overrides solver.tol_fixed_point).
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration limit (overrides reproductive.max_iter).
        #[arg(long)]
        max_iter: Option<usize>,
        /// Contraction pairs (overrides reproductive.pairs).
        #[arg(long)]
        pairs: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute the Stokes basis even if cached.
    #[arg(long)]
    force_rebuild_basis: bool,
    /// Basis cache directory.
    #[arg(long, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
}

fn load(common: &Common, experiment: Experiment) -> Result<(RunConfig, RunOptions), CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?.0,
        None => RunConfig::from_toml("", std::path::Path::new("."))?.0,
    };
    cfg.experiment = Some(experiment);
    cfg.out = common.out.clone();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let opts = RunOptions {
        force_rebuild_basis: common.force_rebuild_basis,
        cache_dir: common.cache_dir.clone(),
    };
    Ok((cfg, opts))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, experiment) = match &cli.command {
        Command::Eigs(c) => (c, Experiment::Eigs),
        Command::Lift(c) => (c, Experiment::Lift),
        Command::Solve(c) => (c, Experiment::Solve),
        Command::Verify(c) => (c, Experiment::Verify),
        Command::Stability(c) => (c, Experiment::Stability),
        Command::Reproductive { common, .. } => (common, Experiment::Reproductive),
    };
    let result = load(common, experiment).and_then(|(mut cfg, opts)| {
        if let Command::Reproductive {
            tol,
            max_iter,
            pairs,
            ..
        } = &cli.command
        {
            if let Some(t) = tol {
                cfg.solver.tol_fixed_point = *t;
            }
            if let Some(k) = max_iter {
                cfg.reproductive.max_iter = *k;
            }
            if let Some(p) = pairs {
                cfg.reproductive.pairs = *p;
            }
            cfg.validate()?;
        }
        run(&cfg, &opts)
    });
    match result {
        Ok(manifest) => {
            let summary = serde_json::to_string_pretty(&manifest.summary).unwrap_or_default();
            println!("{summary}");
            match &manifest.error {
                Some(e) => println!("{}: error: {e}", manifest.experiment),
                None => println!(
                    "{}: {}",
                    manifest.experiment,
                    if manifest.passed { "PASS" } else { "FAIL" }
                ),
            }
            ExitCode::from(manifest.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
