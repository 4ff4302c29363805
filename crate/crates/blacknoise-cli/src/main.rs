use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use blacknoise_cli::config::{apply_overrides, load_config, RunConfig, RunMode};
use blacknoise_cli::{plot, runner};

/// Environment variable holding the default output root.
const OUT_ENV: &str = "BLACKNOISE_OUT";

#[derive(Parser)]
#[command(name = "blacknoise", version, about = "Black-noise cascade simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config, or a manifest.json to rerun a previous configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means all cores (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Output root directory (falls back to $BLACKNOISE_OUT, then the
    /// config, then `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path config overrides, e.g. --set cascade.m=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full posterior pipeline and estimate H1 per level.
    SimulateBlack(RunArgs),
    /// Run the white-noise control cascade.
    SimulateWhite(RunArgs),
    /// Run sampler diagnostics against analytic targets.
    Diagnostics(RunArgs),
    /// Render SVG figures for one or more finished runs.
    Plot {
        /// Run directories (each containing manifest.json).
        run_dirs: Vec<PathBuf>,
    },
}

fn resolve_config(mode: RunMode, args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default_for(mode),
    };
    config.mode = mode;
    config = apply_overrides(&config, &args.sets)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.n_threads = threads;
    }
    Ok(config)
}

fn out_root(args: &RunArgs, config: &RunConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Ok(env) = std::env::var(OUT_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    config
        .out_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Prints that tolerate a closed pipe (e.g. `blacknoise ... | head`).
fn say(line: String) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn run(mode: RunMode, args: &RunArgs) -> Result<bool> {
    let config = resolve_config(mode, args)?;
    let root = out_root(args, &config);
    let output = runner::execute(&config, &root)?;
    say(format!("run directory: {}", output.dir.display()));
    for (phase, secs) in &output.manifest.phase_runtimes_secs {
        say(format!("  phase {phase}: {secs:.2}s"));
    }
    for chain in &output.manifest.chains {
        say(format!(
            "  chain w{}: acceptance {:.3}, beta {:.4}",
            chain.w_id, chain.acceptance_rate, chain.final_beta
        ));
    }
    let failed = output.failed_chains();
    if failed > 0 {
        for failure in &output.manifest.failures {
            eprintln!("chain w{} failed: {}", failure.w_id, failure.message);
        }
        eprintln!("{failed} chain(s) failed");
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::SimulateBlack(args) => run(RunMode::Black, args),
        Command::SimulateWhite(args) => run(RunMode::White, args),
        Command::Diagnostics(args) => run(RunMode::Diagnostics, args),
        Command::Plot { run_dirs } => (|| {
            if run_dirs.is_empty() {
                anyhow::bail!("plot needs at least one run directory");
            }
            for dir in run_dirs {
                let files = plot::plot_run(dir)
                    .with_context(|| format!("plotting {}", dir.display()))?;
                for f in files {
                    say(format!("wrote {}", f.display()));
                }
            }
            Ok(true)
        })(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
