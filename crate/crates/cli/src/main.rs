//! Command-line front end: predicts critical coupling strengths, runs direct
//! simulations, and verifies predictions against detected onsets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popsync_cli::commands::{self, CmdError};
use popsync_cli::config::{load_config, LoadedConfig};
use popsync_cli::output;

#[derive(Parser)]
#[command(
    name = "popsync",
    version,
    about = "Critical coupling strengths for interacting oscillator populations: \
             predict them from the marginal-stability determinant, measure them \
             by direct simulation, and check one against the other."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict critical couplings and write critical.csv
    Analyze(CommonArgs),
    /// Run one trial at the configured eta and print per-population r
    Simulate(CommonArgs),
    /// Sweep the coupling grid and write sweep.csv
    Sweep(CommonArgs),
    /// Analyze, sweep, detect onsets, and judge the predictions (verify.csv)
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `[sim] seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sweep (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

type CommandFn = fn(&LoadedConfig) -> Result<i32, CmdError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, CommandFn) = match &cli.command {
        Command::Analyze(a) => (a, cmd_analyze),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Verify(a) => (a, cmd_verify),
    };
    match prepare(args).and_then(|cfg| run(&cfg)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn prepare(args: &CommonArgs) -> Result<LoadedConfig, CmdError> {
    if let Some(n) = args.threads {
        // A second invocation in-process would fail; that cannot happen in
        // this binary, but ignore the error rather than die on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = load_config(&args.config)?;
    if let Some(dir) = &args.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg)
}

fn print_relevant(set: &popsync::CriticalSet) {
    if set.is_empty() {
        println!("no synchronization for any coupling strength");
        return;
    }
    match set.relevant_negative {
        Some(e) => println!("relevant negative threshold: eta* = {e}"),
        None => println!("no negative threshold"),
    }
    match set.relevant_positive {
        Some(e) => println!("relevant positive threshold: eta* = {e}"),
        None => println!("no positive threshold"),
    }
}

fn cmd_analyze(cfg: &LoadedConfig) -> Result<i32, CmdError> {
    let outcome = commands::run_analyze(cfg)?;
    println!(
        "method: {}; {} solution(s)",
        outcome.method,
        outcome.report.critical.solutions.len()
    );
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    print_relevant(&outcome.report.critical);
    let path = output::write_critical_csv(&cfg.output_dir, &outcome)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_simulate(cfg: &LoadedConfig) -> Result<i32, CmdError> {
    let result = commands::run_simulate(cfg)?;
    println!("eta = {}", cfg.system.coupling.eta);
    for (p, (mean, std)) in result.r_mean.iter().zip(&result.r_std).enumerate() {
        println!("population {}: r = {mean} (std {std})", p + 1);
    }
    Ok(0)
}

fn cmd_sweep(cfg: &LoadedConfig) -> Result<i32, CmdError> {
    let result = commands::run_sweep(cfg)?;
    let path = output::write_sweep_csv(&cfg.output_dir, &result)?;
    println!(
        "swept {} grid points; wrote {}",
        result.eta_values.len(),
        path.display()
    );
    Ok(0)
}

fn cmd_verify(cfg: &LoadedConfig) -> Result<i32, CmdError> {
    let bundle = commands::run_verify(cfg)?;
    output::write_critical_csv(&cfg.output_dir, &bundle.analysis)?;
    output::write_sweep_csv(&cfg.output_dir, &bundle.sweep)?;
    let path = output::write_verify_csv(&cfg.output_dir, &bundle)?;
    for w in &bundle.analysis.report.warnings {
        eprintln!("warning: {w}");
    }
    for row in &bundle.outcome.rows {
        match row.onset {
            Some(onset) => println!(
                "prediction eta* = {} -> onset {} (|error| = {}, allowed {}): {}",
                row.eta_star,
                onset,
                row.abs_error.unwrap(),
                row.tolerance,
                if row.pass { "ok" } else { "MISMATCH" }
            ),
            None => println!(
                "prediction eta* = {} -> no onset detected: MISMATCH",
                row.eta_star
            ),
        }
    }
    for o in &bundle.outcome.unexpected_onsets {
        eprintln!("warning: onset at eta = {o} matches no prediction");
    }
    println!("wrote {}", path.display());
    if bundle.outcome.vacuous {
        println!("verification vacuously PASSED: no thresholds predicted, no onsets detected");
    } else if bundle.outcome.pass {
        println!("verification PASSED");
    } else {
        println!("verification FAILED");
    }
    Ok(if bundle.outcome.pass { 0 } else { 1 })
}
