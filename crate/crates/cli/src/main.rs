//! Command-line frontend for the auxiliary-variable estimator library.
//!
//! Subcommands: `estimate` (replicated estimator draws), `infer`
//! (pseudo-marginal or ABC chains over theta), `bench` (bias/variance
//! grids), `oracle` (exact brute-force values) and `verify`
//! (detailed-balance and equivalence checks). Every run is configured by a
//! flat key-value file plus flag overrides (flags win), with all randomness
//! derived from the single `seed` key. Exit codes: 0 success, 1 invalid
//! configuration or runtime error, 2 failed verification.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::CliResult;

#[derive(Parser)]
#[command(name = "auxvar", version, about = "Auxiliary-variable normalizing-constant estimators on Ising lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file; output headers are accepted as configs
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    cols: Option<String>,
    #[arg(long)]
    boundary: Option<String>,
    /// Output path, `-` for stdout
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Number of bridge levels (linear spacing)
    #[arg(long)]
    a: Option<String>,
    /// Explicit comma-separated beta ladder; overrides `a`
    #[arg(long)]
    betas: Option<String>,
    #[arg(long = "sweeps_per_level")]
    sweeps_per_level: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long = "theta_ref")]
    theta_ref: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long = "theta_ref")]
    theta_ref: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long = "prior_lo")]
    prior_lo: Option<String>,
    #[arg(long = "prior_hi")]
    prior_hi: Option<String>,
    #[arg(long = "proposal_sd")]
    proposal_sd: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long = "init_theta")]
    init_theta: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "theta_grid")]
    theta_grid: Option<String>,
    #[arg(long = "theta_ref_grid")]
    theta_ref_grid: Option<String>,
    #[arg(long = "a_grid")]
    a_grid: Option<String>,
    #[arg(long = "b_grid")]
    b_grid: Option<String>,
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Include wall-time columns (non-reproducible)
    #[arg(long)]
    timings: Option<String>,
    #[arg(long = "summary_out")]
    summary_out: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    data: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long = "theta_ref")]
    theta_ref: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    /// Test hook: compose a systematic fixed-order scan (not reversible)
    #[arg(long)]
    nonreversible: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated estimator draws with a summary row
    Estimate(EstimateArgs),
    /// Pseudo-marginal or ABC Markov chain over theta
    Infer(InferArgs),
    /// Bias/variance grid against the exact oracle
    Bench(BenchArgs),
    /// Exact brute-force partition function and likelihood
    Oracle(OracleArgs),
    /// Detailed-balance and equivalence checks
    Verify(VerifyArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate(args) => {
            let flags = vec![
                ("rows", args.common.rows),
                ("cols", args.common.cols),
                ("boundary", args.common.boundary),
                ("out", args.common.out),
                ("a", args.schedule.a),
                ("betas", args.schedule.betas),
                ("sweeps_per_level", args.schedule.sweeps_per_level),
                ("theta", args.theta),
                ("theta_ref", args.theta_ref),
                ("variant", args.variant),
                ("b", args.b),
                ("replicates", args.replicates),
                ("data", args.data),
                ("epsilon", args.epsilon),
                ("distance", args.distance),
                ("seed", args.seed),
                ("format", args.format),
            ];
            commands::cmd_estimate(args.common.config.as_deref(), &flags)
        }
        Command::Infer(args) => {
            let flags = vec![
                ("rows", args.common.rows),
                ("cols", args.common.cols),
                ("boundary", args.common.boundary),
                ("out", args.common.out),
                ("a", args.schedule.a),
                ("betas", args.schedule.betas),
                ("sweeps_per_level", args.schedule.sweeps_per_level),
                ("theta_ref", args.theta_ref),
                ("variant", args.variant),
                ("b", args.b),
                ("data", args.data),
                ("prior_lo", args.prior_lo),
                ("prior_hi", args.prior_hi),
                ("proposal_sd", args.proposal_sd),
                ("iterations", args.iterations),
                ("init_theta", args.init_theta),
                ("epsilon", args.epsilon),
                ("distance", args.distance),
                ("seed", args.seed),
                ("format", args.format),
            ];
            commands::cmd_infer(args.common.config.as_deref(), &flags)
        }
        Command::Bench(args) => {
            let flags = vec![
                ("rows", args.common.rows),
                ("cols", args.common.cols),
                ("boundary", args.common.boundary),
                ("out", args.common.out),
                ("theta_grid", args.theta_grid),
                ("theta_ref_grid", args.theta_ref_grid),
                ("a_grid", args.a_grid),
                ("b_grid", args.b_grid),
                ("variants", args.variants),
                ("replicates", args.replicates),
                ("data", args.data),
                ("epsilon", args.epsilon),
                ("distance", args.distance),
                ("seed", args.seed),
                ("timings", args.timings),
                ("summary_out", args.summary_out),
            ];
            commands::cmd_bench(args.common.config.as_deref(), &flags)
        }
        Command::Oracle(args) => {
            let flags = vec![
                ("rows", args.common.rows),
                ("cols", args.common.cols),
                ("boundary", args.common.boundary),
                ("out", args.common.out),
                ("theta", args.theta),
                ("data", args.data),
            ];
            commands::cmd_oracle(args.common.config.as_deref(), &flags)
        }
        Command::Verify(args) => {
            let flags = vec![
                ("rows", args.common.rows),
                ("cols", args.common.cols),
                ("boundary", args.common.boundary),
                ("out", args.common.out),
                ("a", args.schedule.a),
                ("betas", args.schedule.betas),
                ("sweeps_per_level", args.schedule.sweeps_per_level),
                ("theta", args.theta),
                ("theta_ref", args.theta_ref),
                ("b", args.b),
                ("data", args.data),
                ("tolerance", args.tolerance),
                ("nonreversible", args.nonreversible),
                ("seed", args.seed),
            ];
            commands::cmd_verify(args.common.config.as_deref(), &flags)
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::ExitCode::from(e.exit_code)
        }
    }
}
