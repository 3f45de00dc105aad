use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use blf_cli::commands::{cmd_check, cmd_plot, cmd_run, cmd_sweep, RunOptions, SweepCommand};
use blf_cli::output::EXIT_CONFIG;
use blf_cli::sweep::{parse_box, GridAxis, SweepOptions, DEFAULT_MAX_ATTEMPTS};
use clap::{Args, Parser, Subcommand};

/// Simulate constrained adaptive backstepping control.
///
/// Scenario names that are not found as paths are looked up in
/// $BLF_SCENARIO_DIR, with or without the `.scenario` extension.
#[derive(Debug, Parser)]
#[command(name = "blfsim", version)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario, write its trajectory CSV and print a JSON report.
    ///
    /// Exit codes: 0 ok, 1 configuration error or rejected initial data,
    /// 2 constraint violation, 3 divergence.
    Run {
        scenario: PathBuf,
        /// Override a scenario field, e.g. `--set sim.t_final=5` or
        /// `--set initial.x[0]=0.4`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Trajectory CSV path (default: output.csv, else <scenario>.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run many trials over a grid and random initial states.
    Sweep(SweepArgs),
    /// Run the numeric property suite; exit 0 iff every property holds.
    Check {
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        flip_sigma1: bool,
    },
    /// Write a matplotlib script that renders a trajectory CSV.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SweepArgs {
    scenario: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Trials per grid cell.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Master seed; per-trial seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample x(0) uniformly from this box, e.g. `-0.1:0.1,-0.5:0.5,0:0`.
    #[arg(long = "x0-box", value_name = "LO:HI,...", allow_hyphen_values = true)]
    x0_box: Option<String>,
    /// Grid axis `key=v1,v2,...`. Repeatable; cells are the cartesian product.
    #[arg(long = "grid", value_name = "KEY=V1,V2")]
    grid: Vec<String>,
    /// Draws per trial before giving up on finding admissible x(0).
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Aggregate CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn into_command(self) -> Result<SweepCommand> {
        Ok(SweepCommand {
            scenario: self.scenario,
            overrides: self.overrides,
            options: SweepOptions {
                trials: self.trials,
                master_seed: self.seed,
                x0_box: self.x0_box.as_deref().map(parse_box).transpose()?,
                grid: self
                    .grid
                    .iter()
                    .map(|g| GridAxis::parse(g))
                    .collect::<Result<_>>()?,
                max_attempts: self.max_attempts.max(1),
            },
            out: self.out,
            jobs: self.jobs,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let code = match cli.command {
        Command::Run {
            scenario,
            overrides,
            csv,
            report,
        } => cmd_run(&RunOptions {
            scenario,
            overrides,
            csv,
            report,
        }),
        Command::Sweep(args) => match args.into_command() {
            Ok(cmd) => cmd_sweep(&cmd),
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_CONFIG
            }
        },
        Command::Check { json, flip_sigma1 } => cmd_check(flip_sigma1, json),
        Command::Plot { csv, out } => cmd_plot(&csv, out.as_deref()),
    };
    ExitCode::from(code)
}
