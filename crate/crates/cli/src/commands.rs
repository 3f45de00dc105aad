//! Subcommand bodies. Each returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use blf_core::properties::{run_all, standard_roots, PropertyCheck, RootsFn};
use blf_core::{summarize, validate_initial, Lemma2Params, Simulator};

use crate::output::{
    describe_violations, write_trajectory_csv, RunReport, Status, EXIT_CONFIG, EXIT_OK,
};
use crate::plot::plot_script;
use crate::scenario::{load, LoadedScenario};
use crate::sweep::{run_sweep, write_sweep_csv, SweepOptions};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub overrides: Vec<String>,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn config_error(err: anyhow::Error) -> u8 {
    eprintln!("error: {err:#}");
    EXIT_CONFIG
}

fn script_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv.with_file_name(format!("{stem}_plot.py"))
}

fn image_prefix(csv: &Path) -> String {
    csv.with_extension("").to_string_lossy().into_owned()
}

pub fn cmd_run(opts: &RunOptions) -> u8 {
    let loaded = match load(&opts.scenario, &opts.overrides) {
        Ok(l) => l,
        Err(e) => return config_error(e),
    };
    match run_loaded(&loaded, opts) {
        Ok(code) => code,
        Err(e) => config_error(e),
    }
}

fn run_loaded(loaded: &LoadedScenario, opts: &RunOptions) -> Result<u8> {
    let cfg = loaded.scenario.to_config()?;
    let violations = validate_initial(&cfg);
    if !violations.is_empty() {
        eprintln!(
            "error: initial data rejected before integration:\n{}",
            describe_violations(&violations)
        );
        return Ok(EXIT_CONFIG);
    }
    let order = cfg.order();
    let seed = cfg.nn.seed;
    let dt = cfg.dt;
    let sim = Simulator::new(cfg)?;

    let started = Instant::now();
    let result = sim.run()?;
    let wall = started.elapsed().as_secs_f64();

    let csv_path = opts.csv.clone().unwrap_or_else(|| {
        loaded
            .scenario
            .output
            .csv
            .as_ref()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", loaded.stem())))
    });
    let file =
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let rows = write_trajectory_csv(BufWriter::new(file), order, &result.trajectory.samples)?;
    if loaded.scenario.output.plot_script {
        let script = plot_script(&csv_path, &image_prefix(&csv_path))?;
        std::fs::write(script_path(&csv_path), script)?;
    }

    let status = Status::of(result.failure.as_ref());
    let report = RunReport {
        status,
        scenario: loaded.path.display().to_string(),
        config_hash: loaded.config_hash(),
        seed,
        steps: result.steps_taken,
        t_end: result.steps_taken as f64 * dt,
        wall_clock_s: wall,
        csv: Some(csv_path.display().to_string()),
        rows,
        metrics: summarize(&result.trajectory).ok(),
        failure: result.failure.clone(),
        warnings: sim.warnings().to_vec(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &opts.report {
        std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(f) = &result.failure {
        eprintln!("run stopped: {}", f.message);
    }
    Ok(status.exit_code())
}

#[derive(Debug, Clone)]
pub struct SweepCommand {
    pub scenario: PathBuf,
    pub overrides: Vec<String>,
    pub options: SweepOptions,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Exit 0 once every trial has run, whatever the trials' statuses.
pub fn cmd_sweep(cmd: &SweepCommand) -> u8 {
    let run = || -> Result<()> {
        let loaded = load(&cmd.scenario, &cmd.overrides)?;
        let order = loaded.scenario.to_config()?.order();
        let rows = match cmd.jobs {
            Some(j) => rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()?
                .install(|| run_sweep(&loaded, &cmd.options))?,
            None => run_sweep(&loaded, &cmd.options)?,
        };
        match &cmd.out {
            Some(path) => {
                let file =
                    File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_sweep_csv(BufWriter::new(file), &cmd.options.grid, order, &rows)?;
            }
            None => {
                let stdout = std::io::stdout();
                write_sweep_csv(stdout.lock(), &cmd.options.grid, order, &rows)?;
            }
        }
        let count = |st: Status| rows.iter().filter(|r| r.status == st).count();
        eprintln!(
            "{} trials: {} ok, {} violated, {} diverged",
            rows.len(),
            count(Status::Ok),
            count(Status::Violated),
            count(Status::Diverged)
        );
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => config_error(e),
    }
}

fn flipped_sigma1(params: &Lemma2Params, v1: f64) -> Option<(f64, f64)> {
    params.roots(v1).map(|(s1, s2)| (-s1, s2))
}

pub fn property_suite(flip_sigma1: bool) -> Vec<PropertyCheck> {
    let roots: RootsFn = if flip_sigma1 {
        flipped_sigma1
    } else {
        standard_roots
    };
    run_all(roots)
}

pub fn cmd_check(flip_sigma1: bool, json: bool) -> u8 {
    let checks = property_suite(flip_sigma1);
    let mut out = std::io::stdout().lock();
    if json {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&checks).expect("serializable")
        );
    } else {
        for c in &checks {
            let _ = writeln!(
                out,
                "{} {:<22} {:>6} samples, {:>5} failing  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.samples,
                c.failures,
                c.detail
            );
        }
    }
    if checks.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}

pub fn cmd_plot(csv: &Path, out: Option<&Path>) -> u8 {
    let run = || -> Result<PathBuf> {
        let script = plot_script(csv, &image_prefix(csv))?;
        let path = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| script_path(csv));
        std::fs::write(&path, script).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    };
    match run() {
        Ok(path) => {
            println!("{}", path.display());
            EXIT_OK
        }
        Err(e) => config_error(e),
    }
}
