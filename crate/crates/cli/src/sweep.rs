//! Batches of runs over a parameter grid and random initial states.
//!
//! Trials are numbered across the grid (cell-major). Each trial's seed is a
//! SplitMix64 hash of the master seed and its number, and drives only the
//! initial-state sampler, so a trial's network centers stay the scenario's.

use std::io::Write;

use anyhow::{anyhow, bail, Context, Result};
use blf_core::simulator::SimConfig;
use blf_core::{summarize, validate_initial, Failure, Metrics, Simulator};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output::{fmt_float, table_writer, Status};
use crate::scenario::{parse_document, parse_value, set_path, LoadedScenario};

pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    /// Raw values, parsed like `--set` right-hand sides.
    pub values: Vec<String>,
}

impl GridAxis {
    /// Parses `key=v1,v2,...`; commas inside brackets or quotes do not split.
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, rest) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("grid axis `{spec}` is not of the form key=v1,v2"))?;
        let mut values = Vec::new();
        let (mut depth, mut quoted, mut start) = (0i32, false, 0);
        for (i, c) in rest.char_indices() {
            match c {
                '"' => quoted = !quoted,
                '[' if !quoted => depth += 1,
                ']' if !quoted => depth -= 1,
                ',' if !quoted && depth == 0 => {
                    values.push(rest[start..i].trim().to_string());
                    start = i + 1;
                }
                _ => {}
            }
        }
        values.push(rest[start..].trim().to_string());
        if values.iter().any(String::is_empty) {
            bail!("grid axis `{spec}` has an empty value");
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Parses `lo:hi,lo:hi,...`.
pub fn parse_box(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| anyhow!("box interval `{part}` is not lo:hi"))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .with_context(|| format!("bad bound in `{part}`"))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .with_context(|| format!("bad bound in `{part}`"))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                bail!("box interval `{part}` is empty or not finite");
            }
            Ok((lo, hi))
        })
        .collect()
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64))
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub trials: usize,
    pub master_seed: u64,
    pub x0_box: Option<Vec<(f64, f64)>>,
    pub grid: Vec<GridAxis>,
    pub max_attempts: usize,
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub grid_values: Vec<String>,
    pub x0: Vec<f64>,
    pub attempts: usize,
    pub status: Status,
    pub failure: Option<Failure>,
    pub steps: usize,
    pub t_end: f64,
    pub metrics: Metrics,
}

fn grid_cells(grid: &[GridAxis]) -> Vec<Vec<String>> {
    grid.iter().fold(vec![Vec::new()], |cells, axis| {
        cells
            .iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect()
    })
}

fn cell_config(base: &LoadedScenario, grid: &[GridAxis], values: &[String]) -> Result<SimConfig> {
    let mut doc = base.document.clone();
    for (axis, v) in grid.iter().zip(values) {
        set_path(&mut doc, &axis.key, parse_value(v))?;
    }
    parse_document(&doc)?.to_config()
}

fn run_trial(
    cfg: &SimConfig,
    opts: &SweepOptions,
    trial: usize,
    grid_values: Vec<String>,
) -> Result<TrialRow> {
    let seed = trial_seed(opts.master_seed, trial);
    let mut cfg = cfg.clone();
    let mut attempts = 1;
    match &opts.x0_box {
        Some(bx) => {
            if bx.len() != cfg.order() {
                bail!(
                    "x0 box has {} intervals, the plant has order {}",
                    bx.len(),
                    cfg.order()
                );
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            loop {
                cfg.x0 = bx
                    .iter()
                    .map(|&(lo, hi)| {
                        if lo == hi {
                            lo
                        } else {
                            rng.random_range(lo..hi)
                        }
                    })
                    .collect();
                if validate_initial(&cfg).is_empty() {
                    break;
                }
                if attempts == opts.max_attempts {
                    bail!(
                        "trial {trial}: no admissible initial state in {attempts} draws from the x0 box"
                    );
                }
                attempts += 1;
            }
        }
        None => {
            let v = validate_initial(&cfg);
            if let Some(first) = v.first() {
                bail!("trial {trial}: initial state rejected: {first}");
            }
        }
    }
    let result = Simulator::new(cfg.clone())?.run()?;
    let metrics = summarize(&result.trajectory)?;
    Ok(TrialRow {
        trial,
        seed,
        grid_values,
        x0: cfg.x0.clone(),
        attempts,
        status: Status::of(result.failure.as_ref()),
        t_end: result.steps_taken as f64 * cfg.dt,
        steps: result.steps_taken,
        failure: result.failure,
        metrics,
    })
}

/// Runs every grid cell `trials` times; rows come back in trial order.
pub fn run_sweep(base: &LoadedScenario, opts: &SweepOptions) -> Result<Vec<TrialRow>> {
    if opts.trials == 0 {
        bail!("a sweep needs at least one trial");
    }
    let cells = grid_cells(&opts.grid);
    let configs = cells
        .iter()
        .map(|values| cell_config(base, &opts.grid, values))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..opts.trials).map(move |k| (c, c * opts.trials + k)))
        .collect();
    jobs.par_iter()
        .map(|&(cell, trial)| run_trial(&configs[cell], opts, trial, cells[cell].clone()))
        .collect()
}

pub fn sweep_header(grid: &[GridAxis], order: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["trial".into(), "seed".into()];
    h.extend(grid.iter().map(|a| a.key.clone()));
    h.extend((1..=order).map(|i| format!("x0_{i}")));
    h.extend(
        [
            "attempts",
            "status",
            "failure_kind",
            "failure_t",
            "failure_index",
            "steps",
            "t_end",
            "max_constraint_ratio",
            "max_theta_ratio",
            "rms_z1_tail",
            "sup_u",
            "sup_w_norm",
            "sup_zeta",
            "sup_eps_hat",
        ]
        .map(String::from),
    );
    h
}

pub fn write_sweep_csv<W: Write>(
    out: W,
    grid: &[GridAxis],
    order: usize,
    rows: &[TrialRow],
) -> Result<()> {
    let mut w = table_writer(out);
    w.write_record(sweep_header(grid, order))?;
    for r in rows {
        let mut rec = vec![r.trial.to_string(), r.seed.to_string()];
        rec.extend(r.grid_values.iter().cloned());
        rec.extend(r.x0.iter().copied().map(fmt_float));
        rec.push(r.attempts.to_string());
        rec.push(r.status.as_str().into());
        match &r.failure {
            Some(f) => {
                rec.push(
                    serde_json::to_value(f.kind)?
                        .as_str()
                        .unwrap_or_default()
                        .to_string(),
                );
                rec.push(fmt_float(f.t));
                rec.push(f.index.map(|i| i.to_string()).unwrap_or_default());
            }
            None => rec.extend([String::new(), String::new(), String::new()]),
        }
        rec.push(r.steps.to_string());
        rec.push(fmt_float(r.t_end));
        let m = &r.metrics;
        rec.push(fmt_float(m.max_constraint_ratio));
        rec.push(fmt_float(m.max_theta_ratio));
        rec.push(m.rms_z1_tail.map(fmt_float).unwrap_or_default());
        for v in [m.sup_u, m.sup_w_norm, m.sup_zeta, m.sup_eps_hat] {
            rec.push(fmt_float(v));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
