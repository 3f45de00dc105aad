//! Trajectory CSV and the run report.

use std::io::Write;

use anyhow::Result;
use blf_core::{Failure, Metrics, Sample, Violation};
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_VIOLATED: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// `{:.11e}`: twelve significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let series =
        |h: &mut Vec<String>, prefix: &str| h.extend((1..=n).map(|i| format!("{prefix}{i}")));
    series(&mut h, "x");
    h.push("u".into());
    h.push("yd".into());
    for prefix in ["z", "psi", "Psi", "eps_hat", "zeta", "Wnorm", "L"] {
        series(&mut h, prefix);
    }
    h
}

pub fn csv_row(s: &Sample) -> Vec<String> {
    let mut row = Vec::with_capacity(3 + 8 * s.x.len());
    row.push(fmt_float(s.t));
    row.extend(s.x.iter().copied().map(fmt_float));
    row.push(fmt_float(s.u));
    row.push(fmt_float(s.reference));
    for series in [
        &s.z, &s.psi, &s.svic, &s.eps_hat, &s.zeta, &s.w_norm, &s.barrier,
    ] {
        row.extend(series.iter().copied().map(fmt_float));
    }
    row
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Writes header and one row per sample; returns the row count.
pub fn write_trajectory_csv<W: Write>(out: W, order: usize, samples: &[Sample]) -> Result<usize> {
    let mut w = csv_writer(out);
    w.write_record(csv_header(order))?;
    for s in samples {
        w.write_record(csv_row(s))?;
    }
    w.flush()?;
    Ok(samples.len())
}

pub fn table_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv_writer(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Violated,
    Diverged,
}

impl Status {
    pub fn of(failure: Option<&Failure>) -> Self {
        match failure {
            None => Self::Ok,
            Some(f) if f.kind.is_violation() => Self::Violated,
            Some(_) => Self::Diverged,
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Self::Ok => EXIT_OK,
            Self::Violated => EXIT_VIOLATED,
            Self::Diverged => EXIT_DIVERGED,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Violated => "violated",
            Self::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: Status,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub steps: usize,
    pub t_end: f64,
    pub wall_clock_s: f64,
    pub csv: Option<String>,
    pub rows: usize,
    pub metrics: Option<Metrics>,
    pub failure: Option<Failure>,
    pub warnings: Vec<String>,
}

/// Human-readable lines for rejected initial data.
pub fn describe_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = csv_header(3);
        assert_eq!(h.len(), 3 + 8 * 3);
        assert_eq!(&h[..6], &["t", "x1", "x2", "x3", "u", "yd"]);
        assert_eq!(h.last().unwrap(), "L3");
        assert!(h.contains(&"Psi2".to_string()) && h.contains(&"Wnorm1".to_string()));
    }

    #[test]
    fn twelve_digit_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.370_432_755_968_071, 1e-300, 0.0] {
            let back: f64 = fmt_float(v).parse().unwrap();
            assert!((back - v).abs() <= 5e-12 * v.abs(), "{v}");
        }
        assert_eq!(fmt_float(0.5), "5.00000000000e-1");
    }
}
