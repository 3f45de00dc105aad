//! Matplotlib script generation for a trajectory CSV.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Reads the CSV header and returns the state dimension.
pub fn csv_order(csv_path: &Path) -> Result<usize> {
    let mut reader = csv::Reader::from_path(csv_path)
        .with_context(|| format!("opening {}", csv_path.display()))?;
    let header = reader.headers()?.clone();
    let n = header
        .iter()
        .filter(|h| {
            h.strip_prefix('x')
                .is_some_and(|i| i.parse::<usize>().is_ok())
        })
        .count();
    if n == 0 || header.get(0) != Some("t") {
        bail!("{} is not a trajectory CSV", csv_path.display());
    }
    Ok(n)
}

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// One figure per state (with its reference and constraint envelope) plus
/// the control input, observer estimates, Nussbaum arguments and weight
/// norms.
pub fn plot_script(csv_path: &Path, image_prefix: &str) -> Result<String> {
    let n = csv_order(csv_path)?;
    let mut s = String::new();
    s.push_str(&format!(
        r#"#!/usr/bin/env python3
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_PATH = {csv}
PREFIX = {prefix}
N = {n}

with open(CSV_PATH, newline="") as fh:
    rows = list(csv.DictReader(fh))


def col(name):
    return [float(r[name]) for r in rows]


t = col("t")

"#,
        csv = py_str(&csv_path.to_string_lossy()),
        prefix = py_str(image_prefix),
    ));

    let mut fig = 0;
    let mut block = |s: &mut String, title: &str, body: &str, ylabel: &str| {
        fig += 1;
        s.push_str(&format!(
            "# Figure {fig}: {title}\nfig, ax = plt.subplots()\n{body}ax.set_xlabel(\"t [s]\")\nax.set_ylabel({ylabel})\nax.set_title({title_s})\nax.legend()\nfig.savefig(f\"{{PREFIX}}_fig{fig}.png\", dpi=150)\nplt.close(fig)\n\n",
            ylabel = py_str(ylabel),
            title_s = py_str(title),
        ));
    };

    for i in 1..=n {
        let mut body = format!("ax.plot(t, col(\"x{i}\"), label=\"x{i}\")\n");
        if i == 1 {
            body.push_str("ax.plot(t, col(\"yd\"), \"--\", label=\"yd\")\n");
        }
        body.push_str(&format!(
            "ax.plot(t, col(\"Psi{i}\"), \"r:\", label=\"+Psi{i}\")\nax.plot(t, [-v for v in col(\"Psi{i}\")], \"r:\", label=\"-Psi{i}\")\n"
        ));
        block(
            &mut s,
            &format!("state x{i} and its constraint"),
            &body,
            &format!("x{i}"),
        );
    }
    block(
        &mut s,
        "control input",
        "ax.plot(t, col(\"u\"), label=\"u\")\n",
        "u",
    );
    let per_loop = |prefix: &str| {
        (1..=n)
            .map(|i| format!("ax.plot(t, col(\"{prefix}{i}\"), label=\"{prefix}{i}\")\n"))
            .collect::<String>()
    };
    block(
        &mut s,
        "observer estimates",
        &per_loop("eps_hat"),
        "eps_hat",
    );
    block(&mut s, "Nussbaum arguments", &per_loop("zeta"), "zeta");
    block(&mut s, "network weight norms", &per_loop("Wnorm"), "||W||");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_trajectory_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(plot_script(&p, "x").is_err());
        assert!(plot_script(&dir.path().join("missing.csv"), "x").is_err());
    }

    #[test]
    fn quotes_paths() {
        assert_eq!(py_str("a\"b\\c"), "\"a\\\"b\\\\c\"");
    }
}
