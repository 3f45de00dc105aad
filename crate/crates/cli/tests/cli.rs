use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blf_cli::scenario::load;
use blf_core::{summarize, Simulator};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_blfsim"));
    c.env_remove("BLF_SCENARIO_DIR").env("RUST_LOG", "off");
    c
}

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn benchmark() -> PathBuf {
    manifest().join("scenarios/benchmark3.scenario")
}

fn chain() -> PathBuf {
    manifest().join("tests/fixtures/chain1.scenario")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn successful_run_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["run", chain().to_str().unwrap(), "--csv", "out.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    // t_final / (dt * decimation) = 0.01 / (1e-4 * 10) = 10 intervals.
    assert_eq!(text.lines().count(), 1 + 11);
    assert!(!text.contains('\r'));
    let r = report(&o);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["rows"], 11);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_horizon_writes_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "run",
            benchmark().to_str().unwrap(),
            "--set",
            "t_final=0",
            "--csv",
            "b.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,x1,x2,x3,u,yd,z1,z2,z3,psi1,psi2,psi3,Psi1,Psi2,Psi3,"));
    assert!(lines[0].ends_with("Wnorm1,Wnorm2,Wnorm3,L1,L2,L3"));
    assert!(lines[1].starts_with("0.00000000000e0,5.00000000000e-1,-3.00000000000e-1,"));
}

#[test]
fn missing_scenario_exits_1_without_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["run", "missing.scenario"]);
    assert_eq!(code(&o), 1);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn scenario_directory_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .current_dir(dir.path())
        .env("BLF_SCENARIO_DIR", manifest().join("scenarios"))
        .args(["run", "benchmark3", "--set", "sim.t_final=0"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("benchmark3.csv").is_file());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let typo = run_in(
        dir.path(),
        &["run", chain().to_str().unwrap(), "--set", "sim.t_finl=1"],
    );
    assert_eq!(code(&typo), 1);
    let text = std::fs::read_to_string(chain())
        .unwrap()
        .replace("[sim]", "[sim]\nfoo = 1");
    std::fs::write(dir.path().join("bad.scenario"), text).unwrap();
    let o = run_in(dir.path(), &["run", "bad.scenario"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));
}

#[test]
fn violation_and_divergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let violated = run_in(
        dir.path(),
        &["run", benchmark().to_str().unwrap(), "--csv", "v.csv"],
    );
    assert_eq!(code(&violated), 2);
    assert_eq!(report(&violated)["status"], "violated");

    let diverged = run_in(
        dir.path(),
        &[
            "run",
            chain().to_str().unwrap(),
            "--set",
            "sim.signal_ceiling=1",
            "--csv",
            "d.csv",
        ],
    );
    assert_eq!(code(&diverged), 3);
    let r = report(&diverged);
    assert_eq!(r["status"], "diverged");
    assert_eq!(r["failure"]["kind"], "ceiling-exceeded");
}

#[test]
fn rejected_start_exits_1_before_integration() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "run",
            benchmark().to_str().unwrap(),
            "--set",
            "initial.x[0]=1.6",
            "--csv",
            "r.csv",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(o.stdout.is_empty());
    assert!(!dir.path().join("r.csv").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loop 1"));
}

#[test]
fn csv_round_trips_logged_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["run", chain().to_str().unwrap(), "--csv", "c.csv"],
    );
    assert_eq!(code(&o), 0);

    let loaded = load(&chain(), &[]).unwrap();
    let result = Simulator::new(loaded.scenario.to_config().unwrap())
        .unwrap()
        .run()
        .unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("c.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), result.trajectory.samples.len());
    for (row, s) in rows.iter().zip(&result.trajectory.samples) {
        let expected = [s.t, s.x[0], s.u, s.reference, s.z[0], s.psi[0], s.svic[0]];
        for (field, want) in row.iter().zip(expected) {
            let got: f64 = field.parse().unwrap();
            assert!((got - want).abs() <= 5e-12 * want.abs(), "{got} vs {want}");
        }
    }
}

#[test]
fn sweep_single_trial_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_in(
        dir.path(),
        &[
            "sweep",
            chain().to_str().unwrap(),
            "--trials",
            "1",
            "--seed",
            "3",
        ],
    );
    assert_eq!(code(&s), 0);
    let mut reader = csv::Reader::from_reader(s.stdout.as_slice());
    let header = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let get = |name: &str| {
        row.get(header.iter().position(|h| h == name).unwrap())
            .unwrap()
            .to_string()
    };

    let loaded = load(&chain(), &[]).unwrap();
    let result = Simulator::new(loaded.scenario.to_config().unwrap())
        .unwrap()
        .run()
        .unwrap();
    let m = summarize(&result.trajectory).unwrap();
    assert_eq!(get("status"), "ok");
    assert_eq!(get("sup_u"), format!("{:.11e}", m.sup_u));
    assert_eq!(get("sup_zeta"), format!("{:.11e}", m.sup_zeta));
    assert_eq!(
        get("rms_z1_tail"),
        format!("{:.11e}", m.rms_z1_tail.unwrap())
    );
    assert_eq!(get("x0_1"), format!("{:.11e}", 0.3));
}

#[test]
fn sweep_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = chain();
    let args = [
        "sweep",
        scenario.to_str().unwrap(),
        "--trials",
        "25",
        "--seed",
        "11",
        "--x0-box",
        "-0.5:0.5",
        "--grid",
        "controller.gains=[1.0],[2.0]",
        "--jobs",
        "3",
    ];
    let a = run_in(dir.path(), &args);
    let b = run_in(dir.path(), &args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 50);
    assert!(lines[0].starts_with("trial,seed,controller.gains,x0_1,attempts,status,"));
    for (k, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{k},")));
    }
}

#[test]
fn sweep_with_no_admissible_start_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "sweep",
            chain().to_str().unwrap(),
            "--x0-box",
            "2.6:2.9",
            "--max-attempts",
            "20",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no admissible initial state"));
}

#[test]
fn check_lists_named_properties_and_exit_matches() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["check"]);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 6);
    for name in [
        "lemma2_conclusion",
        "lemma2_roots",
        "lemma3",
        "saturation",
        "rk4_order",
        "observer_consistency",
    ] {
        assert!(
            lines
                .iter()
                .any(|l| l.split_whitespace().nth(1) == Some(name)),
            "{name}"
        );
    }
    let all_pass = lines.iter().all(|l| l.starts_with("PASS"));
    assert_eq!(code(&o), if all_pass { 0 } else { 1 });
    assert!(lines.iter().any(|l| l.starts_with("PASS lemma2_roots")));
}

#[test]
fn flipped_sigma1_fails_lemma2_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["check", "--flip-sigma1"]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL lemma2_roots")));
}

#[test]
fn plot_script_has_seven_figures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "run",
            benchmark().to_str().unwrap(),
            "--set",
            "t_final=0",
            "--csv",
            "b.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let p = run_in(dir.path(), &["plot", "b.csv", "--out", "b.py"]);
    assert_eq!(code(&p), 0);
    let bytes = std::fs::read(dir.path().join("b.py")).unwrap();
    assert!(!bytes.contains(&0));
    let script = String::from_utf8(bytes).unwrap();
    assert_eq!(script.matches("plt.subplots()").count(), 7);
    for col in [
        "\"Psi3\"",
        "\"u\"",
        "\"eps_hat2\"",
        "\"zeta3\"",
        "\"Wnorm1\"",
        "\"yd\"",
    ] {
        assert!(script.contains(col), "{col}");
    }
    let parsed = Command::new("python3")
        .args(["-c", "import ast, sys; ast.parse(open(sys.argv[1]).read())"])
        .arg(dir.path().join("b.py"))
        .status();
    if let Ok(status) = parsed {
        assert!(status.success());
    }

    let missing = run_in(dir.path(), &["plot", "nope.csv"]);
    assert_eq!(code(&missing), 1);
}
