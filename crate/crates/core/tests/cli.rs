use std::path::Path;
use std::process::{Command, Output};

use parabolic_l1::cli::{read_field_dump, RunConfig};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parabolic-l1"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_report_and_timeseries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["solve", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["converged"], true);
    assert!(report["kkt"]["stationarity"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["activity"].as_array().unwrap().len(), 10);
    let csv = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,u_l1,mu_linf,lambda,sparsity_fraction");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert!(r[1] <= 1.4 * (1.0 + 1e-12));
        assert!((0.0..=1.0).contains(&r[4]));
    }
}

#[test]
fn report_embeds_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 4\n[problem]\nn_t = 6\ny0 = \"constant(0.25)\"\n");
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let report = read_json(&out.join("report.json"));
    let embedded: RunConfig = serde_json::from_value(report["config"].clone()).unwrap();
    let mut expected = RunConfig::from_toml("seed = 9\n[problem]\nn_t = 6\ny0 = \"constant(0.25)\"\n").unwrap();
    expected.output.dir = out.clone();
    assert_eq!(embedded, expected);
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out_s = out.to_str().unwrap();
    let mut first = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&run(&["solve", "--out", out_s])), 0);
        first.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("timeseries.csv")).unwrap(),
        ));
    }
    assert!(first[0] == first[1]);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        ("[problem]\nkapa = 0.1\n", "kapa"),
        ("[optimizer]\ntolerance = 1e-8\nbogus = 1\n", "bogus"),
        ("[problem]\nkappa = -1.0\n", "problem.kappa"),
        ("[problem]\nyd = \"wave\"\n", "wave"),
        ("[problem]\nn_dim = 3\n", "problem.n_dim"),
        ("[problem\n", "TOML"),
    ] {
        let cfg = write_config(dir.path(), text);
        let o = run(&["solve", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
        assert_eq!(code(&o), 1, "{text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(key) || key == "TOML", "{text}: {err}");
    }
    assert_eq!(code(&run(&["solve", "--config", "/nonexistent/run.toml"])), 1);
    assert_eq!(code(&run(&["launch"])), 1);
}

#[test]
fn iteration_cap_gives_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[optimizer]\nmax_iterations = 1\ntolerance = 1e-12\n");
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["converged"], false);
    assert_eq!(report["iterations"], 1);
    assert!(out.join("timeseries.csv").exists());
}

#[test]
fn field_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nn_per_axis = 5\nn_t = 4\n[output]\ndump_fields = true\n");
    let out = dir.path().join("o");
    assert_eq!(code(&run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()])), 0);
    for (name, slices) in [("u", 4), ("y", 5), ("phi", 4), ("mu", 4)] {
        let path = out.join(format!("{name}.pfld"));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PFLD");
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
        assert_eq!((word(0), word(1), word(2)), (slices, 5, 2));
        assert_eq!(bytes.len(), 16 + 8 * 25 * slices as usize);
        let f = read_field_dump(&path, 1.0, 4).unwrap();
        assert_eq!(f.n_slices(), slices as usize);
    }
}

#[test]
fn check_passes_on_defaults_for_several_seeds() {
    for seed in ["1", "2", "3", "4", "5"] {
        let o = run(&["check", "--seed", seed]);
        let table = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "seed {seed}:\n{table}");
        assert_eq!(table.lines().filter(|l| l.starts_with("PASS")).count(), 8);
    }
}

#[test]
fn corrupted_adjoint_fails_the_check() {
    let o = run(&["check", "--corrupt-adjoint"]);
    assert_eq!(code(&o), 3);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("adjoint identity")));
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("gradient")));
}

#[test]
fn sweep_writes_stability_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&["sweep", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("stability.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "gamma,distance");
    assert_eq!(csv.lines().count(), 6);
    let json = read_json(&out.join("stability.json"));
    assert_eq!(json["regime"], "active");
    assert!(json["exponent"].as_f64().unwrap() >= 0.45);
    assert!(json["constant"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_with_explicit_gammas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&["sweep", "--out", out.to_str().unwrap(), "--gammas", "1.4,1.3,1.5"]);
    assert_eq!(code(&o), 0);
    let json = read_json(&out.join("stability.json"));
    let points = json["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let base = points.iter().find(|p| p["gamma"] == 1.4).unwrap();
    assert_eq!(base["distance"], 0.0);
    assert_eq!(code(&run(&["sweep", "--gammas", "1.0,-2.0"])), 1);
}

#[test]
fn sweep_aborts_when_solves_stall() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[optimizer]\nmax_iterations = 2\ntolerance = 1e-12\n");
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
