use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cqed-cnot"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn table1_has_four_rows() {
    let o = run(&["table1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().any(|l| l == "v,h,Z,X"));
}

#[test]
fn formulas_headline() {
    let o = run(&["formulas", "--G", "100", "--balanced"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let get = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("analytic_F") - 0.995025).abs() < 1e-6);
    assert_eq!(get("success_probability"), 1.0);
    assert_eq!(get("total_factor"), 1.0);
}

#[test]
fn formulas_with_noise() {
    let o = run(&[
        "formulas", "--G", "100", "--pl", "0.1", "--pdc", "0.01", "--f", "0.05",
    ]);
    let text = stdout(&o);
    let total: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("total_factor = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((total - 0.8998).abs() < 5e-4);
    assert!(text.contains("success_probability = 0.792"));
}

#[test]
fn spectrum_uncoupled() {
    let o = run(&["spectrum", "--Pz", "0", "--gamma", "1", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,re,im,abs,arg"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let abs: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((abs - 1.0).abs() < 1e-15);
    }
}

#[test]
fn spectrum_models_agree_on_resonance() {
    let resonance = |model: &str| {
        let o = run(&["spectrum", "--G", "100", "--points", "1", "--model", model]);
        stdout(&o).lines().nth(1).unwrap().to_string()
    };
    assert_eq!(resonance("adiabatic"), resonance("textbook"));
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sweep_rows_match_grid_and_have_no_nan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 4\ntrials = 200\n[inputs]\nrandom = 3\n[cavity]\nG_A = [10, 100]\nG_B = [50]\n\
         Pz = [1, 2]\n[noise]\np_l = [0.0, 1.0]\np_dc = [0.0, 0.3]\n",
    );
    let o = run(&["sweep", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
    assert!(!text.to_lowercase().contains("nan"));
    // p_l = 1, p_dc = 0: nothing is accepted, fidelity columns are empty
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let idx = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let accepted: u64 = f[idx("accepted")].parse().unwrap();
        let discarded: u64 = f[idx("discarded")].parse().unwrap();
        assert_eq!(accepted + discarded, 200);
        if accepted == 0 {
            assert_eq!(f[idx("mean_fidelity")], "");
        }
        // 1 - p_l - 2 p_dc < 0 leaves the first-order formula undefined
        let p_l: f64 = f[idx("p_l")].parse().unwrap();
        let p_dc: f64 = f[idx("p_dc")].parse().unwrap();
        assert_eq!(
            f[idx("analytic_success")].is_empty(),
            1.0 - p_l - 2.0 * p_dc < 0.0
        );
    }
}

#[test]
fn sweep_flags_override_file_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "trials = 50\n[cavity]\nG = [10, 100, 1000]\n");
    let out = dir.path().join("r.json");
    let o = bin()
        .args([
            "sweep", &cfg, "--G", "100", "--format", "json", "--mode", "ideal", "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["trials"], 50);
    assert!((rows[0]["mean_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn same_seed_same_bytes() {
    let args = [
        "simulate", "--trials", "500", "--seed", "11", "--pl", "0.1", "--pdc", "0.05", "--random",
        "4",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&[
        "simulate", "--trials", "500", "--seed", "12", "--pl", "0.1", "--pdc", "0.05", "--random",
        "4",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[noise]\np_l = [0.1, 7]\n");
    for args in [
        vec!["simulate", "--trials", "0"],
        vec!["simulate", "--N", "0"],
        vec![
            "simulate", "--alpha", "1", "--beta", "1", "--a", "1", "--b", "0",
        ],
        vec!["simulate", "--balanced", "--random", "3"],
        vec!["simulate", "--format", "xml"],
        vec!["simulate", "--G", "abc"],
        vec!["sweep", &bad],
        vec!["nonsense"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "config");
    }
    let o = run(&["sweep", &bad]);
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["field"], "p_l");
}

#[test]
fn runtime_error_exits_one() {
    let o = run(&[
        "simulate",
        "--trials",
        "3",
        "--out",
        "/nonexistent/dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["error"], "runtime");
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("sweep"));
}
