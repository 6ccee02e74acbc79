use std::process::{Command, Output};

fn tentkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tentkit"))
        .args(args)
        .env("TENTKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn regions_prints_a_csv_polyline() {
    let out = tentkit(&["regions", "--profile", "laplacian", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = text(&out.stdout);
    assert!(csv.starts_with("inv_p,beta\n"));
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 2);
        assert!((-1.0..=0.0).contains(&v[1]));
    }
}

#[test]
fn heat_in_theory_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("runs");
    let out = tentkit(&[
        "heat", "--s", "-1", "--p", "2", "--family", "gaussian", "--seed", "7", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 1);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("heat.json")).unwrap()).unwrap();
    assert_eq!(json["spec"]["seed"], 7);
    assert_eq!(json["result"][0]["in_theory"], true);
    let written: Vec<_> = std::fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(written.len(), 1);
}

#[test]
fn heat_out_of_theory_warns_and_passes() {
    let out = tentkit(&["heat", "--s", "0.5", "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("out of theory"));
}

#[test]
fn budget_failure_exits_1() {
    let out = tentkit(&["heat", "--s", "-1/2", "--p", "2", "--seed", "3", "--budget", "1.0001"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stdout));
    assert!(text(&out.stdout).starts_with("FAIL"));
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(tentkit(&["heat", "--s", "-1", "colour=red"]).status.code(), Some(2));
    assert_eq!(tentkit(&["heat", "--s", "-1"]).status.code(), Some(2));
    assert_eq!(tentkit(&["heat", "--bogus"]).status.code(), Some(2));
    assert_eq!(tentkit(&["parabolic", "--preset", "marble", "--seed", "1"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed=1\nwobble=2\n").unwrap();
    let out = tentkit(&["heat", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("unknown_key"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# heat run\nseed = 4\ns = 0.5\np = 2\nsamples = 6\n").unwrap();
    // the override moves s back into the theory range
    let out = tentkit(&["heat", "--config", cfg.to_str().unwrap(), "--json", "s=-0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    let json_end = stdout.rfind('}').unwrap();
    let rec: serde_json::Value = serde_json::from_str(&stdout[..=json_end]).unwrap();
    assert_eq!(rec["spec"]["params"][0]["s"], -0.5);
    assert_eq!(rec["spec"]["samples"], 6);
}

#[test]
fn presets_json_catalog() {
    let out = tentkit(&["presets", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v["presets"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["identity", "checkerboard", "random_contrast", "complex_perturbation"]);
    assert!(v["families"].as_array().unwrap().iter().all(|f| f["schema"].is_string()));
}

#[test]
fn exponents_json() {
    let out = tentkit(&["exponents", "--n", "1", "--s", "-0.5", "--beta", "0", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["rows"][0]["p_minus_s"].as_f64().unwrap() - 1.0 / 1.5).abs() < 1e-12);
    assert!((v["rows"][1]["p_tilde_beta"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn probe_needs_a_seed_and_reports() {
    assert_eq!(tentkit(&["probe"]).status.code(), Some(2));
    let out = tentkit(&["probe", "--seed", "2", "--preset", "checkerboard", "samples=3"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("semigroup bounded"));
}
