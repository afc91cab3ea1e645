use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn whitney(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitney"))
        .args(args)
        .current_dir(dir)
        .env_remove("WHITNEY_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn torus_analysis_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = whitney(&["analyze", "--example", "flat-torus", "--resolution", "16", "--out", "run"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS gap_ratio"));
    assert!(stdout(&o).contains("status: pass"));
    let out = tmp.path().join("run");
    for f in ["report.json", "points.csv", "timings.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let r = report(&out);
    assert_eq!(r["schema"], "whitney-report/1");
    assert_eq!(r["status"], "pass");
    assert_eq!(r["results"]["field"]["gap"]["verdict"], "gap-violated");
    let csv = fs::read_to_string(out.join("points.csv")).unwrap();
    // header plus one row per owned node
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
}

#[test]
fn reports_do_not_depend_on_destination() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["gap-check", "--example", "perturbed", "--base", "whitney-cn", "--seed", "4", "--resolution", "12", "--out", out]
    };
    assert_eq!(whitney(&args("a"), tmp.path()).status.code(), Some(0));
    assert_eq!(whitney(&args("b"), tmp.path()).status.code(), Some(0));
    for f in ["report.json", "points.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn seed_changes_the_perturbation() {
    let tmp = tempfile::tempdir().unwrap();
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        let o = whitney(
            &["gap-check", "--example", "perturbed", "--base", "flat-torus", "--seed", seed, "--resolution", "8", "--out", out],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (a, b) = (report(&tmp.path().join("s1")), report(&tmp.path().join("s2")));
    assert_ne!(a["results"], b["results"]);
}

#[test]
fn tightened_tolerance_fails_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "command = \"analyze\"\nresolution = 24\nout = \"t\"\npoints = false\n[example]\nkind = \"whitney-cn\"\n[tolerances]\neq3_residual = 1e-20\n",
    )
    .unwrap();
    let o = whitney(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL eq3_residual"));
    assert!(stdout(&o).contains("PASS b_norm2"));
    let r = report(&tmp.path().join("t"));
    assert_eq!(r["status"], "fail");
    assert!(!tmp.path().join("t/points.csv").exists());
}

#[test]
fn loosening_a_tolerance_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "command = \"lili\"\ntrials = 10\n[tolerances]\nlili_min_ratio = 1.0\n").unwrap();
    let o = whitney(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lili_min_ratio"), "{}", stderr(&o));
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "trials = 25\nseed = 3\n").unwrap();
    let o = whitney(&["lili", "--trials", "1000", "--seed", "1", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&tmp.path().join("o"));
    assert_eq!(r["config"]["matrix"]["budget"], 25);
    assert_eq!(r["config"]["seed"], 3);
}

#[test]
fn misspelled_key_gets_a_suggestion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "command = \"analyze\"\n[example]\nkind = \"whitney-cpn\"\nthetta = 2.0\n").unwrap();
    let o = whitney(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean"), "{}", stderr(&o));
}

#[test]
fn hyperbolic_target_is_unsupported() {
    let tmp = tempfile::tempdir().unwrap();
    let o = whitney(&["gap-check", "--example", "whitney-cpn", "--c", "-1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported ambient"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_and_missing_command() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(whitney(&["analyze", "--radius", "2"], tmp.path()).status.code(), Some(2));
    let o = whitney(&[], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("subcommand"));
}

#[test]
fn grid_checks_without_interior_nodes_fail() {
    let tmp = tempfile::tempdir().unwrap();
    // an order-8 stencil has no room on an 8-node open grid
    let o = whitney(&["analyze", "--example", "flat-plane", "--resolution", "8", "--out", "e"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warning: no owned node"), "{}", stderr(&o));
    let r = report(&tmp.path().join("e"));
    let checks = r["checks"].as_array().unwrap();
    let check = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap().clone();
    for name in ["maslov_defect", "codazzi_h", "codazzi_b", "simons_margin"] {
        assert_eq!(check(name)["pass"], false, "{name}");
        assert!(check(name)["measured"].is_null(), "{name}");
    }
    assert_eq!(check("lagrangian_defect")["pass"], true);
}

#[test]
fn analysis_error_still_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    // a vanishing radius collapses the sphere to a point
    fs::write(&cfg, "command = \"gap-check\"\nresolution = 8\nout = \"e\"\n[example]\nkind = \"whitney-cn\"\nn = 2\nr = 1e-300\n").unwrap();
    let o = whitney(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("grid index"), "{}", stderr(&o));
    let r = report(&tmp.path().join("e"));
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "degenerate-immersion");
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == false));
}

#[test]
fn commutator_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = whitney(&["lili", "--p", "4", "--dim", "3", "--trials", "300", "--seed", "8", "--out", "l"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS equality_pair"));
    let o = whitney(&["lili-search", "--p", "2", "--dim", "2", "--iters", "400", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS search_equality"));
    let r = report(&tmp.path().join("s"));
    assert!(r["results"].is_object());
}

#[test]
fn environment_sets_default_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_whitney"))
        .args(["lili", "--trials", "10"])
        .current_dir(tmp.path())
        .env("WHITNEY_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("from-env/report.json").exists());
}
