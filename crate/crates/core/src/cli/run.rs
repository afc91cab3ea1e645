//! Executes a [`RunConfig`] and renders its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::checks::{effective_plan, evaluate, CheckResult, Measurements, Plan};
use super::config::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::field::{analyze_field, gap_check, FieldAnalysis, FieldOptions, GapAnalysis, SampleGrid};
use crate::gallery::make_immersion;
use crate::geometry::PointInvariants;
use crate::matrixineq::{li_li_gap, minimize_gap, run_trials, MatrixFamily, RESTARTS};

pub const REPORT_SCHEMA: &str = "whitney-report/1";
pub const TIMINGS_SCHEMA: &str = "whitney-timings/1";
pub const OUT_DIR_ENV: &str = "WHITNEY_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "whitney-out";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnsupportedAmbient(_) => EXIT_CONFIG,
        Error::AtGridPoint { source, .. } => exit_code_for(source),
        _ => EXIT_INTERNAL,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid-input",
        Error::ChartConditioning { .. } => "chart-conditioning",
        Error::Domain { .. } => "domain",
        Error::Evaluation(_) => "evaluation",
        Error::DegenerateImmersion { .. } => "degenerate-immersion",
        Error::Config(_) => "configuration",
        Error::UnsupportedAmbient(_) => "unsupported-ambient",
        Error::AtGridPoint { source, .. } => error_kind(source),
        Error::Numerical(_) => "numerical",
    }
}

pub struct RunOutcome {
    pub status: Status,
    pub exit_code: i32,
    pub checks: Vec<CheckResult>,
    /// Deterministic for a given configuration and tool version.
    pub report: Value,
    pub points: Option<String>,
    pub timings: Value,
}

struct Computed {
    checks: Vec<CheckResult>,
    results: Value,
    points: Option<String>,
}

fn field_options(cfg: &RunConfig, plan: &Plan) -> FieldOptions {
    FieldOptions { engine: cfg.engine, stencil_order: cfg.stencil_order, gap: plan.gap.unwrap_or_default() }
}

fn compute(cfg: &RunConfig, plan: &Plan) -> Result<Computed> {
    match cfg.command {
        Command::Analyze => {
            let spec = cfg.example.as_ref().expect("validated config");
            let map = make_immersion(spec)?;
            let res = [cfg.resolution.expect("validated config")];
            let fa = analyze_field(&map, &res, spec.is_closed(), &field_options(cfg, plan))?;
            let checks = evaluate(plan, &Measurements::Field { spec, report: &fa.report });
            Ok(Computed {
                checks,
                results: json!({ "field": fa.report }),
                points: cfg.points.then(|| field_points_csv(&fa)),
            })
        }
        Command::GapCheck => {
            let spec = cfg.example.as_ref().expect("validated config");
            let map = make_immersion(spec)?;
            let res = [cfg.resolution.expect("validated config")];
            let ga = gap_check(&map, &res, &field_options(cfg, plan))?;
            let checks = evaluate(plan, &Measurements::Gap { spec, report: &ga.report });
            Ok(Computed {
                checks,
                results: json!({ "gap": ga.report }),
                points: cfg.points.then(|| gap_points_csv(&ga)),
            })
        }
        Command::Lili => {
            let m = cfg.matrix.expect("validated config");
            let tol = plan.checks.iter().find(|c| c.name == "lili_min_ratio").map_or(1e-12, |c| c.tolerance);
            let summary = run_trials(m.p, m.dim, m.budget, cfg.seed, tol)?;
            let equality = li_li_gap(&MatrixFamily::equality_pair());
            let checks = evaluate(plan, &Measurements::Trials { summary: &summary, equality: &equality });
            Ok(Computed {
                checks,
                results: json!({ "trials": summary, "equality_pair": equality }),
                points: None,
            })
        }
        Command::LiliSearch => {
            let m = cfg.matrix.expect("validated config");
            let s = minimize_gap(m.p, m.dim, cfg.seed, m.budget)?;
            let checks = evaluate(plan, &Measurements::Search(&s));
            let family: Vec<Vec<Vec<f64>>> = s
                .family
                .matrices()
                .iter()
                .map(|a| a.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect();
            Ok(Computed {
                checks,
                results: json!({
                    "search": {
                        "restarts": RESTARTS.min(m.budget),
                        "gap": s.gap,
                        "ratio": s.gap.ratio(),
                        "best_by_restart": s.best_by_restart,
                        "family": family,
                    }
                }),
                points: None,
            })
        }
    }
}

/// Runs the configured command. Never panics on analysis errors: they are
/// recorded in the report, and every planned check is marked failed.
pub fn run(cfg: &RunConfig) -> RunOutcome {
    let start = Instant::now();
    let plan = effective_plan(cfg);
    let computed = compute(cfg, &plan);
    let analysis_seconds = start.elapsed().as_secs_f64();

    let mut report = Map::new();
    report.insert("schema".into(), json!(REPORT_SCHEMA));
    report.insert("tool".into(), json!({ "name": "whitney", "version": env!("CARGO_PKG_VERSION") }));
    let (status, exit_code, checks, points) = match computed {
        Ok(c) => {
            let ok = c.checks.iter().all(|r| r.pass);
            let status = if ok { Status::Pass } else { Status::Fail };
            report.insert("status".into(), json!(status));
            report.insert("config".into(), json!(cfg));
            report.insert("checks".into(), json!(c.checks));
            report.insert("results".into(), c.results);
            (status, if ok { EXIT_PASS } else { EXIT_FAIL }, c.checks, c.points)
        }
        Err(e) => {
            let checks: Vec<CheckResult> = plan
                .checks
                .iter()
                .map(|p| CheckResult {
                    name: p.name.to_string(),
                    relation: p.relation,
                    measured: Value::Null,
                    limit: Value::Null,
                    pass: false,
                })
                .collect();
            report.insert("status".into(), json!(Status::Error));
            report.insert("config".into(), json!(cfg));
            report.insert("checks".into(), json!(checks));
            report.insert("error".into(), json!({ "kind": error_kind(&e), "message": e.to_string() }));
            (Status::Error, exit_code_for(&e), checks, None)
        }
    };
    let timings = json!({
        "schema": TIMINGS_SCHEMA,
        "command": cfg.command.name(),
        "analysis_seconds": analysis_seconds,
        "total_seconds": start.elapsed().as_secs_f64(),
    });
    RunOutcome { status, exit_code, checks, report: Value::Object(report), points, timings }
}

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn render_report(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `report.json`, `timings.json` and, when present, `points.csv`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> std::io::Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("report.json", &render_report(&outcome.report))?;
    if let Some(points) = &outcome.points {
        put("points.csv", points)?;
    }
    put("timings.json", &render_report(&outcome.timings))?;
    Ok(written)
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

const INVARIANT_COLUMNS: &[&str] = &[
    "h_norm2",
    "b_norm2",
    "mean_norm2",
    "eq3_residual",
    "lagrangian_defect",
    "h_symmetry_defect",
    "b_trace_defect",
    "b_symmetry_defect",
    "mean_star_defect",
    "gauss_residual",
];

fn invariant_cells(p: &PointInvariants) -> [String; 10] {
    [
        num(p.h_norm2),
        num(p.b_norm2),
        num(p.mean_norm2),
        num(p.eq3_residual),
        num(p.lagrangian_defect),
        num(p.h_symmetry_defect),
        num(p.b_trace_defect),
        num(p.b_symmetry_defect),
        num(p.mean_star_defect),
        opt(p.gauss_residual),
    ]
}

fn location_header(n: usize) -> Vec<String> {
    let mut h = vec!["chart".to_string()];
    h.extend((0..n).map(|k| format!("i{k}")));
    h.extend((0..n).map(|k| format!("u{k}")));
    h.push("ownership".into());
    h.push("weight".into());
    h
}

fn location_cells(grid: &SampleGrid, i: usize) -> Vec<String> {
    let p = grid.param_point(i);
    let mut row = vec![p.chart.to_string()];
    row.extend(grid.multi_index(i).iter().map(|k| k.to_string()));
    row.extend(p.u.iter().map(|&u| num(u)));
    row.push(num(grid.ownership[i]));
    row.push(num(grid.weights[i]));
    row
}

/// One row per owned grid node.
pub fn field_points_csv(fa: &FieldAnalysis) -> String {
    let grid = &fa.grid;
    let mut header = location_header(grid.n);
    header.extend(INVARIANT_COLUMNS.iter().map(|s| s.to_string()));
    for extra in [
        "maslov_defect",
        "maslov_defect_pointwise",
        "codazzi_h",
        "codazzi_h_pointwise",
        "codazzi_b",
        "codazzi_b_pointwise",
        "laplacian_b_norm2",
        "simons_margin",
    ] {
        header.push(extra.into());
    }
    let mut out = header.join(",");
    out.push('\n');
    let st = &fa.stencil;
    for i in (0..grid.len()).filter(|&i| grid.owned(i)) {
        let Some(rec) = &fa.records[i] else { continue };
        let mut row = location_cells(grid, i);
        row.extend(invariant_cells(&rec.invariants));
        row.extend([
            opt(st.maslov[i]),
            num(rec.maslov_pointwise),
            opt(st.codazzi_h[i]),
            num(rec.codazzi_h_pointwise),
            opt(st.codazzi_b[i]),
            num(rec.codazzi_b_pointwise),
            opt(st.laplacian_b_norm2[i]),
            opt(st.simons_margin[i]),
        ]);
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn gap_points_csv(ga: &GapAnalysis) -> String {
    let grid = &ga.grid;
    let mut header = location_header(grid.n);
    header.extend(INVARIANT_COLUMNS.iter().map(|s| s.to_string()));
    let mut out = header.join(",");
    out.push('\n');
    for (i, inv) in ga.invariants.iter().enumerate() {
        let Some(inv) = inv else { continue };
        let mut row = location_cells(grid, i);
        row.extend(invariant_cells(inv));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    #[test]
    fn numbers_carry_seventeen_digits() {
        let s = num(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn failing_run_marks_every_check() {
        // a grid this coarse cannot certify the derivative checks
        let cfg = parse_config(
            "command = \"analyze\"\nresolution = 8\npoints = false\n[example]\nkind = \"whitney-cn\"\n",
        )
        .unwrap();
        let out = run(&cfg);
        assert_eq!(out.status, Status::Fail);
        assert_eq!(out.exit_code, EXIT_FAIL);
        assert!(out.checks.iter().any(|c| !c.pass));
        assert!(out.checks.iter().any(|c| c.pass));
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code_for(&Error::Numerical("x".into())), EXIT_INTERNAL);
        let located = Error::AtGridPoint { chart: 0, index: vec![1], source: Box::new(Error::UnsupportedAmbient("c".into())) };
        assert_eq!(exit_code_for(&located), EXIT_CONFIG);
    }
}
