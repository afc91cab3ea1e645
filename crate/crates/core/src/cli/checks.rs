//! Which checks a run performs, their default tolerances, and how each is
//! measured from the analysis results.

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Command, RunConfig};
use crate::field::{FieldReport, GapReport, GapTolerances, Verdict};
use crate::gallery::{expected_invariants, ExampleSpec};
use crate::matrixineq::{LiLiGap, SearchResult, TrialSummary};

/// Every name accepted in a `[tolerances]` table.
pub const TOLERANCE_NAMES: &[&str] = &[
    "lagrangian_defect",
    "h_symmetry_defect",
    "eq3_residual",
    "gauss_residual",
    "b_norm2",
    "h_norm2_closed_form",
    "mean_norm2_closed_form",
    "b_norm2_closed_form",
    "maslov_defect",
    "maslov_equivalence",
    "codazzi_h",
    "codazzi_b",
    "simons_margin",
    "laplacian_integral",
    "threshold_agreement",
    "gap_ratio",
    "lili_min_ratio",
    "equality_pair",
    "search_min_ratio",
    "search_equality",
    "gap_excess",
    "minimal_mean_curvature",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `measured <= tolerance`
    AtMost,
    /// `measured >= -tolerance`
    AtLeast,
    Equals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedCheck {
    pub name: &'static str,
    pub relation: Relation,
    /// Meaningless for `Equals`.
    pub tolerance: f64,
    pub expected: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub relation: Relation,
    pub measured: Value,
    pub limit: Value,
    pub pass: bool,
}

/// A run's checks with their tolerances before overrides, plus the two
/// classification tolerances of the gap verdict (planned as `AtMost`).
pub struct Plan {
    pub checks: Vec<PlannedCheck>,
    pub gap: Option<GapTolerances>,
}

pub fn default_tolerance(plan: &Plan, name: &str) -> Option<f64> {
    if let Some(g) = plan.gap {
        match name {
            "gap_excess" => return Some(g.excess),
            "minimal_mean_curvature" => return Some(g.minimal),
            _ => {}
        }
    }
    plan.checks.iter().find(|c| c.name == name && c.relation != Relation::Equals).map(|c| c.tolerance)
}

fn at_most(name: &'static str, tolerance: f64) -> PlannedCheck {
    PlannedCheck { name, relation: Relation::AtMost, tolerance, expected: None }
}

fn at_least(name: &'static str, tolerance: f64) -> PlannedCheck {
    PlannedCheck { name, relation: Relation::AtLeast, tolerance, expected: None }
}

fn expected_verdict(spec: &ExampleSpec) -> Option<Verdict> {
    match spec {
        ExampleSpec::WhitneyCn { .. } | ExampleSpec::WhitneyCpn { .. } => Some(Verdict::WhitneyConsistent),
        ExampleSpec::FlatTorus { .. } => Some(Verdict::GapViolated),
        _ => None,
    }
}

/// `sup ||B||^2 / threshold` on a flat torus: `3(n-1)(n+2)/4`.
pub fn torus_gap_ratio(n: usize) -> f64 {
    let nf = n as f64;
    3.0 * (nf - 1.0) * (nf + 2.0) / 4.0
}

fn geometric_plan(spec: &ExampleSpec, full: bool) -> Vec<PlannedCheck> {
    let curved = spec.curvature() > 0.0;
    let whitney = matches!(spec, ExampleSpec::WhitneyCn { .. } | ExampleSpec::WhitneyCpn { .. });
    let flat_model = matches!(spec, ExampleSpec::FlatTorus { .. } | ExampleSpec::FlatPlane { .. });
    let pointwise_tol = if curved { 1e-8 } else { 1e-10 };
    let mut out = Vec::new();
    if full && spec.lagrangian() {
        out.push(at_most("lagrangian_defect", pointwise_tol));
        out.push(at_most("h_symmetry_defect", pointwise_tol));
        out.push(at_most("eq3_residual", 1e-10));
        // the normal-curvature half of the comparison assumes J maps
        // tangents onto normals
        out.push(at_most("gauss_residual", 1e-6));
    }
    if whitney {
        out.push(at_most("b_norm2", if curved { 1e-7 } else { 1e-9 }));
    }
    if let Some(e) = expected_invariants(spec) {
        if full {
            if e.h_norm2.is_some() {
                out.push(at_most("h_norm2_closed_form", 1e-8));
            }
            if e.mean_norm2.is_some() {
                out.push(at_most("mean_norm2_closed_form", 1e-8));
            }
            if e.b_norm2.is_some() && !whitney {
                out.push(at_most("b_norm2_closed_form", 1e-8));
            }
        }
    }
    if full {
        let derivative_tol = if flat_model { 1e-8 } else { 1e-4 };
        if spec.lagrangian() {
            out.push(at_most("codazzi_h", derivative_tol));
        }
        if spec.conformal_maslov() {
            out.push(at_most("maslov_defect", if flat_model { 1e-8 } else { 1e-5 }));
            out.push(at_most("maslov_equivalence", 1e-5));
            out.push(at_most("codazzi_b", derivative_tol));
            out.push(at_least("simons_margin", 1e-5));
            if spec.is_closed() {
                out.push(at_most("laplacian_integral", 1e-6));
            }
        }
    }
    if spec.lagrangian() {
        out.push(at_most("threshold_agreement", 1e-12));
    }
    if let Some(v) = expected_verdict(spec) {
        out.push(PlannedCheck { name: "gap_verdict", relation: Relation::Equals, tolerance: 0.0, expected: Some(v) });
    }
    if matches!(spec, ExampleSpec::FlatTorus { .. }) {
        out.push(at_most("gap_ratio", 1e-6));
    }
    out
}

pub fn plan(cfg: &RunConfig) -> Plan {
    match cfg.command {
        Command::Analyze | Command::GapCheck => {
            let spec = cfg.example.as_ref().expect("geometric command has an example");
            Plan {
                checks: geometric_plan(spec, cfg.command == Command::Analyze),
                gap: Some(GapTolerances::default()),
            }
        }
        Command::Lili => Plan { checks: vec![at_least("lili_min_ratio", 1e-12), at_most("equality_pair", 1e-12)], gap: None },
        Command::LiliSearch => {
            let m = cfg.matrix.expect("matrix command has parameters");
            let mut checks = vec![at_least("search_min_ratio", 1e-10)];
            if m.p == 2 && m.dim == 2 {
                checks.push(at_most("search_equality", 1e-6));
            }
            Plan { checks, gap: None }
        }
    }
}

/// The plan with configured overrides applied.
pub fn effective_plan(cfg: &RunConfig) -> Plan {
    let mut p = plan(cfg);
    for c in &mut p.checks {
        if let Some(&t) = cfg.tolerances.get(c.name) {
            c.tolerance = t;
        }
    }
    if let Some(g) = &mut p.gap {
        if let Some(&t) = cfg.tolerances.get("gap_excess") {
            g.excess = t;
        }
        if let Some(&t) = cfg.tolerances.get("minimal_mean_curvature") {
            g.minimal = t;
        }
    }
    p
}

pub enum Measurements<'a> {
    Field { spec: &'a ExampleSpec, report: &'a FieldReport },
    Gap { spec: &'a ExampleSpec, report: &'a GapReport },
    Trials { summary: &'a TrialSummary, equality: &'a LiLiGap },
    Search(&'a SearchResult),
}

/// Largest deviation of a summarized field from a constant.
fn deviation(sup: f64, inf: f64, target: f64) -> f64 {
    (sup - target).abs().max((inf - target).abs()) / target.abs().max(1.0)
}

fn measure(name: &str, m: &Measurements) -> Value {
    let num = |x: f64| json!(x);
    match m {
        Measurements::Field { spec, report: r } => {
            let inv = &r.invariants;
            let expect = expected_invariants(spec).unwrap_or_default();
            match name {
                "lagrangian_defect" => num(inv.lagrangian_defect.sup),
                "h_symmetry_defect" => num(inv.h_symmetry_defect.sup),
                "eq3_residual" => num(inv.eq3_residual.sup),
                "gauss_residual" => num(inv.gauss_residual.sup),
                "b_norm2" => num(inv.b_norm2.sup),
                "h_norm2_closed_form" => {
                    num(deviation(inv.h_norm2.sup, inv.h_norm2.inf, expect.h_norm2.unwrap_or(f64::NAN)))
                }
                "mean_norm2_closed_form" => {
                    num(deviation(inv.mean_norm2.sup, inv.mean_norm2.inf, expect.mean_norm2.unwrap_or(f64::NAN)))
                }
                "b_norm2_closed_form" => {
                    num(deviation(inv.b_norm2.sup, inv.b_norm2.inf, expect.b_norm2.unwrap_or(f64::NAN)))
                }
                "maslov_defect" => num(r.maslov.sup_defect),
                "maslov_equivalence" => num(r.maslov.equivalence_residual),
                "codazzi_h" => num(r.codazzi_h.sup),
                "codazzi_b" => num(r.codazzi_b.sup),
                "simons_margin" => num(r.simons_margin.inf),
                "laplacian_integral" => num(r.integrals.laplacian_b_norm2.abs() / r.integrals.volume),
                "threshold_agreement" => num(r.gap.threshold_agreement),
                "gap_verdict" => json!(r.gap.verdict),
                "gap_ratio" => num((r.gap.ratio.unwrap_or(f64::NAN) - torus_gap_ratio(r.n)).abs()),
                _ => Value::Null,
            }
        }
        Measurements::Gap { spec: _, report: r } => match name {
            "b_norm2" => num(r.b_norm2.sup),
            "threshold_agreement" => num(r.gap.threshold_agreement),
            "gap_verdict" => json!(r.gap.verdict),
            "gap_ratio" => num((r.gap.ratio.unwrap_or(f64::NAN) - torus_gap_ratio(r.n)).abs()),
            _ => Value::Null,
        },
        Measurements::Trials { summary, equality } => match name {
            "lili_min_ratio" => num(summary.min_ratio),
            "equality_pair" => num(equality.gap.abs() / equality.rhs),
            _ => Value::Null,
        },
        Measurements::Search(s) => match name {
            "search_min_ratio" | "search_equality" => num(s.gap.ratio()),
            _ => Value::Null,
        },
    }
}

pub fn evaluate(plan: &Plan, m: &Measurements) -> Vec<CheckResult> {
    plan.checks
        .iter()
        .map(|c| {
            let measured = measure(c.name, m);
            let (limit, pass) = match c.relation {
                Relation::AtMost => {
                    (json!(c.tolerance), measured.as_f64().is_some_and(|x| x <= c.tolerance))
                }
                Relation::AtLeast => {
                    (json!(-c.tolerance), measured.as_f64().is_some_and(|x| x >= -c.tolerance))
                }
                Relation::Equals => {
                    let want = json!(c.expected);
                    let pass = measured == want;
                    (want, pass)
                }
            };
            CheckResult { name: c.name.to_string(), relation: c.relation, measured, limit, pass }
        })
        .collect()
}
