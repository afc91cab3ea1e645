//! Grid-level calculus over the whole immersion.
//!
//! Analysis runs in two passes. The first evaluates order-3 jets at every
//! active node and stores coordinate tensors ([`PointRecord`]); the second
//! differentiates those tensors with central stencils along the grid axes.
//! Summation always runs in node order, so results do not depend on thread
//! scheduling.

pub mod calculus;
pub mod grid;
pub mod pointwise;

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::covariantize;
use crate::jets::{Engine, ImmersionMap};
pub use calculus::{divergence, integrate, integrate_partial, laplace_beltrami, stencil};
pub use grid::{build_grid, build_grid_with, SampleGrid};
pub use pointwise::{point_records, PointRecord};

pub const DEFAULT_STENCIL_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapTolerances {
    /// `sup (||B||^2 - threshold)` at or below this counts as consistent.
    pub excess: f64,
    /// `sup |H|` below this counts as minimal.
    pub minimal: f64,
}

impl Default for GapTolerances {
    fn default() -> Self {
        GapTolerances { excess: 1e-9, minimal: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldOptions {
    pub engine: Engine,
    pub stencil_order: usize,
    pub gap: GapTolerances,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions { engine: Engine::Exact, stencil_order: DEFAULT_STENCIL_ORDER, gap: GapTolerances::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub sup: f64,
    pub mean: f64,
    pub inf: f64,
    pub count: usize,
}

impl Summary {
    /// Weighted mean with sup and inf over the nodes that carry a value.
    fn of(grid: &SampleGrid, values: impl Fn(usize) -> Option<f64>) -> Summary {
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        let (mut acc, mut wsum, mut count) = (0.0, 0.0, 0);
        for i in 0..grid.len() {
            if !grid.owned(i) {
                continue;
            }
            if let Some(v) = values(i) {
                sup = sup.max(v);
                inf = inf.min(v);
                let w = grid.weights[i] * grid.ownership[i];
                acc += w * v;
                wsum += w;
                count += 1;
            }
        }
        if count == 0 {
            return Summary { sup: f64::NAN, mean: f64::NAN, inf: f64::NAN, count };
        }
        // rounding in the weighted mean must not break sup >= mean >= inf
        let mean = (acc / wsum).clamp(inf, sup);
        Summary { sup, mean, inf, count }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct InvariantSummaries {
    pub h_norm2: Summary,
    pub b_norm2: Summary,
    pub mean_norm2: Summary,
    pub eq3_residual: Summary,
    pub lagrangian_defect: Summary,
    pub h_symmetry_defect: Summary,
    pub b_trace_defect: Summary,
    pub b_symmetry_defect: Summary,
    pub mean_star_defect: Summary,
    pub gauss_residual: Summary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaslovResult {
    /// `sup |nabla JH - div(JH)/n I|` with `nabla JH` from grid differences.
    pub sup_defect: f64,
    /// The same defect computed from third derivatives at each node.
    pub sup_defect_pointwise: f64,
    /// Disagreement between the endomorphism form and the trace form of the
    /// conformality condition, using `trace_sign`.
    pub equivalence_residual: f64,
    /// Sign `s` in `sum_k h^{m*}_{kk,l} = s div(JH) δ_ml` that makes the two
    /// forms agree.
    pub trace_sign: i32,
    /// Residual under the opposite sign.
    pub opposite_sign_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CodazziResult {
    /// From grid differences of the coordinate tensor.
    pub sup: f64,
    /// From third derivatives at each node.
    pub sup_pointwise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    WhitneyConsistent,
    GapViolated,
    MinimalExcluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapVerdict {
    /// `4(n+1)c / (3(n+2))`, the curvature part of the threshold.
    pub threshold_constant: f64,
    /// `sup (||B||^2 - threshold)`.
    pub sup_excess: f64,
    /// `sup ||B||^2 / threshold` over nodes with a positive threshold.
    pub ratio: Option<f64>,
    pub sup_mean_curvature: f64,
    /// Largest disagreement between the `||B||^2` and `||h||^2` forms of
    /// the criterion, relative to `1 + ||h||^2`.
    pub threshold_agreement: f64,
    pub verdict: Verdict,
}

/// Pointwise data the verdict needs, one entry per sampled node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapSample {
    pub b_norm2: f64,
    pub h_norm2: f64,
    pub mean_norm2: f64,
}

pub fn b_threshold(n: usize, c: f64, mean_norm2: f64) -> f64 {
    let nf = n as f64;
    4.0 * (nf + 1.0) * c / (3.0 * (nf + 2.0)) + 4.0 * nf * nf * mean_norm2 / (3.0 * (nf + 2.0).powi(2))
}

pub fn h_threshold(n: usize, c: f64, mean_norm2: f64) -> f64 {
    let nf = n as f64;
    4.0 * (nf + 1.0) * c / (3.0 * (nf + 2.0))
        + nf * nf * (9.0 * nf + 22.0) * mean_norm2 / (3.0 * (nf + 2.0).powi(2))
}

pub fn gap_verdict(samples: &[GapSample], n: usize, c: f64, tol: &GapTolerances) -> Result<GapVerdict> {
    if c < 0.0 {
        return Err(Error::UnsupportedAmbient(format!(
            "gap criterion is stated for c >= 0, got c = {c}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("gap criterion needs n >= 2, got {n}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("gap verdict needs at least one sample".into()));
    }
    let mut sup_excess = f64::NEG_INFINITY;
    let mut ratio: Option<f64> = None;
    let mut sup_h: f64 = 0.0;
    let mut agreement: f64 = 0.0;
    for s in samples {
        let tb = b_threshold(n, c, s.mean_norm2);
        let th = h_threshold(n, c, s.mean_norm2);
        let excess = s.b_norm2 - tb;
        sup_excess = sup_excess.max(excess);
        if tb > 0.0 {
            let r = s.b_norm2 / tb;
            ratio = Some(ratio.map_or(r, |x| x.max(r)));
        }
        sup_h = sup_h.max(s.mean_norm2.max(0.0).sqrt());
        agreement = agreement.max((excess - (s.h_norm2 - th)).abs() / (1.0 + s.h_norm2));
    }
    let verdict = if c > 0.0 && sup_h < tol.minimal {
        Verdict::MinimalExcluded
    } else if sup_excess <= tol.excess {
        Verdict::WhitneyConsistent
    } else {
        Verdict::GapViolated
    };
    let nf = n as f64;
    Ok(GapVerdict {
        threshold_constant: 4.0 * (nf + 1.0) * c / (3.0 * (nf + 2.0)),
        sup_excess,
        ratio,
        sup_mean_curvature: sup_h,
        threshold_agreement: agreement,
        verdict,
    })
}

/// Left side minus right side of the pointwise Simons-type bound.
pub fn simons_margin(n: usize, c: f64, half_laplacian: f64, b_norm2: f64, mean_norm2: f64) -> f64 {
    let nf = n as f64;
    half_laplacian
        - ((nf + 1.0) * c * b_norm2 + nf * nf / (nf + 2.0) * b_norm2 * mean_norm2
            - 3.0 * (nf + 2.0) / 4.0 * b_norm2 * b_norm2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Integrals {
    pub volume: f64,
    pub chart_volumes: Vec<f64>,
    pub b_norm2: f64,
    pub laplacian_b_norm2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeCounts {
    pub total: usize,
    pub active: usize,
    pub owned: usize,
    /// Owned nodes with a full first-derivative stencil.
    pub interior: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldReport {
    pub n: usize,
    pub c: f64,
    pub resolution: Vec<usize>,
    pub stencil_order: usize,
    pub engine: Engine,
    pub nodes: NodeCounts,
    pub invariants: InvariantSummaries,
    pub maslov: MaslovResult,
    pub codazzi_h: CodazziResult,
    pub codazzi_b: CodazziResult,
    /// `inf` of the Simons margin over owned interior nodes.
    pub simons_margin: Summary,
    pub laplacian_b_norm2: Summary,
    pub integrals: Integrals,
    pub gap: GapVerdict,
    pub warnings: Vec<String>,
}

/// Per-node results of the stencil pass.
#[derive(Clone, Debug, Default)]
pub struct StencilFields {
    pub maslov: Vec<Option<f64>>,
    /// `defect_A + defect_B/n` under sign -1 and +1.
    pub equivalence: Vec<Option<[f64; 2]>>,
    pub codazzi_h: Vec<Option<f64>>,
    pub codazzi_b: Vec<Option<f64>>,
    pub laplacian_b_norm2: Vec<Option<f64>>,
    pub simons_margin: Vec<Option<f64>>,
}

/// Everything computed on a grid: the pointwise records, the stencil pass,
/// and their aggregate.
#[derive(Clone, Debug)]
pub struct FieldAnalysis {
    pub grid: SampleGrid,
    pub records: Vec<Option<PointRecord>>,
    pub stencil: StencilFields,
    pub report: FieldReport,
}

fn tensor3(v: &[f64], n: usize) -> Array3<f64> {
    Array3::from_shape_vec((n, n, n), v.to_vec()).expect("n^3 entries")
}

fn frame_matrix(v: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_vec((n, n), v.to_vec()).expect("n^2 entries")
}

/// Grid derivative of a coordinate 3-tensor field, made covariant and
/// expressed in the frame; `[i][j][m][k]` with `k` the derivative slot.
fn covariant_tensor_derivative<'a>(
    grid: &SampleGrid,
    records: &'a [Option<PointRecord>],
    i: usize,
    w: &[f64],
    pick: impl Fn(&'a PointRecord) -> &'a [f64],
) -> Option<Array4<f64>> {
    let n = grid.n;
    let rec = records[i].as_ref()?;
    let d = calculus::axis_derivatives(grid, i, w, |j| records[j].as_ref().map(&pick))?;
    let raw = Array4::from_shape_fn((n, n, n, n), |(a, b, c, k)| d[k][(a * n + b) * n + c]);
    let cov = covariantize(&raw, &tensor3(pick(rec), n), &tensor3(&rec.christoffel, n));
    Some(crate::geometry::to_frame4(&cov, &frame_matrix(&rec.frame, n)))
}

pub fn stencil_pass(
    grid: &SampleGrid,
    records: &[Option<PointRecord>],
    c: f64,
    order: usize,
) -> Result<StencilFields> {
    use rayon::prelude::*;
    let w = stencil(order)?;
    let n = grid.n;
    let nf = n as f64;
    let per_node: Vec<_> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let rec = match &records[i] {
                Some(r) => r,
                None => return (None, None, None, None),
            };
            let f = frame_matrix(&rec.frame, n);
            // Maslov: nabla mu from grid differences, E = -(nabla mu) in the frame.
            let maslov = calculus::axis_derivatives(grid, i, w, |j| records[j].as_ref().map(|r| &r.mu[..]))
                .map(|d| {
                    let cov = Array2::from_shape_fn((n, n), |(m, k)| {
                        let mut s = d[k][m];
                        for p in 0..n {
                            s -= rec.christoffel[(p * n + k) * n + m] * rec.mu[p];
                        }
                        s
                    });
                    let e = -f.t().dot(&cov).dot(&f);
                    let div = e.diag().sum();
                    let mut res = [0.0f64; 2];
                    for (slot, sign) in [-1.0, 1.0].iter().enumerate() {
                        for m in 0..n {
                            for l in 0..n {
                                let delta = if m == l { 1.0 } else { 0.0 };
                                let a = e[[m, l]] - div / nf * delta;
                                let b = rec.trace_derivative[m * n + l] - sign * div * delta;
                                res[slot] = res[slot].max((a + b / nf).abs());
                            }
                        }
                    }
                    (pointwise::conformal_defect(&e), res)
                });
            let ch = covariant_tensor_derivative(grid, records, i, w, |r| &r.cubic[..])
                .map(|t| pointwise::codazzi_defect(&t));
            let cb = covariant_tensor_derivative(grid, records, i, w, |r| &r.b_cubic[..])
                .map(|t| pointwise::codazzi_defect(&t));
            (maslov.map(|m| m.0), maslov.map(|m| m.1), ch, cb)
        })
        .collect();
    let flux: Vec<Option<Vec<f64>>> = records.iter().map(|r| r.as_ref().map(|r| r.flux.clone())).collect();
    let lap = divergence(grid, &flux, order)?;
    let simons = (0..grid.len())
        .map(|i| {
            let rec = records[i].as_ref()?;
            let l = lap[i]?;
            let inv = &rec.invariants;
            Some(simons_margin(n, c, 0.5 * l, inv.b_norm2, inv.mean_norm2))
        })
        .collect();
    let mut out = StencilFields { laplacian_b_norm2: lap, simons_margin: simons, ..Default::default() };
    for (m, e, ch, cb) in per_node {
        out.maslov.push(m);
        out.equivalence.push(e);
        out.codazzi_h.push(ch);
        out.codazzi_b.push(cb);
    }
    Ok(out)
}

/// NaN when no owned node carries a value, so that an empty stencil pass
/// cannot read as a perfect residual.
fn sup_over(grid: &SampleGrid, v: impl Fn(usize) -> Option<f64>) -> f64 {
    (0..grid.len()).filter(|&i| grid.owned(i)).filter_map(v).fold(f64::NAN, f64::max)
}

pub fn analyze_field(
    map: &ImmersionMap,
    resolution: &[usize],
    closed: bool,
    opts: &FieldOptions,
) -> Result<FieldAnalysis> {
    let halo = stencil(opts.stencil_order)?.len();
    let grid = build_grid_with(map, resolution, halo)?;
    let records = point_records(map, &grid, opts.engine)?;
    let st = stencil_pass(&grid, &records, map.target.c, opts.stencil_order)?;
    let report = summarize(map, &grid, &records, &st, closed, opts)?;
    Ok(FieldAnalysis { grid, records, stencil: st, report })
}

fn summarize(
    map: &ImmersionMap,
    grid: &SampleGrid,
    records: &[Option<PointRecord>],
    st: &StencilFields,
    closed: bool,
    opts: &FieldOptions,
) -> Result<FieldReport> {
    let n = grid.n;
    let c = map.target.c;
    let inv = |f: fn(&crate::geometry::PointInvariants) -> f64| {
        Summary::of(grid, |i| records[i].as_ref().map(|r| f(&r.invariants)))
    };
    let invariants = InvariantSummaries {
        h_norm2: inv(|p| p.h_norm2),
        b_norm2: inv(|p| p.b_norm2),
        mean_norm2: inv(|p| p.mean_norm2),
        eq3_residual: inv(|p| p.eq3_residual),
        lagrangian_defect: inv(|p| p.lagrangian_defect),
        h_symmetry_defect: inv(|p| p.h_symmetry_defect),
        b_trace_defect: inv(|p| p.b_trace_defect),
        b_symmetry_defect: inv(|p| p.b_symmetry_defect),
        mean_star_defect: inv(|p| p.mean_star_defect),
        gauss_residual: inv(|p| p.gauss_residual.unwrap_or(f64::NAN)),
    };

    let eq_minus = sup_over(grid, |i| st.equivalence[i].map(|e| e[0]));
    let eq_plus = sup_over(grid, |i| st.equivalence[i].map(|e| e[1]));
    let (trace_sign, equivalence_residual, opposite) =
        if eq_plus < eq_minus { (1, eq_plus, eq_minus) } else { (-1, eq_minus, eq_plus) };
    let maslov = MaslovResult {
        sup_defect: sup_over(grid, |i| st.maslov[i]),
        sup_defect_pointwise: sup_over(grid, |i| records[i].as_ref().map(|r| r.maslov_pointwise)),
        equivalence_residual,
        trace_sign,
        opposite_sign_residual: opposite,
    };
    let codazzi_h = CodazziResult {
        sup: sup_over(grid, |i| st.codazzi_h[i]),
        sup_pointwise: sup_over(grid, |i| records[i].as_ref().map(|r| r.codazzi_h_pointwise)),
    };
    let codazzi_b = CodazziResult {
        sup: sup_over(grid, |i| st.codazzi_b[i]),
        sup_pointwise: sup_over(grid, |i| records[i].as_ref().map(|r| r.codazzi_b_pointwise)),
    };

    let owned = (0..grid.len()).filter(|&i| grid.owned(i)).count();
    let interior = (0..grid.len()).filter(|&i| grid.owned(i) && st.codazzi_h[i].is_some()).count();
    let mut warnings = Vec::new();
    if interior == 0 {
        warnings.push(format!("no owned node has a full order-{} stencil; raise the resolution", opts.stencil_order));
    } else if interior < owned && closed {
        warnings.push(format!(
            "{} of {owned} owned nodes lack a full stencil; grid-difference results cover the rest",
            owned - interior
        ));
    }

    let b2: Vec<f64> = records.iter().map(|r| r.as_ref().map_or(0.0, |r| r.invariants.b_norm2)).collect();
    let (lap_integral, lap_missing) = integrate_partial(grid, &st.laplacian_b_norm2);
    if lap_missing > 0 && closed {
        warnings.push(format!("{lap_missing} owned nodes lack a Laplacian value; its integral is partial"));
    }
    let chart_volumes = grid
        .charts
        .iter()
        .map(|cg| {
            (cg.offset..cg.offset + cg.len())
                .filter(|&i| grid.owned(i))
                .map(|i| grid.weights[i] * grid.ownership[i])
                .sum()
        })
        .collect::<Vec<f64>>();
    let integrals = Integrals {
        volume: chart_volumes.iter().sum(),
        chart_volumes,
        b_norm2: integrate(grid, &b2),
        laplacian_b_norm2: lap_integral,
    };

    let samples: Vec<GapSample> = (0..grid.len())
        .filter(|&i| grid.owned(i))
        .filter_map(|i| records[i].as_ref())
        .map(|r| GapSample {
            b_norm2: r.invariants.b_norm2,
            h_norm2: r.invariants.h_norm2,
            mean_norm2: r.invariants.mean_norm2,
        })
        .collect();
    let gap = gap_verdict(&samples, n, c, &opts.gap)?;

    Ok(FieldReport {
        n,
        c,
        resolution: grid.resolution.clone(),
        stencil_order: opts.stencil_order,
        engine: opts.engine,
        nodes: NodeCounts { total: grid.len(), active: grid.active.iter().filter(|&&a| a).count(), owned, interior },
        invariants,
        maslov,
        codazzi_h,
        codazzi_b,
        simons_margin: Summary::of(grid, |i| st.simons_margin[i]),
        laplacian_b_norm2: Summary::of(grid, |i| st.laplacian_b_norm2[i]),
        integrals,
        gap,
        warnings,
    })
}

/// Pointwise invariants and the gap verdict over owned nodes, from order-2
/// jets and without any stencil pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub c: f64,
    pub resolution: Vec<usize>,
    pub nodes: usize,
    pub b_norm2: Summary,
    pub h_norm2: Summary,
    pub mean_norm2: Summary,
    pub gap: GapVerdict,
}

#[derive(Clone, Debug)]
pub struct GapAnalysis {
    pub grid: SampleGrid,
    /// Present on owned nodes.
    pub invariants: Vec<Option<crate::geometry::PointInvariants>>,
    pub report: GapReport,
}

pub fn gap_check(map: &ImmersionMap, resolution: &[usize], opts: &FieldOptions) -> Result<GapAnalysis> {
    use rayon::prelude::*;
    let grid = build_grid_with(map, resolution, 0)?;
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.owned(i)).collect();
    let computed: Vec<Result<crate::geometry::PointInvariants>> = idx
        .par_iter()
        .map(|&i| {
            let p = grid.param_point(i);
            crate::jets::evaluate_jet(map, &p, 2, opts.engine)
                .and_then(|jet| crate::geometry::analyze_point(&map.target, &jet))
                .map(|pg| pg.invariants)
                .map_err(|e| Error::AtGridPoint { chart: p.chart, index: grid.multi_index(i), source: Box::new(e) })
        })
        .collect();
    let mut per_node = vec![None; grid.len()];
    for (&i, r) in idx.iter().zip(computed) {
        per_node[i] = Some(r?);
    }
    let samples: Vec<GapSample> = per_node
        .iter()
        .flatten()
        .map(|p| GapSample { b_norm2: p.b_norm2, h_norm2: p.h_norm2, mean_norm2: p.mean_norm2 })
        .collect();
    let summary = |f: fn(&crate::geometry::PointInvariants) -> f64| {
        Summary::of(&grid, |i| per_node[i].as_ref().map(f))
    };
    let report = GapReport {
        n: grid.n,
        c: map.target.c,
        resolution: grid.resolution.clone(),
        nodes: samples.len(),
        b_norm2: summary(|p| p.b_norm2),
        h_norm2: summary(|p| p.h_norm2),
        mean_norm2: summary(|p| p.mean_norm2),
        gap: gap_verdict(&samples, grid.n, map.target.c, &opts.gap)?,
    };
    Ok(GapAnalysis { grid, invariants: per_node, report })
}

/// Which symmetric 3-tensor a Codazzi check is run on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodazziTarget {
    H,
    B,
}

pub fn maslov_conformal_defect(map: &ImmersionMap, grid: &SampleGrid, opts: &FieldOptions) -> Result<MaslovResult> {
    let records = point_records(map, grid, opts.engine)?;
    let st = stencil_pass(grid, &records, map.target.c, opts.stencil_order)?;
    Ok(summarize(map, grid, &records, &st, true, opts)?.maslov)
}

pub fn codazzi_residual(
    map: &ImmersionMap,
    grid: &SampleGrid,
    which: CodazziTarget,
    opts: &FieldOptions,
) -> Result<CodazziResult> {
    let records = point_records(map, grid, opts.engine)?;
    let st = stencil_pass(grid, &records, map.target.c, opts.stencil_order)?;
    let r = summarize(map, grid, &records, &st, true, opts)?;
    Ok(match which {
        CodazziTarget::H => r.codazzi_h,
        CodazziTarget::B => r.codazzi_b,
    })
}

/// Infimum of the Simons margin over owned interior nodes.
pub fn simons_diagnostic(map: &ImmersionMap, grid: &SampleGrid, opts: &FieldOptions) -> Result<f64> {
    let records = point_records(map, grid, opts.engine)?;
    let st = stencil_pass(grid, &records, map.target.c, opts.stencil_order)?;
    Ok(Summary::of(grid, |i| st.simons_margin[i]).inf)
}
