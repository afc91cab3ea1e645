//! First pass over the grid: everything that needs only the jet at one node.

use ndarray::{Array2, Array3, Array4};
use rayon::prelude::*;

use super::grid::SampleGrid;
use crate::error::{Error, Result};
use crate::geometry::{analyze_point, to_frame4, PointInvariants};
use crate::jets::{evaluate_jet, Engine, ImmersionMap};

/// Per-node data consumed by the stencil pass. Tensors are flattened
/// row-major.
#[derive(Clone, Debug)]
pub struct PointRecord {
    pub invariants: PointInvariants,
    /// `e_i = sum_p frame[p][i] d_p`
    pub frame: Vec<f64>,
    /// `Γ^l_{ij}` at `[l][i][j]`
    pub christoffel: Vec<f64>,
    /// `<h(d_i, d_j), J d_m>` at `[i][j][m]`
    pub cubic: Vec<f64>,
    pub b_cubic: Vec<f64>,
    /// `<H, J d_m>`
    pub mu: Vec<f64>,
    /// `sum_k h^{m*}_{kk,l}` at `[m][l]`, from third derivatives.
    pub trace_derivative: Vec<f64>,
    /// Pointwise Maslov defect from third derivatives.
    pub maslov_pointwise: f64,
    pub codazzi_h_pointwise: f64,
    pub codazzi_b_pointwise: f64,
    /// `sqrt(det g) g^{ij} d_j ||B||^2`
    pub flux: Vec<f64>,
}

pub(crate) fn flatten3(t: &Array3<f64>) -> Vec<f64> {
    t.iter().copied().collect()
}

/// Largest `|T_{ijmk} - T_{ikmj}|`, i.e. failure of the derivative slot to
/// commute with the second slot.
pub(crate) fn codazzi_defect(t: &Array4<f64>) -> f64 {
    let n = t.shape()[0];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                for k in 0..n {
                    worst = worst.max((t[[i, j, m, k]] - t[[i, k, m, j]]).abs());
                }
            }
        }
    }
    worst
}

/// `E - tr(E)/n I` in max-norm.
pub(crate) fn conformal_defect(e: &Array2<f64>) -> f64 {
    let n = e.nrows();
    let div = e.diag().sum();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { div / n as f64 } else { 0.0 };
            worst = worst.max((e[[i, j]] - d).abs());
        }
    }
    worst
}

pub fn point_record(map: &ImmersionMap, grid: &SampleGrid, global: usize, engine: Engine) -> Result<PointRecord> {
    let p = grid.param_point(global);
    let jet = evaluate_jet(map, &p, 3, engine)?;
    let pg = analyze_point(&map.target, &jet)?;
    let n = map.n;
    let nf = n as f64;
    let k = nf / (nf + 2.0);
    let g = &pg.frame.g;
    let gi = &pg.frame.g_inv;
    let f = &pg.frame.coord_to_frame;
    let dc = pg
        .cubic_derivative
        .as_ref()
        .ok_or_else(|| Error::Numerical("third-order data missing".into()))?;

    // d mu[m][k] = (1/n) g^{ij} nabla_k C_ijm
    let dmu = Array2::from_shape_fn((n, n), |(m, kk)| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gi[[i, j]] * dc[[i, j, m, kk]];
            }
        }
        s / nf
    });
    let db = Array4::from_shape_fn((n, n, n, n), |(i, j, m, kk)| {
        dc[[i, j, m, kk]] - k * (dmu[[m, kk]] * g[[i, j]] + dmu[[i, kk]] * g[[j, m]] + dmu[[j, kk]] * g[[i, m]])
    });
    let dc_frame = to_frame4(dc, f);
    let db_frame = to_frame4(&db, f);
    let trace_derivative = Array2::from_shape_fn((n, n), |(m, l)| {
        (0..n).map(|kk| dc_frame[[kk, kk, m, l]]).sum::<f64>()
    });
    let e = trace_derivative.mapv(|x| -x / nf);

    // gradient of ||B||^2 in coordinates
    let bc = &pg.coords.b_cubic;
    let raised = Array3::from_shape_fn((n, n, n), |(i, j, m)| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    s += gi[[i, a]] * gi[[j, b]] * gi[[m, c]] * bc[[a, b, c]];
                }
            }
        }
        s
    });
    let grad: Vec<f64> = (0..n)
        .map(|kk| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for m in 0..n {
                        s += raised[[i, j, m]] * db[[i, j, m, kk]];
                    }
                }
            }
            2.0 * s
        })
        .collect();
    let sd = grid.sqrt_det[global];
    let flux = (0..n).map(|i| sd * (0..n).map(|j| gi[[i, j]] * grad[j]).sum::<f64>()).collect();

    Ok(PointRecord {
        invariants: pg.invariants,
        frame: f.iter().copied().collect(),
        christoffel: flatten3(&pg.coords.christoffel),
        cubic: flatten3(&pg.coords.cubic),
        b_cubic: flatten3(bc),
        mu: pg.coords.mu.to_vec(),
        trace_derivative: trace_derivative.iter().copied().collect(),
        maslov_pointwise: conformal_defect(&e),
        codazzi_h_pointwise: codazzi_defect(&dc_frame),
        codazzi_b_pointwise: codazzi_defect(&db_frame),
        flux,
    })
}

/// Evaluate every active node. The first failing node aborts the pass with
/// its location attached.
pub fn point_records(
    map: &ImmersionMap,
    grid: &SampleGrid,
    engine: Engine,
) -> Result<Vec<Option<PointRecord>>> {
    let idx = grid.active_indices();
    let computed: Vec<Result<PointRecord>> = idx
        .par_iter()
        .map(|&i| {
            point_record(map, grid, i, engine).map_err(|e| Error::AtGridPoint {
                chart: grid.param_point(i).chart,
                index: grid.multi_index(i),
                source: Box::new(e),
            })
        })
        .collect();
    let mut out = vec![None; grid.len()];
    for (i, r) in idx.into_iter().zip(computed) {
        out[i] = Some(r?);
    }
    Ok(out)
}
