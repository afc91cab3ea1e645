//! Structured product grids over the charts of an immersion.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::build_frame;
use crate::jets::{evaluate_jet, Engine, ImmersionMap, ParamPoint};

pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub spacing: f64,
    pub count: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn coord(&self, i: usize) -> f64 {
        let x = self.lo + i as f64 * self.spacing;
        if self.periodic {
            x
        } else {
            x.min(self.hi)
        }
    }

    fn trapezoid(&self, i: usize) -> f64 {
        if !self.periodic && (i == 0 || i + 1 == self.count) {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChartGrid {
    pub chart: usize,
    pub axes: Vec<Axis>,
    /// Global index of this chart's first node.
    pub offset: usize,
    strides: Vec<usize>,
}

impl ChartGrid {
    fn new(chart: usize, axes: Vec<Axis>, offset: usize) -> Self {
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].count;
        }
        ChartGrid { chart, axes, offset, strides }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, local: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.axes).map(|(s, a)| (local / s) % a.count).collect()
    }

    pub fn coords(&self, local: usize) -> Vec<f64> {
        self.multi_index(local).iter().zip(&self.axes).map(|(&i, a)| a.coord(i)).collect()
    }

    /// Local index of the node `step` positions away along `axis`.
    pub fn shift(&self, local: usize, axis: usize, step: isize) -> Option<usize> {
        let a = &self.axes[axis];
        let i = ((local / self.strides[axis]) % a.count) as isize;
        let mut j = i + step;
        if a.periodic {
            j = j.rem_euclid(a.count as isize);
        } else if j < 0 || j >= a.count as isize {
            return None;
        }
        Some((local as isize + (j - i) * self.strides[axis] as isize) as usize)
    }
}

/// Product grids on every chart plus per-node quadrature data.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub n: usize,
    pub resolution: Vec<usize>,
    pub charts: Vec<ChartGrid>,
    /// Partition-of-unity weight of each node.
    pub ownership: Vec<f64>,
    /// Nodes where the immersion is evaluated: owned nodes and the stencil
    /// halo around them.
    pub active: Vec<bool>,
    /// Trapezoid weight times `sqrt(det g)`; zero on inactive nodes.
    pub weights: Vec<f64>,
    pub sqrt_det: Vec<f64>,
    /// Inverse induced metric, row-major, per node (empty when inactive).
    pub g_inv: Vec<Vec<f64>>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.ownership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ownership.is_empty()
    }

    pub fn locate(&self, global: usize) -> (&ChartGrid, usize) {
        let c = self
            .charts
            .iter()
            .rposition(|c| c.offset <= global)
            .expect("grid index in range");
        (&self.charts[c], global - self.charts[c].offset)
    }

    pub fn param_point(&self, global: usize) -> ParamPoint {
        let (cg, local) = self.locate(global);
        ParamPoint::new(cg.chart, cg.coords(local))
    }

    pub fn multi_index(&self, global: usize) -> Vec<usize> {
        let (cg, local) = self.locate(global);
        cg.multi_index(local)
    }

    pub fn neighbor(&self, global: usize, axis: usize, step: isize) -> Option<usize> {
        let (cg, local) = self.locate(global);
        cg.shift(local, axis, step).map(|l| l + cg.offset)
    }

    pub fn spacing(&self, global: usize, axis: usize) -> f64 {
        self.locate(global).0.axes[axis].spacing
    }

    pub fn owned(&self, global: usize) -> bool {
        self.active[global] && self.ownership[global] > 0.0
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }
}

/// Grid whose halo supports two nested default stencils, enough for
/// [`laplace_beltrami`](super::laplace_beltrami) on arbitrary fields.
pub fn build_grid(map: &ImmersionMap, resolution: &[usize]) -> Result<SampleGrid> {
    build_grid_with(map, resolution, crate::field::DEFAULT_STENCIL_ORDER)
}

/// Grid whose active region extends `halo_steps` nodes beyond the owned
/// region along every axis.
pub fn build_grid_with(
    map: &ImmersionMap,
    resolution: &[usize],
    halo_steps: usize,
) -> Result<SampleGrid> {
    let n = map.n;
    let resolution: Vec<usize> = match resolution.len() {
        1 => vec![resolution[0]; n],
        k if k == n => resolution.to_vec(),
        k => {
            return Err(Error::Config(format!(
                "resolution: expected 1 or {n} entries, got {k}"
            )))
        }
    };
    if let Some(r) = resolution.iter().find(|&&r| r < MIN_RESOLUTION) {
        return Err(Error::Config(format!(
            "resolution: need at least {MIN_RESOLUTION} nodes per axis, got {r}"
        )));
    }
    let mut charts = Vec::with_capacity(map.charts.len());
    let mut offset = 0;
    for (ci, chart) in map.charts.iter().enumerate() {
        let axes: Vec<Axis> = (0..n)
            .map(|k| {
                let (lo, hi, periodic) =
                    (chart.domain.lo[k], chart.domain.hi[k], chart.domain.periodic[k]);
                let count = resolution[k];
                let spacing =
                    if periodic { (hi - lo) / count as f64 } else { (hi - lo) / (count - 1) as f64 };
                Axis { lo, hi, spacing, count, periodic }
            })
            .collect();
        let cg = ChartGrid::new(ci, axes, offset);
        offset += cg.len();
        charts.push(cg);
    }

    let mut ownership = vec![0.0; offset];
    let mut active = vec![false; offset];
    for (cg, chart) in charts.iter().zip(&map.charts) {
        let len = cg.len();
        let mut mask = vec![false; len];
        for local in 0..len {
            let w = chart.partition_weight(&cg.coords(local));
            ownership[cg.offset + local] = w;
            mask[local] = w > 0.0;
        }
        if chart.partition.is_some() {
            // separable box dilation
            let reach = halo_steps as isize;
            for axis in 0..n {
                let prev = mask.clone();
                for local in 0..len {
                    if prev[local] {
                        continue;
                    }
                    mask[local] = (-reach..=reach)
                        .filter_map(|s| cg.shift(local, axis, s))
                        .any(|j| prev[j]);
                }
            }
        }
        active[cg.offset..cg.offset + len].copy_from_slice(&mask);
    }

    let mut grid = SampleGrid {
        n,
        resolution,
        charts,
        ownership,
        active,
        weights: vec![0.0; offset],
        sqrt_det: vec![0.0; offset],
        g_inv: vec![Vec::new(); offset],
    };
    let idx = grid.active_indices();
    let metric: Vec<Result<(f64, Vec<f64>)>> = idx
        .par_iter()
        .map(|&i| {
            let p = grid.param_point(i);
            let located = |e: Error| Error::AtGridPoint {
                chart: p.chart,
                index: grid.multi_index(i),
                source: Box::new(e),
            };
            let jet = evaluate_jet(map, &p, 1, Engine::Exact).map_err(located)?;
            let frame = build_frame(&map.target, &jet).map_err(located)?;
            Ok((det_sqrt(&frame.g), frame.g_inv.iter().copied().collect()))
        })
        .collect();
    for (&i, m) in idx.iter().zip(metric) {
        let (sd, gi) = m?;
        let (cg, local) = grid.locate(i);
        let quad: f64 = cg.multi_index(local).iter().zip(&cg.axes).map(|(&j, a)| a.trapezoid(j)).product();
        grid.weights[i] = quad * sd;
        grid.sqrt_det[i] = sd;
        grid.g_inv[i] = gi;
    }
    Ok(grid)
}

pub(crate) fn det_sqrt(g: &Array2<f64>) -> f64 {
    crate::linalg::to_na(g.view()).determinant().max(0.0).sqrt()
}
