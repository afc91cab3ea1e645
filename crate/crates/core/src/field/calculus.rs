//! Axis-aligned central differences, the Laplace-Beltrami operator, and
//! quadrature on a [`SampleGrid`].

use super::grid::SampleGrid;
use crate::error::{Error, Result};

/// Central first-derivative weights for offsets `1..=order/2`; the weight at
/// `-k` is the negative of the weight at `+k`.
pub fn stencil(order: usize) -> Result<&'static [f64]> {
    match order {
        2 => Ok(&[0.5]),
        4 => Ok(&[2.0 / 3.0, -1.0 / 12.0]),
        6 => Ok(&[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0]),
        8 => Ok(&[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0]),
        _ => Err(Error::Config(format!("stencil_order: must be 2, 4, 6 or 8, got {order}"))),
    }
}

/// Derivatives of a vector field along every grid axis at `global`, or
/// `None` when some stencil node carries no value. Result is `[axis][comp]`.
pub fn axis_derivatives<'a, F>(grid: &SampleGrid, global: usize, weights: &[f64], get: F) -> Option<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Option<&'a [f64]>,
{
    let width = get(global)?.len();
    let mut out = Vec::with_capacity(grid.n);
    for axis in 0..grid.n {
        let h = grid.spacing(global, axis);
        let mut d = vec![0.0; width];
        for (k, w) in weights.iter().enumerate() {
            let step = k as isize + 1;
            let plus = get(grid.neighbor(global, axis, step)?)?;
            let minus = get(grid.neighbor(global, axis, -step)?)?;
            for c in 0..width {
                d[c] += w * (plus[c] - minus[c]);
            }
        }
        for v in &mut d {
            *v /= h;
        }
        out.push(d);
    }
    Some(out)
}

/// `(1/sqrt g) d_i F^i` for a densitized vector field `F`.
pub fn divergence(grid: &SampleGrid, flux: &[Option<Vec<f64>>], order: usize) -> Result<Vec<Option<f64>>> {
    let w = stencil(order)?;
    Ok((0..grid.len())
        .map(|i| {
            if !grid.active[i] {
                return None;
            }
            let d = axis_derivatives(grid, i, w, |j| flux[j].as_deref())?;
            let s: f64 = (0..grid.n).map(|a| d[a][a]).sum();
            Some(s / grid.sqrt_det[i])
        })
        .collect())
}

/// `Δf = (1/sqrt g) d_i (sqrt g g^{ij} d_j f)` with both derivatives taken on
/// the grid. Nodes lacking a full two-level stencil get `None`.
pub fn laplace_beltrami(grid: &SampleGrid, f: &[f64], order: usize) -> Result<Vec<Option<f64>>> {
    if f.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "field has {} values, grid has {} nodes",
            f.len(),
            grid.len()
        )));
    }
    let w = stencil(order)?;
    let n = grid.n;
    let values: Vec<Option<[f64; 1]>> =
        (0..grid.len()).map(|i| grid.active[i].then_some([f[i]])).collect();
    let flux: Vec<Option<Vec<f64>>> = (0..grid.len())
        .map(|i| {
            if !grid.active[i] {
                return None;
            }
            let d = axis_derivatives(grid, i, w, |j| values[j].as_ref().map(|v| &v[..]))?;
            let gi = &grid.g_inv[i];
            Some(
                (0..n)
                    .map(|a| grid.sqrt_det[i] * (0..n).map(|b| gi[a * n + b] * d[b][0]).sum::<f64>())
                    .collect(),
            )
        })
        .collect();
    divergence(grid, &flux, order)
}

/// `sum_p weight_p * ownership_p * f_p` over nodes that carry a value, with
/// the number of owned nodes that did not.
pub fn integrate_partial(grid: &SampleGrid, f: &[Option<f64>]) -> (f64, usize) {
    let mut s = 0.0;
    let mut missing = 0;
    for i in 0..grid.len() {
        if !grid.owned(i) {
            continue;
        }
        match f[i] {
            Some(v) => s += grid.weights[i] * grid.ownership[i] * v,
            None => missing += 1,
        }
    }
    (s, missing)
}

pub fn integrate(grid: &SampleGrid, f: &[f64]) -> f64 {
    (0..grid.len()).filter(|&i| grid.owned(i)).map(|i| grid.weights[i] * grid.ownership[i] * f[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grid::build_grid;
    use crate::gallery::{make_immersion, ExampleSpec};

    fn torus_grid(res: usize) -> SampleGrid {
        let map = make_immersion(&ExampleSpec::FlatTorus { radii: vec![1.0, 1.0] }).unwrap();
        build_grid(&map, &[res]).unwrap()
    }

    #[test]
    fn stencils_differentiate_polynomials_exactly() {
        for order in [2, 4, 6, 8] {
            let w = stencil(order).unwrap();
            let h = 0.1;
            for deg in 1..=order {
                // d/dx x^deg at 0.3
                let x0: f64 = 0.3;
                let mut d = 0.0;
                for (k, c) in w.iter().enumerate() {
                    let s = (k + 1) as f64 * h;
                    d += c * ((x0 + s).powi(deg as i32) - (x0 - s).powi(deg as i32));
                }
                d /= h;
                let want = deg as f64 * x0.powi(deg as i32 - 1);
                assert!((d - want).abs() < 1e-12, "order {order} degree {deg}");
            }
        }
        assert!(stencil(3).is_err());
    }

    #[test]
    fn laplacian_of_constant_and_cosine() {
        let grid = torus_grid(64);
        let ones = vec![1.0; grid.len()];
        for v in laplace_beltrami(&grid, &ones, 4).unwrap() {
            assert!(v.unwrap().abs() < 1e-10);
        }
        let mut worst: f64 = 0.0;
        let f: Vec<f64> = (0..grid.len()).map(|i| grid.param_point(i).u[0].cos()).collect();
        for (i, v) in laplace_beltrami(&grid, &f, 2).unwrap().into_iter().enumerate() {
            worst = worst.max((v.unwrap() + f[i]).abs());
        }
        let h = std::f64::consts::TAU / 64.0;
        assert!(worst < h * h, "{worst}");
    }

    #[test]
    fn torus_area() {
        let grid = torus_grid(32);
        let area = integrate(&grid, &vec![1.0; grid.len()]);
        assert!((area - std::f64::consts::TAU.powi(2)).abs() < 1e-6);
    }
}
