//! Complex space forms in real coordinate charts.
//!
//! Coordinates on `C^n` (and on each affine chart of `CP^n`) are ordered
//! `(Re z_1, .., Re z_n, Im z_1, .., Im z_n)`, so the complex structure is the
//! constant block matrix `[[0, -I], [I, 0]]`.
//!
//! The Fubini-Study model uses the closed-form affine metric
//! `(1/c) * Re[((1+|z|^2) dz.dz̄ - |z̄.dz|^2) / (1+|z|^2)^2]`, which has
//! holomorphic sectional curvature `4c`. All metric derivatives are taken by
//! nested dual numbers, never by finite differences.

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::dual::{seed2, Scalar, D1, D2};
use crate::error::{Error, Result};
use crate::linalg::{inv_spd, max_abs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbientKind {
    Flat,
    FubiniStudy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientModel {
    pub kind: AmbientKind,
    /// Complex dimension.
    pub n: usize,
    /// A quarter of the holomorphic sectional curvature.
    pub c: f64,
    /// For Fubini-Study: index of the homogeneous coordinate divided out.
    pub chart_id: usize,
}

/// Real chart coordinates, length `2n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientPoint {
    pub y: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(y: Vec<f64>) -> Self {
        AmbientPoint { y }
    }
}

impl AmbientModel {
    pub fn flat(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("complex dimension must be >= 1".into()));
        }
        Ok(AmbientModel { kind: AmbientKind::Flat, n, c: 0.0, chart_id: 0 })
    }

    pub fn fubini_study(n: usize, c: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("complex dimension must be >= 1".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fubini-study requires finite c > 0, got {c}"
            )));
        }
        Ok(AmbientModel { kind: AmbientKind::FubiniStudy, n, c, chart_id: 0 })
    }

    pub fn with_chart(mut self, chart_id: usize) -> Self {
        self.chart_id = chart_id;
        self
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn is_flat(&self) -> bool {
        self.kind == AmbientKind::Flat
    }

    fn check(&self, y: &AmbientPoint) -> Result<()> {
        if y.y.len() != self.real_dim() {
            return Err(Error::InvalidInput(format!(
                "ambient point has {} coordinates, expected {}",
                y.y.len(),
                self.real_dim()
            )));
        }
        if y.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite ambient coordinates".into()));
        }
        Ok(())
    }

    /// Metric components, row-major `2n x 2n`, as a generic formula.
    pub fn metric_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let m = self.real_dim();
        let n = self.n;
        let mut g = vec![S::zero(); m * m];
        match self.kind {
            AmbientKind::Flat => {
                for a in 0..m {
                    g[a * m + a] = S::one();
                }
            }
            AmbientKind::FubiniStudy => {
                let (x, v) = y.split_at(n);
                let mut s = S::one();
                for a in 0..n {
                    s += x[a] * x[a] + v[a] * v[a];
                }
                let inv = (s * s * self.c).recip();
                for a in 0..n {
                    for b in 0..n {
                        let mut p = -(x[a] * x[b] + v[a] * v[b]);
                        if a == b {
                            p += s;
                        }
                        let p = p * inv;
                        let q = -(x[a] * v[b] - v[a] * x[b]) * inv;
                        g[a * m + b] = p;
                        g[(a + n) * m + (b + n)] = p;
                        g[a * m + (b + n)] = q;
                        g[(a + n) * m + b] = -q;
                    }
                }
            }
        }
        g
    }

    /// Largest modulus among the affine coordinates; a chart point is
    /// well-conditioned when this does not exceed one.
    pub fn affine_modulus(&self, y: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|a| (y[a] * y[a] + y[a + n] * y[a + n]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// The ambient metric and its exact first (and optionally second) derivatives.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: Array2<f64>,
    /// `dg[[a, b, k]] = d_k g_ab`
    pub dg: Array3<f64>,
    /// `ddg[[a, b, k, l]] = d_k d_l g_ab`
    pub ddg: Option<Array4<f64>>,
}

pub fn metric_jet(model: &AmbientModel, y: &AmbientPoint, second: bool) -> Result<MetricJet> {
    model.check(y)?;
    let m = model.real_dim();
    let mut g = Array2::zeros((m, m));
    let mut dg = Array3::zeros((m, m, m));
    if model.is_flat() {
        for a in 0..m {
            g[[a, a]] = 1.0;
        }
        return Ok(MetricJet { g, dg, ddg: second.then(|| Array4::zeros((m, m, m, m))) });
    }
    if !second {
        for k in 0..m {
            let yd: Vec<D1> =
                (0..m).map(|a| D1::new(y.y[a], if a == k { 1.0 } else { 0.0 })).collect();
            let out = model.metric_generic(&yd);
            for a in 0..m {
                for b in 0..m {
                    let e = out[a * m + b];
                    g[[a, b]] = e.v;
                    dg[[a, b, k]] = e.d;
                }
            }
        }
        return Ok(MetricJet { g, dg, ddg: None });
    }
    let mut ddg = Array4::zeros((m, m, m, m));
    for k in 0..m {
        for l in k..m {
            let yd: Vec<D2> = (0..m).map(|a| seed2(y.y[a], a == k, a == l)).collect();
            let out = model.metric_generic(&yd);
            for a in 0..m {
                for b in 0..m {
                    let e = out[a * m + b];
                    g[[a, b]] = e.v.v;
                    dg[[a, b, k]] = e.v.d;
                    dg[[a, b, l]] = e.d.v;
                    ddg[[a, b, k, l]] = e.d.d;
                    ddg[[a, b, l, k]] = e.d.d;
                }
            }
        }
    }
    Ok(MetricJet { g, dg, ddg: Some(ddg) })
}

pub fn metric_at(model: &AmbientModel, y: &AmbientPoint) -> Result<Array2<f64>> {
    model.check(y)?;
    let m = model.real_dim();
    let g = model.metric_generic(&y.y);
    Ok(Array2::from_shape_vec((m, m), g).expect("shape"))
}

/// The constant block matrix `[[0, -I], [I, 0]]`; as a linear map it sends
/// `d/dRe z_k` to `d/dIm z_k`.
pub fn standard_j(n: usize) -> Array2<f64> {
    let mut j = Array2::zeros((2 * n, 2 * n));
    for a in 0..n {
        j[[a, a + n]] = -1.0;
        j[[a + n, a]] = 1.0;
    }
    j
}

pub fn complex_structure_at(model: &AmbientModel, y: &AmbientPoint) -> Result<Array2<f64>> {
    model.check(y)?;
    // Affine charts of CP^n are holomorphic, so J keeps its standard form.
    Ok(standard_j(model.n))
}

/// `omega[[A, B]] = g(e_A, J e_B)`.
pub fn kahler_form_at(model: &AmbientModel, y: &AmbientPoint) -> Result<Array2<f64>> {
    let g = metric_at(model, y)?;
    let j = complex_structure_at(model, y)?;
    Ok(g.dot(&j))
}

/// Christoffel symbols from a metric jet: `gamma[[a, b, c]] = Γ^a_{bc}`.
pub fn christoffels_from_jet(jet: &MetricJet) -> Result<Array3<f64>> {
    let m = jet.g.nrows();
    let ginv = inv_spd(jet.g.view())
        .ok_or_else(|| Error::Numerical("ambient metric is not positive definite".into()))?;
    let mut first = Array3::zeros((m, m, m));
    for e in 0..m {
        for b in 0..m {
            for c in 0..m {
                first[[e, b, c]] =
                    0.5 * (jet.dg[[e, c, b]] + jet.dg[[e, b, c]] - jet.dg[[b, c, e]]);
            }
        }
    }
    let mut gamma = Array3::zeros((m, m, m));
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let mut s = 0.0;
                for e in 0..m {
                    s += ginv[[a, e]] * first[[e, b, c]];
                }
                gamma[[a, b, c]] = s;
            }
        }
    }
    Ok(gamma)
}

pub fn christoffels_at(model: &AmbientModel, y: &AmbientPoint) -> Result<Array3<f64>> {
    let jet = metric_jet(model, y, false)?;
    christoffels_from_jet(&jet)
}

/// `dgamma[[a, b, c, d]] = d_d Γ^a_{bc}`, given the inverse metric, metric
/// derivatives and the Christoffel symbols themselves.
pub fn christoffel_derivatives(
    ginv: &Array2<f64>,
    dg: &Array3<f64>,
    ddg: &Array4<f64>,
    gamma: &Array3<f64>,
) -> Array4<f64> {
    let m = ginv.nrows();
    let mut dfirst = Array4::zeros((m, m, m, m));
    for e in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    dfirst[[e, b, c, d]] = 0.5
                        * (ddg[[e, c, b, d]] + ddg[[e, b, c, d]] - ddg[[b, c, e, d]]);
                }
            }
        }
    }
    // d_d g^{ae} = -g^{ap} d_d g_pq g^{qe}
    let mut raised = Array3::zeros((m, m, m));
    for a in 0..m {
        for q in 0..m {
            for d in 0..m {
                raised[[a, q, d]] = (0..m).map(|e| ginv[[a, e]] * dg[[e, q, d]]).sum::<f64>();
            }
        }
    }
    let mut dgamma = Array4::zeros((m, m, m, m));
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut s = 0.0;
                    for e in 0..m {
                        s += ginv[[a, e]] * dfirst[[e, b, c, d]] - raised[[a, e, d]] * gamma[[e, b, c]];
                    }
                    dgamma[[a, b, c, d]] = s;
                }
            }
        }
    }
    dgamma
}

/// Riemann tensor `R^a_{bcd}` (so that `R(d_c, d_d) d_b = R^a_{bcd} d_a`) from a
/// metric and its first and second coordinate derivatives.
pub fn riemann_from_metric(
    g: &Array2<f64>,
    dg: &Array3<f64>,
    ddg: &Array4<f64>,
) -> Result<Array4<f64>> {
    let m = g.nrows();
    let ginv = inv_spd(g.view())
        .ok_or_else(|| Error::Numerical("metric is not positive definite".into()))?;
    let jet = MetricJet { g: g.clone(), dg: dg.clone(), ddg: None };
    let gamma = christoffels_from_jet(&jet)?;
    let dgamma = christoffel_derivatives(&ginv, dg, ddg, &gamma);
    let mut r = Array4::zeros((m, m, m, m));
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut s = dgamma[[a, d, b, c]] - dgamma[[a, c, b, d]];
                    for e in 0..m {
                        s += gamma[[a, c, e]] * gamma[[e, d, b]] - gamma[[a, d, e]] * gamma[[e, c, b]];
                    }
                    r[[a, b, c, d]] = s;
                }
            }
        }
    }
    Ok(r)
}

/// Closed-form curvature of the space form of holomorphic sectional curvature
/// `4c`, as `R^a_{bcd}` in coordinates with metric `g` and complex structure `j`:
/// `R(X,Y)Z = c[g(Y,Z)X - g(X,Z)Y + g(JY,Z)JX - g(JX,Z)JY + 2g(X,JY)JZ]`.
pub fn space_form_curvature(c: f64, g: &Array2<f64>, j: &Array2<f64>) -> Array4<f64> {
    let m = g.nrows();
    // gj[[p, q]] = g(J d_p, d_q)
    let gj = j.t().dot(g);
    let mut r = Array4::zeros((m, m, m, m));
    if c == 0.0 {
        return r;
    }
    for a in 0..m {
        for b in 0..m {
            for cc in 0..m {
                for d in 0..m {
                    let da_c = if a == cc { 1.0 } else { 0.0 };
                    let da_d = if a == d { 1.0 } else { 0.0 };
                    let v = g[[d, b]] * da_c - g[[cc, b]] * da_d + gj[[d, b]] * j[[a, cc]]
                        - gj[[cc, b]] * j[[a, d]]
                        + 2.0 * gj[[d, cc]] * j[[a, b]];
                    r[[a, b, cc, d]] = c * v;
                }
            }
        }
    }
    r
}

/// Max-norm difference between the curvature of the metric (exact second
/// derivatives) and the closed-form space-form curvature.
pub fn curvature_residual(model: &AmbientModel, y: &AmbientPoint) -> Result<f64> {
    model.check(y)?;
    if model.is_flat() {
        return Ok(0.0);
    }
    let modulus = model.affine_modulus(&y.y);
    if modulus > 1.0 + 1e-9 {
        return Err(Error::ChartConditioning { chart: model.chart_id, modulus });
    }
    let jet = metric_jet(model, y, true)?;
    let r = riemann_from_metric(&jet.g, &jet.dg, jet.ddg.as_ref().expect("second"))?;
    let k = space_form_curvature(model.c, &jet.g, &standard_j(model.n));
    Ok(max_abs((&r - &k).iter()))
}

/// Max-norm of the covariant derivative of J (zero for a Kähler metric).
pub fn nabla_j_residual(model: &AmbientModel, y: &AmbientPoint) -> Result<f64> {
    let gamma = christoffels_at(model, y)?;
    let j = complex_structure_at(model, y)?;
    let m = model.real_dim();
    let mut worst: f64 = 0.0;
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for e in 0..m {
                    s += gamma[[a, c, e]] * j[[e, b]] - j[[a, e]] * gamma[[e, c, b]];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

/// Sectional curvature of the plane spanned by `x`, `v` at `y`.
pub fn sectional_curvature(
    model: &AmbientModel,
    y: &AmbientPoint,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    model.check(y)?;
    let m = model.real_dim();
    let jet = metric_jet(model, y, true)?;
    let r = riemann_from_metric(&jet.g, &jet.dg, jet.ddg.as_ref().expect("second"))?;
    let g = &jet.g;
    let ip = |p: &[f64], q: &[f64]| {
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += g[[a, b]] * p[a] * q[b];
            }
        }
        s
    };
    // g(R(x, v) v, x)
    let mut rv = vec![0.0; m];
    for a in 0..m {
        let mut s = 0.0;
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    s += r[[a, b, c, d]] * v[b] * x[c] * v[d];
                }
            }
        }
        rv[a] = s;
    }
    let num = ip(&rv, x);
    let den = ip(x, x) * ip(v, v) - ip(x, v).powi(2);
    Ok(num / den)
}

/// Homogeneous coordinates `(Re Z_0..Re Z_n, Im Z_0..Im Z_n)` of an affine
/// point of chart `chart`.
pub fn affine_to_homogeneous(n: usize, chart: usize, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut re = Vec::with_capacity(n + 1);
    let mut im = Vec::with_capacity(n + 1);
    let mut k = 0;
    for idx in 0..=n {
        if idx == chart {
            re.push(1.0);
            im.push(0.0);
        } else {
            re.push(y[k]);
            im.push(y[k + n]);
            k += 1;
        }
    }
    (re, im)
}

/// Index of the homogeneous coordinate with largest modulus, ties to the
/// lowest index.
pub fn best_chart(re: &[f64], im: &[f64]) -> usize {
    let mut best = 0;
    let mut best_mod = -1.0;
    for (i, (a, b)) in re.iter().zip(im).enumerate() {
        let m = a * a + b * b;
        if m > best_mod * (1.0 + 1e-14) {
            best = i;
            best_mod = m;
        }
    }
    best
}

/// Affine coordinates in chart `chart` of a homogeneous point.
pub fn homogeneous_to_affine<S: Scalar>(re: &[S], im: &[S], chart: usize) -> Vec<S> {
    let n = re.len() - 1;
    let (dr, di) = (re[chart], im[chart]);
    let den = (dr * dr + di * di).recip();
    let mut out = vec![S::zero(); 2 * n];
    let mut k = 0;
    for idx in 0..=n {
        if idx == chart {
            continue;
        }
        // (a + ib) / (dr + i di)
        let (a, b) = (re[idx], im[idx]);
        out[k] = (a * dr + b * di) * den;
        out[k + n] = (b * dr - a * di) * den;
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affine(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        // uniform-ish inside the polydisc of radius 1
        let mut y = vec![0.0; 2 * n];
        for a in 0..n {
            let r = rng.random::<f64>().sqrt() * 0.999;
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            y[a] = r * t.cos();
            y[a + n] = r * t.sin();
        }
        y
    }

    #[test]
    fn flat_metric_is_identity() {
        let m = AmbientModel::flat(2).unwrap();
        let g = metric_at(&m, &AmbientPoint::new(vec![0.3, 1.0, -2.0, 5.0])).unwrap();
        assert_eq!(g, Array2::<f64>::eye(4));
    }

    #[test]
    fn fs_metric_at_origin_scales_with_c() {
        for (c, diag) in [(1.0, 1.0), (2.0, 0.5)] {
            let m = AmbientModel::fubini_study(2, c).unwrap();
            let g = metric_at(&m, &AmbientPoint::new(vec![0.0; 4])).unwrap();
            let want = Array2::<f64>::eye(4) * diag;
            assert!(max_abs((&g - &want).iter()) < 1e-15);
        }
    }

    #[test]
    fn fs_metric_matches_hermitian_closed_form() {
        // oracle: complex Hermitian form evaluated directly
        let n = 2;
        let y = [0.3, -0.4, 0.2, 0.5];
        let z = [(y[0], y[2]), (y[1], y[3])];
        let s = 1.0 + y.iter().map(|v| v * v).sum::<f64>();
        let m = AmbientModel::fubini_study(n, 1.0).unwrap();
        let g = metric_at(&m, &AmbientPoint::new(y.to_vec())).unwrap();
        let vec_x = [0.7, -0.1, 0.2, 0.9];
        let vx = [(vec_x[0], vec_x[2]), (vec_x[1], vec_x[3])];
        // |v|^2 s - |sum conj(z_a) v_a|^2, over s^2
        let v2: f64 = vx.iter().map(|(a, b)| a * a + b * b).sum();
        let (mut zr, mut zi) = (0.0, 0.0);
        for k in 0..n {
            // conj(z) * v
            zr += z[k].0 * vx[k].0 + z[k].1 * vx[k].1;
            zi += z[k].0 * vx[k].1 - z[k].1 * vx[k].0;
        }
        let want = (s * v2 - (zr * zr + zi * zi)) / (s * s);
        let got = vec_x
            .iter()
            .enumerate()
            .map(|(a, xa)| (0..4).map(|b| g[[a, b]] * xa * vec_x[b]).sum::<f64>())
            .sum::<f64>();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn j_squares_to_minus_identity_and_is_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [0, 1] {
            for _ in 0..100 {
                let n = rng.random_range(1..=3);
                let model = if kind == 0 {
                    AmbientModel::flat(n).unwrap()
                } else {
                    AmbientModel::fubini_study(n, 1.5).unwrap()
                };
                let y = AmbientPoint::new(random_affine(&mut rng, n));
                let j = complex_structure_at(&model, &y).unwrap();
                let g = metric_at(&model, &y).unwrap();
                let jj = j.dot(&j) + Array2::<f64>::eye(2 * n);
                assert!(max_abs(jj.iter()) < 1e-15);
                let iso = j.t().dot(&g).dot(&j) - &g;
                let tol = if kind == 0 { 1e-12 } else { 1e-9 };
                assert!(max_abs(iso.iter()) < tol);
                let w = kahler_form_at(&model, &y).unwrap();
                assert!(max_abs((&w + &w.t()).iter()) < tol);
            }
        }
    }

    #[test]
    fn flat_j_block_and_kahler_sign() {
        let m = AmbientModel::flat(2).unwrap();
        let y = AmbientPoint::new(vec![0.0; 4]);
        let j = complex_structure_at(&m, &y).unwrap();
        let want = ndarray::array![
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0]
        ];
        assert_eq!(j, want);
        // omega(e1, J e1) = -1
        let w = kahler_form_at(&m, &y).unwrap();
        let je1 = j.column(0).to_owned();
        let val: f64 = (0..4).map(|b| w[[0, b]] * je1[b]).sum();
        assert_eq!(val, -1.0);
        let fs = AmbientModel::fubini_study(2, 1.0).unwrap();
        assert!(max_abs((&kahler_form_at(&fs, &y).unwrap() - &w).iter()) < 1e-15);
    }

    #[test]
    fn christoffels_vanish_at_origin_and_are_symmetric() {
        let fs = AmbientModel::fubini_study(3, 1.0).unwrap();
        let gam = christoffels_at(&fs, &AmbientPoint::new(vec![0.0; 6])).unwrap();
        assert!(max_abs(gam.iter()) < 1e-15);
        let flat = AmbientModel::flat(2).unwrap();
        let gam = christoffels_at(&flat, &AmbientPoint::new(vec![1.0; 4])).unwrap();
        assert!(max_abs(gam.iter()) == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = AmbientPoint::new(random_affine(&mut rng, 3));
        let gam = christoffels_at(&fs, &y).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..6 {
                    assert!((gam[[a, b, c]] - gam[[a, c, b]]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn levi_civita_is_metric_compatible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=3);
            let model = AmbientModel::fubini_study(n, 0.7).unwrap();
            let y = AmbientPoint::new(random_affine(&mut rng, n));
            let jet = metric_jet(&model, &y, false).unwrap();
            let gam = christoffels_from_jet(&jet).unwrap();
            let m = 2 * n;
            // d_k g_ab - Γ^e_{ka} g_eb - Γ^e_{kb} g_ae = 0
            for a in 0..m {
                for b in 0..m {
                    for k in 0..m {
                        let mut s = jet.dg[[a, b, k]];
                        for e in 0..m {
                            s -= gam[[e, k, a]] * jet.g[[e, b]] + gam[[e, k, b]] * jet.g[[a, e]];
                        }
                        assert!(s.abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn fs_curvature_matches_space_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3 {
            for c in [0.5, 1.0, 2.0] {
                let model = AmbientModel::fubini_study(n, c).unwrap();
                for _ in 0..20 {
                    let y = AmbientPoint::new(random_affine(&mut rng, n));
                    let r = curvature_residual(&model, &y).unwrap();
                    assert!(r < 1e-6, "n={n} c={c} residual {r}");
                    assert!(nabla_j_residual(&model, &y).unwrap() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn cp1_sectional_curvature_is_four() {
        let model = AmbientModel::fubini_study(1, 1.0).unwrap();
        let k = sectional_curvature(&model, &AmbientPoint::new(vec![0.0, 0.0]), &[1.0, 0.0], &[0.0, 1.0])
            .unwrap();
        assert!((k - 4.0).abs() < 1e-12, "{k}");
    }

    #[test]
    fn holomorphic_sectional_curvature_is_4c_off_origin() {
        let model = AmbientModel::fubini_study(2, 0.5).unwrap();
        let y = AmbientPoint::new(vec![0.2, -0.3, 0.4, 0.1]);
        let x = [0.3, 1.0, -0.2, 0.5];
        let j = standard_j(2);
        let jx: Vec<f64> = (0..4).map(|a| (0..4).map(|b| j[[a, b]] * x[b]).sum()).collect();
        let k = sectional_curvature(&model, &y, &x, &jx).unwrap();
        assert!((k - 2.0).abs() < 1e-10, "{k}");
    }

    #[test]
    fn flat_curvature_residual_is_zero_and_far_points_are_rejected() {
        let flat = AmbientModel::flat(2).unwrap();
        assert_eq!(curvature_residual(&flat, &AmbientPoint::new(vec![9.0; 4])).unwrap(), 0.0);
        let fs = AmbientModel::fubini_study(2, 1.0).unwrap();
        let err = curvature_residual(&fs, &AmbientPoint::new(vec![2.0, 0.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::ChartConditioning { .. })));
        let err = metric_at(&fs, &AmbientPoint::new(vec![f64::NAN, 0.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn chart_transition_preserves_sectional_curvature() {
        // same projective point, same tangent plane, two charts
        let n = 2;
        let model = AmbientModel::fubini_study(n, 1.0).unwrap();
        let (re, im) = (vec![0.9, 0.6, -0.5], vec![0.1, 0.4, 0.3]);
        let to = |chart: usize, re: &[f64], im: &[f64]| homogeneous_to_affine(re, im, chart);
        let y0 = to(0, &re, &im);
        let y1 = to(1, &re, &im);
        // push a homogeneous tangent direction through each chart map with duals
        let dir_re = [0.2, -0.1, 0.7];
        let dir_im = [0.0, 0.3, -0.2];
        let dir2_re = [-0.4, 0.5, 0.1];
        let dir2_im = [0.6, 0.0, 0.2];
        let push = |chart: usize, dr: &[f64], di: &[f64]| -> Vec<f64> {
            let r: Vec<D1> = (0..=n).map(|k| D1::new(re[k], dr[k])).collect();
            let i: Vec<D1> = (0..=n).map(|k| D1::new(im[k], di[k])).collect();
            homogeneous_to_affine(&r, &i, chart).iter().map(|v| v.d).collect()
        };
        let k0 = sectional_curvature(
            &model,
            &AmbientPoint::new(y0.clone()),
            &push(0, &dir_re, &dir_im),
            &push(0, &dir2_re, &dir2_im),
        )
        .unwrap();
        let k1 = sectional_curvature(
            &model,
            &AmbientPoint::new(y1.clone()),
            &push(1, &dir_re, &dir_im),
            &push(1, &dir2_re, &dir2_im),
        )
        .unwrap();
        assert!((k0 - k1).abs() < 1e-8, "{k0} vs {k1}");
        assert_eq!(best_chart(&re, &im), 0);
    }
}
