//! Pointwise submanifold geometry: frames, the second fundamental form, the
//! mean curvature, the modified form `B`, and the Gauss/Ricci residuals.
//!
//! Frame components are written `h[[m, i, j]] = h^{m*}_{ij} = <h(e_i, e_j), J e_m>`.
//! Alongside the frame quantities every point also carries coordinate tensors
//! (Christoffel symbols of the induced metric and the cubic form
//! `C_{ijm} = <h(d_i, d_j), J d_m>`), which the grid calculus differentiates.

use ndarray::{Array1, Array2, Array3, Array4};

use crate::ambient::{
    christoffel_derivatives, christoffels_from_jet, metric_jet, riemann_from_metric, standard_j,
    AmbientModel, AmbientPoint,
};
use crate::error::{Error, Result};
use crate::jets::{evaluate_jet, Engine, ImmersionMap, Jet, ParamPoint};
use crate::linalg::{inv_spd, sym_eig};

/// Upper bound on the condition number of `dpsi` before a point is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Ambient metric data at the image point of a jet.
#[derive(Clone, Debug)]
pub struct AmbientLocal {
    pub c: f64,
    pub g: Array2<f64>,
    pub j: Array2<f64>,
    /// `None` on flat ambients.
    pub gamma: Option<Array3<f64>>,
    /// `d_d Γ^a_{bc}`, present when requested on curved ambients.
    pub dgamma: Option<Array4<f64>>,
}

impl AmbientLocal {
    pub fn at(model: &AmbientModel, jet: &Jet, second: bool) -> Result<Self> {
        let model = model.with_chart(jet.ambient_chart);
        let y = AmbientPoint::new(jet.value.clone());
        if jet.value.len() != model.real_dim() {
            return Err(Error::InvalidInput(format!(
                "jet has {} ambient coordinates, model expects {}",
                jet.value.len(),
                model.real_dim()
            )));
        }
        let mj = metric_jet(&model, &y, second && !model.is_flat())?;
        let j = standard_j(model.n);
        if model.is_flat() {
            return Ok(AmbientLocal { c: 0.0, g: mj.g, j, gamma: None, dgamma: None });
        }
        let gamma = christoffels_from_jet(&mj)?;
        let dgamma = match &mj.ddg {
            Some(ddg) => {
                let ginv = inv_spd(mj.g.view())
                    .ok_or_else(|| Error::Numerical("ambient metric not SPD".into()))?;
                Some(christoffel_derivatives(&ginv, &mj.dg, ddg, &gamma))
            }
            None => None,
        };
        Ok(AmbientLocal { c: model.c, g: mj.g, j, gamma: Some(gamma), dgamma })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn ip(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for a in 0..m {
            if x[a] == 0.0 {
                continue;
            }
            let mut r = 0.0;
            for b in 0..m {
                r += self.g[[a, b]] * y[b];
            }
            s += x[a] * r;
        }
        s
    }

    pub fn apply_j(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim() / 2;
        let mut out = vec![0.0; 2 * n];
        for a in 0..n {
            out[a] = -x[a + n];
            out[a + n] = x[a];
        }
        out
    }

    /// `Γ(x, y)^a = Γ^a_{bc} x^b y^c`, zero on flat ambients.
    fn gamma_xy(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m];
        if let Some(gam) = &self.gamma {
            for a in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    for c in 0..m {
                        s += gam[[a, b, c]] * x[b] * y[c];
                    }
                }
                out[a] = s;
            }
        }
        out
    }

    /// `<R(X, Y) Z, W>` for the space form of holomorphic curvature `4c`.
    pub fn space_form_curvature(&self, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let (jx, jy, jz) = (self.apply_j(x), self.apply_j(y), self.apply_j(z));
        self.c
            * (self.ip(y, z) * self.ip(x, w) - self.ip(x, z) * self.ip(y, w)
                + self.ip(&jy, z) * self.ip(&jx, w)
                - self.ip(&jx, z) * self.ip(&jy, w)
                + 2.0 * self.ip(x, &jy) * self.ip(&jz, w))
    }
}

#[derive(Clone, Debug)]
pub struct Frame {
    /// Column `i` is `e_i` in ambient coordinates.
    pub e: Array2<f64>,
    /// Column `i` is `J e_i`.
    pub estar: Array2<f64>,
    /// Induced metric in the coordinate basis.
    pub g: Array2<f64>,
    pub g_inv: Array2<f64>,
    /// `e_i = sum_p coord_to_frame[[p, i]] d_p psi` (upper triangular).
    pub coord_to_frame: Array2<f64>,
    /// Condition number of `dpsi`.
    pub condition: f64,
}

fn column(a: &Array2<f64>, i: usize) -> Vec<f64> {
    a.column(i).to_vec()
}

/// Gram-Schmidt of the coordinate tangents under the ambient metric, in index
/// order, without pivoting.
pub fn build_frame(model: &AmbientModel, jet: &Jet) -> Result<Frame> {
    let amb = AmbientLocal::at(model, jet, false)?;
    frame_with(&amb, jet)
}

// negated comparisons also reject NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub(crate) fn frame_with(amb: &AmbientLocal, jet: &Jet) -> Result<Frame> {
    let n = jet.n();
    let m = jet.ambient_dim();
    let tangents: Vec<Vec<f64>> = (0..n).map(|i| column(&jet.d1, i)).collect();
    let g = Array2::from_shape_fn((n, n), |(i, j)| amb.ip(&tangents[i], &tangents[j]));
    let (vals, _) = sym_eig(g.view());
    let condition = if vals[0] <= 0.0 { f64::INFINITY } else { (vals[n - 1] / vals[0]).sqrt() };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateImmersion { condition });
    }
    let g_inv = inv_spd(g.view()).ok_or(Error::DegenerateImmersion { condition })?;
    let mut e = Array2::zeros((m, n));
    let mut coef = Array2::zeros((n, n));
    for i in 0..n {
        let mut v = tangents[i].clone();
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        for k in 0..i {
            let ek = column(&e, k);
            let p = amb.ip(&v, &ek);
            for a in 0..m {
                v[a] -= p * ek[a];
            }
            for q in 0..n {
                c[q] -= p * coef[[q, k]];
            }
        }
        let norm = amb.ip(&v, &v).sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateImmersion { condition: f64::INFINITY });
        }
        for a in 0..m {
            e[[a, i]] = v[a] / norm;
        }
        for q in 0..n {
            coef[[q, i]] = c[q] / norm;
        }
    }
    let mut estar = Array2::zeros((m, n));
    for i in 0..n {
        let je = amb.apply_j(&column(&e, i));
        for a in 0..m {
            estar[[a, i]] = je[a];
        }
    }
    Ok(Frame { e, estar, g, g_inv, coord_to_frame: coef, condition })
}

/// `max_{i<j} |omega(e_i, e_j)|` in the orthonormal frame.
pub fn lagrangian_defect(model: &AmbientModel, jet: &Jet) -> Result<f64> {
    let amb = AmbientLocal::at(model, jet, false)?;
    let frame = frame_with(&amb, jet)?;
    Ok(lagrangian_defect_with(&amb, &frame))
}

fn lagrangian_defect_with(amb: &AmbientLocal, frame: &Frame) -> f64 {
    let n = frame.e.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            // omega(e_i, e_j) = g(e_i, J e_j)
            worst = worst.max(amb.ip(&column(&frame.e, i), &column(&frame.estar, j)).abs());
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct FundForms {
    /// `h[[m, i, j]] = h^{m*}_{ij}`
    pub h: Array3<f64>,
    /// Mean curvature vector in ambient coordinates, `(1/n) trace h`.
    pub mean_curvature: Vec<f64>,
    /// `H^{m*} = <H, e_{m*}>`
    pub mean_star: Vec<f64>,
    /// `|H|^2`
    pub mean_norm2: f64,
}

/// `V_{ij} = D_{d_i} d_j psi` in ambient coordinates, stored as `[[a, i, j]]`.
fn ambient_hessian(amb: &AmbientLocal, jet: &Jet) -> Array3<f64> {
    let n = jet.n();
    let mut v = jet.d2.clone();
    if amb.gamma.is_some() {
        for i in 0..n {
            for j in i..n {
                let corr = amb.gamma_xy(&column(&jet.d1, i), &column(&jet.d1, j));
                for (a, c) in corr.iter().enumerate() {
                    v[[a, i, j]] += c;
                    if i != j {
                        v[[a, j, i]] += c;
                    }
                }
            }
        }
    }
    v
}

fn fiber(t: &Array3<f64>, i: usize, j: usize) -> Vec<f64> {
    (0..t.shape()[0]).map(|a| t[[a, i, j]]).collect()
}

pub fn second_fundamental_form(model: &AmbientModel, jet: &Jet, frame: &Frame) -> Result<FundForms> {
    if jet.order < 2 {
        return Err(Error::InvalidInput("second fundamental form needs a jet of order >= 2".into()));
    }
    let amb = AmbientLocal::at(model, jet, false)?;
    Ok(fund_forms_with(&amb, jet, frame, &ambient_hessian(&amb, jet)))
}

fn fund_forms_with(amb: &AmbientLocal, jet: &Jet, frame: &Frame, v: &Array3<f64>) -> FundForms {
    let n = jet.n();
    let m = jet.ambient_dim();
    let f = &frame.coord_to_frame;
    // hc[[m, p, q]] = <V_pq, e_{m*}>
    let estar: Vec<Vec<f64>> = (0..n).map(|k| column(&frame.estar, k)).collect();
    let mut hc = Array3::zeros((n, n, n));
    for p in 0..n {
        for q in p..n {
            let vpq = fiber(v, p, q);
            for (mm, es) in estar.iter().enumerate() {
                let val = amb.ip(&vpq, es);
                hc[[mm, p, q]] = val;
                hc[[mm, q, p]] = val;
            }
        }
    }
    let h = Array3::from_shape_fn((n, n, n), |(mm, i, j)| {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += f[[p, i]] * f[[q, j]] * hc[[mm, p, q]];
            }
        }
        s
    });
    // H = (1/n) sum_i normal part of D_{e_i} e_i
    let e: Vec<Vec<f64>> = (0..n).map(|k| column(&frame.e, k)).collect();
    let mut mean = vec![0.0; m];
    for i in 0..n {
        let mut w = vec![0.0; m];
        for p in 0..n {
            for q in 0..n {
                let c = f[[p, i]] * f[[q, i]];
                if c != 0.0 {
                    for a in 0..m {
                        w[a] += c * v[[a, p, q]];
                    }
                }
            }
        }
        let proj: Vec<f64> = e.iter().map(|ek| amb.ip(&w, ek)).collect();
        for a in 0..m {
            let mut t = w[a];
            for (k, ek) in e.iter().enumerate() {
                t -= proj[k] * ek[a];
            }
            mean[a] += t / n as f64;
        }
    }
    let mean_star: Vec<f64> = estar.iter().map(|es| amb.ip(&mean, es)).collect();
    let mean_norm2 = amb.ip(&mean, &mean);
    FundForms { h, mean_curvature: mean, mean_star, mean_norm2 }
}

#[derive(Clone, Debug)]
pub struct BTensor {
    /// `b[[m, i, j]] = b^{m*}_{ij}`
    pub b: Array3<f64>,
    /// `c^{m*}_{ij} = n/(n+2) (H^{m*} δ_ij + H^{i*} δ_jm + H^{j*} δ_im)`
    pub c_part: Array3<f64>,
}

pub fn b_tensor(ff: &FundForms, n: usize) -> BTensor {
    let k = n as f64 / (n as f64 + 2.0);
    let hs = &ff.mean_star;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let c_part = Array3::from_shape_fn((n, n, n), |(m, i, j)| {
        k * (hs[m] * d(i, j) + hs[i] * d(j, m) + hs[j] * d(i, m))
    });
    let b = &ff.h - &c_part;
    BTensor { b, c_part }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct PointInvariants {
    pub h_norm2: f64,
    pub b_norm2: f64,
    pub mean_norm2: f64,
    /// `| ||B||^2 - (||h||^2 - 3n^2/(n+2) |H|^2) |`
    pub eq3_residual: f64,
    pub lagrangian_defect: f64,
    /// Largest deviation of `h^{m*}_{ij}` from full symmetry in `(m, i, j)`.
    pub h_symmetry_defect: f64,
    /// `max_m |sum_i b^{m*}_{ii}|`
    pub b_trace_defect: f64,
    pub b_symmetry_defect: f64,
    /// `| |H|^2 - sum_m (H^{m*})^2 |`
    pub mean_star_defect: f64,
    pub gauss_residual: Option<f64>,
}

fn full_symmetry_defect(t: &Array3<f64>) -> f64 {
    let n = t.shape()[0];
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let v = t[[m, i, j]];
                worst = worst.max((v - t[[m, j, i]]).abs()).max((v - t[[i, m, j]]).abs());
            }
        }
    }
    worst
}

/// Norms and defects at a point. The Lagrangian defect is not derivable from
/// `ff` and `b` alone and is left at zero here; [`analyze_point`] fills it.
pub fn point_invariants(ff: &FundForms, b: &BTensor) -> PointInvariants {
    let n = ff.h.shape()[0];
    let nf = n as f64;
    let h_norm2 = ff.h.iter().map(|x| x * x).sum::<f64>();
    let b_norm2 = b.b.iter().map(|x| x * x).sum::<f64>();
    let eq3 = b_norm2 - (h_norm2 - 3.0 * nf * nf / (nf + 2.0) * ff.mean_norm2);
    let b_trace_defect = (0..n)
        .map(|m| (0..n).map(|i| b.b[[m, i, i]]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let star2 = ff.mean_star.iter().map(|x| x * x).sum::<f64>();
    PointInvariants {
        h_norm2,
        b_norm2,
        mean_norm2: ff.mean_norm2,
        eq3_residual: eq3.abs(),
        lagrangian_defect: 0.0,
        h_symmetry_defect: full_symmetry_defect(&ff.h),
        b_trace_defect,
        b_symmetry_defect: full_symmetry_defect(&b.b),
        mean_star_defect: (ff.mean_norm2 - star2).abs(),
        gauss_residual: None,
    }
}

/// Coordinate-basis tensors consumed by the grid calculus.
#[derive(Clone, Debug)]
pub struct CoordTensors {
    /// `christoffel[[l, i, j]] = Γ^l_{ij}` of the induced metric.
    pub christoffel: Array3<f64>,
    /// `cubic[[i, j, m]] = <h(d_i, d_j), J d_m>`
    pub cubic: Array3<f64>,
    /// `B` as a coordinate cubic form.
    pub b_cubic: Array3<f64>,
    /// `mu_m = <H, J d_m>`; the one-form dual to `JH` is `-mu`.
    pub mu: Array1<f64>,
}

fn coord_tensors(amb: &AmbientLocal, jet: &Jet, frame: &Frame, v: &Array3<f64>) -> CoordTensors {
    let n = jet.n();
    let tangents: Vec<Vec<f64>> = (0..n).map(|i| column(&jet.d1, i)).collect();
    let normals: Vec<Vec<f64>> = tangents.iter().map(|t| amb.apply_j(t)).collect();
    let mut first = Array3::zeros((n, n, n));
    let mut cubic = Array3::zeros((n, n, n));
    for i in 0..n {
        for j in i..n {
            let vij = fiber(v, i, j);
            for p in 0..n {
                let a = amb.ip(&vij, &tangents[p]);
                let c = amb.ip(&vij, &normals[p]);
                first[[p, i, j]] = a;
                first[[p, j, i]] = a;
                cubic[[i, j, p]] = c;
                cubic[[j, i, p]] = c;
            }
        }
    }
    let gi = &frame.g_inv;
    let christoffel = Array3::from_shape_fn((n, n, n), |(l, i, j)| {
        (0..n).map(|p| gi[[l, p]] * first[[p, i, j]]).sum()
    });
    let nf = n as f64;
    let mu = Array1::from_shape_fn(n, |m| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gi[[i, j]] * cubic[[i, j, m]];
            }
        }
        s / nf
    });
    let k = nf / (nf + 2.0);
    let g = &frame.g;
    let b_cubic = Array3::from_shape_fn((n, n, n), |(i, j, m)| {
        cubic[[i, j, m]] - k * (mu[m] * g[[i, j]] + mu[i] * g[[j, m]] + mu[j] * g[[i, m]])
    });
    CoordTensors { christoffel, cubic, b_cubic, mu }
}

/// Everything known at one parameter point.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub frame: Frame,
    pub ff: FundForms,
    pub b: BTensor,
    pub invariants: PointInvariants,
    pub coords: CoordTensors,
    /// `nabla_k C_{ijm}` stored `[[i, j, m, k]]`, from third derivatives;
    /// present for order-3 jets.
    pub cubic_derivative: Option<Array4<f64>>,
}

pub fn analyze_point(model: &AmbientModel, jet: &Jet) -> Result<PointGeometry> {
    if jet.order < 2 {
        return Err(Error::InvalidInput("point analysis needs a jet of order >= 2".into()));
    }
    let third = jet.order == 3;
    let amb = AmbientLocal::at(model, jet, third)?;
    let frame = frame_with(&amb, jet)?;
    let v = ambient_hessian(&amb, jet);
    let ff = fund_forms_with(&amb, jet, &frame, &v);
    let b = b_tensor(&ff, jet.n());
    let mut invariants = point_invariants(&ff, &b);
    invariants.lagrangian_defect = lagrangian_defect_with(&amb, &frame);
    let coords = coord_tensors(&amb, jet, &frame, &v);
    let mut cubic_derivative = None;
    if third {
        let w = covariant_hessian_derivative(&amb, jet, &v);
        invariants.gauss_residual = Some(gauss_with(&amb, jet, &frame, &ff, &v, &w)?);
        cubic_derivative = Some(cubic_derivative_with(&amb, jet, &coords, &v, &w));
    }
    Ok(PointGeometry { frame, ff, b, invariants, coords, cubic_derivative })
}

/// `W[[a, i, j, k]] = (D_k V_ij)^a`, the ambient covariant derivative of the
/// Hessian field along the immersion.
fn covariant_hessian_derivative(amb: &AmbientLocal, jet: &Jet, v: &Array3<f64>) -> Array4<f64> {
    let n = jet.n();
    let m = jet.ambient_dim();
    let p = &jet.d1;
    let q = &jet.d2;
    let mut w = jet.d3.clone().expect("order-3 jet");
    if let (Some(gam), Some(dgam)) = (&amb.gamma, &amb.dgamma) {
        // dgam_k[[a, b, c, k]] = d_k (Γ^a_bc along psi)
        let mut dgam_k = Array4::<f64>::zeros((m, m, m, n));
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for k in 0..n {
                        dgam_k[[a, b, c, k]] = (0..m).map(|d| dgam[[a, b, c, d]] * p[[d, k]]).sum::<f64>();
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for a in 0..m {
                        let mut s = 0.0;
                        for b in 0..m {
                            for c in 0..m {
                                s += dgam_k[[a, b, c, k]] * p[[b, i]] * p[[c, j]]
                                    + gam[[a, b, c]]
                                        * (q[[b, i, k]] * p[[c, j]]
                                            + p[[b, i]] * q[[c, j, k]]
                                            + p[[b, k]] * v[[c, i, j]]);
                            }
                        }
                        w[[a, i, j, k]] += s;
                    }
                }
            }
        }
    }
    w
}

fn fiber4(t: &Array4<f64>, i: usize, j: usize, k: usize) -> Vec<f64> {
    (0..t.shape()[0]).map(|a| t[[a, i, j, k]]).collect()
}

fn cubic_derivative_with(
    amb: &AmbientLocal,
    jet: &Jet,
    ct: &CoordTensors,
    v: &Array3<f64>,
    w: &Array4<f64>,
) -> Array4<f64> {
    let n = jet.n();
    let normals: Vec<Vec<f64>> = (0..n).map(|i| amb.apply_j(&column(&jet.d1, i))).collect();
    let jv: Vec<Vec<Vec<f64>>> =
        (0..n).map(|k| (0..n).map(|m| amb.apply_j(&fiber(v, k, m))).collect()).collect();
    // d_k C_ijm = <D_k V_ij, J d_m> + <V_ij, J V_km>
    let mut d = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for j in 0..n {
            let vij = fiber(v, i, j);
            for k in 0..n {
                let wijk = fiber4(w, i, j, k);
                for m in 0..n {
                    d[[i, j, m, k]] = amb.ip(&wijk, &normals[m]) + amb.ip(&vij, &jv[k][m]);
                }
            }
        }
    }
    covariantize(&d, &ct.cubic, &ct.christoffel)
}

/// `nabla_k T_ijm = d_k T_ijm - Γ^l_{ki} T_ljm - Γ^l_{kj} T_ilm - Γ^l_{km} T_ijl`,
/// with `d[[i, j, m, k]] = d_k T_ijm`.
pub fn covariantize(d: &Array4<f64>, t: &Array3<f64>, gam: &Array3<f64>) -> Array4<f64> {
    let n = t.shape()[0];
    Array4::from_shape_fn((n, n, n, n), |(i, j, m, k)| {
        let mut s = d[[i, j, m, k]];
        for l in 0..n {
            s -= gam[[l, k, i]] * t[[l, j, m]]
                + gam[[l, k, j]] * t[[i, l, m]]
                + gam[[l, k, m]] * t[[i, j, l]];
        }
        s
    })
}

/// Express a covariant 3-tensor in the orthonormal frame.
pub fn to_frame3(t: &Array3<f64>, f: &Array2<f64>) -> Array3<f64> {
    let n = t.shape()[0];
    let mut a = Array3::<f64>::zeros((n, n, n));
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                a[[p, q, r]] = (0..n).map(|x| t[[x, q, r]] * f[[x, p]]).sum();
            }
        }
    }
    let mut b = Array3::<f64>::zeros((n, n, n));
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                b[[p, q, r]] = (0..n).map(|x| a[[p, x, r]] * f[[x, q]]).sum();
            }
        }
    }
    Array3::from_shape_fn((n, n, n), |(p, q, r)| (0..n).map(|x| b[[p, q, x]] * f[[x, r]]).sum())
}

/// Express a covariant 4-tensor in the orthonormal frame.
pub fn to_frame4(t: &Array4<f64>, f: &Array2<f64>) -> Array4<f64> {
    let n = t.shape()[0];
    let mut cur = t.clone();
    for axis in 0..4 {
        let mut next = Array4::<f64>::zeros((n, n, n, n));
        for idx in ndarray::indices((n, n, n, n)) {
            let (p, q, r, s) = idx;
            let mut acc = 0.0;
            for x in 0..n {
                let src = match axis {
                    0 => cur[[x, q, r, s]],
                    1 => cur[[p, x, r, s]],
                    2 => cur[[p, q, x, s]],
                    _ => cur[[p, q, r, x]],
                };
                let fi = [p, q, r, s][axis];
                acc += src * f[[x, fi]];
            }
            next[[p, q, r, s]] = acc;
        }
        cur = next;
    }
    cur
}

pub fn to_frame2(t: &Array2<f64>, f: &Array2<f64>) -> Array2<f64> {
    f.t().dot(t).dot(f)
}

fn gauss_with(
    amb: &AmbientLocal,
    jet: &Jet,
    frame: &Frame,
    ff: &FundForms,
    v: &Array3<f64>,
    w: &Array4<f64>,
) -> Result<f64> {
    let n = jet.n();
    let tangents: Vec<Vec<f64>> = (0..n).map(|i| column(&jet.d1, i)).collect();
    let vf: Vec<Vec<Vec<f64>>> = (0..n).map(|k| (0..n).map(|i| fiber(v, k, i)).collect()).collect();
    // <D_k V_il, d_j> and <V_ki, d_j>
    let wt = Array4::from_shape_fn((n, n, n, n), |(k, i, l, j)| amb.ip(&fiber4(w, k, i, l), &tangents[j]));
    let vt = Array3::from_shape_fn((n, n, n), |(k, i, j)| amb.ip(&vf[k][i], &tangents[j]));
    let vv = Array4::from_shape_fn((n, n, n, n), |(k, i, l, j)| amb.ip(&vf[k][i], &vf[l][j]));
    let g = frame.g.clone();
    let mut dg = Array3::zeros((n, n, n));
    let mut ddg = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                dg[[i, j, k]] = vt[[k, i, j]] + vt[[k, j, i]];
                for l in 0..n {
                    ddg[[i, j, k, l]] =
                        wt[[k, i, l, j]] + vv[[k, i, l, j]] + vv[[l, i, k, j]] + wt[[k, j, l, i]];
                }
            }
        }
    }
    let r_up = riemann_from_metric(&g, &dg, &ddg)?;
    let r_low = Array4::from_shape_fn((n, n, n, n), |(a, b, c, d)| {
        (0..n).map(|e| g[[a, e]] * r_up[[e, b, c, d]]).sum()
    });
    let rf = to_frame4(&r_low, &frame.coord_to_frame);

    // Basis u = (e_0..e_{n-1}, Je_0..Je_{n-1}); J u_a = sign * u_{partner}.
    let basis: Vec<Vec<f64>> =
        (0..n).map(|k| column(&frame.e, k)).chain((0..n).map(|k| column(&frame.estar, k))).collect();
    let gram = Array2::from_shape_fn((2 * n, 2 * n), |(a, b)| amb.ip(&basis[a], &basis[b]));
    let jb = |a: usize| if a < n { (1.0, a + n) } else { (-1.0, a - n) };
    let gj = |a: usize, b: usize| {
        let (s, ja) = jb(a);
        s * gram[[ja, b]]
    };
    let space_form = |x: usize, y: usize, z: usize, w: usize| {
        amb.c
            * (gram[[y, z]] * gram[[x, w]] - gram[[x, z]] * gram[[y, w]] + gj(y, z) * gj(x, w)
                - gj(x, z) * gj(y, w)
                + 2.0 * gj(y, x) * gj(z, w))
    };
    let h = &ff.h;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut hh = 0.0;
                    let mut hh_normal = 0.0;
                    for m in 0..n {
                        hh += h[[m, j, l]] * h[[m, i, k]] - h[[m, i, l]] * h[[m, j, k]];
                        hh_normal += h[[j, l, m]] * h[[i, m, k]] - h[[i, m, l]] * h[[j, m, k]];
                    }
                    let k_tan = space_form(k, l, j, i);
                    let k_nor = space_form(k, l, j + n, i + n);
                    // On a Lagrangian submanifold the normal curvature is
                    // R^perp(X, Y) JZ = J R(X, Y) Z.
                    let lhs = rf[[i, j, k, l]];
                    worst = worst.max((lhs - k_tan - hh).abs()).max((lhs - k_nor - hh_normal).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Larger of the Gauss-equation and normal-curvature residuals at `u`.
pub fn gauss_residual(model: &AmbientModel, map: &ImmersionMap, u: &ParamPoint) -> Result<f64> {
    let jet = evaluate_jet(map, u, 3, Engine::Exact)?;
    let pg = analyze_point(model, &jet)?;
    Ok(pg.invariants.gauss_residual.expect("order-3 analysis"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Chart, DomainBox, SmoothMap};
    use crate::dual::Scalar;

    struct Torus(Vec<f64>);
    impl SmoothMap for Torus {
        fn eval<S: Scalar>(&self, u: &[S], _: usize) -> Vec<S> {
            let n = self.0.len();
            let mut out = vec![S::zero(); 2 * n];
            for k in 0..n {
                out[k] = u[k].cos() * self.0[k];
                out[k + n] = u[k].sin() * self.0[k];
            }
            out
        }
    }

    fn torus(radii: &[f64]) -> ImmersionMap {
        ImmersionMap::single_chart(
            "torus",
            "test",
            AmbientModel::flat(radii.len()).unwrap(),
            Chart::new(DomainBox::torus(radii.len()), Torus(radii.to_vec())),
        )
    }

    #[test]
    fn torus_frame_at_origin() {
        let map = torus(&[1.0, 1.0]);
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.0, 0.0]), 2, Engine::Exact).unwrap();
        let fr = build_frame(&map.target, &jet).unwrap();
        assert_eq!(fr.e.column(0).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(fr.e.column(1).to_vec(), vec![0.0, 0.0, 0.0, 1.0]);
        // J e_1 = -d/dRe z_1
        assert_eq!(fr.estar.column(0).to_vec(), vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn torus_second_fundamental_form_closed_form() {
        let radii = [0.7, 1.3, 2.0];
        let map = torus(&radii);
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.4, 2.0, -1.0]), 3, Engine::Exact)
            .unwrap();
        let pg = analyze_point(&map.target, &jet).unwrap();
        for m in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let want = if m == i && i == j { 1.0 / radii[i] } else { 0.0 };
                    assert!((pg.ff.h[[m, i, j]] - want).abs() < 1e-12);
                }
            }
        }
        let h2: f64 = radii.iter().map(|r| 1.0 / (r * r)).sum();
        assert!((pg.invariants.h_norm2 - h2).abs() < 1e-12);
        assert!((pg.invariants.mean_norm2 - h2 / 9.0).abs() < 1e-12);
        assert!(pg.invariants.gauss_residual.unwrap() < 1e-10);
        assert!(pg.invariants.eq3_residual < 1e-12);
        assert!(pg.invariants.mean_star_defect < 1e-12);
        assert!(pg.invariants.lagrangian_defect < 1e-15);
    }

    #[test]
    fn degenerate_tangent_rejected() {
        struct Fold;
        impl SmoothMap for Fold {
            fn eval<S: Scalar>(&self, u: &[S], _: usize) -> Vec<S> {
                vec![u[0], u[0], u[0] * 0.0, u[0] * 2.0]
            }
        }
        let map = ImmersionMap::single_chart(
            "fold",
            "test",
            AmbientModel::flat(2).unwrap(),
            Chart::new(DomainBox::cube(2, 1.0), Fold),
        );
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.1, 0.2]), 2, Engine::Exact).unwrap();
        assert!(matches!(build_frame(&map.target, &jet), Err(Error::DegenerateImmersion { .. })));
    }

    #[test]
    fn frame_transforms_are_consistent() {
        let f = ndarray::array![[1.0, 0.5], [0.0, 2.0]];
        let t = Array3::from_shape_fn((2, 2, 2), |(i, j, k)| (i + 2 * j + 4 * k) as f64);
        let a = to_frame3(&t, &f);
        // direct oracle
        for p in 0..2 {
            for q in 0..2 {
                for r in 0..2 {
                    let mut s = 0.0;
                    for x in 0..2 {
                        for y in 0..2 {
                            for z in 0..2 {
                                s += t[[x, y, z]] * f[[x, p]] * f[[y, q]] * f[[z, r]];
                            }
                        }
                    }
                    assert!((a[[p, q, r]] - s).abs() < 1e-12);
                }
            }
        }
    }
}
