//! Explicit immersions: Whitney spheres in `C^n` and `CP^n`, flat tori, the
//! flat plane, and seeded perturbations of these.
//!
//! Ambient coordinates are ordered `(Re z_1..Re z_n, Im z_1..Im z_n)`.
//! Spheres are covered by two stereographic charts on the cube
//! `[-SPHERE_HALF_WIDTH, SPHERE_HALF_WIDTH]^n` glued by a smooth partition of
//! unity that is supported in `|u| < PARTITION_OUTER`.

use std::f64::consts::TAU;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{best_chart, homogeneous_to_affine, AmbientModel};
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::jets::{Chart, DomainBox, ImmersionMap, ParamPoint, SmoothMap};

pub const SPHERE_HALF_WIDTH: f64 = 1.8;
pub const PARTITION_INNER: f64 = 0.8;
pub const PARTITION_OUTER: f64 = 1.25;
pub const PLANE_HALF_WIDTH: f64 = 1.0;

fn default_c() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExampleSpec {
    WhitneyCn {
        n: usize,
        r: f64,
        /// `2n` real coordinates; defaults to the origin.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    WhitneyCpn {
        n: usize,
        theta: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
    FlatTorus {
        radii: Vec<f64>,
    },
    FlatPlane {
        n: usize,
    },
    Perturbed {
        base: Box<ExampleSpec>,
        amplitude: f64,
        seed: u64,
        /// Keep the immersion Lagrangian (flat ambients only). When false the
        /// perturbation is a generic displacement and the result is a
        /// non-Lagrangian control.
        #[serde(default = "default_true")]
        lagrangian: bool,
    },
}

impl ExampleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExampleSpec::WhitneyCn { .. } => "whitney-cn",
            ExampleSpec::WhitneyCpn { .. } => "whitney-cpn",
            ExampleSpec::FlatTorus { .. } => "flat-torus",
            ExampleSpec::FlatPlane { .. } => "flat-plane",
            ExampleSpec::Perturbed { .. } => "perturbed",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ExampleSpec::WhitneyCn { n, .. }
            | ExampleSpec::WhitneyCpn { n, .. }
            | ExampleSpec::FlatPlane { n } => *n,
            ExampleSpec::FlatTorus { radii } => radii.len(),
            ExampleSpec::Perturbed { base, .. } => base.n(),
        }
    }

    pub fn curvature(&self) -> f64 {
        match self {
            ExampleSpec::WhitneyCpn { c, .. } => *c,
            ExampleSpec::Perturbed { base, .. } => base.curvature(),
            _ => 0.0,
        }
    }

    /// Compact manifold without boundary, so integrals of divergences vanish.
    pub fn is_closed(&self) -> bool {
        match self {
            ExampleSpec::FlatPlane { .. } => false,
            ExampleSpec::Perturbed { base, .. } => base.is_closed(),
            _ => true,
        }
    }

    /// Members whose Maslov form is conformal by construction.
    pub fn conformal_maslov(&self) -> bool {
        !matches!(self, ExampleSpec::Perturbed { .. })
    }

    /// Whether the immersion is Lagrangian by construction.
    pub fn lagrangian(&self) -> bool {
        match self {
            ExampleSpec::Perturbed { base, lagrangian, .. } => *lagrangian && base.lagrangian(),
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        match self {
            ExampleSpec::WhitneyCn { n, r, center } => {
                check_n(*n)?;
                if !(*r > 0.0 && r.is_finite()) {
                    return bad("r", format!("radius must be a finite positive number, got {r}"));
                }
                if let Some(a) = center {
                    if a.len() != 2 * n {
                        return bad("center", format!("expected {} coordinates, got {}", 2 * n, a.len()));
                    }
                    if a.iter().any(|x| !x.is_finite()) {
                        return bad("center", "entries must be finite".into());
                    }
                }
            }
            ExampleSpec::WhitneyCpn { n, theta, c } => {
                check_n(*n)?;
                if !(*theta > 0.0 && theta.is_finite()) {
                    return bad("theta", format!("must be a finite positive number, got {theta}"));
                }
                if *c < 0.0 {
                    return Err(Error::UnsupportedAmbient(format!(
                        "c = {c}: complex hyperbolic targets are not modelled"
                    )));
                }
                if !(*c > 0.0 && c.is_finite()) {
                    return bad("c", format!("must be a finite positive number, got {c}"));
                }
            }
            ExampleSpec::FlatTorus { radii } => {
                check_n(radii.len()).map_err(|_| {
                    Error::Config(format!("radii: need at least 2 radii, got {}", radii.len()))
                })?;
                if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
                    return bad("radii", format!("every radius must be finite and positive, got {r}"));
                }
            }
            ExampleSpec::FlatPlane { n } => check_n(*n)?,
            ExampleSpec::Perturbed { base, amplitude, lagrangian, .. } => {
                base.validate()?;
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return bad("amplitude", format!("must be finite and non-negative, got {amplitude}"));
                }
                if *lagrangian && base.curvature() > 0.0 {
                    return bad(
                        "lagrangian",
                        "Lagrangian-preserving perturbations need a flat ambient; set lagrangian = false"
                            .into(),
                    );
                }
            }
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("n: complex dimension must be >= 2, got {n}")));
    }
    Ok(())
}

/// Closed-form targets where they are known.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ExpectedInvariants {
    pub h_norm2: Option<f64>,
    pub mean_norm2: Option<f64>,
    pub b_norm2: Option<f64>,
    /// `||h||^2 = 3n^2/(n+2) |H|^2` at every point.
    pub whitney_profile: bool,
}

pub fn expected_invariants(spec: &ExampleSpec) -> Option<ExpectedInvariants> {
    match spec {
        ExampleSpec::WhitneyCn { .. } | ExampleSpec::WhitneyCpn { .. } => Some(ExpectedInvariants {
            b_norm2: Some(0.0),
            whitney_profile: true,
            ..Default::default()
        }),
        ExampleSpec::FlatTorus { radii } => {
            let n = radii.len() as f64;
            let h2: f64 = radii.iter().map(|r| 1.0 / (r * r)).sum();
            let mean2 = h2 / (n * n);
            Some(ExpectedInvariants {
                h_norm2: Some(h2),
                mean_norm2: Some(mean2),
                b_norm2: Some(n * n * (n - 1.0) * mean2 / (n + 2.0)),
                whitney_profile: false,
            })
        }
        ExampleSpec::FlatPlane { .. } => Some(ExpectedInvariants {
            h_norm2: Some(0.0),
            mean_norm2: Some(0.0),
            b_norm2: Some(0.0),
            whitney_profile: false,
        }),
        ExampleSpec::Perturbed { .. } => None,
    }
}

/// Extra transforms applied when building a map, used by gauge tests.
#[derive(Clone, Debug, Default)]
pub struct MapOptions {
    /// Evaluate each chart at `R u` instead of `u`.
    pub param_rotation: Option<Array2<f64>>,
    /// Post-compose with `y -> U y + t` (flat ambients; `U` must commute with `J`).
    pub ambient_isometry: Option<(Array2<f64>, Vec<f64>)>,
    /// Pin every evaluation to one affine chart of `CP^n`.
    pub fixed_ambient_chart: Option<usize>,
}

pub fn make_immersion(spec: &ExampleSpec) -> Result<ImmersionMap> {
    make_immersion_with(spec, &MapOptions::default())
}

pub fn make_immersion_with(spec: &ExampleSpec, opts: &MapOptions) -> Result<ImmersionMap> {
    spec.validate()?;
    let n = spec.n();
    let c = spec.curvature();
    let target = if c > 0.0 { AmbientModel::fubini_study(n, c)? } else { AmbientModel::flat(n)? };
    if let Some(r) = &opts.param_rotation {
        if r.dim() != (n, n) {
            return Err(Error::InvalidInput("parameter rotation has the wrong size".into()));
        }
    }
    if let Some((u, t)) = &opts.ambient_isometry {
        if c > 0.0 {
            return Err(Error::InvalidInput("ambient isometries are only supported on C^n".into()));
        }
        if u.dim() != (2 * n, 2 * n) || t.len() != 2 * n {
            return Err(Error::InvalidInput("ambient isometry has the wrong size".into()));
        }
    }
    if let Some(k) = opts.fixed_ambient_chart {
        if c == 0.0 || k > n {
            return Err(Error::InvalidInput(format!("no affine chart {k} for this target")));
        }
    }

    let mut perturbations = Vec::new();
    let base = unwrap_perturbations(spec, &mut perturbations);
    perturbations.reverse();
    let shape = ChartShape::of(base);
    let template = GalleryChart {
        base: Base::from_spec(base),
        sphere_sign: 1.0,
        perturbations,
        rotation: opts.param_rotation.clone(),
        isometry: opts.ambient_isometry.clone(),
        fixed_chart: opts.fixed_ambient_chart,
    };
    let charts = match shape {
        ChartShape::Sphere => [1.0, -1.0]
            .iter()
            .map(|&s| {
                let chart = GalleryChart { sphere_sign: s, ..template.clone() };
                Chart::new(DomainBox::cube(n, SPHERE_HALF_WIDTH), chart)
                    .with_partition(Arc::new(|u: &[f64]| sphere_partition(u)))
            })
            .collect(),
        ChartShape::Torus => vec![Chart::new(DomainBox::torus(n), template)],
        ChartShape::Plane => vec![Chart::new(DomainBox::cube(n, PLANE_HALF_WIDTH), template)],
    };
    Ok(ImmersionMap { name: spec.name().to_string(), label: label(spec), n, target, charts })
}

fn label(spec: &ExampleSpec) -> String {
    let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
    match spec {
        ExampleSpec::WhitneyCn { n, r, center } => match center {
            Some(a) => format!("whitney-cn n={n} r={r} center=[{}]", list(a)),
            None => format!("whitney-cn n={n} r={r}"),
        },
        ExampleSpec::WhitneyCpn { n, theta, c } => format!("whitney-cpn n={n} theta={theta} c={c}"),
        ExampleSpec::FlatTorus { radii } => format!("flat-torus radii=[{}]", list(radii)),
        ExampleSpec::FlatPlane { n } => format!("flat-plane n={n}"),
        ExampleSpec::Perturbed { base, amplitude, seed, lagrangian } => format!(
            "perturbed({}) amplitude={amplitude} seed={seed}{}",
            label(base),
            if *lagrangian { "" } else { " non-lagrangian control" }
        ),
    }
}

fn unwrap_perturbations<'a>(spec: &'a ExampleSpec, out: &mut Vec<Perturbation>) -> &'a ExampleSpec {
    match spec {
        ExampleSpec::Perturbed { base, amplitude, seed, lagrangian } => {
            let homogeneous = base.curvature() > 0.0;
            let dim = if homogeneous { base.n() + 1 } else { base.n() };
            out.push(Perturbation::new(dim, *amplitude, *seed, *lagrangian));
            unwrap_perturbations(base, out)
        }
        other => other,
    }
}

enum ChartShape {
    Sphere,
    Torus,
    Plane,
}

impl ChartShape {
    fn of(spec: &ExampleSpec) -> Self {
        match spec {
            ExampleSpec::WhitneyCn { .. } | ExampleSpec::WhitneyCpn { .. } => ChartShape::Sphere,
            ExampleSpec::FlatTorus { .. } => ChartShape::Torus,
            _ => ChartShape::Plane,
        }
    }
}

/// `e^{-1/t}` for `t > 0`, else 0.
fn flat_bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `x <= -1`, 1 for `x >= 1`, and `s(x) + s(-x) = 1`.
fn smooth_step(x: f64) -> f64 {
    let a = flat_bump(1.0 + x);
    let b = flat_bump(1.0 - x);
    a / (a + b)
}

/// Weight of a stereographic chart at `u`. The other chart sees the same point
/// at `u / |u|^2`, where this formula returns the complementary weight.
pub fn sphere_partition(u: &[f64]) -> f64 {
    let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r <= PARTITION_INNER {
        return 1.0;
    }
    if r >= PARTITION_OUTER {
        return 0.0;
    }
    smooth_step(-r.ln() / PARTITION_OUTER.ln())
}

/// The parameter point of the other sphere chart covering the same point.
pub fn sphere_transition(p: &ParamPoint) -> ParamPoint {
    let s2: f64 = p.u.iter().map(|x| x * x).sum();
    ParamPoint::new(1 - p.chart, p.u.iter().map(|x| x / s2).collect())
}

/// Point of `S^n` in `R^{n+1}` seen from the chart with pole sign `s`; the
/// distinguished axis is returned last.
fn stereographic<S: Scalar>(u: &[S], sign: f64) -> (Vec<S>, S) {
    let mut s2 = S::zero();
    for &x in u {
        s2 += x * x;
    }
    let inv = (s2 + 1.0).recip();
    let axis = (-s2 + 1.0) * inv * sign;
    (u.iter().map(|&x| x * inv * 2.0).collect(), axis)
}

#[derive(Clone, Debug)]
enum Base {
    WhitneyCn { r: f64, center: Vec<f64> },
    /// Homogeneous coordinates in `C^{n+1}`.
    WhitneyCpn { ch: f64, sh: f64 },
    Torus { radii: Vec<f64> },
    Plane,
}

impl Base {
    fn from_spec(spec: &ExampleSpec) -> Self {
        match spec {
            ExampleSpec::WhitneyCn { n, r, center } => Base::WhitneyCn {
                r: *r,
                center: center.clone().unwrap_or_else(|| vec![0.0; 2 * n]),
            },
            ExampleSpec::WhitneyCpn { theta, .. } => {
                Base::WhitneyCpn { ch: theta.cosh(), sh: theta.sinh() }
            }
            ExampleSpec::FlatTorus { radii } => Base::Torus { radii: radii.clone() },
            ExampleSpec::FlatPlane { .. } => Base::Plane,
            ExampleSpec::Perturbed { .. } => unreachable!("perturbations are unwrapped first"),
        }
    }

    fn is_homogeneous(&self) -> bool {
        matches!(self, Base::WhitneyCpn { .. })
    }

    fn eval<S: Scalar>(&self, u: &[S], sign: f64) -> Vec<S> {
        let n = u.len();
        match self {
            Base::WhitneyCn { r, center } => {
                let (x, x0) = stereographic(u, sign);
                let f = (x0 * x0 + 1.0).recip() * *r;
                let mut out = vec![S::zero(); 2 * n];
                for k in 0..n {
                    out[k] = f * x[k] + center[k];
                    out[k + n] = f * x0 * x[k] + center[k + n];
                }
                out
            }
            Base::WhitneyCpn { ch, sh } => {
                // Common denominators of the homogeneous display are dropped.
                let (x, t) = stereographic(u, sign);
                let mut out = vec![S::zero(); 2 * (n + 1)];
                for k in 0..n {
                    out[k] = x[k] * *ch;
                    out[k + n + 1] = -(x[k] * t * *sh);
                }
                out[n] = (t * t + 1.0) * (sh * ch);
                out[2 * n + 1] = t;
                out
            }
            Base::Torus { radii } => {
                let mut out = vec![S::zero(); 2 * n];
                for k in 0..n {
                    out[k] = u[k].cos() * radii[k];
                    out[k + n] = u[k].sin() * radii[k];
                }
                out
            }
            Base::Plane => {
                let mut out = vec![S::zero(); 2 * n];
                out[..n].copy_from_slice(u);
                out
            }
        }
    }
}

/// One trigonometric term `a sin(<w, x> + phase)`.
#[derive(Clone, Debug)]
struct Wave {
    amp: f64,
    freq: Vec<f64>,
    phase: f64,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let mut freq: Vec<f64> = (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect();
        if freq.iter().all(|&w| w == 0.0) {
            freq[rng.random_range(0..dim)] = 1.0;
        }
        Wave { amp: rng.random_range(-1.0..1.0), freq, phase: rng.random_range(0.0..TAU) }
    }

    fn arg<S: Scalar>(&self, x: &[S]) -> S {
        let mut s = S::cst(self.phase);
        for (xi, w) in x.iter().zip(&self.freq) {
            if *w != 0.0 {
                s += *xi * *w;
            }
        }
        s
    }
}

const WAVES: usize = 3;

/// Ambient map applied after the base immersion.
#[derive(Clone, Debug)]
enum Perturbation {
    /// `(x, y) -> (x, y + grad F(x))` followed by `(x, y) -> (x + grad G(y), y)`.
    Symplectic { scale: f64, f: Vec<Wave>, g: Vec<Wave> },
    /// `v -> v + scale * V(v)` with one wave sum per real component.
    Displacement { scale: f64, fields: Vec<Vec<Wave>> },
}

impl Perturbation {
    /// `dim` is the complex dimension of the space the perturbation acts on.
    fn new(dim: usize, amplitude: f64, seed: u64, lagrangian: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if lagrangian {
            let f = (0..WAVES).map(|_| Wave::random(&mut rng, dim)).collect();
            let g = (0..WAVES).map(|_| Wave::random(&mut rng, dim)).collect();
            Perturbation::Symplectic { scale: amplitude, f, g }
        } else {
            let fields = (0..2 * dim)
                .map(|_| (0..WAVES).map(|_| Wave::random(&mut rng, 2 * dim)).collect())
                .collect();
            Perturbation::Displacement { scale: amplitude, fields }
        }
    }

    fn apply<S: Scalar>(&self, v: &mut [S]) {
        let dim = v.len() / 2;
        match self {
            Perturbation::Symplectic { scale, f, g } => {
                let grad = |waves: &[Wave], at: &[S]| {
                    let mut out = vec![S::zero(); dim];
                    for w in waves {
                        let c = w.arg(at).cos() * (w.amp * scale);
                        for k in 0..dim {
                            if w.freq[k] != 0.0 {
                                out[k] += c * w.freq[k];
                            }
                        }
                    }
                    out
                };
                let df = grad(f, &v[..dim]);
                for k in 0..dim {
                    v[dim + k] += df[k];
                }
                let dg = grad(g, &v[dim..]);
                for k in 0..dim {
                    v[k] += dg[k];
                }
            }
            Perturbation::Displacement { scale, fields } => {
                let base = v.to_vec();
                for (a, waves) in fields.iter().enumerate() {
                    for w in waves {
                        v[a] += w.arg(&base).sin() * (w.amp * scale);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
struct GalleryChart {
    base: Base,
    sphere_sign: f64,
    perturbations: Vec<Perturbation>,
    rotation: Option<Array2<f64>>,
    isometry: Option<(Array2<f64>, Vec<f64>)>,
    fixed_chart: Option<usize>,
}

impl GalleryChart {
    fn raw<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let rotated;
        let u = match &self.rotation {
            Some(r) => {
                let n = u.len();
                rotated = (0..n)
                    .map(|i| {
                        let mut s = S::zero();
                        for j in 0..n {
                            s += u[j] * r[[i, j]];
                        }
                        s
                    })
                    .collect::<Vec<_>>();
                &rotated[..]
            }
            None => u,
        };
        let mut v = self.base.eval(u, self.sphere_sign);
        for p in &self.perturbations {
            p.apply(&mut v);
        }
        v
    }
}

impl SmoothMap for GalleryChart {
    fn ambient_chart(&self, u: &[f64]) -> usize {
        if !self.base.is_homogeneous() {
            return 0;
        }
        if let Some(k) = self.fixed_chart {
            return k;
        }
        let z = self.raw(u);
        let m = z.len() / 2;
        best_chart(&z[..m], &z[m..])
    }

    fn eval<S: Scalar>(&self, u: &[S], ambient_chart: usize) -> Vec<S> {
        let v = self.raw(u);
        if self.base.is_homogeneous() {
            let m = v.len() / 2;
            return homogeneous_to_affine(&v[..m], &v[m..], ambient_chart);
        }
        match &self.isometry {
            Some((q, t)) => {
                let m = v.len();
                (0..m)
                    .map(|a| {
                        let mut s = S::cst(t[a]);
                        for b in 0..m {
                            s += v[b] * q[[a, b]];
                        }
                        s
                    })
                    .collect()
            }
            None => v,
        }
    }
}

/// A random element of `U(n)` written as a real `2n x 2n` matrix in block
/// coordinates.
pub fn random_unitary(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // complex Gram-Schmidt on random columns
    let mut cols: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for w in &cols {
            // <w, v> = sum conj(w) v
            let (mut pr, mut pi) = (0.0, 0.0);
            for k in 0..n {
                pr += w[k].0 * v[k].0 + w[k].1 * v[k].1;
                pi += w[k].0 * v[k].1 - w[k].1 * v[k].0;
            }
            for k in 0..n {
                v[k].0 -= pr * w[k].0 - pi * w[k].1;
                v[k].1 -= pr * w[k].1 + pi * w[k].0;
            }
        }
        let norm = v.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|(a, b)| (a / norm, b / norm)).collect());
    }
    let mut q = Array2::zeros((2 * n, 2 * n));
    for (j, col) in cols.iter().enumerate() {
        for (i, &(re, im)) in col.iter().enumerate() {
            q[[i, j]] = re;
            q[[i + n, j + n]] = re;
            q[[i, j + n]] = -im;
            q[[i + n, j]] = im;
        }
    }
    q
}

/// A random rotation of `R^n`.
pub fn random_rotation(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    let qr = crate::linalg::to_na(a.view()).qr();
    let mut q = crate::linalg::from_na(&qr.q());
    if crate::linalg::to_na(q.view()).determinant() < 0.0 {
        q.column_mut(0).mapv_inplace(|x| -x);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::analyze_point;
    use crate::jets::{evaluate_jet, Engine};

    fn whitney(n: usize, r: f64) -> ExampleSpec {
        ExampleSpec::WhitneyCn { n, r, center: None }
    }

    #[test]
    fn whitney_double_point() {
        let map = make_immersion(&whitney(2, 1.0)).unwrap();
        let (_, a) = map.eval(&ParamPoint::new(0, vec![0.0, 0.0])).unwrap();
        let (_, b) = map.eval(&ParamPoint::new(1, vec![0.0, 0.0])).unwrap();
        assert_eq!(a, vec![0.0; 4]);
        assert_eq!(b, vec![0.0; 4]);
    }

    #[test]
    fn whitney_matches_sphere_formula() {
        // |u| = 1 lands on the equator x0 = 0, x_rest = u
        let map = make_immersion(&ExampleSpec::WhitneyCn {
            n: 2,
            r: 2.0,
            center: Some(vec![0.1, 0.2, 0.3, 0.4]),
        })
        .unwrap();
        let (_, y) = map.eval(&ParamPoint::new(0, vec![0.6, 0.8])).unwrap();
        let want = [2.0 * 0.6 + 0.1, 2.0 * 0.8 + 0.2, 0.3, 0.4];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{y:?}");
        }
    }

    #[test]
    fn cpn_value_at_distinguished_pole() {
        // x = (0, 0, 1) is the centre of chart 0
        let theta: f64 = 0.5;
        let map = make_immersion(&ExampleSpec::WhitneyCpn { n: 2, theta, c: 1.0 }).unwrap();
        let (chart, y) = map.eval(&ParamPoint::new(0, vec![0.0, 0.0])).unwrap();
        assert_eq!(chart, 2);
        assert!(y.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn torus_and_plane_values() {
        let map = make_immersion(&ExampleSpec::FlatTorus { radii: vec![1.0, 1.0] }).unwrap();
        assert_eq!(map.eval(&ParamPoint::new(0, vec![0.0, 0.0])).unwrap().1, vec![1.0, 1.0, 0.0, 0.0]);
        let plane = make_immersion(&ExampleSpec::FlatPlane { n: 2 }).unwrap();
        assert_eq!(plane.eval(&ParamPoint::new(0, vec![0.5, -0.25])).unwrap().1, vec![
            0.5, -0.25, 0.0, 0.0
        ]);
    }

    #[test]
    fn partition_sums_to_one_across_charts() {
        for u in [[0.3, 0.1], [0.9, 0.2], [0.7, -0.7], [1.1, 0.05], [0.0, 1.2]] {
            let p = ParamPoint::new(0, u.to_vec());
            let q = sphere_transition(&p);
            let s = sphere_partition(&p.u) + sphere_partition(&q.u);
            assert!((s - 1.0).abs() < 1e-14, "{u:?}");
        }
    }

    #[test]
    fn chart_overlap_gives_same_point() {
        let map = make_immersion(&whitney(3, 1.5)).unwrap();
        let p = ParamPoint::new(0, vec![0.5, -0.7, 0.3]);
        let q = sphere_transition(&p);
        let a = map.eval(&p).unwrap().1;
        let b = map.eval(&q).unwrap().1;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn validation_names_fields() {
        let err = ExampleSpec::FlatTorus { radii: vec![1.0, -1.0] }.validate().unwrap_err();
        assert!(err.to_string().contains("radii"));
        assert!(whitney(2, 0.0).validate().unwrap_err().to_string().contains("r:"));
        let p = ExampleSpec::Perturbed {
            base: Box::new(ExampleSpec::WhitneyCpn { n: 2, theta: 0.5, c: 1.0 }),
            amplitude: 0.05,
            seed: 1,
            lagrangian: true,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn symplectic_perturbation_stays_lagrangian() {
        let spec = ExampleSpec::Perturbed {
            base: Box::new(whitney(2, 1.0)),
            amplitude: 0.05,
            seed: 7,
            lagrangian: true,
        };
        let map = make_immersion(&spec).unwrap();
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.3, -0.2]), 2, Engine::Exact).unwrap();
        let pg = analyze_point(&map.target, &jet).unwrap();
        assert!(pg.invariants.lagrangian_defect < 1e-12);
        assert!(pg.invariants.b_norm2 > 1e-6);

        let control = ExampleSpec::Perturbed {
            base: Box::new(whitney(2, 1.0)),
            amplitude: 0.05,
            seed: 7,
            lagrangian: false,
        };
        let map = make_immersion(&control).unwrap();
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.3, -0.2]), 2, Engine::Exact).unwrap();
        let pg = analyze_point(&map.target, &jet).unwrap();
        assert!(pg.invariants.lagrangian_defect > 1e-4);
    }

    #[test]
    fn non_lagrangian_plane_is_detected() {
        // the plane spanned by e_1 and J e_1
        struct Complex;
        impl SmoothMap for Complex {
            fn eval<S: Scalar>(&self, u: &[S], _: usize) -> Vec<S> {
                vec![u[0], S::zero(), u[1], S::zero()]
            }
        }
        let map = ImmersionMap::single_chart(
            "complex-line",
            "control",
            AmbientModel::flat(2).unwrap(),
            Chart::new(DomainBox::cube(2, 1.0), Complex),
        );
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![0.1, 0.2]), 1, Engine::Exact).unwrap();
        assert!(crate::geometry::lagrangian_defect(&map.target, &jet).unwrap() > 0.1);
    }

    #[test]
    fn unitary_commutes_with_j() {
        let q = random_unitary(3, 11);
        let j = crate::ambient::standard_j(3);
        let d = q.dot(&j) - j.dot(&q);
        assert!(d.iter().all(|x| x.abs() < 1e-14));
        let id = q.t().dot(&q);
        for i in 0..6 {
            for k in 0..6 {
                let e = if i == k { 1.0 } else { 0.0 };
                assert!((id[[i, k]] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn spec_roundtrips_through_toml() {
        let spec = ExampleSpec::Perturbed {
            base: Box::new(ExampleSpec::FlatTorus { radii: vec![1.0, 2.0] }),
            amplitude: 0.05,
            seed: 3,
            lagrangian: true,
        };
        let text = toml::to_string(&spec).unwrap();
        let back: ExampleSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    fn analyze(map: &ImmersionMap, p: &ParamPoint) -> crate::geometry::PointGeometry {
        let jet = evaluate_jet(map, p, 3, Engine::Exact).unwrap();
        analyze_point(&map.target, &jet).unwrap()
    }

    #[test]
    fn whitney_spheres_have_vanishing_b() {
        let specs = [
            whitney(2, 1.0),
            ExampleSpec::WhitneyCn { n: 3, r: 0.5, center: Some(vec![0.3, -1.0, 2.0, 0.1, 0.0, 0.7]) },
            ExampleSpec::WhitneyCpn { n: 2, theta: 0.3, c: 1.0 },
            ExampleSpec::WhitneyCpn { n: 3, theta: 1.0, c: 2.0 },
        ];
        for spec in &specs {
            let map = make_immersion(spec).unwrap();
            for u in [[0.5, 0.6, 0.3], [0.9, -0.4, 0.2], [-0.5, 0.6, 0.7]] {
                let p = ParamPoint::new(1, u[..spec.n()].to_vec());
                let pg = analyze(&map, &p);
                let inv = pg.invariants;
                assert!(inv.mean_norm2 > 1e-3, "{spec:?}");
                assert!(inv.b_norm2 < 1e-18, "{spec:?} {}", inv.b_norm2);
                assert!(inv.lagrangian_defect < 1e-12, "{spec:?} {}", inv.lagrangian_defect);
                assert!(inv.gauss_residual.unwrap() < 1e-8, "{spec:?} {:?}", inv.gauss_residual);
                let n = spec.n() as f64;
                assert!((inv.h_norm2 - 3.0 * n * n / (n + 2.0) * inv.mean_norm2).abs() < 1e-10);
                let q = sphere_transition(&p);
                let other = analyze(&map, &q).invariants;
                assert!((other.h_norm2 - inv.h_norm2).abs() < 1e-8 * (1.0 + inv.h_norm2));
                assert!((other.mean_norm2 - inv.mean_norm2).abs() < 1e-8 * (1.0 + inv.mean_norm2));
            }
        }
    }
}
