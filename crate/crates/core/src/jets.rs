//! Immersions presented by chart atlases, and their derivative jets.
//!
//! Two engines produce jets: `Exact` propagates nested dual numbers through the
//! chart formula, `FiniteDifference` uses central stencils with the step rule
//! `h = eps^(1/(k+2)) * max(1, |u_i|)` for a k-th derivative. The second engine
//! only exists to cross-check the first.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};

use crate::ambient::AmbientModel;
use crate::dual::{seed2, seed3, D3Parts, Scalar, D2, D3};
use crate::error::{Error, Result};

/// A chart formula written once against [`Scalar`].
pub trait SmoothMap: Send + Sync {
    /// Ambient chart used for the neighbourhood of `u`. Only Fubini-Study
    /// targets use more than one chart.
    fn ambient_chart(&self, _u: &[f64]) -> usize {
        0
    }

    fn eval<S: Scalar>(&self, u: &[S], ambient_chart: usize) -> Vec<S>;
}

/// Object-safe face of [`SmoothMap`], instantiated at the scalar types the
/// jet engines need.
pub trait ChartEval: Send + Sync {
    fn ambient_chart(&self, u: &[f64]) -> usize;
    fn eval_f64(&self, u: &[f64], chart: usize) -> Vec<f64>;
    fn eval_d2(&self, u: &[D2], chart: usize) -> Vec<D2>;
    fn eval_d3(&self, u: &[D3], chart: usize) -> Vec<D3>;
}

impl<M: SmoothMap> ChartEval for M {
    fn ambient_chart(&self, u: &[f64]) -> usize {
        SmoothMap::ambient_chart(self, u)
    }
    fn eval_f64(&self, u: &[f64], chart: usize) -> Vec<f64> {
        self.eval(u, chart)
    }
    fn eval_d2(&self, u: &[D2], chart: usize) -> Vec<D2> {
        self.eval(u, chart)
    }
    fn eval_d3(&self, u: &[D3], chart: usize) -> Vec<D3> {
        self.eval(u, chart)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Periodic axes wrap with period `hi - lo`; any value is accepted.
    pub periodic: Vec<bool>,
}

impl DomainBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        DomainBox { lo: vec![-half_width; n], hi: vec![half_width; n], periodic: vec![false; n] }
    }

    pub fn torus(n: usize) -> Self {
        DomainBox {
            lo: vec![0.0; n],
            hi: vec![std::f64::consts::TAU; n],
            periodic: vec![true; n],
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.lo.len()
            && u.iter().enumerate().all(|(i, &x)| {
                x.is_finite() && (self.periodic[i] || (x >= self.lo[i] && x <= self.hi[i]))
            })
    }
}

pub type PartitionFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Chart {
    pub domain: DomainBox,
    pub eval: Arc<dyn ChartEval>,
    /// Partition-of-unity weight of this chart; `None` means the chart alone
    /// covers its domain.
    pub partition: Option<PartitionFn>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("domain", &self.domain)
            .field("partition", &self.partition.is_some())
            .finish()
    }
}

impl Chart {
    pub fn new<M: SmoothMap + 'static>(domain: DomainBox, map: M) -> Self {
        Chart { domain, eval: Arc::new(map), partition: None }
    }

    pub fn with_partition(mut self, f: PartitionFn) -> Self {
        self.partition = Some(f);
        self
    }

    pub fn partition_weight(&self, u: &[f64]) -> f64 {
        self.partition.as_ref().map_or(1.0, |f| f(u))
    }
}

#[derive(Clone, Debug)]
pub struct ImmersionMap {
    pub name: String,
    /// Human-readable parameter summary.
    pub label: String,
    /// Intrinsic dimension.
    pub n: usize,
    pub target: AmbientModel,
    pub charts: Vec<Chart>,
}

impl ImmersionMap {
    pub fn single_chart(
        name: impl Into<String>,
        label: impl Into<String>,
        target: AmbientModel,
        chart: Chart,
    ) -> Self {
        ImmersionMap {
            name: name.into(),
            label: label.into(),
            n: target.n,
            target,
            charts: vec![chart],
        }
    }

    pub fn eval(&self, p: &ParamPoint) -> Result<(usize, Vec<f64>)> {
        let chart = self.chart(p)?;
        let amb = chart.eval.ambient_chart(&p.u);
        let v = chart.eval.eval_f64(&p.u, amb);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation(format!("{} at {:?}", self.name, p.u)));
        }
        Ok((amb, v))
    }

    fn chart(&self, p: &ParamPoint) -> Result<&Chart> {
        let chart = self
            .charts
            .get(p.chart)
            .ok_or_else(|| Error::Domain { chart: p.chart, u: p.u.clone() })?;
        if !chart.domain.contains(&p.u) {
            return Err(Error::Domain { chart: p.chart, u: p.u.clone() });
        }
        Ok(chart)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint {
    pub chart: usize,
    pub u: Vec<f64>,
}

impl ParamPoint {
    pub fn new(chart: usize, u: Vec<f64>) -> Self {
        ParamPoint { chart, u }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Exact,
    #[serde(rename = "fd")]
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub struct Jet {
    pub order: usize,
    pub ambient_chart: usize,
    pub value: Vec<f64>,
    /// `d1[[a, i]] = d_i psi^a`
    pub d1: Array2<f64>,
    /// `d2[[a, i, j]]`, symmetric in `i, j`
    pub d2: Array3<f64>,
    /// `d3[[a, i, j, k]]`, fully symmetric in the lower indices
    pub d3: Option<Array4<f64>>,
    /// Largest `|d2[a,i,j] - d2[a,j,i]|` before symmetrization.
    pub raw_asymmetry: f64,
}

impl Jet {
    pub fn ambient_dim(&self) -> usize {
        self.value.len()
    }

    pub fn n(&self) -> usize {
        self.d1.ncols()
    }
}

fn finite_or<'a>(it: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if it.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation(what.to_string()))
    }
}

pub fn evaluate_jet(map: &ImmersionMap, p: &ParamPoint, order: usize, engine: Engine) -> Result<Jet> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!("jet order must be 1, 2 or 3, got {order}")));
    }
    let chart = map.chart(p)?;
    let jet = match engine {
        Engine::Exact => exact_jet(chart.eval.as_ref(), &p.u, order),
        Engine::FiniteDifference => fd_jet(chart.eval.as_ref(), &p.u, order),
    };
    finite_or(jet.value.iter().chain(jet.d1.iter()).chain(jet.d2.iter()), &map.name)?;
    if let Some(d3) = &jet.d3 {
        finite_or(d3.iter(), &map.name)?;
    }
    Ok(jet)
}

fn exact_jet(f: &dyn ChartEval, u: &[f64], order: usize) -> Jet {
    let n = u.len();
    let amb = f.ambient_chart(u);
    let value = f.eval_f64(u, amb);
    let m = value.len();
    let mut d1 = Array2::zeros((m, n));
    let mut d2 = Array3::zeros((m, n, n));
    let mut raw_asymmetry: f64 = 0.0;
    if order == 1 {
        for i in 0..n {
            let x: Vec<D2> = (0..n).map(|k| seed2(u[k], k == i, false)).collect();
            for (a, y) in f.eval_d2(&x, amb).iter().enumerate() {
                d1[[a, i]] = y.v.d;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                let x: Vec<D2> = (0..n).map(|k| seed2(u[k], k == i, k == j)).collect();
                for (a, y) in f.eval_d2(&x, amb).iter().enumerate() {
                    d1[[a, i]] = y.v.d;
                    d2[[a, i, j]] = y.d.d;
                }
            }
        }
        for a in 0..m {
            for i in 0..n {
                for j in (i + 1)..n {
                    let (x, y) = (d2[[a, i, j]], d2[[a, j, i]]);
                    raw_asymmetry = raw_asymmetry.max((x - y).abs());
                    let avg = 0.5 * (x + y);
                    d2[[a, i, j]] = avg;
                    d2[[a, j, i]] = avg;
                }
            }
        }
    }
    let d3 = (order == 3).then(|| {
        let mut d3 = Array4::zeros((m, n, n, n));
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let x: Vec<D3> = (0..n).map(|q| seed3(u[q], q == i, q == j, q == k)).collect();
                    for (a, y) in f.eval_d3(&x, amb).into_iter().enumerate() {
                        let parts: D3Parts = y.into();
                        fill_sym3(&mut d3, a, i, j, k, parts.abc);
                    }
                }
            }
        }
        d3
    });
    Jet { order, ambient_chart: amb, value, d1, d2, d3, raw_asymmetry }
}

fn fill_sym3(d3: &mut Array4<f64>, a: usize, i: usize, j: usize, k: usize, v: f64) {
    for (p, q, r) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
        d3[[a, p, q, r]] = v;
    }
}

fn fd_steps(u: &[f64], k: i32) -> Vec<f64> {
    let h = f64::EPSILON.powf(1.0 / (k as f64 + 2.0));
    u.iter().map(|x| h * x.abs().max(1.0)).collect()
}

fn fd_jet(f: &dyn ChartEval, u: &[f64], order: usize) -> Jet {
    let n = u.len();
    let amb = f.ambient_chart(u);
    let value = f.eval_f64(u, amb);
    let m = value.len();
    let eval_at = |offsets: &[(usize, f64)]| {
        let mut x = u.to_vec();
        for &(i, d) in offsets {
            x[i] += d;
        }
        f.eval_f64(&x, amb)
    };
    let mut d1 = Array2::zeros((m, n));
    let h1 = fd_steps(u, 1);
    for i in 0..n {
        let p = eval_at(&[(i, h1[i])]);
        let q = eval_at(&[(i, -h1[i])]);
        for a in 0..m {
            d1[[a, i]] = (p[a] - q[a]) / (2.0 * h1[i]);
        }
    }
    let mut d2 = Array3::zeros((m, n, n));
    if order >= 2 {
        let h2 = fd_steps(u, 2);
        for i in 0..n {
            for j in i..n {
                let mut acc = vec![0.0; m];
                for s1 in [-1.0, 1.0] {
                    for s2 in [-1.0, 1.0] {
                        let y = eval_at(&[(i, s1 * h2[i]), (j, s2 * h2[j])]);
                        for a in 0..m {
                            acc[a] += s1 * s2 * y[a];
                        }
                    }
                }
                for a in 0..m {
                    let v = acc[a] / (4.0 * h2[i] * h2[j]);
                    d2[[a, i, j]] = v;
                    d2[[a, j, i]] = v;
                }
            }
        }
    }
    let d3 = (order == 3).then(|| {
        let h3 = fd_steps(u, 3);
        let mut d3 = Array4::zeros((m, n, n, n));
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let mut acc = vec![0.0; m];
                    for s1 in [-1.0, 1.0] {
                        for s2 in [-1.0, 1.0] {
                            for s3 in [-1.0, 1.0] {
                                let y = eval_at(&[
                                    (i, s1 * h3[i]),
                                    (j, s2 * h3[j]),
                                    (k, s3 * h3[k]),
                                ]);
                                for a in 0..m {
                                    acc[a] += s1 * s2 * s3 * y[a];
                                }
                            }
                        }
                    }
                    for a in 0..m {
                        fill_sym3(&mut d3, a, i, j, k, acc[a] / (8.0 * h3[i] * h3[j] * h3[k]));
                    }
                }
            }
        }
        d3
    });
    Jet { order, ambient_chart: amb, value, d1, d2, d3, raw_asymmetry: 0.0 }
}

/// Largest exact-vs-finite-difference discrepancy over all derivative orders up
/// to `order`, each normalized by `max(1, largest exact entry of that order)`.
pub fn jet_cross_check(map: &ImmersionMap, p: &ParamPoint, order: usize) -> Result<f64> {
    let e = evaluate_jet(map, p, order, Engine::Exact)?;
    let f = evaluate_jet(map, p, order, Engine::FiniteDifference)?;
    let rel = |x: &mut dyn Iterator<Item = (&f64, &f64)>| {
        let (mut diff, mut scale) = (0.0_f64, 1.0_f64);
        for (a, b) in x {
            diff = diff.max((a - b).abs());
            scale = scale.max(a.abs());
        }
        diff / scale
    };
    let mut worst = rel(&mut e.d1.iter().zip(f.d1.iter()));
    if order >= 2 {
        worst = worst.max(rel(&mut e.d2.iter().zip(f.d2.iter())));
    }
    if order == 3 {
        let (a, b) = (e.d3.as_ref().expect("d3"), f.d3.as_ref().expect("d3"));
        worst = worst.max(rel(&mut a.iter().zip(b.iter())));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Cubic;
    impl SmoothMap for Cubic {
        fn eval<S: Scalar>(&self, u: &[S], _: usize) -> Vec<S> {
            vec![u[0] * u[0] * u[1], u[1].sin() * u[0], u[0] + u[1], (u[0] * u[1]).exp()]
        }
    }

    fn cubic_map() -> ImmersionMap {
        ImmersionMap::single_chart(
            "cubic",
            "test",
            AmbientModel::flat(2).unwrap(),
            Chart::new(DomainBox::cube(2, 2.0), Cubic),
        )
    }

    #[test]
    fn exact_jet_matches_hand_derivatives() {
        let map = cubic_map();
        let (x, y) = (0.7, -0.4);
        let jet = evaluate_jet(&map, &ParamPoint::new(0, vec![x, y]), 3, Engine::Exact).unwrap();
        assert!((jet.d1[[0, 0]] - 2.0 * x * y).abs() < 1e-15);
        assert!((jet.d2[[0, 0, 1]] - 2.0 * x).abs() < 1e-15);
        assert!((jet.d2[[1, 1, 1]] + y.sin() * x).abs() < 1e-15);
        let d3 = jet.d3.unwrap();
        assert!((d3[[0, 0, 0, 1]] - 2.0).abs() < 1e-15);
        assert!((d3[[0, 1, 0, 0]] - 2.0).abs() < 1e-15);
        assert!((d3[[1, 1, 1, 0]] + y.sin()).abs() < 1e-15);
        assert!(jet.raw_asymmetry < 1e-10);
    }

    #[test]
    fn fd_engine_agrees() {
        let map = cubic_map();
        for u in [[0.1, 0.2], [-1.5, 1.1], [1.9, -1.9]] {
            let d = jet_cross_check(&map, &ParamPoint::new(0, u.to_vec()), 3).unwrap();
            assert!(d < 1e-5, "{d}");
        }
    }

    #[test]
    fn outside_domain_is_rejected() {
        let map = cubic_map();
        let err = evaluate_jet(&map, &ParamPoint::new(0, vec![3.0, 0.0]), 2, Engine::Exact);
        assert!(matches!(err, Err(Error::Domain { .. })));
        let err = evaluate_jet(&map, &ParamPoint::new(4, vec![0.0, 0.0]), 2, Engine::Exact);
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    struct Blowup;
    impl SmoothMap for Blowup {
        fn eval<S: Scalar>(&self, u: &[S], _: usize) -> Vec<S> {
            vec![u[0].recip(), u[0]]
        }
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let map = ImmersionMap::single_chart(
            "blowup",
            "test",
            AmbientModel::flat(1).unwrap(),
            Chart::new(DomainBox::cube(1, 1.0), Blowup),
        );
        let err = evaluate_jet(&map, &ParamPoint::new(0, vec![0.0]), 1, Engine::Exact);
        assert!(matches!(err, Err(Error::Evaluation(_))));
    }
}
