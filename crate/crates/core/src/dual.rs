//! Forward-mode dual numbers, nestable to any depth.
//!
//! `Dual<T>` carries a value and one infinitesimal part. Nesting `Dual` three
//! times gives a hyper-dual number with three independent infinitesimals, which
//! yields every partial derivative up to third order along three chosen seed
//! directions in a single evaluation.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Real scalar usable inside immersion and metric formulas.
///
/// Implemented by `f64` and by `Dual<T>` for every `T: Scalar`, so a formula
/// written once against this trait can be evaluated plainly or differentiated
/// to any fixed order.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(x: f64) -> Self;
    /// The plain real value, stripped of all infinitesimal parts.
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn square(self) -> Self {
        self * self
    }
    /// True when every component is finite.
    fn all_finite(&self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

/// One infinitesimal: value and first directional derivative.
pub type D1 = Dual<f64>;
/// Two infinitesimals: enough for all second partials along two seeds.
pub type D2 = Dual<D1>;
/// Three infinitesimals: enough for all third partials along three seeds.
pub type D3 = Dual<D2>;

impl<T: Scalar> Dual<T> {
    #[inline]
    pub fn new(v: T, d: T) -> Self {
        Dual { v, d }
    }

    #[inline]
    pub fn constant(v: T) -> Self {
        Dual { v, d: T::zero() }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = o.v.recip();
        let q = self.v * inv;
        Dual::new(q, (self.d - q * o.d) * inv)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.v, -self.d)
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Dual::new(self.v + o, self.d)
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Dual::new(self.v - o, self.d)
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Dual::new(self.v * o, self.d * o)
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        Dual::new(self.v / o, self.d / o)
    }
}

impl<T: Scalar> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(T::cst(x))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v.re()
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.d * self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.v.cos(), -(self.d * self.v.sin()))
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, self.d / (s * 2.0))
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.d * e)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.d / self.v)
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.v.all_finite() && self.d.all_finite()
    }
}

/// Seed `x` as a hyper-dual variable whose three infinitesimals are switched
/// on by the three flags.
pub fn seed3(x: f64, a: bool, b: bool, c: bool) -> D3 {
    let f = |on: bool| if on { 1.0 } else { 0.0 };
    let inner = D1::new(x, f(a));
    let mid = D2::new(inner, D1::new(f(b), 0.0));
    D3::new(mid, D2::new(D1::new(f(c), 0.0), D1::default()))
}

/// Seed `x` as a two-infinitesimal variable.
pub fn seed2(x: f64, a: bool, b: bool) -> D2 {
    let f = |on: bool| if on { 1.0 } else { 0.0 };
    D2::new(D1::new(x, f(a)), D1::new(f(b), 0.0))
}

/// Partial derivatives carried by a `D3` evaluated with three seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct D3Parts {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub ab: f64,
    pub ac: f64,
    pub bc: f64,
    pub abc: f64,
}

impl From<D3> for D3Parts {
    fn from(y: D3) -> Self {
        D3Parts {
            value: y.v.v.v,
            a: y.v.v.d,
            b: y.v.d.v,
            c: y.d.v.v,
            ab: y.v.d.d,
            ac: y.d.v.d,
            bc: y.d.d.v,
            abc: y.d.d.d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic<S: Scalar>(x: S, y: S, z: S) -> S {
        x * y * z + x * x * x * 2.0 - (y * z).sin()
    }

    #[test]
    fn hyper_dual_third_partials() {
        let (x, y, z) = (0.3, -1.2, 0.7);
        let r: D3Parts = cubic(
            seed3(x, true, false, false),
            seed3(y, false, true, false),
            seed3(z, false, false, true),
        )
        .into();
        assert!((r.value - cubic(x, y, z)).abs() < 1e-15);
        assert!((r.a - (y * z + 6.0 * x * x)).abs() < 1e-14);
        assert!((r.b - (x * z - z * (y * z).cos())).abs() < 1e-14);
        // d2/dy dz of -sin(yz) = -cos(yz) + yz sin(yz)
        let bc = x - (y * z).cos() + y * z * (y * z).sin();
        assert!((r.bc - bc).abs() < 1e-14);
        assert!((r.abc - 1.0).abs() < 1e-14);
    }

    #[test]
    fn repeated_seed_gives_pure_third_derivative() {
        let x = 0.4_f64;
        let s = seed3(x, true, true, true);
        let r: D3Parts = (s.exp() / (s * s + 1.0)).into();
        // oracle: central differences of the analytic second derivative
        let f2 = |t: f64| {
            let g = |t: f64| t.exp() / (t * t + 1.0);
            let h = 1e-4;
            (g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h)
        };
        let h = 1e-3;
        let third = (f2(x + h) - f2(x - h)) / (2.0 * h);
        assert!((r.abc - third).abs() < 1e-4);
    }

    #[test]
    fn sqrt_and_ln_derivatives() {
        let r: D3Parts = seed3(2.0, true, false, false).sqrt().into();
        assert!((r.a - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        let r: D3Parts = seed3(2.0, true, true, false).ln().into();
        assert!((r.ab + 0.25).abs() < 1e-15);
    }
}
