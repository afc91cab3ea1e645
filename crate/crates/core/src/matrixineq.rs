//! Commutator inequality for families of symmetric matrices:
//!
//! `sum_{a,b} N([A_a, A_b]) + sum_{a,b} S_ab^2 <= 3/2 (sum_a S_a)^2`
//!
//! with `S_ab = tr(A_a A_b)`, `S_a = S_aa` and `N(A) = tr(A^t A)`. Both
//! orderings of each pair are counted.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_eig;

pub const SYMMETRY_TOLERANCE: f64 = 1e-14;
/// A gap below `-HARD_FAILURE * rhs` means the arithmetic is broken.
pub const HARD_FAILURE: f64 = 1e-10;
pub const RESTARTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFamily {
    dim: usize,
    mats: Vec<Array2<f64>>,
}

impl MatrixFamily {
    pub fn new(mats: Vec<Array2<f64>>) -> Result<Self> {
        if mats.len() < 2 {
            return Err(Error::InvalidInput(format!("family needs at least 2 matrices, got {}", mats.len())));
        }
        let dim = mats[0].nrows();
        if dim == 0 {
            return Err(Error::InvalidInput("matrices must be at least 1x1".into()));
        }
        for (a, m) in mats.iter().enumerate() {
            if m.dim() != (dim, dim) {
                return Err(Error::InvalidInput(format!(
                    "matrix {a} has shape {:?}, expected {dim}x{dim}",
                    m.dim()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("matrix {a} has non-finite entries")));
            }
            let scale = m.iter().fold(1.0_f64, |s, x| s.max(x.abs()));
            for i in 0..dim {
                for j in 0..i {
                    if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOLERANCE * scale {
                        return Err(Error::InvalidInput(format!(
                            "matrix {a} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(MatrixFamily { dim, mats })
    }

    /// Builds a family from row-major `p * dim * dim` data.
    pub fn from_flat(p: usize, dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for p={p}, dim={dim}, got {}",
                p * dim * dim,
                data.len()
            )));
        }
        let mats = data
            .chunks(dim * dim.max(1))
            .map(|c| Array2::from_shape_vec((dim, dim), c.to_vec()).expect("chunk shape"))
            .collect();
        Self::new(mats)
    }

    pub fn p(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.mats
    }

    pub fn scaled(&self, t: f64) -> Self {
        MatrixFamily { dim: self.dim, mats: self.mats.iter().map(|m| m * t).collect() }
    }

    /// `A_a -> Q^t A_a Q` for every member.
    pub fn conjugated(&self, q: &Array2<f64>) -> Result<Self> {
        if q.dim() != (self.dim, self.dim) {
            return Err(Error::InvalidInput("conjugating matrix has the wrong shape".into()));
        }
        let mats = self
            .mats
            .iter()
            .map(|m| {
                let c = q.t().dot(m).dot(q);
                symmetrize(&c)
            })
            .collect();
        Ok(MatrixFamily { dim: self.dim, mats })
    }

    /// The pair `diag(1, -1)`, `[[0, 1], [1, 0]]`, which attains equality.
    pub fn equality_pair() -> Self {
        MatrixFamily {
            dim: 2,
            mats: vec![
                ndarray::array![[1.0, 0.0], [0.0, -1.0]],
                ndarray::array![[0.0, 1.0], [1.0, 0.0]],
            ],
        }
    }

    fn total_norm2(&self) -> f64 {
        self.mats.iter().map(frob2).sum()
    }
}

fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    (m + &m.t()) * 0.5
}

fn frob2(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

fn trace_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    // tr(A B) for symmetric B is the Frobenius pairing
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiLiGap {
    pub commutator_sum: f64,
    pub s2_sum: f64,
    pub rhs: f64,
    pub gap: f64,
}

impl LiLiGap {
    /// `gap / rhs`, or zero for the zero family.
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.gap / self.rhs
        } else {
            0.0
        }
    }
}

pub fn li_li_gap(fam: &MatrixFamily) -> LiLiGap {
    let p = fam.p();
    let mut commutator_sum = 0.0;
    let mut s2_sum = 0.0;
    let mut s = 0.0;
    for a in 0..p {
        let ma = &fam.mats[a];
        s += frob2(ma);
        for b in 0..p {
            let mb = &fam.mats[b];
            let sab = trace_product(ma, mb);
            s2_sum += sab * sab;
            if a != b {
                let ab = ma.dot(mb);
                let comm = &ab - &ab.t();
                commutator_sum += frob2(&comm);
            }
        }
    }
    let rhs = 1.5 * s * s;
    LiLiGap { commutator_sum, s2_sum, rhs, gap: rhs - commutator_sum - s2_sum }
}

/// Seed for the `index`-th sub-task of a run seeded with `seed`; index 0
/// reproduces `seed` itself.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    if index == 0 {
        return seed;
    }
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> Array2<f64> {
    let raw = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..=1.0));
    symmetrize(&raw)
}

/// Symmetric matrices with entries drawn uniformly from `[-1, 1]`, each
/// rescaled to a Frobenius norm drawn uniformly from `(0, scale]`.
pub fn random_family(p: usize, dim: usize, seed: u64, scale: f64) -> Result<MatrixFamily> {
    if p < 2 || dim < 1 {
        return Err(Error::InvalidInput(format!("need p >= 2 and dim >= 1, got p={p}, dim={dim}")));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidInput(format!("scale must be finite and non-negative, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..p)
        .map(|_| {
            let m = random_symmetric(&mut rng, dim);
            let target = scale * (1.0 - rng.random::<f64>());
            let norm = frob2(&m).sqrt();
            if norm > 0.0 {
                m * (target / norm)
            } else {
                m
            }
        })
        .collect();
    Ok(MatrixFamily { dim, mats })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub min_ratio: f64,
    /// Trial index attaining `min_ratio`.
    pub worst_trial: usize,
    pub max_ratio: f64,
    /// Trials with `gap < -tolerance * rhs`.
    pub violations: Vec<usize>,
    pub tolerance: f64,
}

/// Evaluates the gap on `trials` random families; trial `t` uses
/// `derive_seed(seed, t)`.
pub fn run_trials(p: usize, dim: usize, trials: usize, seed: u64, tolerance: f64) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let gaps: Vec<Result<LiLiGap>> = (0..trials)
        .into_par_iter()
        .map(|t| random_family(p, dim, derive_seed(seed, t as u64), 1.0).map(|f| li_li_gap(&f)))
        .collect();
    let mut summary = TrialSummary {
        trials,
        min_ratio: f64::INFINITY,
        worst_trial: 0,
        max_ratio: f64::NEG_INFINITY,
        violations: Vec::new(),
        tolerance,
    };
    for (t, g) in gaps.into_iter().enumerate() {
        let g = g?;
        let r = g.ratio();
        if r < summary.min_ratio {
            summary.min_ratio = r;
            summary.worst_trial = t;
        }
        summary.max_ratio = summary.max_ratio.max(r);
        if g.gap < -tolerance * g.rhs {
            summary.violations.push(t);
        }
    }
    Ok(summary)
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub family: MatrixFamily,
    pub gap: LiLiGap,
    /// Best `gap / rhs` found so far after each restart.
    pub best_by_restart: Vec<f64>,
}

const INITIAL_STEP: f64 = 0.3;
const STEP_GROWTH: f64 = 1.2;
const STEP_DECAY: f64 = 0.9;
const MIN_STEP: f64 = 1e-14;

fn hill_climb(start: MatrixFamily, seed: u64, steps: usize) -> Result<(MatrixFamily, LiLiGap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut best = start;
    let mut best_gap = li_li_gap(&best);
    let mut step = INITIAL_STEP;
    for _ in 0..steps {
        // perturbation relative to the family's size keeps the ratio objective well scaled
        let size = (best.total_norm2() / best.p() as f64).sqrt().max(f64::MIN_POSITIVE);
        let mats = best
            .mats
            .iter()
            .map(|m| m + &(random_symmetric(&mut rng, best.dim) * (step * size)))
            .collect();
        let cand = MatrixFamily { dim: best.dim, mats };
        let g = li_li_gap(&cand);
        if g.rhs > 0.0 && g.ratio() < best_gap.ratio() {
            let norm = cand.total_norm2().sqrt();
            best = cand.scaled(1.0 / norm);
            best_gap = li_li_gap(&best);
            step *= STEP_GROWTH;
        } else {
            step = (step * STEP_DECAY).max(MIN_STEP);
        }
        if best_gap.gap < -HARD_FAILURE * best_gap.rhs {
            return Err(Error::Numerical(format!(
                "commutator inequality violated: gap {} with rhs {}",
                best_gap.gap, best_gap.rhs
            )));
        }
    }
    Ok((best, best_gap))
}

/// Random-restart hill climb on `gap / rhs`. Each restart starts from
/// `random_family(p, dim, derive_seed(seed, r), 1)` and takes
/// `iterations - 1` steps; at most [`RESTARTS`] restarts, and no more than
/// `iterations`, so a single iteration returns the seed family untouched.
pub fn minimize_gap(p: usize, dim: usize, seed: u64, iterations: usize) -> Result<SearchResult> {
    if iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    let restarts = RESTARTS.min(iterations);
    let runs: Vec<Result<(MatrixFamily, LiLiGap)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, r as u64);
            hill_climb(random_family(p, dim, s, 1.0)?, s, iterations - 1)
        })
        .collect();
    let mut best: Option<(MatrixFamily, LiLiGap)> = None;
    let mut best_by_restart = Vec::with_capacity(restarts);
    for run in runs {
        let (fam, g) = run?;
        if best.as_ref().is_none_or(|(_, b)| g.ratio() < b.ratio()) {
            best = Some((fam, g));
        }
        best_by_restart.push(best.as_ref().map(|(_, b)| b.ratio()).unwrap_or(f64::NAN));
    }
    let (family, gap) = best.expect("at least one restart");
    Ok(SearchResult { family, gap, best_by_restart })
}

#[derive(Clone, Debug)]
pub struct SliceStats {
    /// Slices `B_m = (b^{m*}_{ij})` in the rotated frame.
    pub family: MatrixFamily,
    /// `S_{m*} = sum_{ij} (b^{m*}_{ij})^2`
    pub s_star: Vec<f64>,
    /// Eigenvalues of the slice along `H`, ascending.
    pub lambda: Vec<f64>,
    /// `sum_i lambda_i^2`
    pub s_h: f64,
    /// Orthogonal change of frame; row 0 is `H / |H|` when `H` is non-zero.
    pub rotation: Array2<f64>,
}

/// Below this `|H|` the identity frame is kept.
pub const DEGENERATE_MEAN: f64 = 1e-14;

/// Slices of the trace-free tensor `b[[m, i, j]]` in a frame whose first
/// vector is parallel to `H`. All three slots are rotated together.
pub fn slices_from_b(b: &Array3<f64>, mean_star: &[f64]) -> Result<SliceStats> {
    let n = b.shape()[0];
    if b.shape() != [n, n, n] || mean_star.len() != n {
        return Err(Error::InvalidInput(format!(
            "tensor shape {:?} and mean curvature length {} disagree",
            b.shape(),
            mean_star.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("slices need n >= 2".into()));
    }
    let rotation = householder_to_first(mean_star);
    let q = &rotation;
    // rotate one slot at a time
    let mut t = b.clone();
    for slot in 0..3 {
        let src = t.clone();
        t = Array3::from_shape_fn((n, n, n), |(x, y, z)| {
            let idx = [x, y, z];
            (0..n)
                .map(|a| {
                    let mut k = idx;
                    k[slot] = a;
                    q[[idx[slot], a]] * src[k]
                })
                .sum()
        });
    }
    let mats: Vec<Array2<f64>> =
        (0..n).map(|m| symmetrize(&t.index_axis(ndarray::Axis(0), m).to_owned())).collect();
    let s_star: Vec<f64> = mats.iter().map(frob2).collect();
    let (lambda, _) = sym_eig(mats[0].view());
    let s_h = lambda.iter().map(|l| l * l).sum();
    Ok(SliceStats { family: MatrixFamily::new(mats)?, s_star, lambda, s_h, rotation })
}

/// Orthogonal matrix mapping `v / |v|` to the first basis vector.
fn householder_to_first(v: &[f64]) -> Array2<f64> {
    let n = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut q = Array2::eye(n);
    if norm < DEGENERATE_MEAN {
        return q;
    }
    let mut w: Vec<f64> = v.iter().map(|x| x / norm).collect();
    // reflect through the bisector of v and e_0, choosing the stable sign
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    for i in 0..n {
        for j in 0..n {
            q[[i, j]] -= 2.0 * w[i] * w[j] / ww;
        }
    }
    // that reflection sends v to -sign * e_0; flip the first row to land on +e_0
    if sign > 0.0 {
        for j in 0..n {
            q[[0, j]] = -q[[0, j]];
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equality_pair_values() {
        let g = li_li_gap(&MatrixFamily::equality_pair());
        assert_eq!(g.commutator_sum, 16.0);
        assert_eq!(g.s2_sum, 8.0);
        assert_eq!(g.rhs, 24.0);
        assert_eq!(g.gap, 0.0);
    }

    #[test]
    fn zero_family_and_single_matrix_reduction() {
        let z = MatrixFamily::new(vec![Array2::zeros((3, 3)), Array2::zeros((3, 3))]).unwrap();
        assert_eq!(li_li_gap(&z).gap, 0.0);
        let a = array![[1.0, 2.0, 0.0], [2.0, -1.0, 0.5], [0.0, 0.5, 3.0]];
        let s: f64 = a.iter().map(|x| x * x).sum();
        let f = MatrixFamily::new(vec![a, Array2::zeros((3, 3))]).unwrap();
        assert!((li_li_gap(&f).gap - 0.5 * s * s).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_and_malformed_input_rejected() {
        let bad = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(MatrixFamily::new(vec![bad, Array2::zeros((2, 2))]).is_err());
        assert!(MatrixFamily::new(vec![Array2::zeros((2, 2))]).is_err());
        assert!(MatrixFamily::new(vec![Array2::zeros((2, 2)), Array2::zeros((3, 3))]).is_err());
        assert!(MatrixFamily::from_flat(2, 2, &[0.0; 7]).is_err());
    }

    #[test]
    fn random_family_is_deterministic_and_bounded() {
        let a = random_family(4, 5, 42, 2.0).unwrap();
        assert_eq!(a, random_family(4, 5, 42, 2.0).unwrap());
        assert_ne!(a, random_family(4, 5, 43, 2.0).unwrap());
        assert!(a.matrices().iter().all(|m| frob2(m).sqrt() <= 2.0 + 1e-12));
        let z = random_family(3, 3, 1, 0.0).unwrap();
        assert!(z.matrices().iter().all(|m| m.iter().all(|&x| x == 0.0)));
        assert!(random_family(1, 3, 1, 1.0).is_err());
    }

    #[test]
    fn single_iteration_returns_seed_family() {
        let r = minimize_gap(3, 3, 7, 1).unwrap();
        let seed = random_family(3, 3, 7, 1.0).unwrap();
        assert_eq!(r.family, seed);
        assert_eq!(r.gap, li_li_gap(&seed));
    }

    #[test]
    fn search_best_so_far_is_monotone() {
        let r = minimize_gap(2, 5, 3, 200).unwrap();
        assert!(r.best_by_restart.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.gap.ratio() > 0.0);
    }

    #[test]
    fn householder_sends_direction_to_first_axis() {
        for v in [vec![0.3, -0.4, 1.2], vec![-2.0, 0.1, 0.0], vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]] {
            let q = householder_to_first(&v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let qv: Vec<f64> = (0..3).map(|i| (0..3).map(|j| q[[i, j]] * v[j]).sum()).collect();
            assert!((qv[0] - norm).abs() < 1e-14 && qv[1].abs() < 1e-14 && qv[2].abs() < 1e-14);
            let qtq = q.t().dot(&q);
            assert!((qtq - Array2::<f64>::eye(3)).iter().all(|x| x.abs() < 1e-14));
        }
    }
}
