//! Small dense helpers bridging `ndarray` storage and `nalgebra` factorizations.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Inverse of a symmetric positive-definite matrix, `None` if Cholesky fails.
pub fn inv_spd(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let chol = to_na(a).cholesky()?;
    Some(from_na(&chol.inverse()))
}

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix.
pub fn sym_eig(a: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = to_na(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = a.nrows();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn max_abs<'a, I: IntoIterator<Item = &'a f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spd_inverse_roundtrip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = inv_spd(a.view()).unwrap();
        let id = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - e).abs() < 1e-14);
            }
        }
        assert!(inv_spd(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
    }

    #[test]
    fn eigen_sorted() {
        let (vals, vecs) = sym_eig(array![[2.0, 0.0], [0.0, -1.0]].view());
        assert_eq!(vals, vec![-1.0, 2.0]);
        assert!((vecs[[1, 0]].abs() - 1.0).abs() < 1e-15);
    }
}
