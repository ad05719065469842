//! Small dense helpers for the nonnegative blocks used throughout the crate.
//!
//! Blocks act on row vectors, so `row_times` computes `v A`. The norm is the
//! ℓ¹ norm on vectors and its induced operator norm (maximum row sum) on
//! matrices.

use nalgebra::DMatrix;

/// `v A` for a row vector `v`.
pub fn row_times(v: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(v.len(), a.nrows());
    let mut out = vec![0.0; a.ncols()];
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += vr * a[(r, c)];
        }
    }
    out
}

pub fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Operator norm induced by ℓ¹ on row vectors: the largest row sum.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

/// Spectral radius via the complex eigenvalues of the Schur form.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    match a.nrows() {
        0 => 0.0,
        1 => a[(0, 0)].abs(),
        _ => a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_vector_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(row_times(&[1.0, 1.0], &a), vec![4.0, 6.0]);
        assert_eq!(op_norm(&a), 7.0);
    }

    #[test]
    fn spectral_radius_of_positive_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((spectral_radius(&a) - 3.0).abs() < 1e-12);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(spectral_radius(&nil), 0.0);
    }
}
