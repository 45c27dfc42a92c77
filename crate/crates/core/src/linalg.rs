//! Thin helpers over `nalgebra` shared by the GLM and ridge code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensorio::TensorFile;

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
pub fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

pub fn spd_solve_vec(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

/// Builds a matrix from a row-major 2-D tensor.
pub fn matrix_from_tensor(t: &TensorFile) -> Result<DMatrix<f64>> {
    match t.shape.as_slice() {
        [r, c] => Ok(DMatrix::from_row_slice(*r, *c, &t.data)),
        [n] => Ok(DMatrix::from_row_slice(*n, 1, &t.data)),
        other => Err(Error::Mismatch(format!("expected a matrix, got shape {other:?}"))),
    }
}

pub fn matrix_to_tensor(m: &DMatrix<f64>) -> TensorFile {
    let mut data = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        data.extend(m.row(r).iter());
    }
    TensorFile {
        dtype: crate::tensorio::Dtype::F64,
        shape: vec![m.nrows(), m.ncols()],
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_detects_collinear_columns() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0, 5.0, 6.0, 1.0, -1.0, 0.0],
        );
        assert_eq!(numerical_rank(&x), 2);
        assert_eq!(numerical_rank(&DMatrix::identity(3, 3)), 3);
    }

    #[test]
    fn tensor_matrix_roundtrip_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = matrix_to_tensor(&m);
        assert_eq!(t.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matrix_from_tensor(&t).unwrap(), m);
    }
}
