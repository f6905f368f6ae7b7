//! Dense symmetric positive definite solves.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Only the lower triangle of `a` is read. Fails when a pivot is not
/// comfortably positive relative to the diagonal scale.
pub fn cholesky<T: Scalar>(a: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("cholesky of non-square {:?}", a.dim())));
    }
    let scale = (0..n).fold(T::zero(), |m, i| m.max(a[[i, i]].abs()));
    let tol = T::epsilon() * T::from_usize_lossy(n.max(1)) * scale;
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = l.split_at_mut(i * n);
            let row_i = &tail[..n];
            let s = if j == i {
                a[[i, i]] - dot(&row_i[..i], &row_i[..i])
            } else {
                a[[i, j]] - dot(&row_i[..j], &head[j * n..j * n + j])
            };
            if j == i {
                if s.is_nan() || s <= tol {
                    return Err(Error::Numerical(format!(
                        "matrix is not positive definite (pivot {i} = {s})"
                    )));
                }
                tail[i] = s.sqrt();
            } else {
                tail[j] = s / head[j * n + j];
            }
        }
    }
    Ok(Array2::from_shape_vec((n, n), l).expect("n*n buffer"))
}

/// Solve `L Lᵀ X = B` given the lower factor `L`.
pub fn cholesky_solve<T: Scalar>(l: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s = s - l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in i + 1..n {
                s = s - l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

/// Solve `A X = B` for symmetric positive definite `A`.
pub fn solve_spd<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, matrix has {}",
            b.nrows(),
            a.nrows()
        )));
    }
    let l = cholesky(a)?;
    Ok(cholesky_solve(l.view(), b))
}
