//! Small dense helpers on top of faer.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};

/// Left singular vectors of `a` for the `keep` largest singular values, plus
/// the full list of singular values in nonincreasing order.
///
/// Each returned vector is flipped so that its largest-magnitude entry (the
/// first one on ties) is positive.
pub fn leading_left_singular_vectors(a: &Mat<f64>, keep: usize) -> Result<(Mat<f64>, Vec<f64>)> {
    let rank_bound = a.nrows().min(a.ncols());
    if keep > rank_bound {
        return Err(Error::InvalidArgument(format!(
            "requested {keep} singular vectors from a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..rank_bound).map(|i| s[i]).collect();
    let u = svd.U();
    let mut out = Mat::<f64>::zeros(a.nrows(), keep);
    for j in 0..keep {
        let col = u.col(j);
        let mut pivot = 0;
        for i in 0..a.nrows() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..a.nrows() {
            out[(i, j)] = sign * col[i];
        }
    }
    Ok((out, sigma))
}

/// `out = m x`.
pub fn mat_vec_into(m: &Mat<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.col_as_slice(j)) {
            *o += mij * xj;
        }
    }
}

/// `out = mᵀ x`.
pub fn mat_t_vec_into(m: &Mat<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), x.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(m.col_as_slice(j), x);
    }
}

pub fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    mat_vec_into(m, x, &mut out);
    out
}

pub fn mat_t_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    mat_t_vec_into(m, x, &mut out);
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        sum += a[k] * b[k];
    }
    sum
}

/// Rows `rows` of `m`, in the given order.
pub fn select_rows(m: &Mat<f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Solves `x a = b` for `x`, i.e. returns `b a⁻¹`.
pub fn right_divide(b: &Mat<f64>, a: &Mat<f64>) -> Mat<f64> {
    // x a = b  <=>  aᵀ xᵀ = bᵀ
    let lu = a.transpose().to_owned().partial_piv_lu();
    lu.solve(b.transpose().to_owned()).transpose().to_owned()
}

/// 2-norm condition number `σ_max / σ_min` of a square matrix.
pub fn condition_number(a: &Mat<f64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub fn max_abs(m: &Mat<f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signs_are_normalized() {
        let a = Mat::from_fn(4, 2, |i, j| if j == 0 { -(i as f64) } else { (i as f64) - 2.5 });
        let (u, s) = leading_left_singular_vectors(&a, 2).unwrap();
        assert!(s[0] >= s[1]);
        for j in 0..2 {
            let col: Vec<f64> = (0..4).map(|i| u[(i, j)]).collect();
            let pivot = col.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn too_many_vectors_is_an_error() {
        let a = Mat::<f64>::zeros(5, 3);
        assert!(leading_left_singular_vectors(&a, 4).is_err());
    }

    #[test]
    fn right_divide_inverts() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { (i + 2 * j) as f64 * 0.1 });
        let b = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let x = right_divide(&b, &a);
        let back = &x * &a;
        assert!(max_abs(&(&back - &b)) < 1e-13);
    }

    #[test]
    fn products_match_faer() {
        let m = Mat::from_fn(5, 3, |i, j| (i as f64 - j as f64).sin());
        let x = [0.5, -1.0, 2.0];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let xm = Mat::from_fn(3, 1, |i, _| x[i]);
        let ym = Mat::from_fn(5, 1, |i, _| y[i]);
        let mx = &m * &xm;
        let mty = m.transpose() * &ym;
        for (i, v) in mat_vec(&m, &x).iter().enumerate() {
            assert!((v - mx[(i, 0)]).abs() < 1e-14);
        }
        for (i, v) in mat_t_vec(&m, &y).iter().enumerate() {
            assert!((v - mty[(i, 0)]).abs() < 1e-14);
        }
    }
}
