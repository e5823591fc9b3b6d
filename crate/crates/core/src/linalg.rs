//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `a x = b` for symmetric positive definite `a` via Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::SingularCovariance)?;
    Ok(chol.solve(b))
}

/// Solve a general square system by LU with a conditioning guard.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_pivot > 1e-13 * scale) {
        return Err(Error::SingularSystem);
    }
    lu.solve(b).ok_or(Error::SingularSystem)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_range(a: &DMatrix<f64>) -> (f64, f64) {
    let ev = a.clone().symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= tol * a.amax().max(1.0)
}

/// Check for a symmetric positive definite matrix.
pub fn require_pd(a: &DMatrix<f64>) -> Result<()> {
    if !is_symmetric(a, 1e-10) || a.clone().cholesky().is_none() {
        return Err(Error::NonPdMatrix);
    }
    Ok(())
}

/// Matrix from a list of rows, as stored in JSON configs.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: rows.iter().map(Vec::len).find(|&l| l != c).unwrap_or(c),
        });
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(b: &[f64], v: &[f64]) -> f64 {
    b.iter().zip(v).map(|(x, y)| x * y).sum()
}

/// Length of a packed upper triangle for an `n x n` matrix.
#[inline]
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Add `w v vᵀ` to a packed upper triangle (row-major).
#[inline]
pub fn packed_rank1(acc: &mut [f64], w: f64, v: &[f64]) {
    let mut k = 0;
    for i in 0..v.len() {
        let wi = w * v[i];
        for vj in &v[i..] {
            acc[k] += wi * vj;
            k += 1;
        }
    }
}

/// Expand a packed upper triangle into a full symmetric matrix.
pub fn unpack(acc: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = acc[k];
            m[(j, i)] = acc[k];
            k += 1;
        }
    }
    m
}

/// Reduce a list of partial accumulators with a fixed pairwise tree so the
/// floating-point result does not depend on how the work was scheduled.
pub fn tree_reduce<T, F>(mut parts: Vec<T>, mut combine: F) -> Option<T>
where
    F: FnMut(T, T) -> T,
{
    if parts.is_empty() {
        return None;
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_roundtrip() {
        let v = [1.0, 2.0, 3.0];
        let mut acc = vec![0.0; packed_len(3)];
        packed_rank1(&mut acc, 2.0, &v);
        let m = unpack(&acc, 3);
        let dv = DVector::from_row_slice(&v);
        let expect = &dv * dv.transpose() * 2.0;
        assert!((m - expect).amax() < 1e-15);
    }

    #[test]
    fn tree_reduce_is_shape_fixed() {
        let parts: Vec<f64> = (1..=7).map(|x| x as f64).collect();
        assert_eq!(tree_reduce(parts, |a, b| a + b), Some(28.0));
        assert_eq!(tree_reduce(Vec::<f64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(lu_solve(&a, &b), Err(Error::SingularSystem)));
    }
}
