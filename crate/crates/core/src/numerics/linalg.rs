//! Dense real/complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative threshold below which a pivot or singular value counts as zero.
const SINGULAR_RTOL: f64 = 1e-14;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

pub fn ensure_finite<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    context: &'static str,
) -> Result<()> {
    if m.iter().all(|z| z.clone().is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Singular values sorted in descending order.
pub fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// 2-norm condition number `sigma_max / sigma_min` (infinite when singular).
pub fn cond2<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Moore-Penrose pseudoinverse with singular values below `rank_tol * sigma_max` discarded.
pub fn pinv(a: &CMatrix, rank_tol: f64) -> Result<CMatrix> {
    ensure_finite(a, "pinv input")?;
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(CMatrix::zeros(cols, rows));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rank_tol * smax;
    let mut out = CMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        // pinv = V S^+ U^H
        for i in 0..cols {
            let vik = v_t[(k, i)].conj() * inv;
            for j in 0..rows {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Solve `A x = b` by LU with partial pivoting; returns the solution and the
/// 2-norm condition number of `A`.
pub fn solve(a: &CMatrix, b: &CVector) -> Result<(CVector, f64)> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::GridMismatch(format!(
            "solve: matrix {:?} with right-hand side of length {}",
            a.shape(),
            b.len()
        )));
    }
    ensure_finite(a, "solve matrix")?;
    if !b.iter().all(|z| z.is_finite()) {
        return Err(Error::NonFinite("solve right-hand side"));
    }
    let cond = cond2(a);
    if !cond.is_finite() || cond * SINGULAR_RTOL * (a.nrows() as f64) > 1.0 {
        return Err(Error::Singular { cond });
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular { cond })?;
    Ok((x, cond))
}

/// LU solve for real systems without a condition estimate; rejects pivots
/// that are negligible relative to the largest pivot.
pub fn solve_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min <= SINGULAR_RTOL * max || !min.is_finite() {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::Singular { cond });
    }
    lu.solve(b).ok_or(Error::Singular { cond: f64::INFINITY })
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`,
/// where `q` already has orthonormal columns. Standard basis vectors are
/// added greedily by residual norm so the result is deterministic.
pub fn orthogonal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let start = basis.len();
    while basis.len() < n {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut e = DVector::<f64>::zeros(n);
            e[i] = 1.0;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let d = b.dot(&e);
                    e.axpy(-d, b, 1.0);
                }
            }
            let nrm = e.norm();
            if best.as_ref().map_or(true, |(bn, _)| nrm > *bn + 1e-12) {
                best = Some((nrm, e));
            }
        }
        let (nrm, e) = best.expect("n > 0");
        basis.push(e / nrm);
    }
    DMatrix::from_columns(&basis[start..])
}

/// Orthonormalize the columns of a real matrix (thin QR, Gram-Schmidt with
/// reorthogonalization). Columns must be linearly independent.
pub fn orthonormalize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(a.ncols());
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for c in a.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for b in &cols {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let nrm = v.norm();
        if !(nrm > 1e-12 * scale) {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        cols.push(v / nrm);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Principal angles (radians, ascending) between the column spans of two
/// complex matrices.
pub fn principal_angles(a: &CMatrix, b: &CMatrix) -> Vec<f64> {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let m = qa.adjoint() * qb;
    let mut s: Vec<f64> = singular_values(&m)
        .into_iter()
        .map(|c| c.clamp(-1.0, 1.0).acos())
        .collect();
    s.sort_by(|x, y| x.total_cmp(y));
    s
}

/// Unit-2-norm copy of `v` with its largest-magnitude entry rotated onto the
/// positive real axis. Ties go to the lowest index.
pub fn normalize_phase(v: &CVector) -> CVector {
    let nrm = v.norm();
    if nrm == 0.0 {
        return v.clone();
    }
    let mut idx = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best * (1.0 + 1e-12) {
            best = m;
            idx = i;
        }
    }
    let pivot = v[idx];
    let rot = pivot.conj() / pivot.norm();
    v.map(|z| z * rot / nrm)
}

pub fn real_part(v: &CVector) -> DVector<f64> {
    v.map(|z| z.re)
}

pub fn imag_part(v: &CVector) -> DVector<f64> {
    v.map(|z| z.im)
}

/// Bilinear (non-conjugating) product `a^T b`.
pub fn dot_t(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        to_complex(&DMatrix::from_row_slice(rows, cols, data))
    }

    #[test]
    fn pinv_of_invertible_matches_inverse() {
        let a = cm(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let p = pinv(&a, 1e-12).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        assert!((p - inv).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_column_is_row() {
        let a = cm(2, 1, &[1.0, 0.0]);
        let p = pinv(&a, 1e-12).unwrap();
        assert_eq!(p.shape(), (1, 2));
        assert!((p[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!(p[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn pinv_of_rank_one_block() {
        let a = cm(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv(&a, 1e-12).unwrap();
        for z in p.iter() {
            assert!((z - c64(0.25, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn pinv_rejects_nan() {
        let a = cm(1, 1, &[f64::NAN]);
        assert!(matches!(pinv(&a, 1e-12), Err(Error::NonFinite(_))));
    }

    #[test]
    fn solve_small_systems() {
        let id = CMatrix::identity(3, 3);
        let b = CVector::from_vec(vec![c64(1.0, 2.0), c64(-3.0, 0.0), c64(0.5, 0.5)]);
        let (x, cond) = solve(&id, &b).unwrap();
        assert!((x - &b).norm() < 1e-15);
        assert!((cond - 1.0).abs() < 1e-12);

        let d = cm(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let (x, _) = solve(&d, &CVector::from_vec(vec![c64(2.0, 0.0), c64(4.0, 0.0)])).unwrap();
        assert!((x[0] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_hilbert_four() {
        let h = DMatrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let b = DVector::from_fn(4, |i, _| h.row(i).sum());
        let (x, cond) = solve(&to_complex(&h), &to_complex_vec(&b)).unwrap();
        for z in x.iter() {
            assert!((z - c64(1.0, 0.0)).norm() < 1e-11);
        }
        // sigma_max / sigma_min of the 4x4 Hilbert matrix
        assert!((cond / 1.5514e4 - 1.0).abs() < 1e-3, "cond = {cond}");
    }

    #[test]
    fn solve_reports_singular() {
        let a = cm(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = CVector::from_vec(vec![c64(1.0, 0.0), c64(1.0, 0.0)]);
        assert!(matches!(solve(&a, &b), Err(Error::Singular { .. })));
    }

    #[test]
    fn complement_is_orthonormal() {
        let q = orthonormalize(&DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0])).unwrap();
        let c = orthogonal_complement(&q);
        assert_eq!(c.shape(), (3, 2));
        assert!((q.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn phase_rule() {
        let v = CVector::from_vec(vec![c64(0.0, 1.0), c64(0.0, -2.0)]);
        let p = normalize_phase(&v);
        assert!((p.norm() - 1.0).abs() < 1e-15);
        assert!(p[1].im.abs() < 1e-15 && p[1].re > 0.0);
    }
}
