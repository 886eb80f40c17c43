//! Complex eigendecomposition with biorthonormal left/right eigenvectors.
//!
//! Eigenvalues come from a complex Schur form `A = Q T Q^H`; right
//! eigenvectors are obtained by back-substitution on the triangular factor.
//! Left eigenvectors are the rows of the inverse eigenvector matrix, so
//! `w_j^T v_k = delta_jk` holds to rounding error.

use nalgebra::{DMatrix, DVector, Schur};
use std::cmp::Ordering;

use super::linalg::{
    c64, ensure_finite, normalize_phase, singular_values, to_complex, CMatrix, CVector, C64,
};
use crate::error::{Error, Result};

/// Smallest admissible singular value of the unit-column eigenvector matrix.
pub const DIAGONALIZABLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<C64>,
    /// Column `k` is the right eigenvector `v_k`.
    pub right: CMatrix,
    /// Column `k` is the left eigenvector `w_k` (so `w_k^T A = lambda_k w_k^T`).
    pub left: CMatrix,
    /// Index of the complex-conjugate partner, when the input was real.
    pub partner: Vec<Option<usize>>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn right_vec(&self, k: usize) -> CVector {
        self.right.column(k).into_owned()
    }

    pub fn left_vec(&self, k: usize) -> CVector {
        self.left.column(k).into_owned()
    }
}

fn schur(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let s = Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(Error::NoConvergence {
        iterations: 100_000,
        residual: f64::NAN,
    })?;
    Ok(s.unpack())
}

/// Right eigenvector of the upper-triangular `t` for its `k`-th diagonal entry.
fn triangular_eigvec(t: &CMatrix, k: usize) -> CVector {
    let n = t.nrows();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let floor = f64::EPSILON * scale;
    let lam = t[(k, k)];
    let mut y = CVector::zeros(n);
    y[k] = c64(1.0, 0.0);
    for j in (0..k).rev() {
        let mut acc = c64(0.0, 0.0);
        for l in (j + 1)..=k {
            acc += t[(j, l)] * y[l];
        }
        let mut d = t[(j, j)] - lam;
        if d.norm() < floor {
            d = c64(floor, 0.0);
        }
        y[j] = -acc / d;
    }
    y
}

/// Ascending `|Re|`, ties broken by ascending `Im`.
pub fn spectral_order(a: &C64, b: &C64, tie_tol: f64) -> Ordering {
    let (ra, rb) = (a.re.abs(), b.re.abs());
    if (ra - rb).abs() > tie_tol {
        ra.total_cmp(&rb)
    } else {
        a.im.total_cmp(&b.im)
    }
}

fn is_real_matrix(a: &CMatrix) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Identify conjugate partners among `values`; returns `None` entries for
/// eigenvalues treated as real.
fn pair_conjugates(values: &[C64], tol: f64) -> Vec<Option<usize>> {
    let n = values.len();
    let mut partner = vec![None; n];
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || values[i].im.abs() <= tol || values[i].im < 0.0 {
            continue;
        }
        let target = values[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || used[j] || values[j].im >= -tol {
                continue;
            }
            let d = (values[j] - target).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[i] = true;
            used[j] = true;
            partner[i] = Some(j);
            partner[j] = Some(i);
        }
    }
    partner
}

/// Full eigendecomposition with the ordering, phase and conjugate-pairing
/// conventions applied.
pub fn eig(a: &CMatrix) -> Result<EigenSystem> {
    if !a.is_square() {
        return Err(Error::GridMismatch(format!("eig: non-square matrix {:?}", a.shape())));
    }
    ensure_finite(a, "eig input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenSystem {
            values: vec![],
            right: CMatrix::zeros(0, 0),
            left: CMatrix::zeros(0, 0),
            partner: vec![],
        });
    }
    let (q, t) = schur(a)?;
    let mut values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut vecs: Vec<CVector> = (0..n)
        .map(|k| normalize_phase(&(&q * triangular_eigvec(&t, k))))
        .collect();

    let anorm = a.norm();
    let real_input = is_real_matrix(a);
    let mut partner = vec![None; n];
    if real_input {
        let tol = 1e-10 * (1.0 + anorm);
        partner = pair_conjugates(&values, tol);
        for i in 0..n {
            match partner[i] {
                None => {
                    values[i] = c64(values[i].re, 0.0);
                    let re = vecs[i].map(|z| c64(z.re, 0.0));
                    let nrm = re.norm();
                    if nrm > 0.0 {
                        vecs[i] = normalize_phase(&re);
                    }
                }
                Some(j) if values[i].im > 0.0 => {
                    let lam = (values[i] + values[j].conj()) * 0.5;
                    values[i] = lam;
                    values[j] = lam.conj();
                    let v = normalize_phase(&((&vecs[i] + vecs[j].map(|z| z.conj())) * c64(0.5, 0.0)));
                    vecs[j] = v.map(|z| z.conj());
                    vecs[i] = v;
                }
                Some(_) => {}
            }
        }
    }

    let tie_tol = 1e-12 * (1.0 + values.iter().map(|z| z.re.abs()).fold(0.0, f64::max));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| spectral_order(&values[i], &values[j], tie_tol));
    let mut inv_order = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        inv_order[old] = new;
    }
    let values: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let partner: Vec<Option<usize>> = order
        .iter()
        .map(|&i| partner[i].map(|p| inv_order[p]))
        .collect();
    let right = CMatrix::from_columns(&order.iter().map(|&i| vecs[i].clone()).collect::<Vec<_>>());

    let s = singular_values(&right);
    let sigma_min = *s.last().unwrap_or(&0.0);
    if !(sigma_min > DIAGONALIZABLE_TOL) {
        return Err(Error::NonDiagonalizable { sigma_min });
    }
    let inv = right
        .clone()
        .try_inverse()
        .ok_or(Error::NonDiagonalizable { sigma_min })?;
    let mut left = inv.transpose();
    if real_input {
        for k in 0..n {
            match partner[k] {
                None => {
                    let re = left.column(k).map(|z| c64(z.re, 0.0));
                    left.set_column(k, &re);
                }
                Some(p) if values[k].im > 0.0 => {
                    let avg = (left.column(k) + left.column(p).map(|z| z.conj())) * c64(0.5, 0.0);
                    left.set_column(p, &avg.map(|z| z.conj()));
                    left.set_column(k, &avg);
                }
                Some(_) => {}
            }
        }
    }
    ensure_finite(&left, "left eigenvectors")?;
    Ok(EigenSystem {
        values,
        right,
        left,
        partner,
    })
}

/// Eigendecomposition of a real matrix.
pub fn eig_real(a: &DMatrix<f64>) -> Result<EigenSystem> {
    eig(&to_complex(a))
}

/// The `count` eigenpairs of largest modulus of a real matrix, with left
/// vectors scaled so that `w_k^T v_k = 1`. Does not require the remaining
/// spectrum to be resolvable, which matters for state-transition matrices
/// whose fast eigenvalues underflow.
pub fn dominant_eigenpairs(a: &DMatrix<f64>, count: usize) -> Result<EigenSystem> {
    let n = a.nrows();
    if !a.is_square() || count == 0 || count > n {
        return Err(Error::OutOfRange { beta: count, dim: n });
    }
    let ac = to_complex(a);
    ensure_finite(&ac, "dominant_eigenpairs input")?;
    let (q, t) = schur(&ac)?;
    let (ql, tl) = schur(&ac.transpose())?;

    let tol = 1e-10 * (1.0 + ac.norm());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| t[(j, j)].norm().total_cmp(&t[(i, i)].norm()).then(i.cmp(&j)));
    let chosen: Vec<usize> = idx[..count].to_vec();
    let values_all: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let partner_all = pair_conjugates(&values_all, tol);
    for &i in &chosen {
        if let Some(p) = partner_all[i] {
            if !chosen.contains(&p) {
                return Err(Error::PairSplit { beta: count });
            }
        }
    }

    let mut values = Vec::with_capacity(count);
    let mut right_cols = Vec::with_capacity(count);
    let mut left_cols = Vec::with_capacity(count);
    let mut partner = Vec::with_capacity(count);
    let mut taken = vec![false; n];
    for &i in &chosen {
        let lam = values_all[i];
        let v = normalize_phase(&(&q * triangular_eigvec(&t, i)));
        let (j, _) = (0..n)
            .filter(|&j| !taken[j])
            .map(|j| (j, (tl[(j, j)] - lam).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("n >= count");
        taken[j] = true;
        let u = &ql * triangular_eigvec(&tl, j);
        let s: C64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        if s.norm() < 1e-14 * u.norm() {
            return Err(Error::NonDiagonalizable { sigma_min: s.norm() });
        }
        values.push(lam);
        right_cols.push(v);
        left_cols.push(u / s);
        partner.push(partner_all[i].map(|p| chosen.iter().position(|&c| c == p).unwrap()));
    }
    // exact conjugacy within pairs; real vectors for real eigenvalues
    for k in 0..count {
        match partner[k] {
            None => {
                values[k] = c64(values[k].re, 0.0);
                right_cols[k] = normalize_phase(&right_cols[k].map(|z| c64(z.re, 0.0)));
                let s: C64 = left_cols[k]
                    .iter()
                    .zip(right_cols[k].iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let w = left_cols[k].map(|z| c64(z.re / s.re, 0.0));
                left_cols[k] = w;
            }
            Some(p) if values[k].im > 0.0 => {
                let lam = (values[k] + values[p].conj()) * 0.5;
                values[k] = lam;
                values[p] = lam.conj();
                right_cols[p] = right_cols[k].map(|z| z.conj());
                left_cols[p] = left_cols[k].map(|z| z.conj());
            }
            Some(_) => {}
        }
    }
    Ok(EigenSystem {
        values,
        right: CMatrix::from_columns(&right_cols),
        left: CMatrix::from_columns(&left_cols),
        partner,
    })
}

/// Matrix exponential of a diagonalizable real matrix, `V exp(D t) V^{-1}`.
pub fn expm_diagonalizable(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let es = eig_real(a)?;
    let n = es.len();
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        n,
        es.values.iter().map(|l| (l * t).exp()),
    ));
    let m = &es.right * d * es.left.transpose();
    Ok(m.map(|z| z.re))
}
