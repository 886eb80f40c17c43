//! Taylor expansion of the state in the slow isostable coordinates,
//!
//! ```text
//! x(psi) = x0 + sum over sorted multi-indices a of h_a psi^a,
//! ```
//!
//! and the series for the dual vectors `g_j = dx/dpsi_j`.
//!
//! Substituting the series into `x' = F(x)` with `psi_k' = lambda_k psi_k`
//! and matching the coefficient of `psi^a` gives
//! `(J - lambda_a Id) h_a = -q_a`, where `lambda_a` is the sum of the slow
//! eigenvalues over the tuple and `q_a` collects the nonlinear terms of `F`
//! evaluated on the strictly lower-order part of the series.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::tensor::sorted_tuples;
use crate::models::{derivative_tensors, DerivativeTensor, DynamicalModel, TensorOptions, TensorSource};
use crate::numerics::linalg::{c64, cond2, solve, to_complex, CMatrix, CVector, C64};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionOptions {
    pub max_order: usize,
    /// Upper bound on `N^M`.
    pub memory_cap: f64,
    /// Shifted-matrix condition number above which `Resonance` is raised.
    pub resonance_tol: f64,
    /// `|psi|` beyond which reconstruction logs a warning.
    pub validity_radius: Option<f64>,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            max_order: 8,
            memory_cap: 1e9,
            resonance_tol: 1e12,
            validity_radius: None,
        }
    }
}

/// Solved series coefficients. Keys are sorted tuples of slow-mode indices
/// (zero-based); the order-1 entries are the right eigenvectors.
#[derive(Debug, Clone)]
pub struct ExpansionTensors {
    pub order: usize,
    pub beta: usize,
    pub x0: Vec<f64>,
    /// Slow eigenvalues `lambda_1 .. lambda_beta`.
    pub values: Vec<C64>,
    pub partner: Vec<Option<usize>>,
    pub coeffs: BTreeMap<Vec<usize>, CVector>,
    /// Condition number of each shifted solve, by tuple.
    pub conds: BTreeMap<Vec<usize>, f64>,
    pub validity_radius: Option<f64>,
}

/// Sparse polynomial in the slow coordinates, keyed by sorted tuple.
type Poly = BTreeMap<Vec<usize>, C64>;

fn merge(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out
}

fn poly_mul(a: &Poly, b: &Poly, degree: usize) -> Poly {
    let mut out = Poly::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            if ka.len() + kb.len() > degree {
                continue;
            }
            *out.entry(merge(ka, kb)).or_insert(C64::new(0.0, 0.0)) += va * vb;
        }
    }
    out
}

/// Per-component polynomials `x_i(psi) - x0_i` from series coefficients.
fn component_polys(coeffs: &BTreeMap<Vec<usize>, CVector>, n: usize, below: usize) -> Vec<Poly> {
    let mut out = vec![Poly::new(); n];
    for (idx, h) in coeffs {
        if idx.len() >= below {
            continue;
        }
        for i in 0..n {
            if h[i] != C64::new(0.0, 0.0) {
                out[i].insert(idx.clone(), h[i]);
            }
        }
    }
    out
}

/// Nonlinear part of `F(x0 + d(psi))`, returning the coefficients of total
/// degree `order` for every output component. Only coefficients of `series`
/// with total degree below `order` are read.
pub fn assemble_q(
    tensors: &[DerivativeTensor],
    series: &BTreeMap<Vec<usize>, CVector>,
    n: usize,
    order: usize,
) -> BTreeMap<Vec<usize>, CVector> {
    let d = component_polys(series, n, order);
    let mut memo: HashMap<Vec<usize>, Poly> = HashMap::new();
    let mut q: BTreeMap<Vec<usize>, CVector> = BTreeMap::new();
    for t in tensors.iter().filter(|t| t.order <= order) {
        for ((out, s), val) in &t.entries {
            if *val == 0.0 {
                continue;
            }
            let coeff = t.taylor_coefficient(*out, s);
            let prod = product(&d, s, order, &mut memo);
            for (mono, c) in prod.iter().filter(|(m, _)| m.len() == order) {
                q.entry(mono.clone()).or_insert_with(|| CVector::zeros(n))[*out] += c * coeff;
            }
        }
    }
    q
}

/// `prod_m d_{s_m}` truncated at `degree`, memoized by sorted prefix.
fn product(d: &[Poly], s: &[usize], degree: usize, memo: &mut HashMap<Vec<usize>, Poly>) -> Poly {
    if s.len() == 1 {
        return d[s[0]].clone();
    }
    if let Some(p) = memo.get(s) {
        return p.clone();
    }
    let head = product(d, &s[..s.len() - 1], degree, memo);
    let p = poly_mul(&head, &d[s[s.len() - 1]], degree);
    memo.insert(s.to_vec(), p.clone());
    p
}

/// Sum of the slow eigenvalues over a tuple.
fn tuple_rate(values: &[C64], idx: &[usize]) -> C64 {
    idx.iter().map(|&i| values[i]).sum()
}

/// Image of a tuple under complex conjugation of the slow coordinates.
fn conjugate_tuple(partner: &[Option<usize>], idx: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = idx.iter().map(|&i| partner[i].unwrap_or(i)).collect();
    out.sort_unstable();
    out
}

/// Solve for all coefficients up to `order` from derivative tensors at `x0`.
pub fn solve_expansion(
    spec: &Spectrum,
    tensors: &[DerivativeTensor],
    order: usize,
    opts: &ExpansionOptions,
) -> Result<ExpansionTensors> {
    let n = spec.dim();
    let beta = spec.beta();
    if order == 0 {
        return Err(Error::InvalidConfig("expansion order must be at least 1".into()));
    }
    let estimate = (n as f64).powi(order as i32);
    if order > opts.max_order || estimate > opts.memory_cap {
        return Err(Error::OrderTooHigh { order, estimate });
    }
    if tensors.len() + 1 < order {
        return Err(Error::OrderUnavailable {
            order: tensors.len() + 2,
        });
    }
    let partner: Vec<Option<usize>> = (0..beta)
        .map(|k| spec.partner[k].filter(|&p| p < beta))
        .collect();
    let values: Vec<C64> = spec.values[..beta].to_vec();
    let mut coeffs = BTreeMap::new();
    let mut conds = BTreeMap::new();
    for k in 0..beta {
        coeffs.insert(vec![k], spec.v(k));
    }
    let jac = to_complex(&spec.jacobian);
    for m in 2..=order {
        let q = assemble_q(tensors, &coeffs, n, m);
        let tuples = sorted_tuples(beta, m);
        let solved: Vec<Result<(Vec<usize>, CVector, f64)>> = tuples
            .into_par_iter()
            .map(|idx| {
                let rhs = -q.get(&idx).cloned().unwrap_or_else(|| CVector::zeros(n));
                let shifted = &jac - CMatrix::identity(n, n) * tuple_rate(&values, &idx);
                let cond = cond2(&shifted);
                if !(cond <= opts.resonance_tol) {
                    return Err(Error::Resonance { tuple: idx, cond });
                }
                let (h, _) = solve(&shifted, &rhs)?;
                Ok((idx, h, cond))
            })
            .collect();
        let mut level = BTreeMap::new();
        for r in solved {
            let (idx, h, cond) = r?;
            conds.insert(idx.clone(), cond);
            level.insert(idx, h);
        }
        // exact conjugate symmetry
        let keys: Vec<Vec<usize>> = level.keys().cloned().collect();
        for idx in keys {
            let c = conjugate_tuple(&partner, &idx);
            if c > idx {
                let a = level[&idx].clone();
                let b = level[&c].clone();
                let avg = (&a + b.map(|z| z.conj())) * c64(0.5, 0.0);
                level.insert(c, avg.map(|z| z.conj()));
                level.insert(idx, avg);
            } else if c == idx {
                let h = level[&idx].map(|z| c64(z.re, 0.0));
                level.insert(idx, h);
            }
        }
        coeffs.extend(level);
    }
    Ok(ExpansionTensors {
        order,
        beta,
        x0: spec.x0.clone(),
        values,
        partner,
        coeffs,
        conds,
        validity_radius: opts.validity_radius,
    })
}

/// Derivative tensors of `model` at the fixed point followed by
/// [`solve_expansion`].
pub fn expand(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    order: usize,
    opts: &ExpansionOptions,
    tensor_opts: &TensorOptions,
) -> Result<(ExpansionTensors, TensorSource)> {
    let estimate = (spec.dim() as f64).powi(order as i32);
    if order > opts.max_order || estimate > opts.memory_cap {
        return Err(Error::OrderTooHigh { order, estimate });
    }
    let (tensors, source) = derivative_tensors(model, &spec.x0, order, tensor_opts)?;
    Ok((solve_expansion(spec, &tensors, order, opts)?, source))
}

fn monomial(psi: &[C64], idx: &[usize]) -> C64 {
    idx.iter().map(|&i| psi[i]).product()
}

impl ExpansionTensors {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn get(&self, idx: &[usize]) -> Option<&CVector> {
        let mut key = idx.to_vec();
        key.sort_unstable();
        self.coeffs.get(&key)
    }

    fn check_radius(&self, psi: &[C64]) {
        if let Some(r) = self.validity_radius {
            let size = psi.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
            if size > r {
                warn!("isostable coordinates |psi| = {size:.3e} outside the validity radius {r:.3e}");
            }
        }
    }

    /// Complex series value `x(psi) - x0` truncated at `order`.
    pub fn displacement(&self, psi: &[C64], order: usize) -> CVector {
        let mut out = CVector::zeros(self.dim());
        for (idx, h) in self.coeffs.iter().filter(|(k, _)| k.len() <= order) {
            out += h * monomial(psi, idx);
        }
        out
    }

    /// Real state `x0 + sum h_a psi^a` over all solved orders; `psi` holds
    /// all `beta` slow coordinates (conjugate pairs conjugate).
    pub fn reconstruct_state(&self, psi: &[C64]) -> Result<Vec<f64>> {
        self.reconstruct_truncated(psi, self.order)
    }

    pub fn reconstruct_truncated(&self, psi: &[C64], order: usize) -> Result<Vec<f64>> {
        if psi.len() != self.beta {
            return Err(Error::GridMismatch(format!(
                "{} isostable coordinates for {} slow modes",
                psi.len(),
                self.beta
            )));
        }
        self.check_radius(psi);
        let d = self.displacement(psi, order);
        Ok(self.x0.iter().zip(d.iter()).map(|(x, z)| x + z.re).collect())
    }

    /// `g_j = dx/dpsi_j` from the series truncated at `order`.
    pub fn g_series(&self, psi: &[C64], j: usize, order: usize) -> Result<CVector> {
        if order > self.order {
            return Err(Error::OrderUnavailable { order });
        }
        if j >= self.beta || psi.len() != self.beta {
            return Err(Error::OutOfRange {
                beta: j + 1,
                dim: self.beta,
            });
        }
        let mut out = CVector::zeros(self.dim());
        for (idx, h) in self.coeffs.iter().filter(|(k, _)| k.len() <= order) {
            let mult = idx.iter().filter(|&&i| i == j).count();
            if mult == 0 {
                continue;
            }
            let mut rest = idx.clone();
            let pos = rest.iter().position(|&i| i == j).unwrap();
            rest.remove(pos);
            out += h * (monomial(psi, &rest) * mult as f64);
        }
        Ok(out)
    }

    /// Time derivative of the series under `psi_k' = lambda_k psi_k`.
    pub fn series_velocity(&self, psi: &[C64]) -> CVector {
        let mut out = CVector::zeros(self.dim());
        for (idx, h) in &self.coeffs {
            out += h * (monomial(psi, idx) * tuple_rate(&self.values, idx));
        }
        out
    }

    /// Expand independent coordinates (one per conjugate pair, as returned
    /// by `Spectrum::independent_slow_modes`) to all `beta` slow coordinates.
    pub fn full_psi(&self, independent: &[C64]) -> Vec<C64> {
        let mut psi = vec![C64::new(0.0, 0.0); self.beta];
        let mut it = independent.iter();
        for k in 0..self.beta {
            match self.partner[k] {
                Some(p) if p < k => psi[k] = psi[p].conj(),
                _ => psi[k] = *it.next().unwrap_or(&C64::new(0.0, 0.0)),
            }
        }
        psi
    }

    pub fn to_export(&self) -> ExpansionExport {
        ExpansionExport {
            order: self.order,
            tuples: self
                .coeffs
                .iter()
                .map(|(idx, h)| ExportTuple {
                    idx: idx.iter().map(|i| i + 1).collect(),
                    re: h.iter().map(|z| z.re).collect(),
                    im: h.iter().map(|z| z.im).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_export())?)
    }
}

/// JSON layout of the solved coefficients; indices are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionExport {
    pub order: usize,
    pub tuples: Vec<ExportTuple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportTuple {
    pub idx: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}
