//! Higher-order derivative tensors of a vector field at a point.
//!
//! Entries are full partial derivatives `d^k f_i / dx_{s_1} ... dx_{s_k}`
//! keyed by output index and the sorted index tuple `s`; symmetry makes the
//! sorted tuple a complete key. `to_kronecker` expands to the dense layout in
//! which row `i` holds `vec` of the `k`-th derivative of `f_i`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::scalar::{multiplicity_factorial, Jet};
use super::DynamicalModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTensor {
    pub order: usize,
    pub dim: usize,
    pub entries: BTreeMap<(usize, Vec<usize>), f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorSource {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorOptions {
    pub allow_fallback: bool,
    /// Relative disagreement between the two finite-difference step sizes
    /// above which `FdUnreliable` is raised.
    pub fd_tol: f64,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self {
            allow_fallback: true,
            fd_tol: 1e-3,
        }
    }
}

impl DerivativeTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, output: usize, index: &[usize]) -> f64 {
        let mut key = index.to_vec();
        key.sort_unstable();
        self.entries.get(&(output, key)).copied().unwrap_or(0.0)
    }

    /// Taylor coefficient `entry / prod(multiplicity!)` so that
    /// `f_i(x0 + d) = sum over sorted s of coeff * prod d_{s_m}`.
    pub fn taylor_coefficient(&self, output: usize, sorted: &[usize]) -> f64 {
        self.entries
            .get(&(output, sorted.to_vec()))
            .map_or(0.0, |v| v / multiplicity_factorial(sorted))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    /// Dense `dim x dim^order` matrix; column index enumerates the Kronecker
    /// power with the first tensor index varying slowest.
    pub fn to_kronecker(&self) -> DMatrix<f64> {
        let n = self.dim;
        let cols = n.pow(self.order as u32);
        let mut out = DMatrix::zeros(n, cols);
        let mut idx = vec![0usize; self.order];
        for c in 0..cols {
            let mut rem = c;
            for slot in (0..self.order).rev() {
                idx[slot] = rem % n;
                rem /= n;
            }
            for i in 0..n {
                out[(i, c)] = self.get(i, &idx);
            }
        }
        out
    }

    /// Apply to the same vector in every slot: `sum_s D[i,s] d_{s_1} ... d_{s_k}`.
    pub fn apply_power(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for ((i, s), v) in &self.entries {
            let coeff = v * permutations(s);
            out[*i] += coeff * s.iter().map(|&j| d[j]).product::<f64>();
        }
        out
    }
}

/// Number of distinct orderings of a sorted multiset.
fn permutations(sorted: &[usize]) -> f64 {
    let k = sorted.len();
    (1..=k).map(|i| i as f64).product::<f64>() / multiplicity_factorial(sorted)
}

/// All sorted index tuples of length `k` over `0..n`.
pub fn sorted_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

/// Tensors of orders `2..=order` from Taylor jets of a generic vector field.
pub fn tensors_from_jets<F>(eval: F, x0: &[f64], order: usize) -> Vec<DerivativeTensor>
where
    F: Fn(&[Jet]) -> Vec<Jet>,
{
    let n = x0.len();
    let vars: Vec<Jet> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(v, i, order))
        .collect();
    let f = eval(&vars);
    let mut out: Vec<DerivativeTensor> = (2..=order).map(|k| DerivativeTensor::zeros(k, n)).collect();
    for (i, fi) in f.iter().enumerate() {
        for (m, &c) in &fi.terms {
            let k = m.len();
            if k < 2 || k > order || c == 0.0 {
                continue;
            }
            let s: Vec<usize> = m.iter().map(|&v| v as usize).collect();
            let d = c * multiplicity_factorial(&s);
            out[k - 2].entries.insert((i, s), d);
        }
    }
    out
}

/// Nested central differences of the Jacobian: the order-`k` tensor from
/// mixed `(k-1)`-th differences in directions `rest`.
fn fd_tensor(model: &dyn DynamicalModel, x0: &[f64], k: usize, scale: f64) -> DerivativeTensor {
    let n = x0.len();
    let h0 = f64::EPSILON.powf(1.0 / (k as f64 + 1.0)) * scale;
    let hs: Vec<f64> = x0.iter().map(|v| h0 * v.abs().max(1.0)).collect();
    let mut sums: BTreeMap<(usize, Vec<usize>), (f64, usize)> = BTreeMap::new();
    let mut x = x0.to_vec();
    for rest in sorted_tuples(n, k - 1) {
        let m = rest.len();
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for signs in 0..(1u32 << m) {
            x.copy_from_slice(x0);
            let mut sign = 1.0;
            for (b, &dir) in rest.iter().enumerate() {
                let s = if signs & (1 << b) != 0 { -1.0 } else { 1.0 };
                sign *= s;
                x[dir] += s * hs[dir];
            }
            acc += model.jacobian(&x) * sign;
        }
        let denom: f64 = rest.iter().map(|&d| 2.0 * hs[d]).product();
        for i in 0..n {
            for j in 0..n {
                let mut key = rest.clone();
                key.push(j);
                key.sort_unstable();
                let e = sums.entry((i, key)).or_insert((0.0, 0));
                e.0 += acc[(i, j)] / denom;
                e.1 += 1;
            }
        }
    }
    let mut t = DerivativeTensor::zeros(k, n);
    for (key, (s, c)) in sums {
        let v = s / c as f64;
        if v != 0.0 {
            t.entries.insert(key, v);
        }
    }
    t
}

fn fd_tensors(
    model: &dyn DynamicalModel,
    x0: &[f64],
    from: usize,
    order: usize,
    fd_tol: f64,
) -> Result<Vec<DerivativeTensor>> {
    let mut out = Vec::new();
    for k in from..=order {
        let a = fd_tensor(model, x0, k, 1.0);
        let b = fd_tensor(model, x0, k, 0.5);
        let scale = a.max_abs().max(b.max_abs());
        let mut diff = 0.0_f64;
        for key in a.entries.keys().chain(b.entries.keys()) {
            let va = a.entries.get(key).copied().unwrap_or(0.0);
            let vb = b.entries.get(key).copied().unwrap_or(0.0);
            diff = diff.max((va - vb).abs());
        }
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if rel > fd_tol {
            return Err(Error::FdUnreliable { order: k, rel_diff: rel });
        }
        // drop entries that are indistinguishable from rounding noise
        let floor = fd_tol * scale;
        let mut t = b;
        t.entries.retain(|_, v| v.abs() > floor);
        out.push(t);
    }
    Ok(out)
}

/// Derivative tensors of orders `2..=order` at `x0`. Uses the model's
/// analytic provider where it reaches, and the finite-difference fallback
/// for the remaining orders when allowed.
pub fn derivative_tensors(
    model: &dyn DynamicalModel,
    x0: &[f64],
    order: usize,
    opts: &TensorOptions,
) -> Result<(Vec<DerivativeTensor>, TensorSource)> {
    if order < 2 {
        return Ok((Vec::new(), TensorSource::Analytic));
    }
    let cap = model.analytic_tensor_order();
    let mut tensors = if cap >= 2 {
        model
            .analytic_tensors(x0, order.min(cap))
            .ok_or(Error::OrderUnavailable { order: 2 })?
    } else {
        Vec::new()
    };
    if tensors.len() + 1 >= order {
        return Ok((tensors, TensorSource::Analytic));
    }
    if !opts.allow_fallback {
        return Err(Error::OrderUnavailable {
            order: tensors.len() + 2,
        });
    }
    let from = tensors.len() + 2;
    tensors.extend(fd_tensors(model, x0, from, order, opts.fd_tol)?);
    Ok((tensors, TensorSource::FiniteDifference))
}

/// Finite-difference-only tensors, for cross-checking analytic providers.
pub fn fd_derivative_tensors(
    model: &dyn DynamicalModel,
    x0: &[f64],
    order: usize,
    fd_tol: f64,
) -> Result<Vec<DerivativeTensor>> {
    fd_tensors(model, x0, 2, order, fd_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_enumeration() {
        assert_eq!(sorted_tuples(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(sorted_tuples(3, 3).len(), 10);
    }

    #[test]
    fn jets_of_a_cubic() {
        // f(x, y) = x^2 y
        let t = tensors_from_jets(
            |v| vec![v[0].clone() * v[0].clone() * v[1].clone(), v[1].clone()],
            &[1.0, 2.0],
            3,
        );
        // d2f/dx2 = 2y = 4, d2f/dxdy = 2x = 2, d3f/dx2dy = 2
        assert_eq!(t[0].get(0, &[0, 0]), 4.0);
        assert_eq!(t[0].get(0, &[1, 0]), 2.0);
        assert_eq!(t[1].get(0, &[0, 1, 0]), 2.0);
        let k = t[0].to_kronecker();
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(0, 1)], k[(0, 2)]);
        // second-order Taylor term: (1/2) D[d,d] with d = (1, 1)
        let applied = t[0].apply_power(&[1.0, 1.0]);
        assert_eq!(applied[0], 4.0 + 2.0 * 2.0);
    }
}
