//! Built-in benchmark systems.
//!
//! Each model writes its vector field once, generically over [`Scalar`], so
//! the same code yields `f64` evaluations and exact Taylor jets for the
//! derivative tensors. Jacobians are written out by hand for speed.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::scalar::{Jet, Scalar};
use super::tensor::{tensors_from_jets, DerivativeTensor};
use super::DynamicalModel;
use crate::error::{Error, Result};

/// Model selection as it appears in configuration files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// System matrix for the `linear` model, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

fn unknown(model: &str, name: &str) -> Error {
    Error::UnknownParameter {
        model: model.to_string(),
        name: name.to_string(),
    }
}

/// Construct a built-in model. Accepted names: `planar`, `goodwin`,
/// `pendulum`, `coupled` (or `coupled(N)`), `linear` (requires `matrix`).
pub fn builtin(spec: &ModelSpec) -> Result<Arc<dyn DynamicalModel>> {
    let raw = spec.name.trim();
    let (base, arg) = match raw.find('(') {
        Some(p) if raw.ends_with(')') => (&raw[..p], Some(&raw[p + 1..raw.len() - 1])),
        _ => (raw, None),
    };
    if arg.is_some() && base != "coupled" {
        return Err(Error::UnknownModel(raw.to_string()));
    }
    let model: Arc<dyn DynamicalModel> = match base {
        "planar" => {
            if let Some(k) = spec.params.keys().next() {
                return Err(unknown("planar", k));
            }
            Arc::new(Planar)
        }
        "goodwin" => {
            let mut m = Goodwin::default();
            for (k, &v) in &spec.params {
                m.set(k, v)?;
            }
            Arc::new(m)
        }
        "pendulum" => {
            let mut m = Pendulum::default();
            for (k, &v) in &spec.params {
                m.set(k, v)?;
            }
            Arc::new(m)
        }
        "coupled" => {
            let mut m = Coupled::default();
            if let Some(a) = arg {
                let n: usize = a
                    .trim()
                    .parse()
                    .map_err(|_| Error::UnknownModel(raw.to_string()))?;
                m.oscillators = n;
            }
            for (k, &v) in &spec.params {
                m.set(k, v)?;
            }
            if m.oscillators == 0 {
                return Err(Error::InvalidConfig("coupled model needs at least one oscillator".into()));
            }
            Arc::new(m)
        }
        "linear" => {
            if let Some(k) = spec.params.keys().next() {
                return Err(unknown("linear", k));
            }
            let rows = spec
                .matrix
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("linear model requires `matrix`".into()))?;
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidConfig("linear model matrix must be square".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Arc::new(LinearModel::new(DMatrix::from_row_slice(n, n, &flat)))
        }
        _ => return Err(Error::UnknownModel(raw.to_string())),
    };
    Ok(model)
}

/// `x1' = -0.05 x1`, `x2' = -(x2 - x1^4 + 2 x1^2)`; its slow manifold is the
/// quartic `x2 = (5/4) x1^4 - (20/9) x1^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Planar;

impl Planar {
    pub fn field<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let x1 = x[0].clone();
        let x2 = x[1].clone();
        let sq = x1.clone() * x1.clone();
        vec![
            x1 * -0.05,
            -(x2 - sq.clone() * sq.clone() + sq * 2.0),
        ]
    }

    /// Exact slow manifold `x2(x1)`.
    pub fn manifold(x1: f64) -> f64 {
        1.25 * x1.powi(4) - 20.0 / 9.0 * x1 * x1
    }
}

impl DynamicalModel for Planar {
    fn name(&self) -> String {
        "planar".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.field(x));
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let x1 = x[0];
        DMatrix::from_row_slice(2, 2, &[-0.05, 0.0, 4.0 * x1.powi(3) - 4.0 * x1, -1.0])
    }
    fn parameters(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
    fn analytic_tensor_order(&self) -> usize {
        usize::MAX
    }
    fn analytic_tensors(&self, x: &[f64], order: usize) -> Option<Vec<DerivativeTensor>> {
        Some(tensors_from_jets(|v: &[Jet]| self.field(v), x, order))
    }
    fn default_channel(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn fixed_point_guess(&self) -> Vec<f64> {
        vec![0.5, 0.5]
    }
    fn test_box(&self) -> Vec<(f64, f64)> {
        vec![(-1.5, 1.5), (-2.0, 2.0)]
    }
}

/// Three-variable Goodwin-type oscillator with a constant production term.
#[derive(Debug, Clone, PartialEq)]
pub struct Goodwin {
    pub n: f64,
    pub h: [f64; 6],
    pub k1: f64,
    pub k2: f64,
    pub k4: f64,
    pub k6: f64,
    pub alpha: f64,
}

impl Default for Goodwin {
    fn default() -> Self {
        Self {
            n: 6.0,
            h: [0.84, 0.42, 0.7, 0.35, 0.7, 0.35],
            k1: 1.0,
            k2: 1.0,
            k4: 1.0,
            k6: 1.0,
            alpha: 0.025,
        }
    }
}

impl Goodwin {
    fn set(&mut self, name: &str, v: f64) -> Result<()> {
        match name {
            "n" => self.n = v,
            "h1" => self.h[0] = v,
            "h2" => self.h[1] = v,
            "h3" => self.h[2] = v,
            "h4" => self.h[3] = v,
            "h5" => self.h[4] = v,
            "h6" => self.h[5] = v,
            "K1" => self.k1 = v,
            "K2" => self.k2 = v,
            "K4" => self.k4 = v,
            "K6" => self.k6 = v,
            "alpha" => self.alpha = v,
            _ => return Err(unknown("goodwin", name)),
        }
        Ok(())
    }

    pub fn field<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let [h1, h2, h3, h4, h5, h6] = self.h;
        let (b, c, d) = (x[0].clone(), x[1].clone(), x[2].clone());
        let k1n = self.k1.powf(self.n);
        let repress = (d.clone().powf(self.n) + k1n).recip() * (h1 * k1n);
        let deg_b = b.clone() * (b.clone() + self.k2).recip() * h2;
        let deg_c = c.clone() * (c.clone() + self.k4).recip() * h4;
        let deg_d = d.clone() * (d + self.k6).recip() * h6;
        vec![
            repress - deg_b + self.alpha,
            b * h3 - deg_c,
            c * h5 - deg_d,
        ]
    }
}

impl DynamicalModel for Goodwin {
    fn name(&self) -> String {
        "goodwin".into()
    }
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.field(x));
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let [h1, h2, h3, h4, h5, h6] = self.h;
        let (b, c, d) = (x[0], x[1], x[2]);
        let k1n = self.k1.powf(self.n);
        let dn = d.powf(self.n);
        let dd_repress = -h1 * k1n * self.n * d.powf(self.n - 1.0) / ((k1n + dn) * (k1n + dn));
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -h2 * self.k2 / ((self.k2 + b) * (self.k2 + b)),
                0.0,
                dd_repress,
                h3,
                -h4 * self.k4 / ((self.k4 + c) * (self.k4 + c)),
                0.0,
                0.0,
                h5,
                -h6 * self.k6 / ((self.k6 + d) * (self.k6 + d)),
            ],
        )
    }
    fn parameters(&self) -> Vec<(String, f64)> {
        let mut p = vec![("n".to_string(), self.n)];
        for (i, v) in self.h.iter().enumerate() {
            p.push((format!("h{}", i + 1), *v));
        }
        p.extend([
            ("K1".to_string(), self.k1),
            ("K2".to_string(), self.k2),
            ("K4".to_string(), self.k4),
            ("K6".to_string(), self.k6),
            ("alpha".to_string(), self.alpha),
        ]);
        p
    }
    fn analytic_tensor_order(&self) -> usize {
        usize::MAX
    }
    fn analytic_tensors(&self, x: &[f64], order: usize) -> Option<Vec<DerivativeTensor>> {
        Some(tensors_from_jets(|v: &[Jet]| self.field(v), x, order))
    }
    fn fixed_point_guess(&self) -> Vec<f64> {
        vec![0.1, 0.3, 1.8]
    }
    fn test_box(&self) -> Vec<(f64, f64)> {
        vec![(0.02, 0.6), (0.05, 1.0), (0.5, 3.0)]
    }
}

/// Pendulum whose damping depends on a fast auxiliary variable relaxing to
/// `x1^2 + x2^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            alpha: 0.23,
            beta: 0.1,
            gamma: 0.01,
            kappa: 8.0,
        }
    }
}

impl Pendulum {
    fn set(&mut self, name: &str, v: f64) -> Result<()> {
        match name {
            "alpha" => self.alpha = v,
            "beta" => self.beta = v,
            "gamma" => self.gamma = v,
            "kappa" => self.kappa = v,
            _ => return Err(unknown("pendulum", name)),
        }
        Ok(())
    }

    pub fn field<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (x1, x2, x3) = (x[0].clone(), x[1].clone(), x[2].clone());
        let r2 = x1.clone() * x1.clone() + x2.clone() * x2.clone();
        vec![
            x2.clone(),
            -(x1.clone() * self.alpha) - x1.sin() - (x3.clone() * self.gamma + self.beta) * x2,
            -((x3 - r2) * self.kappa),
        ]
    }
}

impl DynamicalModel for Pendulum {
    fn name(&self) -> String {
        "pendulum".into()
    }
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.field(x));
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                1.0,
                0.0,
                -self.alpha - x1.cos(),
                -(self.beta + self.gamma * x3),
                -self.gamma * x2,
                2.0 * self.kappa * x1,
                2.0 * self.kappa * x2,
                -self.kappa,
            ],
        )
    }
    fn parameters(&self) -> Vec<(String, f64)> {
        vec![
            ("alpha".into(), self.alpha),
            ("beta".into(), self.beta),
            ("gamma".into(), self.gamma),
            ("kappa".into(), self.kappa),
        ]
    }
    fn analytic_tensor_order(&self) -> usize {
        usize::MAX
    }
    fn analytic_tensors(&self, x: &[f64], order: usize) -> Option<Vec<DerivativeTensor>> {
        Some(tensors_from_jets(|v: &[Jet]| self.field(v), x, order))
    }
    fn default_channel(&self) -> Vec<f64> {
        vec![0.0, 1.0, 0.0]
    }
    fn fixed_point_guess(&self) -> Vec<f64> {
        vec![0.1, 0.0, 0.0]
    }
    fn test_box(&self) -> Vec<(f64, f64)> {
        vec![(-2.0, 2.0), (-2.0, 2.0), (0.0, 4.0)]
    }
}

/// Population of globally coupled planar oscillators, state ordered
/// `(x_1, y_1, x_2, y_2, ...)`; oscillator `j` (zero-based) has frequency
/// shift `rho_base + rho_step * j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupled {
    pub oscillators: usize,
    pub coupling: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho_base: f64,
    pub rho_step: f64,
}

impl Default for Coupled {
    fn default() -> Self {
        Self {
            oscillators: 10,
            coupling: 1.54,
            mu: -4.5,
            sigma: 0.05,
            rho_base: -0.2,
            rho_step: 4.0 / 90.0,
        }
    }
}

impl Coupled {
    fn set(&mut self, name: &str, v: f64) -> Result<()> {
        match name {
            "oscillators" => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidConfig("oscillators must be a positive integer".into()));
                }
                self.oscillators = v as usize
            }
            "K" => self.coupling = v,
            "mu" => self.mu = v,
            "sigma" => self.sigma = v,
            "rho_base" => self.rho_base = v,
            "rho_step" => self.rho_step = v,
            _ => return Err(unknown("coupled", name)),
        }
        Ok(())
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.rho_base + self.rho_step * j as f64
    }

    pub fn field<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.oscillators;
        let gain = self.coupling / n as f64;
        let mut total = x[0].clone() * 0.0;
        for j in 0..n {
            total = total + x[2 * j].clone();
        }
        let mut out = Vec::with_capacity(2 * n);
        for j in 0..n {
            let (xj, yj) = (x[2 * j].clone(), x[2 * j + 1].clone());
            let r2 = xj.clone() * xj.clone() + yj.clone() * yj.clone();
            let s = -(r2.clone()) + self.mu;
            let p = (r2 - self.mu) * self.rho(j) + 1.0;
            let others = (total.clone() - xj.clone()) * gain;
            out.push(xj.clone() * s.clone() * self.sigma - yj.clone() * p.clone() + others);
            out.push(yj * s * self.sigma + xj * p);
        }
        out
    }
}

impl DynamicalModel for Coupled {
    fn name(&self) -> String {
        format!("coupled({})", self.oscillators)
    }
    fn dim(&self) -> usize {
        2 * self.oscillators
    }
    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        let n = self.oscillators;
        let gain = self.coupling / n as f64;
        let total: f64 = (0..n).map(|j| x[2 * j]).sum();
        for j in 0..n {
            let (xj, yj) = (x[2 * j], x[2 * j + 1]);
            let r2 = xj * xj + yj * yj;
            let s = self.mu - r2;
            let p = 1.0 + self.rho(j) * (r2 - self.mu);
            out[2 * j] = self.sigma * xj * s - yj * p + gain * (total - xj);
            out[2 * j + 1] = self.sigma * yj * s + xj * p;
        }
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.oscillators;
        let gain = self.coupling / n as f64;
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let (xj, yj) = (x[2 * j], x[2 * j + 1]);
            let r2 = xj * xj + yj * yj;
            let s = self.mu - r2;
            let rho = self.rho(j);
            let p = 1.0 + rho * (r2 - self.mu);
            for i in 0..n {
                if i != j {
                    jac[(2 * j, 2 * i)] = gain;
                }
            }
            jac[(2 * j, 2 * j)] = self.sigma * s - 2.0 * self.sigma * xj * xj - 2.0 * rho * xj * yj;
            jac[(2 * j, 2 * j + 1)] = -2.0 * self.sigma * xj * yj - p - 2.0 * rho * yj * yj;
            jac[(2 * j + 1, 2 * j)] = -2.0 * self.sigma * xj * yj + p + 2.0 * rho * xj * xj;
            jac[(2 * j + 1, 2 * j + 1)] = self.sigma * s - 2.0 * self.sigma * yj * yj + 2.0 * rho * xj * yj;
        }
        jac
    }
    fn parameters(&self) -> Vec<(String, f64)> {
        vec![
            ("oscillators".into(), self.oscillators as f64),
            ("K".into(), self.coupling),
            ("mu".into(), self.mu),
            ("sigma".into(), self.sigma),
            ("rho_base".into(), self.rho_base),
            ("rho_step".into(), self.rho_step),
        ]
    }
    fn analytic_tensor_order(&self) -> usize {
        usize::MAX
    }
    fn analytic_tensors(&self, x: &[f64], order: usize) -> Option<Vec<DerivativeTensor>> {
        Some(tensors_from_jets(|v: &[Jet]| self.field(v), x, order))
    }
    fn default_channel(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect()
    }
}

/// `x' = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a }
    }

    pub fn field<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.a.nrows();
        (0..n)
            .map(|i| {
                let mut acc = x[0].clone() * 0.0;
                for j in 0..n {
                    acc = acc + x[j].clone() * self.a[(i, j)];
                }
                acc
            })
            .collect()
    }
}

impl DynamicalModel for LinearModel {
    fn name(&self) -> String {
        "linear".into()
    }
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
        }
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
    fn parameters(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
    fn analytic_tensor_order(&self) -> usize {
        usize::MAX
    }
    fn analytic_tensors(&self, x: &[f64], order: usize) -> Option<Vec<DerivativeTensor>> {
        Some(tensors_from_jets(|v: &[Jet]| self.field(v), x, order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fd_jacobian, tensor};

    fn all_builtins() -> Vec<Arc<dyn DynamicalModel>> {
        vec![
            builtin(&ModelSpec::named("planar")).unwrap(),
            builtin(&ModelSpec::named("goodwin")).unwrap(),
            builtin(&ModelSpec::named("pendulum")).unwrap(),
            builtin(&ModelSpec::named("coupled(10)")).unwrap(),
        ]
    }

    #[test]
    fn goodwin_defaults() {
        let g = Goodwin::default();
        let p: BTreeMap<String, f64> = g.parameters().into_iter().collect();
        assert_eq!(p["n"], 6.0);
        assert_eq!(p["h1"], 0.84);
        assert_eq!(p["h2"], 0.42);
        assert_eq!(p["h3"], 0.7);
        assert_eq!(p["h4"], 0.35);
        assert_eq!(p["h5"], 0.7);
        assert_eq!(p["h6"], 0.35);
        for k in ["K1", "K2", "K4", "K6"] {
            assert_eq!(p[k], 1.0);
        }
        assert_eq!(p["alpha"], 0.025);
    }

    #[test]
    fn pendulum_and_coupled_defaults() {
        let p = Pendulum::default();
        assert_eq!((p.alpha, p.beta, p.gamma, p.kappa), (0.23, 0.1, 0.01, 8.0));
        let c = Coupled::default();
        assert_eq!(c.oscillators, 10);
        assert_eq!((c.coupling, c.mu, c.sigma), (1.54, -4.5, 0.05));
        assert!((c.rho(0) + 0.2).abs() < 1e-15);
        assert!((c.rho(9) - (-0.2 + 36.0 / 90.0)).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(builtin(&ModelSpec::named("lorenz")), Err(Error::UnknownModel(_))));
        let spec = ModelSpec::named("goodwin").with_param("h7", 1.0);
        assert!(matches!(builtin(&spec), Err(Error::UnknownParameter { .. })));
        let spec = ModelSpec::named("planar").with_param("a", 1.0);
        assert!(matches!(builtin(&spec), Err(Error::UnknownParameter { .. })));
    }

    #[test]
    fn overrides_apply() {
        let m = builtin(&ModelSpec::named("pendulum").with_param("kappa", 4.0)).unwrap();
        assert!(m.parameters().contains(&("kappa".to_string(), 4.0)));
        let m = builtin(&ModelSpec::named("coupled(3)")).unwrap();
        assert_eq!(m.dim(), 6);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        for m in all_builtins() {
            let bx = m.test_box();
            for trial in 0..20 {
                // deterministic quasi-random points in the box
                let x: Vec<f64> = bx
                    .iter()
                    .enumerate()
                    .map(|(i, (lo, hi))| {
                        let u = ((trial as f64 + 1.0) * 0.618_034 + i as f64 * 0.414_214).fract();
                        lo + (hi - lo) * u
                    })
                    .collect();
                let ja = m.jacobian(&x);
                let jf = fd_jacobian(m.as_ref(), &x, 1e-6);
                let scale = ja.norm().max(1.0);
                assert!((ja - jf).norm() <= 1e-5 * scale, "{} at {:?}", m.name(), x);
            }
        }
    }

    #[test]
    fn coupled_origin_is_exact_equilibrium() {
        let m = Coupled::default();
        let f = m.eval(&vec![0.0; 20]);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generic_field_matches_rhs() {
        let c = Coupled::default();
        let x: Vec<f64> = (0..20).map(|i| 0.1 * (i as f64).sin()).collect();
        let a = c.field(&x);
        let b = c.eval(&x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn planar_second_derivative() {
        let t = Planar.analytic_tensors(&[0.0, 0.0], 5).unwrap();
        assert_eq!(t[0].get(1, &[0, 0]), -4.0);
        assert_eq!(t[2].get(1, &[0, 0, 0, 0]), 24.0);
        assert!(t[3].is_zero(0.0));
    }

    #[test]
    fn linear_tensors_vanish() {
        let m = LinearModel::new(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]));
        for t in m.analytic_tensors(&[0.3, -0.2], 5).unwrap() {
            assert!(t.is_zero(0.0));
        }
    }

    #[test]
    fn goodwin_second_order_analytic_matches_fd() {
        let g = Goodwin::default();
        let x0 = [0.12242, 0.32422, 1.84442];
        let a = &g.analytic_tensors(&x0, 2).unwrap()[0];
        let f = &tensor::fd_derivative_tensors(&g, &x0, 2, 1e-3).unwrap()[0];
        let scale = a.max_abs();
        for key in a.entries.keys().chain(f.entries.keys()) {
            let va = a.entries.get(key).copied().unwrap_or(0.0);
            let vf = f.entries.get(key).copied().unwrap_or(0.0);
            assert!((va - vf).abs() <= 1e-4 * scale, "{key:?}: {va} vs {vf}");
        }
    }
}
