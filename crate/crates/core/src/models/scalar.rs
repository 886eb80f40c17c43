//! Scalar abstraction so that model right-hand sides can be evaluated both on
//! `f64` and on truncated multivariate Taylor polynomials (`Jet`), the latter
//! giving exact derivative tensors of any order.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn recip(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn recip(self) -> Self {
        f64::recip(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Multiset of variable indices, stored sorted ascending.
pub type Monomial = Vec<u16>;

pub fn merge_monomials(a: &[u16], b: &[u16]) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Product of factorials of the multiplicities in a sorted monomial.
pub fn multiplicity_factorial(m: &[usize]) -> f64 {
    let mut out = 1.0;
    let mut run = 1usize;
    for w in m.windows(2) {
        if w[0] == w[1] {
            run += 1;
            out *= run as f64;
        } else {
            run = 1;
        }
    }
    out
}

/// Truncated multivariate Taylor polynomial with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub degree: usize,
    pub terms: BTreeMap<Monomial, f64>,
}

impl Jet {
    pub fn constant(value: f64, degree: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), value);
        Self { degree, terms }
    }

    /// The expansion of coordinate `index` about `value`.
    pub fn variable(value: f64, index: usize, degree: usize) -> Self {
        let mut j = Self::constant(value, degree);
        if degree >= 1 {
            j.terms.insert(vec![index as u16], 1.0);
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.terms.get(&Vec::new()).copied().unwrap_or(0.0)
    }

    pub fn coefficient(&self, m: &[u16]) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    fn combine(mut self, other: &Jet, sign: f64) -> Jet {
        self.degree = self.degree.max(other.degree);
        for (k, v) in &other.terms {
            *self.terms.entry(k.clone()).or_insert(0.0) += sign * v;
        }
        self
    }

    /// `f(self)` given `coeffs[k] = f^(k)(u0) / k!` at `u0 = self.value()`.
    fn compose(self, coeffs: &[f64]) -> Jet {
        let degree = self.degree;
        let mut tail = self;
        tail.terms.remove(&Vec::new());
        let mut acc = Jet::constant(coeffs[degree.min(coeffs.len() - 1)], degree);
        for k in (0..degree.min(coeffs.len() - 1)).rev() {
            acc = acc * tail.clone() + coeffs[k];
        }
        acc
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        self.combine(&rhs, 1.0)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self.combine(&rhs, -1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let degree = self.degree.max(rhs.degree);
        let mut terms = BTreeMap::new();
        for (ka, va) in &self.terms {
            for (kb, vb) in &rhs.terms {
                if ka.len() + kb.len() > degree {
                    continue;
                }
                *terms.entry(merge_monomials(ka, kb)).or_insert(0.0) += va * vb;
            }
        }
        Jet { degree, terms }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for v in self.terms.values_mut() {
            *v = -*v;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        *self.terms.entry(Vec::new()).or_insert(0.0) += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for v in self.terms.values_mut() {
            *v *= rhs;
        }
        self
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Scalar for Jet {
    fn sin(self) -> Self {
        let u0 = self.value();
        let (s, c) = u0.sin_cos();
        let cycle = [s, c, -s, -c];
        let coeffs: Vec<f64> = (0..=self.degree).map(|k| cycle[k % 4] / factorial(k)).collect();
        self.compose(&coeffs)
    }

    fn cos(self) -> Self {
        let u0 = self.value();
        let (s, c) = u0.sin_cos();
        let cycle = [c, -s, -c, s];
        let coeffs: Vec<f64> = (0..=self.degree).map(|k| cycle[k % 4] / factorial(k)).collect();
        self.compose(&coeffs)
    }

    fn recip(self) -> Self {
        let u0 = self.value();
        let coeffs: Vec<f64> = (0..=self.degree)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / u0.powi(k as i32 + 1))
            .collect();
        self.compose(&coeffs)
    }

    fn powf(self, p: f64) -> Self {
        let u0 = self.value();
        let mut binom = 1.0;
        let mut coeffs = Vec::with_capacity(self.degree + 1);
        for k in 0..=self.degree {
            coeffs.push(binom * u0.powf(p - k as f64));
            binom *= (p - k as f64) / (k + 1) as f64;
        }
        self.compose(&coeffs)
    }

    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut acc = Jet::constant(1.0, self.degree);
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }
}
