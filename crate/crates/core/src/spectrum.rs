//! Fixed points, linearization and slow-mode selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DynamicalModel;
use crate::numerics::eigen::eig_real;
use crate::numerics::linalg::{solve_real, CMatrix, CVector, C64};

const NEWTON_MAX_ITER: usize = 30;
const LINE_SEARCH_HALVINGS: usize = 30;

/// Linearization at a stable fixed point with biorthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub x0: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sorted ascending by decay rate `|Re lambda|`.
    pub values: Vec<C64>,
    /// Column `k` is `v_k`.
    pub right: CMatrix,
    /// Column `k` is `w_k`, with `w_j^T v_k = delta_jk`.
    pub left: CMatrix,
    pub partner: Vec<Option<usize>>,
    pub beta: Option<usize>,
    pub gap_ratio: Option<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn v(&self, k: usize) -> CVector {
        self.right.column(k).into_owned()
    }

    pub fn w(&self, k: usize) -> CVector {
        self.left.column(k).into_owned()
    }

    /// Selected slow-mode count; panics if `select_beta` was never applied.
    pub fn beta(&self) -> usize {
        self.beta.expect("slow-mode count not selected")
    }

    pub fn slow_values(&self) -> &[C64] {
        &self.values[..self.beta()]
    }

    /// Decay rate of the slowest fast mode, `|Re lambda_{beta+1}|`.
    pub fn fast_rate(&self) -> f64 {
        self.values[self.beta()].re.abs()
    }

    /// Decay rate of the slowest mode, `|Re lambda_1|`.
    pub fn slow_rate(&self) -> f64 {
        self.values[0].re.abs()
    }

    /// Linear isostable coordinates `w_k^T (x - x0)` for `k < beta`.
    pub fn linear_psi(&self, x: &[f64]) -> Vec<C64> {
        (0..self.beta())
            .map(|k| {
                (0..self.dim())
                    .map(|i| self.left[(i, k)] * (x[i] - self.x0[i]))
                    .sum()
            })
            .collect()
    }

    /// `x0 + sum_k psi_k v_k` (real part).
    pub fn linear_state(&self, psi: &[C64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (k, p) in psi.iter().enumerate() {
            for i in 0..self.dim() {
                x[i] += (self.right[(i, k)] * p).re;
            }
        }
        x
    }

    /// Slow-mode indices with one representative (the lower index) per
    /// conjugate pair.
    pub fn independent_slow_modes(&self) -> Vec<usize> {
        let beta = self.beta();
        (0..beta)
            .filter(|&k| match self.partner[k] {
                Some(p) => k < p,
                None => true,
            })
            .collect()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            x0: self.x0.clone(),
            eigenvalues: self.values.iter().map(|z| [z.re, z.im]).collect(),
            beta: self.beta,
            gap_ratio: self.gap_ratio,
        }
    }
}

/// Serializable digest of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub x0: Vec<f64>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub beta: Option<usize>,
    pub gap_ratio: Option<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton iteration with step halving. `newton_tol` defaults to
/// `1e-12 (1 + |x|)`.
pub fn find_fixed_point(
    model: &dyn DynamicalModel,
    guess: &[f64],
    newton_tol: Option<f64>,
) -> Result<Vec<f64>> {
    let n = model.dim();
    if guess.len() != n {
        return Err(Error::GridMismatch(format!(
            "fixed-point guess has length {} but the model has dimension {n}",
            guess.len()
        )));
    }
    let tol_for = |x: &[f64]| newton_tol.unwrap_or(1e-12 * (1.0 + inf_norm(x)));
    let mut x = guess.to_vec();
    let mut f = model.eval(&x);
    let mut fnorm = inf_norm(&f);
    let mut iter = 0;
    while fnorm > tol_for(&x) {
        if iter >= NEWTON_MAX_ITER || !fnorm.is_finite() {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: fnorm,
            });
        }
        iter += 1;
        let jac = model.jacobian(&x);
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let dx = solve_real(&jac, &rhs)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..LINE_SEARCH_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            let ft = model.eval(&trial);
            let nt = inf_norm(&ft);
            if nt.is_finite() && nt < fnorm {
                x = trial;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: fnorm,
            });
        }
    }
    let jac = model.jacobian(&x);
    let max_re = jac
        .clone()
        .complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
    if max_re >= 0.0 {
        return Err(Error::UnstableFixedPoint { re: max_re });
    }
    Ok(x)
}

/// Sorted biorthonormal spectrum of the Jacobian at `x0`.
pub fn linearize(model: &dyn DynamicalModel, x0: &[f64]) -> Result<Spectrum> {
    let jacobian = model.jacobian(x0);
    let es = eig_real(&jacobian)?;
    if let Some(z) = es.values.iter().find(|z| z.re >= 0.0) {
        return Err(Error::UnstableFixedPoint { re: z.re });
    }
    Ok(Spectrum {
        x0: x0.to_vec(),
        jacobian,
        values: es.values,
        right: es.right,
        left: es.left,
        partner: es.partner,
        beta: None,
        gap_ratio: None,
    })
}

fn admissible(spec: &Spectrum, beta: usize) -> bool {
    (0..beta).all(|k| spec.partner[k].map_or(true, |p| p < beta))
}

fn gap(spec: &Spectrum, beta: usize) -> f64 {
    spec.values[beta].re.abs() / spec.values[beta - 1].re.abs()
}

/// Choose the slow-mode count, either as requested or by maximizing the
/// decay-rate ratio `|Re lambda_{beta+1}| / |Re lambda_beta|`.
pub fn select_beta(spec: &mut Spectrum, requested: Option<usize>) -> Result<usize> {
    let n = spec.dim();
    let beta = match requested {
        Some(b) => {
            if b == 0 || b >= n {
                return Err(Error::OutOfRange { beta: b, dim: n });
            }
            if !admissible(spec, b) {
                return Err(Error::PairSplit { beta: b });
            }
            b
        }
        None => {
            let mut best: Option<(usize, f64)> = None;
            for b in 1..n {
                if !admissible(spec, b) {
                    continue;
                }
                let g = gap(spec, b);
                if best.map_or(true, |(_, bg)| g > bg) {
                    best = Some((b, g));
                }
            }
            best.ok_or(Error::OutOfRange { beta: 0, dim: n })?.0
        }
    };
    let g = gap(spec, beta);
    if g < 2.0 {
        log::warn!("weak spectral gap {g:.3} for beta = {beta}");
    }
    spec.beta = Some(beta);
    spec.gap_ratio = Some(g);
    Ok(beta)
}

/// Fixed point from the model's default guess, linearization and slow-mode
/// selection in one call.
pub fn analyze(model: &dyn DynamicalModel, beta: Option<usize>) -> Result<Spectrum> {
    let x0 = find_fixed_point(model, &model.fixed_point_guess(), None)?;
    let mut spec = linearize(model, &x0)?;
    select_beta(&mut spec, beta)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, LinearModel, ModelSpec};
    use crate::numerics::linalg::c64;

    fn model(name: &str) -> std::sync::Arc<dyn DynamicalModel> {
        builtin(&ModelSpec::named(name)).unwrap()
    }

    #[test]
    fn planar_fixed_point_is_origin() {
        let m = model("planar");
        let x = find_fixed_point(m.as_ref(), &[0.5, 0.5], None).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn goodwin_fixed_point_and_eigenvalues() {
        let m = model("goodwin");
        let x = find_fixed_point(m.as_ref(), &[0.1, 0.3, 1.8], None).unwrap();
        for (a, b) in x.iter().zip([0.12, 0.32, 1.84]) {
            assert!((a - b).abs() <= 0.005, "{x:?}");
        }
        let mut s = linearize(m.as_ref(), &x).unwrap();
        assert!((s.values[0] - c64(-0.022, -0.26)).norm() <= 0.01);
        assert!((s.values[1] - c64(-0.022, 0.26)).norm() <= 0.01);
        assert!((s.values[2] - c64(-0.53, 0.0)).norm() <= 0.01);
        assert_eq!(select_beta(&mut s, None).unwrap(), 2);
        assert!((s.gap_ratio.unwrap() - 24.0).abs() < 1.0);
    }

    #[test]
    fn pendulum_and_coupled_spectra() {
        let s = analyze(model("pendulum").as_ref(), None).unwrap();
        assert!((s.values[1] - c64(-0.05, 1.11)).norm() <= 0.02);
        assert!((s.values[2] - c64(-8.0, 0.0)).norm() <= 0.02);
        assert_eq!(s.beta(), 2);
        assert!((s.gap_ratio.unwrap() - 160.0).abs() < 1.0);

        let m = model("coupled(10)");
        let x = find_fixed_point(m.as_ref(), &[0.0; 20], None).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        let s = analyze(m.as_ref(), None).unwrap();
        assert!((s.values[1] - c64(-0.012, 0.369)).norm() <= 0.005);
        assert!((s.values[3] - c64(-0.216, 0.383)).norm() <= 0.005, "{:?}", &s.values[..4]);
        assert_eq!(s.beta(), 2);
    }

    #[test]
    fn planar_beta_is_one() {
        let s = analyze(model("planar").as_ref(), None).unwrap();
        assert_eq!(s.beta(), 1);
        assert!((s.gap_ratio.unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn beta_validation() {
        let mut s = linearize(model("goodwin").as_ref(), &[0.12242, 0.32422, 1.84442]).unwrap();
        assert!(matches!(select_beta(&mut s, Some(1)), Err(Error::PairSplit { .. })));
        assert!(matches!(select_beta(&mut s, Some(3)), Err(Error::OutOfRange { .. })));
        assert!(matches!(select_beta(&mut s, Some(0)), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn unstable_and_unreachable() {
        let m = LinearModel::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -1.0]));
        assert!(matches!(
            find_fixed_point(&m, &[0.0, 0.0], None),
            Err(Error::UnstableFixedPoint { .. })
        ));
    }

    #[test]
    fn linear_psi_is_left_projection() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, 0.5, 0.0, -2.0]);
        let m = LinearModel::new(a);
        let s = analyze(&m, None).unwrap();
        let psi = s.linear_psi(&[0.3, -0.4]);
        let w = s.w(0);
        assert!((psi[0] - (w[0] * 0.3 - w[1] * 0.4)).norm() < 1e-15);
    }
}
