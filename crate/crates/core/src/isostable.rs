//! Isostable gradients `I_k`, dual vectors `g_k`, isostable evaluation by
//! forward flow, and state-transition matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::DynamicalModel;
use crate::numerics::linalg::{c64, to_complex, CMatrix, CVector, C64};
use crate::numerics::ode::{drive, IntegratorConfig, Interp, Rhs, Step};
use crate::spectrum::Spectrum;

/// A sampled trajectory with its time derivative at every sample, which
/// makes cubic Hermite interpolation between samples available.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
}

impl Path {
    pub fn new(t: Vec<f64>, x: Vec<Vec<f64>>, dx: Vec<Vec<f64>>) -> Result<Self> {
        if t.len() != x.len() || t.len() != dx.len() || t.is_empty() {
            return Err(Error::GridMismatch(format!(
                "path with {} times, {} states, {} derivatives",
                t.len(),
                x.len(),
                dx.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("path times must increase strictly".into()));
        }
        Ok(Self { t, x, dx })
    }

    /// Samples of a solution of `x' = sign * F(x)`.
    pub fn from_flow(model: &dyn DynamicalModel, t: Vec<f64>, x: Vec<Vec<f64>>, sign: f64) -> Result<Self> {
        let dx = x
            .iter()
            .map(|xi| model.eval(xi).into_iter().map(|v| sign * v).collect())
            .collect();
        Self::new(t, x, dx)
    }

    pub fn stationary(x0: &[f64], t: Vec<f64>) -> Result<Self> {
        let n = t.len();
        Self::new(t, vec![x0.to_vec(); n], vec![vec![0.0; x0.len()]; n])
    }

    /// The same curve parameterized by `t_end - t`.
    pub fn reversed(&self) -> Self {
        let t_end = *self.t.last().unwrap();
        Self {
            t: self.t.iter().rev().map(|t| t_end - t).collect(),
            x: self.x.iter().rev().cloned().collect(),
            dx: self.dx.iter().rev().map(|d| d.iter().map(|v| -v).collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn hermite(&self, i: usize, t: f64) -> Vec<f64> {
        Step {
            t0: self.t[i],
            t1: self.t[i + 1],
            interp: Interp::Hermite {
                x0: self.x[i].clone(),
                x1: self.x[i + 1].clone(),
                f0: self.dx[i].clone(),
                f1: self.dx[i + 1].clone(),
            },
        }
        .state_at(t)
    }

    /// Interpolated state, clamped to the covered time range.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.x[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.x[n - 1].clone();
        }
        let i = match self.t.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => return self.x[i].clone(),
            Err(i) => i - 1,
        };
        self.hermite(i, t)
    }
}

/// Complex covector/vector samples on a path grid.
#[derive(Debug, Clone)]
pub struct AdjointTrace {
    pub t: Vec<f64>,
    pub values: Vec<CVector>,
}

/// Classical RK4 on `Y' = A(x(t)) Y` along the path grid, one step per
/// interval, with the midpoint state from Hermite interpolation.
fn propagate_linear<F>(path: &Path, y0: CMatrix, mut coeff: F) -> Result<Vec<CMatrix>>
where
    F: FnMut(&[f64]) -> CMatrix,
{
    let mut out = Vec::with_capacity(path.len());
    let mut y = y0;
    out.push(y.clone());
    let mut a0 = coeff(&path.x[0]);
    for i in 0..path.len() - 1 {
        let h = path.t[i + 1] - path.t[i];
        let xm = path.hermite(i, path.t[i] + 0.5 * h);
        let am = coeff(&xm);
        let a1 = coeff(&path.x[i + 1]);
        let hc = c64(h, 0.0);
        let k1 = &a0 * &y;
        let k2 = &am * (&y + &k1 * (hc * 0.5));
        let k3 = &am * (&y + &k2 * (hc * 0.5));
        let k4 = &a1 * (&y + &k3 * hc);
        y += (k1 + k2 * c64(2.0, 0.0) + k3 * c64(2.0, 0.0) + k4) * (hc / 6.0);
        if y.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("linear propagation along path"));
        }
        out.push(y.clone());
        a0 = a1;
    }
    Ok(out)
}

fn check_dim(path: &Path, v: &CVector) -> Result<()> {
    if v.len() != path.dim() {
        return Err(Error::GridMismatch(format!(
            "vector of length {} on a path of dimension {}",
            v.len(),
            path.dim()
        )));
    }
    Ok(())
}

/// Solve `dI/dt~ = (J^T - lambda Id) I` along a path parameterized by
/// backward time `t~` (increasing), starting from `i_init` at the first
/// sample.
pub fn propagate_i_backward(
    model: &dyn DynamicalModel,
    path: &Path,
    lambda: C64,
    i_init: &CVector,
) -> Result<AdjointTrace> {
    check_dim(path, i_init)?;
    let n = path.dim();
    let shift = CMatrix::identity(n, n) * lambda;
    let ys = propagate_linear(path, CMatrix::from_column_slice(n, 1, i_init.as_slice()), |x| {
        to_complex(&model.jacobian(x).transpose()) - &shift
    })?;
    Ok(AdjointTrace {
        t: path.t.clone(),
        values: ys.into_iter().map(|m| m.column(0).into_owned()).collect(),
    })
}

/// Solve `g' = (J - lambda Id) g` forward along a path.
pub fn propagate_g_forward(
    model: &dyn DynamicalModel,
    path: &Path,
    lambda: C64,
    g_init: &CVector,
) -> Result<AdjointTrace> {
    check_dim(path, g_init)?;
    let n = path.dim();
    let shift = CMatrix::identity(n, n) * lambda;
    let ys = propagate_linear(path, CMatrix::from_column_slice(n, 1, g_init.as_slice()), |x| {
        to_complex(&model.jacobian(x)) - &shift
    })?;
    Ok(AdjointTrace {
        t: path.t.clone(),
        values: ys.into_iter().map(|m| m.column(0).into_owned()).collect(),
    })
}

/// State-transition matrix `Phi_J(t2, t1)` of the variational equation.
#[derive(Debug, Clone)]
pub struct Stm {
    pub t1: f64,
    pub t2: f64,
    pub phi: DMatrix<f64>,
}

impl Stm {
    pub fn identity(n: usize, t: f64) -> Self {
        Self {
            t1: t,
            t2: t,
            phi: DMatrix::identity(n, n),
        }
    }

    /// `Phi_k = Phi_J exp(-lambda_k (t2 - t1))`, the transition matrix of
    /// `g' = (J - lambda_k Id) g`.
    pub fn shifted(&self, lambda: C64) -> CMatrix {
        to_complex(&self.phi) * (-lambda * (self.t2 - self.t1)).exp()
    }

    /// `self` after `earlier`: `Phi(t3, t1) = Phi(t3, t2) Phi(t2, t1)`.
    pub fn compose(&self, earlier: &Stm) -> Result<Stm> {
        if (self.t1 - earlier.t2).abs() > 1e-9 * (1.0 + self.t1.abs()) {
            return Err(Error::GridMismatch(format!(
                "cannot compose transition matrices on [{}, {}] and [{}, {}]",
                earlier.t1, earlier.t2, self.t1, self.t2
            )));
        }
        Ok(Stm {
            t1: earlier.t1,
            t2: self.t2,
            phi: &self.phi * &earlier.phi,
        })
    }
}

/// Integrate `Phi' = J(x(t)) Phi` on a forward path grid.
pub fn state_transition(model: &dyn DynamicalModel, path: &Path) -> Result<Stm> {
    let n = path.dim();
    let ys = propagate_linear(path, CMatrix::identity(n, n), |x| to_complex(&model.jacobian(x)))?;
    let last = ys.last().unwrap();
    Ok(Stm {
        t1: path.t[0],
        t2: *path.t.last().unwrap(),
        phi: last.map(|z| z.re),
    })
}

/// Joint right-hand side for a state and its transition matrix.
struct FlowWithStm<'a> {
    model: &'a dyn DynamicalModel,
    n: usize,
}

impl Rhs for FlowWithStm<'_> {
    fn eval(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n;
        self.model.rhs(&y[..n], &mut dy[..n]);
        let jac = self.model.jacobian(&y[..n]);
        let phi = DMatrix::from_column_slice(n, n, &y[n..]);
        let d = jac * phi;
        dy[n..].copy_from_slice(d.as_slice());
        Ok(())
    }
}

/// Result of a forward flow with the accompanying transition matrix.
#[derive(Debug, Clone)]
pub struct FlowStm {
    pub duration: f64,
    pub x: Vec<f64>,
    pub stm: Stm,
    /// Whether the stop condition fired before the horizon.
    pub stopped: bool,
}

/// Flow `x' = F(x)` forward together with `Phi_J`, up to `horizon` or until
/// `stop(x)` holds at the end of an accepted step; in the latter case the
/// stopping time is refined on the dense output to the first time at which
/// `|x - center| <= radius`.
pub fn flow_with_stm(
    model: &dyn DynamicalModel,
    x: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
    center: &[f64],
    radius: f64,
) -> Result<FlowStm> {
    let n = model.dim();
    let mut y0 = x.to_vec();
    y0.extend(DMatrix::<f64>::identity(n, n).as_slice());
    let mut rhs = FlowWithStm { model, n };
    let dist = |y: &[f64]| -> f64 {
        y[..n]
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    if dist(&y0) <= radius {
        return Ok(FlowStm {
            duration: 0.0,
            x: x.to_vec(),
            stm: Stm::identity(n, 0.0),
            stopped: true,
        });
    }
    let mut hit: Option<(f64, Vec<f64>)> = None;
    let end = drive(&mut rhs, &y0, 0.0, horizon, cfg, |step| {
        let y1 = step.end_state();
        if dist(&y1) <= radius {
            let (mut lo, mut hi) = (step.t0, step.t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if dist(&step.state_at(mid)) <= radius {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hit = Some((hi, step.state_at(hi)));
            return Ok(false);
        }
        Ok(true)
    })?;
    let (t, y, stopped) = match hit {
        Some((t, y)) => (t, y, true),
        None => (end.t, end.x, false),
    };
    Ok(FlowStm {
        duration: t,
        x: y[..n].to_vec(),
        stm: Stm {
            t1: 0.0,
            t2: t,
            phi: DMatrix::from_column_slice(n, n, &y[n..]),
        },
        stopped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiOptions {
    /// Radius of the ball around `x0` in which the linear approximation is used.
    pub entry_radius: f64,
    /// Maximum forward time; defaults to `50 / |Re lambda_1|`.
    pub horizon: Option<f64>,
    pub integrator: IntegratorConfig,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self {
            entry_radius: 1e-3,
            horizon: None,
            integrator: IntegratorConfig::dopri5(1e-12, 1e-12),
        }
    }
}

/// Slow isostable coordinates of `x` by flowing forward into the entry ball
/// and projecting: `psi_k = w_k^T (phi(T, x) - x0) exp(-lambda_k T)`.
pub fn evaluate_psi(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    x: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<C64>> {
    let n = spec.dim();
    let horizon = opts.horizon.unwrap_or(50.0 / spec.slow_rate());
    let radius = opts.entry_radius;
    let mut rhs = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        model.rhs(y, dy);
        Ok(())
    };
    let dist = |y: &[f64]| -> f64 {
        y.iter()
            .zip(&spec.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let (t_hit, y_hit) = if dist(x) <= radius {
        (0.0, x.to_vec())
    } else {
        let mut hit: Option<(f64, Vec<f64>)> = None;
        let res = drive(&mut rhs, x, 0.0, horizon, &opts.integrator, |step| {
            if dist(&step.end_state()) <= radius {
                let (mut lo, mut hi) = (step.t0, step.t1);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if dist(&step.state_at(mid)) <= radius {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hit = Some((hi, step.state_at(hi)));
                return Ok(false);
            }
            Ok(true)
        });
        match res {
            _ if hit.is_some() => {}
            Ok(_) => {}
            Err(Error::BlowUp { t, .. }) => return Err(Error::BasinEscape { t }),
            Err(Error::NonFinite(_)) => return Err(Error::BasinEscape { t: f64::NAN }),
            Err(e) => return Err(e),
        }
        hit.ok_or(Error::HorizonExceeded { horizon })?
    };
    let beta = spec.beta();
    let mut psi: Vec<C64> = (0..beta)
        .map(|k| {
            let proj: C64 = (0..n).map(|i| spec.left[(i, k)] * (y_hit[i] - spec.x0[i])).sum();
            proj * (-spec.values[k] * t_hit).exp()
        })
        .collect();
    for k in 0..beta {
        if let Some(p) = spec.partner[k] {
            if p > k && p < beta {
                psi[p] = psi[k].conj();
            }
        }
    }
    Ok(psi)
}

/// Columns `[v_1 .. v_beta]` as a complex matrix.
pub fn slow_right(spec: &Spectrum) -> CMatrix {
    spec.right.columns(0, spec.beta()).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, LinearModel, ModelSpec, Planar};
    use crate::numerics::eigen::expm_diagonalizable;
    use crate::numerics::linalg::dot_t;
    use crate::numerics::ode::{integrate, linspace};
    use crate::spectrum::analyze;

    fn linear() -> (LinearModel, Spectrum) {
        let a = DMatrix::from_row_slice(3, 3, &[-0.1, 1.0, 0.0, -1.0, -0.1, 0.2, 0.0, 0.0, -3.0]);
        let m = LinearModel::new(a);
        let s = analyze(&m, None).unwrap();
        (m, s)
    }

    fn planar_manifold_path(t_end: f64, count: usize) -> Path {
        // backward-time path on the exact quartic: x1 = 0.01 exp(0.05 t~)
        let t = linspace(0.0, t_end, count);
        let x: Vec<Vec<f64>> = t
            .iter()
            .map(|&s| {
                let x1 = 0.01 * (0.05 * s).exp();
                vec![x1, Planar::manifold(x1)]
            })
            .collect();
        Path::from_flow(&Planar, t, x, -1.0).unwrap()
    }

    #[test]
    fn stationary_path_keeps_left_vector() {
        let (m, s) = linear();
        let path = Path::stationary(&s.x0, linspace(0.0, 10.0, 100)).unwrap();
        let tr = propagate_i_backward(&m, &path, s.values[0], &s.w(0)).unwrap();
        for v in &tr.values {
            assert!((v - s.w(0)).norm() < 1e-10);
        }
        let tr = propagate_g_forward(&m, &path, s.values[0], &s.v(0)).unwrap();
        for v in &tr.values {
            assert!((v - s.v(0)).norm() < 1e-10);
        }
    }

    #[test]
    fn planar_gradients_match_exact_isostables() {
        let s = analyze(&Planar, None).unwrap();
        let path = planar_manifold_path(90.0, 900);
        let i1 = propagate_i_backward(&Planar, &path, s.values[0], &s.w(0)).unwrap();
        for v in &i1.values {
            assert!((v[0] - c64(1.0, 0.0)).norm() < 1e-9);
            assert!(v[1].norm() < 1e-9);
        }
        // the fast gradient is unstable backward, so only a short window is checked
        let path = planar_manifold_path(10.0, 2000);
        let x1_0 = path.x[0][0];
        let i2_init = CVector::from_vec(vec![c64(-5.0 * x1_0.powi(3) + 40.0 / 9.0 * x1_0, 0.0), c64(1.0, 0.0)]);
        let i2 = propagate_i_backward(&Planar, &path, s.values[1], &i2_init).unwrap();
        for (k, x) in path.x.iter().enumerate() {
            assert!((i2.values[k][1] - c64(1.0, 0.0)).norm() < 1e-9);
            let x1 = x[0];
            let exact = -5.0 * x1.powi(3) + 40.0 / 9.0 * x1;
            assert!((i2.values[k][0].re - exact).abs() < 1e-6 * (1.0 + exact.abs()), "t~={}", path.t[k]);
        }
    }

    #[test]
    fn planar_dual_vector_forward() {
        // forward path on the manifold from x1 = 0.2
        let t = linspace(0.0, 20.0, 400);
        let x: Vec<Vec<f64>> = t
            .iter()
            .map(|&s| {
                let x1 = 1.2 * (-0.05 * s).exp();
                vec![x1, Planar::manifold(x1)]
            })
            .collect();
        let path = Path::from_flow(&Planar, t, x, 1.0).unwrap();
        let g1 = |p: f64| CVector::from_vec(vec![c64(1.0, 0.0), c64(5.0 * p.powi(3) - 40.0 / 9.0 * p, 0.0)]);
        let tr = propagate_g_forward(&Planar, &path, c64(-0.05, 0.0), &g1(1.2)).unwrap();
        for (k, x) in path.x.iter().enumerate() {
            assert!((&tr.values[k] - g1(x[0])).norm() < 1e-6);
        }
    }

    #[test]
    fn linear_model_adjoints_are_constant() {
        let (m, s) = linear();
        let sol = integrate(
            &mut |_t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
                m.rhs(x, dx);
                Ok(())
            },
            &[0.5, -0.3, 0.2],
            (0.0, 5.0),
            &linspace(0.0, 5.0, 1001),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let path = Path::from_flow(&m, sol.t, sol.x, 1.0).unwrap();
        let tr = propagate_i_backward(&m, &path.reversed(), s.values[0], &s.w(0)).unwrap();
        for v in &tr.values {
            assert!((v - s.w(0)).norm() < 1e-10);
        }
        let stm = state_transition(&m, &path).unwrap();
        let exact = expm_diagonalizable(&m.a, 5.0).unwrap();
        assert!((stm.phi - exact).norm() < 1e-8);
    }

    #[test]
    fn stm_identity_and_shift_identity() {
        let (m, s) = linear();
        let path = Path::stationary(&[0.1, 0.2, 0.3], vec![0.0]).unwrap();
        let stm = state_transition(&m, &path).unwrap();
        assert_eq!(stm.phi, DMatrix::identity(3, 3));
        let flow = flow_with_stm(&m, &[0.5, 0.1, -0.2], 3.0, &IntegratorConfig::default(), &s.x0, 0.0).unwrap();
        let (l1, l3) = (s.values[0], s.values[2]);
        let p1 = flow.stm.shifted(l1);
        let p3 = flow.stm.shifted(l3);
        let dt = flow.stm.t2 - flow.stm.t1;
        let rebuilt = &p3 * ((l3 - l1) * dt).exp();
        assert!((p1 - rebuilt).norm() <= 1e-9 * p3.norm());
    }

    #[test]
    fn stm_composition() {
        let m = builtin(&ModelSpec::named("pendulum")).unwrap();
        let cfg = IntegratorConfig::dopri5(1e-12, 1e-12);
        let x = [0.5, 0.2, 0.3];
        let a = flow_with_stm(m.as_ref(), &x, 1.0, &cfg, &[0.0; 3], 0.0).unwrap();
        let mut b = flow_with_stm(m.as_ref(), &a.x, 1.5, &cfg, &[0.0; 3], 0.0).unwrap();
        b.stm.t1 = 1.0;
        b.stm.t2 = 2.5;
        let whole = flow_with_stm(m.as_ref(), &x, 2.5, &cfg, &[0.0; 3], 0.0).unwrap();
        let composed = b.stm.compose(&a.stm).unwrap();
        assert!((composed.phi - whole.stm.phi).norm() < 1e-9);
    }

    #[test]
    fn psi_of_fixed_point_and_linear_model() {
        let (m, s) = linear();
        let psi = evaluate_psi(&m, &s, &s.x0, &PsiOptions::default()).unwrap();
        assert!(psi.iter().all(|p| p.norm() == 0.0));
        let x = [0.7, -0.4, 0.9];
        let opts = PsiOptions {
            integrator: IntegratorConfig::dopri5(1e-14, 1e-14),
            ..PsiOptions::default()
        };
        let psi = evaluate_psi(&m, &s, &x, &opts).unwrap();
        for k in 0..s.beta() {
            let exact = dot_t(&s.w(k), &CVector::from_iterator(3, x.iter().map(|v| c64(*v, 0.0))));
            assert!((psi[k] - exact).norm() < 1e-9, "{} vs {}", psi[k], exact);
        }
        assert_eq!(psi[1], psi[0].conj());
    }

    #[test]
    fn planar_psi_is_first_coordinate() {
        let s = analyze(&Planar, None).unwrap();
        let x = [0.8, Planar::manifold(0.8)];
        let opts = PsiOptions {
            entry_radius: 1e-7,
            ..PsiOptions::default()
        };
        let psi = evaluate_psi(&Planar, &s, &x, &opts).unwrap();
        assert!((psi[0].re - 0.8).abs() < 1e-6, "{}", psi[0]);
    }

    #[test]
    fn escaping_trajectory_reports_basin_escape() {
        let m = LinearModel::new(DMatrix::from_row_slice(1, 1, &[-1.0]));
        let mut s = crate::spectrum::linearize(&m, &[0.0]).unwrap();
        s.beta = Some(1);
        // a model that blows up from far away
        #[derive(Debug)]
        struct Cubic;
        impl DynamicalModel for Cubic {
            fn name(&self) -> String {
                "cubic".into()
            }
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, x: &[f64], out: &mut [f64]) {
                out[0] = -x[0] + x[0] * x[0] * x[0];
            }
            fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, -1.0 + 3.0 * x[0] * x[0])
            }
            fn parameters(&self) -> Vec<(String, f64)> {
                vec![]
            }
        }
        let r = evaluate_psi(&Cubic, &s, &[1.5], &PsiOptions::default());
        assert!(matches!(r, Err(Error::BasinEscape { .. })), "{r:?}");
    }
}
