//! Predictor-corrector tracing.
//!
//! The predictor integrates backward with the complement of the linear
//! slow eigenvectors held fixed. Every `dt_correct` the state is corrected
//! within the fast eigenspace of the state-transition matrix `Phi_J(t2, t1)`
//! of a forward trajectory that returns towards `x0`, which leaves the slow
//! isostable coordinates unchanged, and the slow gradients are refreshed
//! from the same forward trajectory: `I_k(t1) = exp(-lambda_k H) Phi^T w_k`
//! with `H = t2 - t1`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expansion::ExpansionTensors;
use crate::isostable::{flow_with_stm, Stm};
use crate::models::DynamicalModel;
use crate::numerics::eigen::dominant_eigenpairs;
use crate::numerics::linalg::{
    orthogonal_complement, orthonormalize, pinv, principal_angles, singular_values, to_complex, CMatrix, CVector, C64,
};
use crate::spectrum::Spectrum;

use super::{
    backward_rhs, backward_velocity, distance, march, seed_state, uniform_steps, Layout, ManifoldTrajectory, Method,
    Recorder, SlowModes, TraceConfig,
};

/// One recorded predictor sample: backward time, state, independent
/// gradients and the condition number of the backward system.
#[derive(Debug, Clone)]
pub struct PredictedSample {
    pub t_back: f64,
    pub x: Vec<f64>,
    pub i_indep: Vec<CVector>,
    pub cond: f64,
}

/// A predicted segment and the transition matrix `Phi_J(t1, t1 - dt)`
/// accumulated along it.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub x: Vec<f64>,
    pub i_indep: Vec<CVector>,
    pub phi: DMatrix<f64>,
    pub samples: Vec<PredictedSample>,
}

/// Extend backward by `dt` from the state at backward time `t_start`, with
/// the complement basis frozen at the linear slow eigenvectors.
#[allow(clippy::too_many_arguments)]
pub fn predict(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    x: &[f64],
    i_indep: &[CVector],
    psi0: &[C64],
    t_start: f64,
    dt: f64,
    cfg: &TraceConfig,
) -> Result<Prediction> {
    let modes = SlowModes::new(spec);
    let n = spec.dim();
    let v: Vec<CVector> = modes.independent.iter().map(|&k| spec.v(k)).collect();
    let comp = modes.complement(&v)?;
    let layout = Layout {
        n,
        modes: modes.independent.len(),
        with_matrix: true,
    };
    let (steps, h) = uniform_steps(dt, cfg.step);
    let y0 = layout.pack(x, i_indep, Some(&DMatrix::identity(n, n)));
    let velocity = |t: f64, _x: &[f64], grads: &[CVector]| -> Result<Vec<f64>> {
        backward_velocity(&modes, grads, &comp, &modes.psi_at(psi0, t))
    };
    let mut samples = Vec::new();
    let y = march(model, &modes, layout, velocity, y0, t_start, h, steps, |s, t, y| {
        if s % cfg.record_every == 0 || s == steps {
            let grads = layout.gradients(y);
            let (_, cond) = backward_rhs(&modes, &grads, &comp, &modes.psi_at(psi0, t), cfg.cond_limit)?;
            samples.push(PredictedSample {
                t_back: t,
                x: layout.x(y).to_vec(),
                i_indep: grads,
                cond,
            });
        }
        Ok(true)
    })?;
    Ok(Prediction {
        x: layout.x(&y).to_vec(),
        i_indep: layout.gradients(&y),
        phi: layout.matrix(&y),
        samples,
    })
}

/// Result of a correction step.
#[derive(Debug, Clone)]
pub struct Correction {
    pub dx: Vec<f64>,
    /// Norm of `sum_j lambda_j psi_j g_j - F(x)` before the correction.
    pub residual_norm: f64,
    /// Largest principal angle between the dominant eigenvectors of `Phi`
    /// and the linear slow eigenvectors.
    pub max_angle: f64,
    /// Smallest singular value of `[slow eigenvectors | fast basis]`.
    pub fast_sigma_min: f64,
    /// Estimated dual vectors for all `beta` slow modes.
    pub g: Vec<CVector>,
}

/// Correction `dx = P_fast J^+ (sum_j lambda_j psi_j g_j - F(x))`, where the
/// `g_j` come from the dominant eigenpairs of `Phi_J(t2, t1)` and `P_fast` is
/// the orthogonal projector onto the span of the remaining eigenvectors,
/// i.e. onto the common null space of the dominant left eigenvectors.
pub fn correct(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    stm: &Stm,
    x: &[f64],
    psi: &[C64],
    cfg: &TraceConfig,
) -> Result<Correction> {
    let modes = SlowModes::new(spec);
    let beta = modes.beta;
    let n = spec.dim();
    let horizon = stm.t2 - stm.t1;
    let es = dominant_eigenpairs(&stm.phi, beta)?;

    // g_j = sum_k v^_k (w^_k^T v_j) / (lambda^_k exp(-lambda_j H))
    let mut g = Vec::with_capacity(beta);
    for j in 0..beta {
        let vj = spec.v(j);
        let shift = (-modes.values[j] * horizon).exp();
        let mut gj = CVector::zeros(n);
        for k in 0..beta {
            let wk = es.left.column(k);
            let proj: C64 = wk.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
            gj += es.right.column(k) * (proj / (es.values[k] * shift));
        }
        g.push(gj);
    }

    let slow_lin: CMatrix = spec.right.columns(0, beta).into_owned();
    let max_angle = principal_angles(&es.right, &slow_lin).into_iter().fold(0.0, f64::max);
    if max_angle > cfg.angle_warn {
        warn!("estimated slow subspace is {max_angle:.3} rad from the linear one");
    }

    // real basis of the dominant left eigenvectors and of their null space
    let dominant = SlowModes {
        beta,
        values: es.values.clone(),
        independent: (0..beta).filter(|&k| es.partner[k].is_none_or(|p| k < p)).collect(),
        paired: Vec::new(),
        partner: es.partner.clone(),
    };
    let paired: Vec<bool> = dominant.independent.iter().map(|&k| es.partner[k].is_some()).collect();
    let dominant = SlowModes { paired, ..dominant };
    let w_cols: Vec<CVector> = dominant.independent.iter().map(|&k| es.left.column(k).into_owned()).collect();
    let v_cols: Vec<CVector> = dominant.independent.iter().map(|&k| es.right.column(k).into_owned()).collect();
    let qw = orthonormalize(&dominant.realify(&w_cols)).map_err(|_| Error::DegenerateFastBasis { sigma_min: 0.0 })?;
    let fast = orthogonal_complement(&qw);
    let qv = orthonormalize(&dominant.realify(&v_cols)).map_err(|_| Error::DegenerateFastBasis { sigma_min: 0.0 })?;
    let mut basis = DMatrix::zeros(n, n);
    basis.columns_mut(0, beta).copy_from(&qv);
    basis.columns_mut(beta, n - beta).copy_from(&fast);
    let fast_sigma_min = singular_values(&basis).last().copied().unwrap_or(0.0);
    if !(fast_sigma_min >= cfg.fast_sigma_min) {
        return Err(Error::DegenerateFastBasis {
            sigma_min: fast_sigma_min,
        });
    }

    let f = model.eval(x);
    let mut r = DVector::zeros(n);
    for j in 0..beta {
        let c = modes.values[j] * psi[j];
        for i in 0..n {
            r[i] += (c * g[j][i]).re;
        }
    }
    for i in 0..n {
        r[i] -= f[i];
    }
    let jp = pinv(&to_complex(&model.jacobian(x)), cfg.pinv_tol)?.map(|z| z.re);
    let step = jp * &r;
    let dx = &step - &qw * (qw.transpose() * &step);
    Ok(Correction {
        dx: dx.iter().copied().collect(),
        residual_norm: r.norm(),
        max_angle,
        fast_sigma_min,
        g,
    })
}

/// Forward flow from `x` towards `x0` with its transition matrix, and the
/// slow gradients it implies at `x`.
pub(crate) fn refresh(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    modes: &SlowModes,
    x: &[f64],
    cfg: &TraceConfig,
) -> Result<(Stm, Vec<CVector>)> {
    let horizon = cfg.refresh_cap_factor / spec.slow_rate();
    let norm0 = spec.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = cfg.lin_radius_factor * (1.0 + norm0);
    let flow = flow_with_stm(model, x, horizon, &cfg.refresh, &spec.x0, radius).map_err(|e| match e {
        Error::BlowUp { t, .. } => Error::BasinEscape { t },
        e => e,
    })?;
    let h = flow.stm.t2 - flow.stm.t1;
    let phi_t = to_complex(&flow.stm.phi.transpose());
    let grads = modes
        .independent
        .iter()
        .map(|&k| &phi_t * spec.w(k) * (-modes.values[k] * h).exp())
        .collect();
    Ok((flow.stm, grads))
}

/// Alternate prediction over `dt_correct` and correction, starting from
/// `x0 + sum psi_k v_k` (or the expansion state when `exp` is given).
pub fn trace_pc(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    psi0: &[C64],
    exp: Option<&ExpansionTensors>,
    cfg: &TraceConfig,
) -> Result<ManifoldTrajectory> {
    cfg.validate()?;
    if psi0.len() != spec.beta() {
        return Err(Error::GridMismatch(format!(
            "{} seed coordinates for {} slow modes",
            psi0.len(),
            spec.beta()
        )));
    }
    let modes = SlowModes::new(spec);
    let mut x = seed_state(spec, psi0, exp)?;
    let (mut stm, mut grads) = refresh(model, spec, &modes, &x, cfg)?;
    let comp = modes.complement(&modes.independent.iter().map(|&k| spec.v(k)).collect::<Vec<_>>())?;
    let mut rec = Recorder::new(Method::Pc);
    let (_, c0) = backward_rhs(&modes, &grads, &comp, psi0, cfg.cond_limit)?;
    rec.push(0.0, &x, psi0.to_vec(), modes.expand_i(&grads), c0);

    let mut t = 0.0;
    let eps = 1e-9 * cfg.dt_correct;
    while t < cfg.t_max - eps {
        let dt = cfg.dt_correct.min(cfg.t_max - t);
        let pred = match predict(model, spec, &x, &grads, psi0, t, dt, cfg) {
            Err(Error::IllConditioned { .. }) if cfg.stop_on_abort => {
                rec.traj.termination = super::Termination::Aborted;
                break;
            }
            other => other?,
        };
        t += dt;
        let psi = modes.psi_at(psi0, t);

        // Phi(t2, t1 - dt) = Phi(t2, t1) Phi(t1, t1 - dt)
        let composed = Stm {
            t1: stm.t1 - dt,
            t2: stm.t2,
            phi: &stm.phi * &pred.phi,
        };
        let corr = correct(model, spec, &composed, &pred.x, &psi, cfg)?;
        let dx_norm = corr.dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = rec.traj.scale(&spec.x0).max(distance(&pred.x, &spec.x0));
        if dx_norm > cfg.abort_fraction * scale {
            if cfg.stop_on_abort {
                rec.traj.termination = super::Termination::Aborted;
                break;
            }
            return Err(Error::AbortOnDivergence {
                t_back: t,
                ratio: dx_norm / scale,
            });
        }
        let last = pred.samples.len() - 1;
        for s in &pred.samples[..last] {
            let psi = modes.psi_at(psi0, s.t_back);
            rec.push(s.t_back, &s.x, psi, modes.expand_i(&s.i_indep), s.cond);
        }
        rec.traj.max_angle = rec.traj.max_angle.max(corr.max_angle);
        x = pred.x.iter().zip(&corr.dx).map(|(a, b)| a + b).collect();
        let refreshed = refresh(model, spec, &modes, &x, cfg)?;
        stm = refreshed.0;
        grads = refreshed.1;
        let cond = match backward_rhs(&modes, &grads, &comp, &psi, cfg.cond_limit) {
            Ok((_, c)) => c,
            Err(Error::IllConditioned { .. }) if cfg.stop_on_abort => {
                rec.traj.termination = super::Termination::Aborted;
                break;
            }
            Err(e) => return Err(e),
        };
        let capped = cfg.psi_cap.is_some_and(|cap| psi[0].norm() >= cap);
        rec.push(t, &x, psi, modes.expand_i(&grads), cond);
        *rec.traj.corr_norm.last_mut().unwrap() = dx_norm;
        if capped {
            rec.traj.termination = super::Termination::PsiCap;
            break;
        }
    }
    Ok(rec.traj)
}
