#![allow(dead_code)]

use std::sync::Arc;

use isoslow::isostable::{
    evaluate_psi, propagate_g_forward, propagate_i_backward, state_transition, Path, PsiOptions,
};
use isoslow::manifold::{trace_ray, Method, SlowModes, TraceConfig};
use isoslow::models::{builtin, DynamicalModel, ModelSpec};
use isoslow::numerics::linalg::{c64, dot_t, CMatrix, CVector};
use isoslow::numerics::ode::{integrate, linspace, IntegratorConfig};
use isoslow::spectrum::{analyze, Spectrum};

pub fn setup(name: &str) -> (Arc<dyn DynamicalModel>, Spectrum) {
    let m = builtin(&ModelSpec::named(name)).unwrap();
    let s = analyze(m.as_ref(), None).unwrap();
    (m, s)
}

pub fn forward_path(model: &dyn DynamicalModel, x: &[f64], t_end: f64, intervals: usize) -> Path {
    let grid = linspace(0.0, t_end, intervals);
    let mut rhs = |_: f64, y: &[f64], dy: &mut [f64]| -> isoslow::Result<()> {
        model.rhs(y, dy);
        Ok(())
    };
    let out = integrate(&mut rhs, x, (0.0, t_end), &grid, &IntegratorConfig::dopri5(1e-12, 1e-12)).unwrap();
    Path::from_flow(model, out.t, out.x, 1.0).unwrap()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Far end of a slow-manifold ray traced backward for `t_back`.
pub fn manifold_point(model: &dyn DynamicalModel, s: &Spectrum, radius: f64, phase: f64, t_back: f64) -> Vec<f64> {
    let modes = SlowModes::new(s);
    let psi0 = modes.expand_psi(&[c64(radius * phase.cos(), radius * phase.sin())]);
    let cfg = TraceConfig {
        t_max: t_back,
        stop_on_abort: true,
        ..TraceConfig::default()
    };
    let tr = trace_ray(model, s, None, Method::Pc, &psi0, &cfg).unwrap();
    tr.last_state().to_vec()
}

/// Largest `|I_k^T g_j - delta_kj|` over 50 time units of pendulum flow
/// from a slow-manifold point. `I_k` starts at `w_k` at the end near the
/// fixed point and runs backward; `g_j` starts dual to the `I_k` and runs
/// forward.
pub fn pendulum_pairing_drift(radius: f64, phase: f64) -> f64 {
    let (m, s) = setup("pendulum");
    let t_end = 50.0;
    let start = manifold_point(m.as_ref(), &s, radius, phase, t_end);
    let path = forward_path(m.as_ref(), &start, t_end, 10_000);
    let back = path.reversed();
    let beta = s.beta();
    let gradients: Vec<Vec<CVector>> = (0..beta)
        .map(|k| {
            let mut v = propagate_i_backward(m.as_ref(), &back, s.values[k], &s.w(k)).unwrap().values;
            v.reverse();
            v
        })
        .collect();
    let i0 = CMatrix::from_columns(&gradients.iter().map(|g| g[0].clone()).collect::<Vec<_>>());
    let conj = i0.map(|z| z.conj());
    let gram = i0.transpose() * &conj;
    let g0 = conj * gram.try_inverse().unwrap();
    let duals: Vec<Vec<CVector>> = (0..beta)
        .map(|j| {
            propagate_g_forward(m.as_ref(), &path, s.values[j], &g0.column(j).into_owned())
                .unwrap()
                .values
        })
        .collect();
    let mut worst: f64 = 0.0;
    for t in 0..path.len() {
        for (k, ik) in gradients.iter().enumerate() {
            for (j, gj) in duals.iter().enumerate() {
                let delta = if k == j { 1.0 } else { 0.0 };
                worst = worst.max((dot_t(&ik[t], &gj[t]) - c64(delta, 0.0)).norm());
            }
        }
    }
    worst
}

/// Least-squares slope of `log|psi_1|` on `t in [10, 110]` along Goodwin
/// flow from `x0 + d`, and `Re lambda_1`.
pub fn goodwin_decay_slope(d: [f64; 3]) -> (f64, f64) {
    let (m, s) = setup("goodwin");
    let x: Vec<f64> = s.x0.iter().zip(d).map(|(a, b)| a + b).collect();
    let times = linspace(10.0, 110.0, 10);
    let path = forward_path(m.as_ref(), &x, 110.0, 110);
    let opts = PsiOptions::default();
    let logs: Vec<f64> = times
        .iter()
        .map(|&t| evaluate_psi(m.as_ref(), &s, &path.state_at(t), &opts).unwrap()[0].norm().ln())
        .collect();
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let num: f64 = times.iter().zip(&logs).map(|(t, l)| (t - tm) * (l - lm)).sum();
    let den: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    (num / den, s.values[0].re)
}

/// Relative deviation from `Phi_j = Phi_k exp((lambda_k - lambda_j)(t2 - t1))`
/// for the Goodwin transition matrix on `[t1, t1 + span]`.
pub fn shifted_identity_error(t1: f64, span: f64, k: usize, j: usize) -> f64 {
    let (m, s) = setup("goodwin");
    let start = s.x0.iter().map(|v| v * 1.05).collect::<Vec<_>>();
    let path = forward_path(m.as_ref(), &start, span, 200);
    let mut stm = state_transition(m.as_ref(), &path).unwrap();
    stm.t1 = t1;
    stm.t2 = t1 + span;
    let (lk, lj) = (s.values[k], s.values[j]);
    let lhs = stm.shifted(lj);
    let rhs = stm.shifted(lk) * ((lk - lj) * span).exp();
    let scale = lhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    (&lhs - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// Largest difference between central finite differences of `psi_1` (step
/// `delta`) and `I_1` at ten points along a Goodwin slow-manifold ray.
/// `I_1` is propagated backward from `w_1` along the forward flow of each
/// point, seeded inside the linear-regime ball.
pub fn goodwin_gradient_mismatch(delta: f64) -> f64 {
    let (m, s) = setup("goodwin");
    let modes = SlowModes::new(&s);
    let psi0 = modes.expand_psi(&[c64(0.001, 0.0)]);
    let cfg = TraceConfig {
        t_max: 200.0,
        stop_on_abort: true,
        ..TraceConfig::default()
    };
    let ray = trace_ray(m.as_ref(), &s, None, Method::Pc, &psi0, &cfg).unwrap();
    let eps_lin = 1e-6 * (1.0 + s.x0.iter().map(|v| v * v).sum::<f64>().sqrt());
    let opts = PsiOptions {
        entry_radius: 1e-6,
        integrator: IntegratorConfig::dopri5(1e-14, 1e-14),
        ..PsiOptions::default()
    };
    let psi1 = |x: &[f64]| evaluate_psi(m.as_ref(), &s, x, &opts).unwrap()[0];
    let t_end = *ray.t_back.last().unwrap();
    let mut worst: f64 = 0.0;
    for q in 1..=10 {
        let target = (20.0 * q as f64).min(t_end);
        let idx = ray.t_back.iter().position(|t| *t >= target).unwrap();
        let x = ray.x[idx].clone();
        let horizon = (distance(&x, &s.x0) / eps_lin).ln() / s.slow_rate();
        let fwd = forward_path(m.as_ref(), &x, horizon, (horizon / 0.02).ceil() as usize);
        let end = distance(fwd.x.last().unwrap(), &s.x0);
        assert!(end <= 10.0 * eps_lin, "forward flow ends {end:e} from the fixed point");
        let grad = propagate_i_backward(m.as_ref(), &fwd.reversed(), s.values[0], &s.w(0)).unwrap();
        let i1 = grad.values.last().unwrap();
        for i in 0..s.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += delta;
            xm[i] -= delta;
            let fd = (psi1(&xp) - psi1(&xm)) / (2.0 * delta);
            worst = worst.max((fd - i1[i]).norm());
        }
    }
    worst
}
