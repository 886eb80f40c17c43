//! Backward-time tracing of the slow manifold `{psi_k = 0, k > beta}`.
//!
//! Along the manifold the slow isostable coordinates obey
//! `psi_k(t~) = psi_k(0) exp(-lambda_k t~)` in backward time `t~`, and the
//! state velocity solves
//!
//! ```text
//! [ I_1 .. I_beta ; complement rows ] dx/dt~ = [ -lambda_1 psi_1 .. ; 0 ]
//! ```
//!
//! where the complement rows span the orthogonal complement of
//! `span(g_1 .. g_beta)`. The strategies differ in how the `g_j` are
//! approximated: [`asym`] evaluates their Taylor series, [`pc`] freezes them
//! at the linear eigenvectors and corrects the state periodically, and
//! [`naive`] integrates `-F` directly for comparison.

pub mod asym;
pub mod family;
pub mod naive;
pub mod pc;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DynamicalModel;
use crate::numerics::linalg::{c64, cond2, orthogonal_complement, orthonormalize, solve_real, CVector, C64};
use crate::numerics::ode::{integrate, linspace, rk4_step, IntegratorConfig};
use crate::spectrum::Spectrum;

pub use asym::trace_asym;
pub use family::{build_manifold, trace_ray, FamilyConfig, ManifoldSample, RayFailure, SlowManifold};
pub use naive::trace_naive;
pub use pc::{correct, predict, trace_pc, Correction, Prediction};

/// Tracing strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Taylor series of the dual vectors up to `order`.
    Asym { order: usize },
    /// Predictor-corrector.
    Pc,
    /// Plain backward integration of the vector field.
    Naive,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Asym { order } => format!("asym{order}"),
            Method::Pc => "pc".into(),
            Method::Naive => "naive".into(),
        }
    }
}

/// Settings shared by all tracing strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    /// Backward-time horizon `T`.
    pub t_max: f64,
    /// Stop once `|psi_1|` reaches this value.
    pub psi_cap: Option<f64>,
    /// Fixed RK4 step for the backward integration.
    pub step: f64,
    /// Keep every `record_every`-th step in the output.
    pub record_every: usize,
    /// Correction cadence of the predictor-corrector.
    pub dt_correct: f64,
    /// Integrator for the forward refresh after each correction.
    pub refresh: IntegratorConfig,
    /// Refresh horizon as a multiple of `1 / |Re lambda_1|`.
    pub refresh_cap_factor: f64,
    /// Radius of the linear-regime ball as a multiple of `1 + |x0|`.
    pub lin_radius_factor: f64,
    /// Abort when a correction exceeds this fraction of `|x - x0|`.
    pub abort_fraction: f64,
    /// End a trace at the last accepted point instead of failing when the
    /// backward-time system becomes ill-conditioned or a predictor-corrector
    /// correction aborts.
    pub stop_on_abort: bool,
    /// Condition number of the backward-time system above which tracing fails.
    pub cond_limit: f64,
    /// Principal angle (radians) between the estimated and linear slow
    /// subspaces above which a warning is logged.
    pub angle_warn: f64,
    /// Smallest singular value accepted for the fast/slow eigenbasis.
    pub fast_sigma_min: f64,
    /// Relative singular-value cutoff of the Jacobian pseudoinverse.
    pub pinv_tol: f64,
    /// Seed the state from the expansion of this order instead of
    /// `x0 + sum psi_k v_k` (predictor-corrector and naive tracing).
    pub seed_order: Option<usize>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            t_max: 100.0,
            psi_cap: None,
            step: 0.01,
            record_every: 5,
            dt_correct: 0.25,
            refresh: IntegratorConfig::dopri5(1e-10, 1e-10),
            refresh_cap_factor: 5.0,
            lin_radius_factor: 1e-6,
            abort_fraction: 0.5,
            stop_on_abort: false,
            cond_limit: 1e10,
            angle_warn: 0.2,
            fast_sigma_min: 1e-8,
            pinv_tol: 1e-12,
            seed_order: None,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_max", self.t_max),
            ("step", self.step),
            ("dt_correct", self.dt_correct),
            ("refresh_cap_factor", self.refresh_cap_factor),
            ("lin_radius_factor", self.lin_radius_factor),
            ("abort_fraction", self.abort_fraction),
            ("cond_limit", self.cond_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        self.refresh.validate()
    }
}

/// Why a trace ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    PsiCap,
    /// The state became non-finite or left a ball of radius `1e6 (1 + |x0|)`.
    Diverged,
    /// The backward-time system became ill-conditioned or a
    /// predictor-corrector correction exceeded the abort threshold, and
    /// `stop_on_abort` kept the points traced before it.
    Aborted,
}

/// A sampled backward-time trajectory on the slow manifold.
#[derive(Debug, Clone)]
pub struct ManifoldTrajectory {
    pub method: Method,
    pub t_back: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// All `beta` slow coordinates per sample.
    pub psi: Vec<Vec<C64>>,
    /// All `beta` slow gradients per sample.
    pub i_slow: Vec<Vec<CVector>>,
    /// Condition number of the backward-time system (NaN where not formed).
    pub cond: Vec<f64>,
    /// Norm of the correction applied at the sample (zero elsewhere).
    pub corr_norm: Vec<f64>,
    pub termination: Termination,
    /// Largest principal angle between estimated and linear slow subspaces.
    pub max_angle: f64,
}

impl ManifoldTrajectory {
    pub fn len(&self) -> usize {
        self.t_back.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_back.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |x| x.len())
    }

    pub fn last_state(&self) -> &[f64] {
        self.x.last().expect("trajectory has samples")
    }

    /// Largest `|x - x0|` along the trajectory.
    pub fn scale(&self, x0: &[f64]) -> f64 {
        self.x.iter().map(|x| distance(x, x0)).fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.dim();
        let mut h = vec!["t_back".to_string()];
        h.extend((1..=n).map(|i| format!("x_{i}")));
        h.push("psi1_re".into());
        h.push("psi1_im".into());
        h.extend((1..=n).map(|i| format!("I1_re_{i}")));
        h.extend((1..=n).map(|i| format!("I1_im_{i}")));
        h.push("cond".into());
        h.push("corr_norm".into());
        h
    }

    /// Per-ray CSV with full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for k in 0..self.len() {
            let mut row = vec![fmt(self.t_back[k])];
            row.extend(self.x[k].iter().map(|v| fmt(*v)));
            row.push(fmt(self.psi[k][0].re));
            row.push(fmt(self.psi[k][0].im));
            row.extend(self.i_slow[k][0].iter().map(|z| fmt(z.re)));
            row.extend(self.i_slow[k][0].iter().map(|z| fmt(z.im)));
            row.push(fmt(self.cond[k]));
            row.push(fmt(self.corr_norm[k]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Slow-mode bookkeeping: independent modes (one per conjugate pair) and
/// whether each contributes two real rows.
#[derive(Debug, Clone)]
pub struct SlowModes {
    pub beta: usize,
    pub values: Vec<C64>,
    pub independent: Vec<usize>,
    pub paired: Vec<bool>,
    pub partner: Vec<Option<usize>>,
}

impl SlowModes {
    pub fn new(spec: &Spectrum) -> Self {
        let beta = spec.beta();
        let independent = spec.independent_slow_modes();
        let partner: Vec<Option<usize>> = (0..beta).map(|k| spec.partner[k].filter(|&p| p < beta)).collect();
        let paired = independent.iter().map(|&k| partner[k].is_some()).collect();
        Self {
            beta,
            values: spec.values[..beta].to_vec(),
            independent,
            paired,
            partner,
        }
    }

    /// `psi_k(t~) = psi_k(0) exp(-lambda_k t~)`.
    pub fn psi_at(&self, psi0: &[C64], t_back: f64) -> Vec<C64> {
        psi0.iter()
            .zip(&self.values)
            .map(|(p, l)| p * (-l * t_back).exp())
            .collect()
    }

    /// All `beta` coordinates from the independent ones.
    pub fn expand_psi(&self, independent: &[C64]) -> Vec<C64> {
        let mut psi = vec![c64(0.0, 0.0); self.beta];
        for (&k, v) in self.independent.iter().zip(independent) {
            psi[k] = *v;
            if let Some(p) = self.partner[k] {
                psi[p] = v.conj();
            }
        }
        psi
    }

    /// All `beta` gradients from the independent ones.
    pub fn expand_i(&self, independent: &[CVector]) -> Vec<CVector> {
        let mut out = vec![CVector::zeros(0); self.beta];
        for (&k, v) in self.independent.iter().zip(independent) {
            out[k] = v.clone();
            if let Some(p) = self.partner[k] {
                out[p] = v.map(|z| z.conj());
            }
        }
        out
    }

    /// Real basis of `span(g_1 .. g_beta)` from the independent vectors.
    pub fn realify(&self, vectors: &[CVector]) -> DMatrix<f64> {
        let n = vectors[0].len();
        let mut cols = Vec::with_capacity(self.beta);
        for (v, &paired) in vectors.iter().zip(&self.paired) {
            cols.push(DVector::from_iterator(n, v.iter().map(|z| z.re)));
            if paired {
                cols.push(DVector::from_iterator(n, v.iter().map(|z| z.im)));
            }
        }
        DMatrix::from_columns(&cols)
    }

    /// Orthonormal complement of the real span of the given slow vectors.
    pub fn complement(&self, vectors: &[CVector]) -> Result<DMatrix<f64>> {
        let q = orthonormalize(&self.realify(vectors)).map_err(|_| Error::IllConditioned { cond: f64::INFINITY })?;
        Ok(orthogonal_complement(&q))
    }
}

/// The stacked backward-time matrix and right-hand side.
fn backward_system(
    modes: &SlowModes,
    i_indep: &[CVector],
    complement: &DMatrix<f64>,
    psi: &[C64],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = complement.nrows();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut row = 0;
    for (slot, &k) in modes.independent.iter().enumerate() {
        let target = -modes.values[k] * psi[k];
        let ik = &i_indep[slot];
        for j in 0..n {
            a[(row, j)] = ik[j].re;
        }
        b[row] = target.re;
        row += 1;
        if modes.paired[slot] {
            for j in 0..n {
                a[(row, j)] = ik[j].im;
            }
            b[row] = target.im;
            row += 1;
        }
    }
    for c in 0..complement.ncols() {
        for j in 0..n {
            a[(row, j)] = complement[(j, c)];
        }
        row += 1;
    }
    (a, b)
}

/// Velocity `dx/dt~` on the slow manifold from the independent slow
/// gradients, a complement basis (columns) and all `beta` coordinates.
/// Returns the velocity and the condition number of the stacked system.
pub fn backward_rhs(
    modes: &SlowModes,
    i_indep: &[CVector],
    complement: &DMatrix<f64>,
    psi: &[C64],
    cond_limit: f64,
) -> Result<(Vec<f64>, f64)> {
    let (a, b) = backward_system(modes, i_indep, complement, psi);
    let cond = cond2(&a);
    if !(cond <= cond_limit) {
        return Err(Error::IllConditioned { cond });
    }
    let dx = solve_real(&a, &b).map_err(|_| Error::IllConditioned { cond })?;
    Ok((dx.iter().copied().collect(), cond))
}

/// Same as [`backward_rhs`] without the condition estimate, for use inside
/// integrator stages.
pub(crate) fn backward_velocity(
    modes: &SlowModes,
    i_indep: &[CVector],
    complement: &DMatrix<f64>,
    psi: &[C64],
) -> Result<Vec<f64>> {
    let (a, b) = backward_system(modes, i_indep, complement, psi);
    let dx = solve_real(&a, &b).map_err(|e| match e {
        Error::Singular { cond } => Error::IllConditioned { cond },
        e => e,
    })?;
    Ok(dx.iter().copied().collect())
}

/// Packed integration state: `x`, then real and imaginary parts of each
/// independent gradient, then optionally a column-major `N x N` matrix.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
    pub modes: usize,
    pub with_matrix: bool,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.n + 2 * self.n * self.modes + if self.with_matrix { self.n * self.n } else { 0 }
    }

    pub fn pack(&self, x: &[f64], i_indep: &[CVector], m: Option<&DMatrix<f64>>) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.len());
        y.extend_from_slice(x);
        for v in i_indep {
            y.extend(v.iter().map(|z| z.re));
            y.extend(v.iter().map(|z| z.im));
        }
        if self.with_matrix {
            y.extend_from_slice(m.expect("matrix slot").as_slice());
        }
        y
    }

    pub fn x<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[..self.n]
    }

    pub fn gradients(&self, y: &[f64]) -> Vec<CVector> {
        let n = self.n;
        (0..self.modes)
            .map(|s| {
                let base = n + 2 * n * s;
                CVector::from_iterator(n, (0..n).map(|i| c64(y[base + i], y[base + n + i])))
            })
            .collect()
    }

    pub fn matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let base = self.n + 2 * self.n * self.modes;
        DMatrix::from_column_slice(self.n, self.n, &y[base..base + self.n * self.n])
    }
}

/// Right-hand side of the joint backward system: `dx/dt~` from `velocity`,
/// `dI_k/dt~ = (J^T - lambda_k) I_k`, and `dM/dt~ = M J` when tracked.
pub(crate) fn joint_rhs<V>(
    model: &dyn DynamicalModel,
    modes: &SlowModes,
    layout: Layout,
    velocity: &mut V,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
) -> Result<()>
where
    V: FnMut(f64, &[f64], &[CVector]) -> Result<Vec<f64>>,
{
    let n = layout.n;
    let x = layout.x(y);
    let grads = layout.gradients(y);
    let dx = velocity(t, x, &grads)?;
    dy[..n].copy_from_slice(&dx);
    let jac = model.jacobian(x);
    for (s, g) in grads.iter().enumerate() {
        let lam = modes.values[modes.independent[s]];
        let base = n + 2 * n * s;
        for i in 0..n {
            let mut acc = -lam * g[i];
            for j in 0..n {
                acc += g[j] * jac[(j, i)];
            }
            dy[base + i] = acc.re;
            dy[base + n + i] = acc.im;
        }
    }
    if layout.with_matrix {
        let m = layout.matrix(y);
        let d = m * &jac;
        let base = n + 2 * n * layout.modes;
        dy[base..].copy_from_slice(d.as_slice());
    }
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("backward-time system"));
    }
    Ok(())
}

/// Fixed-step RK4 from `t0` over `steps` steps of size `h` on the joint
/// system, calling `on_step(step_index, t, y)` after every step.
pub(crate) fn march<V, C>(
    model: &dyn DynamicalModel,
    modes: &SlowModes,
    layout: Layout,
    mut velocity: V,
    y0: Vec<f64>,
    t0: f64,
    h: f64,
    steps: usize,
    mut on_step: C,
) -> Result<Vec<f64>>
where
    V: FnMut(f64, &[f64], &[CVector]) -> Result<Vec<f64>>,
    C: FnMut(usize, f64, &[f64]) -> Result<bool>,
{
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| joint_rhs(model, modes, layout, &mut velocity, t, y, dy);
    let mut y = y0;
    let mut f0 = vec![0.0; y.len()];
    let mut next = vec![0.0; y.len()];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs(t, &y, &mut f0)?;
        rk4_step(&mut rhs, t, &y, &f0, h, &mut next)?;
        std::mem::swap(&mut y, &mut next);
        let t1 = t0 + (s + 1) as f64 * h;
        if !on_step(s + 1, t1, &y)? {
            break;
        }
    }
    Ok(y)
}

/// Collects samples of a trace.
pub(crate) struct Recorder {
    pub traj: ManifoldTrajectory,
}

impl Recorder {
    pub fn new(method: Method) -> Self {
        Self {
            traj: ManifoldTrajectory {
                method,
                t_back: Vec::new(),
                x: Vec::new(),
                psi: Vec::new(),
                i_slow: Vec::new(),
                cond: Vec::new(),
                corr_norm: Vec::new(),
                termination: Termination::Horizon,
                max_angle: 0.0,
            },
        }
    }

    pub fn push(&mut self, t: f64, x: &[f64], psi: Vec<C64>, i_slow: Vec<CVector>, cond: f64) {
        self.traj.t_back.push(t);
        self.traj.x.push(x.to_vec());
        self.traj.psi.push(psi);
        self.traj.i_slow.push(i_slow);
        self.traj.cond.push(cond);
        self.traj.corr_norm.push(0.0);
    }
}

/// Uniform step count and size covering `[0, t_max]` with steps at most `step`.
pub(crate) fn uniform_steps(t_max: f64, step: f64) -> (usize, f64) {
    let steps = ((t_max / step) - 1e-9).ceil().max(1.0) as usize;
    (steps, t_max / steps as f64)
}

/// Shared driver for strategies that integrate the joint backward system
/// in one pass. `velocity` gives `dx/dt~`; `cond_at` the diagnostic
/// condition number at a recorded sample. With `keep_partial`, divergence
/// ends the trace instead of failing it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn trace_single_pass<V, K>(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    method: Method,
    psi0: &[C64],
    x_seed: Vec<f64>,
    cfg: &TraceConfig,
    velocity: V,
    mut cond_at: K,
    keep_partial: bool,
) -> Result<ManifoldTrajectory>
where
    V: FnMut(f64, &[f64], &[CVector]) -> Result<Vec<f64>>,
    K: FnMut(f64, &[f64], &[CVector]) -> Result<f64>,
{
    cfg.validate()?;
    let modes = SlowModes::new(spec);
    let layout = Layout {
        n: spec.dim(),
        modes: modes.independent.len(),
        with_matrix: false,
    };
    let i0: Vec<CVector> = modes.independent.iter().map(|&k| spec.w(k)).collect();
    let mut rec = Recorder::new(method);
    let c0 = cond_at(0.0, &x_seed, &i0)?;
    rec.push(0.0, &x_seed, psi0.to_vec(), modes.expand_i(&i0), c0);
    let (steps, h) = uniform_steps(cfg.t_max, cfg.step);
    let y0 = layout.pack(&x_seed, &i0, None);
    let mut stop: Option<Termination> = None;
    let bound = 1e6 * (1.0 + spec.x0.iter().map(|v| v * v).sum::<f64>().sqrt());
    let marched = march(model, &modes, layout, velocity, y0, 0.0, h, steps, |s, t, y| {
        if keep_partial {
            let x = layout.x(y);
            if x.iter().any(|v| !v.is_finite()) || distance(x, &spec.x0) > bound {
                stop = Some(Termination::Diverged);
                return Ok(false);
            }
        }
        let psi = modes.psi_at(psi0, t);
        let capped = cfg.psi_cap.is_some_and(|cap| psi[0].norm() >= cap);
        if s % cfg.record_every == 0 || s == steps || capped {
            let x = layout.x(y);
            let grads = layout.gradients(y);
            let cond = cond_at(t, x, &grads)?;
            rec.push(t, x, psi, modes.expand_i(&grads), cond);
        }
        if capped {
            stop = Some(Termination::PsiCap);
            return Ok(false);
        }
        Ok(true)
    });
    match marched {
        Ok(_) => {}
        Err(Error::NonFinite(_) | Error::BlowUp { .. }) if keep_partial => stop = Some(Termination::Diverged),
        Err(Error::IllConditioned { .. }) if cfg.stop_on_abort => stop = Some(Termination::Aborted),
        Err(e) => return Err(e),
    }
    rec.traj.termination = stop.unwrap_or(Termination::Horizon);
    Ok(rec.traj)
}

/// Seed state for a ray: linear, or from an expansion when one is given.
pub fn seed_state(spec: &Spectrum, psi0: &[C64], exp: Option<&crate::expansion::ExpansionTensors>) -> Result<Vec<f64>> {
    match exp {
        Some(e) => e.reconstruct_state(psi0),
        None => Ok(spec.linear_state(psi0)),
    }
}

/// Result of the invariance-tube check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    /// Largest relative nearest-point distance after the skipped transient.
    pub max_relative: f64,
    /// Forward time at which it occurred.
    pub at_time: f64,
    pub skipped: f64,
}

/// Distance from `p` to the polyline through `curve`.
pub fn polyline_distance(p: &[f64], curve: &[Vec<f64>]) -> f64 {
    if curve.len() == 1 {
        return distance(p, &curve[0]);
    }
    let mut best = f64::INFINITY;
    for w in curve.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut ab2 = 0.0;
        let mut ap_ab = 0.0;
        for i in 0..p.len() {
            let d = b[i] - a[i];
            ab2 += d * d;
            ap_ab += (p[i] - a[i]) * d;
        }
        let s = if ab2 > 0.0 { (ap_ab / ab2).clamp(0.0, 1.0) } else { 0.0 };
        let mut d2 = 0.0;
        for i in 0..p.len() {
            let q = a[i] + s * (b[i] - a[i]);
            d2 += (p[i] - q) * (p[i] - q);
        }
        best = best.min(d2);
    }
    best.sqrt()
}

/// Relative nearest-point distance `dist(p, curve) / |p - x0|`.
pub fn relative_distance(p: &[f64], curve: &[Vec<f64>], x0: &[f64]) -> f64 {
    polyline_distance(p, curve) / distance(p, x0).max(f64::MIN_POSITIVE)
}

/// Integrate `x' = F(x)` forward from the far end of `traj` for the traced
/// backward time, discard the first `skip` time units, and report the
/// largest relative nearest-point distance to the traced curve.
pub fn invariance_tube(
    model: &dyn DynamicalModel,
    x0: &[f64],
    traj: &ManifoldTrajectory,
    skip: f64,
    cfg: &IntegratorConfig,
) -> Result<TubeReport> {
    let t_end = *traj.t_back.last().expect("trajectory has samples");
    let samples = ((t_end / 0.05).ceil() as usize).max(2) + 1;
    let grid = linspace(0.0, t_end, samples);
    let mut rhs = |_: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        model.rhs(x, dx);
        Ok(())
    };
    let fwd = integrate(&mut rhs, traj.last_state(), (0.0, t_end), &grid, cfg)?;
    let mut report = TubeReport {
        max_relative: 0.0,
        at_time: 0.0,
        skipped: skip,
    };
    for (t, x) in fwd.t.iter().zip(&fwd.x) {
        if *t < skip {
            continue;
        }
        let r = relative_distance(x, &traj.x, x0);
        if r > report.max_relative {
            report.max_relative = r;
            report.at_time = *t;
        }
    }
    Ok(report)
}

/// First backward time at which `candidate` leaves the tube of relative
/// radius `tol` around `reference`.
pub fn tube_exit_time(
    reference: &ManifoldTrajectory,
    candidate: &ManifoldTrajectory,
    x0: &[f64],
    tol: f64,
) -> Option<f64> {
    candidate
        .t_back
        .iter()
        .zip(&candidate.x)
        .find(|(_, x)| relative_distance(x, &reference.x, x0) > tol)
        .map(|(t, _)| *t)
}

/// Default horizons and ray settings for the built-in models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDefaults {
    pub t_max: f64,
    pub dt_correct: f64,
    pub seed_radius: f64,
    pub psi_cap: Option<f64>,
}

pub fn model_defaults(name: &str) -> ModelDefaults {
    let base = name.split('(').next().unwrap_or(name);
    match base {
        "planar" => ModelDefaults {
            t_max: 150.0,
            dt_correct: 0.5,
            seed_radius: 0.001,
            psi_cap: Some(1.5),
        },
        "pendulum" => ModelDefaults {
            t_max: 100.0,
            dt_correct: 0.25,
            seed_radius: 0.01,
            psi_cap: None,
        },
        "goodwin" => ModelDefaults {
            t_max: 275.0,
            dt_correct: 0.25,
            seed_radius: 0.001,
            psi_cap: None,
        },
        "coupled" => ModelDefaults {
            t_max: 84.0,
            dt_correct: 0.5,
            seed_radius: 0.1,
            psi_cap: None,
        },
        _ => ModelDefaults {
            t_max: 100.0,
            dt_correct: 0.25,
            seed_radius: 0.01,
            psi_cap: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearModel, Planar};
    use crate::spectrum::analyze;

    #[test]
    fn zero_psi_gives_zero_velocity() {
        let s = analyze(&Planar, None).unwrap();
        let modes = SlowModes::new(&s);
        let comp = modes.complement(&[s.v(0)]).unwrap();
        let (dx, cond) = backward_rhs(&modes, &[s.w(0)], &comp, &[c64(0.0, 0.0)], 1e10).unwrap();
        assert_eq!(dx, vec![0.0, 0.0]);
        assert!(cond >= 1.0);
    }

    #[test]
    fn planar_velocity_is_reversed_slow_flow() {
        let s = analyze(&Planar, None).unwrap();
        let modes = SlowModes::new(&s);
        let x1: f64 = 0.7;
        let g = CVector::from_vec(vec![c64(1.0, 0.0), c64(5.0 * x1.powi(3) - 40.0 / 9.0 * x1, 0.0)]);
        let comp = modes.complement(&[g]).unwrap();
        let (dx, _) = backward_rhs(&modes, &[s.w(0)], &comp, &[c64(x1, 0.0)], 1e10).unwrap();
        assert!((dx[0] - 0.05 * x1).abs() < 1e-14);
        assert!((dx[1] - 0.05 * x1 * (5.0 * x1.powi(3) - 40.0 / 9.0 * x1)).abs() < 1e-14);
    }

    #[test]
    fn linear_velocity_is_reversed_linear_flow() {
        let a = DMatrix::from_row_slice(3, 3, &[-0.1, 1.0, 0.0, -1.0, -0.1, 0.2, 0.0, 0.0, -3.0]);
        let m = LinearModel::new(a);
        let s = analyze(&m, None).unwrap();
        let modes = SlowModes::new(&s);
        let psi = modes.expand_psi(&[c64(0.3, -0.2)]);
        let comp = modes.complement(&[s.v(0)]).unwrap();
        let (dx, _) = backward_rhs(&modes, &[s.w(0)], &comp, &psi, 1e10).unwrap();
        for i in 0..3 {
            let exact: f64 = (0..2).map(|k| (-s.values[k] * psi[k] * s.right[(i, k)]).re).sum();
            assert!((dx[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn ill_conditioned_system_is_rejected() {
        let s = analyze(&Planar, None).unwrap();
        let modes = SlowModes::new(&s);
        // complement parallel to the gradient row
        let comp = DMatrix::from_column_slice(2, 1, &[1.0, 1e-13]);
        let r = backward_rhs(&modes, &[s.w(0)], &comp, &[c64(0.1, 0.0)], 1e10);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn polyline_distance_basics() {
        let curve = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(polyline_distance(&[0.5, 0.5], &curve), 0.5);
        assert_eq!(polyline_distance(&[2.0, 0.5], &curve), 1.0);
        assert_eq!(polyline_distance(&[-3.0, 4.0], &curve), 5.0);
    }
}
