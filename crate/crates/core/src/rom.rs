//! Isostable reduced-order models on a traced slow manifold.
//!
//! The reduced model evolves the first slow coordinate,
//! `psi_1' = lambda_1 psi_1 + i(psi_1) u(t)` with `i(psi_1) = b^T I_1(psi_1)`,
//! and reads the state from `x(psi_1)`. Both maps are tabulated on a polar
//! grid in `(ln |psi_1|, arg psi_1)` (or signed radius for one real slow
//! mode) and interpolated with tensor-product Catmull-Rom cubics, periodic
//! in phase. The tables hold residuals from the linearization
//! `b^T w_1` and `x0 + 2 Re(psi_1 v_1)`; inside the seed radius the
//! residuals fade linearly to zero.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::family::ManifoldSample;
use crate::manifold::SlowManifold;
use crate::models::{DynamicalModel, InputSignal};
use crate::numerics::linalg::{c64, C64};
use crate::numerics::ode::{integrate, linspace, IntegratorConfig, Sampled};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RomConfig {
    /// Number of radial grid points between the seed radius and the domain radius.
    pub radial_points: usize,
    /// Number of phase grid points; defaults to the number of rays.
    pub phase_points: Option<usize>,
    /// Fraction of rays that must reach the domain radius.
    pub coverage: f64,
}

impl Default for RomConfig {
    fn default() -> Self {
        Self {
            radial_points: 300,
            phase_points: None,
            coverage: 0.9,
        }
    }
}

/// Tabulated reduced-order model. Complex numbers are stored as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub lambda: [f64; 2],
    /// Whether `psi_1` is complex (conjugate slow pair) or real.
    pub pair: bool,
    pub x0: Vec<f64>,
    pub channel: Vec<f64>,
    /// `b^T w_1`.
    pub linear_gain: [f64; 2],
    pub v1: Vec<[f64; 2]>,
    pub domain_radius: f64,
    /// Uniform grid in `ln |psi_1|`, starting at the seed radius.
    pub log_radius: Vec<f64>,
    /// Phase points: uniform on `[0, 2 pi)` for a pair; `[+, -]` otherwise.
    pub phases: usize,
    /// Gain residual `gain[radius][phase]`.
    pub gain: Vec<Vec<[f64; 2]>>,
    /// State residual `output[radius][phase][component]`.
    pub output: Vec<Vec<Vec<f64>>>,
}

fn to_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn from_pair(p: [f64; 2]) -> C64 {
    c64(p[0], p[1])
}

/// Uniform Catmull-Rom weights for offsets `-1, 0, 1, 2` at fraction `s`.
fn cr_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        -0.5 * s3 + s2 - 0.5 * s,
        1.5 * s3 - 2.5 * s2 + 1.0,
        -1.5 * s3 + 2.0 * s2 + 0.5 * s,
        0.5 * s3 - 0.5 * s2,
    ]
}

/// Interpolated reduced-model value at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct RomPoint {
    pub gain: C64,
    pub x: Vec<f64>,
}

/// Build the tables from a traced family and an input channel `b`.
pub fn build_rom(manifold: &SlowManifold, channel: &[f64], cfg: &RomConfig) -> Result<ReducedModel> {
    let n = manifold.x0.len();
    if channel.len() != n {
        return Err(Error::GridMismatch(format!(
            "input channel has length {} but the model has dimension {n}",
            channel.len()
        )));
    }
    if cfg.radial_points < 4 || !(cfg.coverage > 0.0 && cfg.coverage <= 1.0) {
        return Err(Error::InvalidConfig("need at least 4 radial points and coverage in (0, 1]".into()));
    }
    if !manifold.pair && manifold.beta != 1 {
        return Err(Error::InvalidConfig(
            "reduced models need one real slow mode or one conjugate pair".into(),
        ));
    }
    let domain = manifold.coverage_radius(cfg.coverage).ok_or(Error::InsufficientCoverage)?;
    if !(domain > manifold.seed_radius) {
        return Err(Error::InsufficientCoverage);
    }
    let phases = if manifold.pair {
        cfg.phase_points.unwrap_or(manifold.rays.len()).max(4)
    } else {
        2
    };
    let log_radius = linspace(manifold.seed_radius.ln(), domain.ln(), cfg.radial_points - 1);
    let w1 = &manifold.left[0];
    let linear_gain: C64 = w1.iter().zip(channel).map(|(a, b)| a * *b).sum();
    let mut rom = ReducedModel {
        lambda: to_pair(manifold.values[0]),
        pair: manifold.pair,
        x0: manifold.x0.clone(),
        channel: channel.to_vec(),
        linear_gain: to_pair(linear_gain),
        v1: manifold.right[0].iter().map(|z| to_pair(*z)).collect(),
        domain_radius: domain,
        log_radius,
        phases,
        gain: Vec::new(),
        output: Vec::new(),
    };
    let dot = |s: &ManifoldSample| -> C64 { s.i1.iter().zip(channel).map(|(a, b)| a * *b).sum() };
    let rows: Vec<Result<(Vec<[f64; 2]>, Vec<Vec<f64>>)>> = rom
        .log_radius
        .par_iter()
        .map(|&lr| {
            let r = lr.exp();
            let mut gains = Vec::with_capacity(phases);
            let mut outs = Vec::with_capacity(phases);
            for p in 0..phases {
                let psi = rom.grid_point(r, p);
                let s = manifold.sample(psi).ok_or(Error::InsufficientCoverage)?;
                let lin = rom.linear_point(psi);
                let mut g = dot(&s) - lin.gain;
                if !manifold.pair {
                    g.im = 0.0;
                }
                gains.push(to_pair(g));
                outs.push(s.x.iter().zip(&lin.x).map(|(a, b)| a - b).collect());
            }
            Ok((gains, outs))
        })
        .collect();
    for row in rows {
        let (g, o) = row?;
        rom.gain.push(g);
        rom.output.push(o);
    }
    Ok(rom)
}

impl ReducedModel {
    pub fn lambda(&self) -> C64 {
        from_pair(self.lambda)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    fn grid_point(&self, r: f64, p: usize) -> C64 {
        if self.pair {
            C64::from_polar(r, 2.0 * PI * p as f64 / self.phases as f64)
        } else if p == 0 {
            c64(r, 0.0)
        } else {
            c64(-r, 0.0)
        }
    }

    fn seed_radius(&self) -> f64 {
        self.log_radius[0].exp()
    }

    /// Gain and state of the linearization at `psi`.
    pub fn linear_point(&self, psi: C64) -> RomPoint {
        let scale = if self.pair { 2.0 } else { 1.0 };
        let x = self
            .x0
            .iter()
            .zip(&self.v1)
            .map(|(x0, v)| x0 + scale * (psi * from_pair(*v)).re)
            .collect();
        RomPoint {
            gain: from_pair(self.linear_gain),
            x,
        }
    }

    /// Residual at radius `r` (inside the table range) and phase `phi`
    /// (ignored for a real mode, whose sign selects the column).
    fn table(&self, r: f64, phi: f64, negative: bool) -> RomPoint {
        let nr = self.log_radius.len();
        let l0 = self.log_radius[0];
        let dl = self.log_radius[1] - l0;
        let u = ((r.ln() - l0) / dl).clamp(0.0, (nr - 1) as f64);
        let i = (u.floor() as usize).min(nr - 2);
        let wr = cr_weights(u - i as f64);
        // ghost rows beyond either end extrapolate linearly
        let rows: Vec<(usize, usize, f64)> = (-1..=2isize)
            .map(|d| {
                let k = i as isize + d;
                if k < 0 {
                    (0, 1, -1.0)
                } else if k >= nr as isize {
                    (nr - 1, nr - 2, -1.0)
                } else {
                    (k as usize, k as usize, 0.0)
                }
            })
            .collect();

        let (cols, wp): (Vec<usize>, Vec<f64>) = if self.pair {
            let np = self.phases;
            let up = phi.rem_euclid(2.0 * PI) / (2.0 * PI / np as f64);
            let j = up.floor() as usize % np;
            let w = cr_weights(up - up.floor());
            (
                (-1..=2).map(|d: isize| (j as isize + d).rem_euclid(np as isize) as usize).collect(),
                w.to_vec(),
            )
        } else {
            (vec![usize::from(negative)], vec![1.0])
        };

        let n = self.dim();
        let mut gain = C64::new(0.0, 0.0);
        let mut x = vec![0.0; n];
        for ((near, far, c_far), w_a) in rows.iter().zip(&wr) {
            let c_near = 1.0 - c_far;
            for (c, w_c) in cols.iter().zip(&wp) {
                let w = w_a * w_c;
                let g = from_pair(self.gain[*near][*c]) * c_near + from_pair(self.gain[*far][*c]) * *c_far;
                gain += g * w;
                for ((xi, a), b) in x.iter_mut().zip(&self.output[*near][*c]).zip(&self.output[*far][*c]) {
                    *xi += w * (c_near * a + c_far * b);
                }
            }
        }
        RomPoint { gain, x }
    }

    /// Interpolated gain and state at `psi`, or `None` outside the domain.
    pub fn eval(&self, psi: C64) -> Option<RomPoint> {
        let psi = if self.pair { psi } else { c64(psi.re, 0.0) };
        let r = psi.norm();
        if !(r <= self.domain_radius) {
            return None;
        }
        let r0 = self.seed_radius();
        let lin = self.linear_point(psi);
        // the residual fades linearly to zero inside the seed radius
        let (res, s) = if r >= r0 {
            (self.table(r, psi.arg(), psi.re < 0.0), 1.0)
        } else {
            (self.table(r0, psi.arg(), psi.re < 0.0), r / r0)
        };
        Some(RomPoint {
            gain: lin.gain + res.gain * s,
            x: lin.x.iter().zip(&res.x).map(|(l, d)| l + s * d).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rom: Self = serde_json::from_str(text)?;
        rom.validate()?;
        Ok(rom)
    }

    /// Check table shapes.
    pub fn validate(&self) -> Result<()> {
        let nr = self.log_radius.len();
        let np = if self.pair { self.phases } else { 2 };
        let n = self.x0.len();
        let ok = nr >= 2
            && self.phases == np
            && self.gain.len() == nr
            && self.output.len() == nr
            && self.gain.iter().all(|g| g.len() == np)
            && self.output.iter().all(|o| o.len() == np && o.iter().all(|x| x.len() == n))
            && self.channel.len() == n
            && self.v1.len() == n;
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch("reduced-model tables have inconsistent shapes".into()))
        }
    }
}

/// Simulated reduced-model response.
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub t: Vec<f64>,
    pub psi: Vec<C64>,
    pub x: Vec<Vec<f64>>,
}

/// Integrate `psi_1' = lambda_1 psi_1 + i(psi_1) u(t)` from `psi0` over
/// `[0, t_end]`, sampling on `grid` (both endpoints when empty).
pub fn simulate_rom(
    rom: &ReducedModel,
    signal: &InputSignal,
    psi0: C64,
    t_end: f64,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<RomTrajectory> {
    signal.validate(0.0, t_end)?;
    let lambda = rom.lambda();
    let pair = rom.pair;
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let psi = c64(y[0], if pair { y[1] } else { 0.0 });
        let gain = match rom.eval(psi) {
            Some(p) => p.gain,
            None => return Err(Error::DomainExit { t, radius: psi.norm() }),
        };
        let d = lambda * psi + gain * signal.value(t);
        dy[0] = d.re;
        dy[1] = if pair { d.im } else { 0.0 };
        Ok(())
    };
    let y0 = [psi0.re, if pair { psi0.im } else { 0.0 }];
    let sampled = integrate(&mut rhs, &y0, (0.0, t_end), grid, cfg)?;
    let mut out = RomTrajectory {
        t: sampled.t,
        psi: Vec::with_capacity(sampled.x.len()),
        x: Vec::with_capacity(sampled.x.len()),
    };
    for (t, y) in out.t.iter().zip(&sampled.x) {
        let psi = c64(y[0], y[1]);
        let p = rom
            .eval(psi)
            .ok_or(Error::DomainExit { t: *t, radius: psi.norm() })?;
        out.psi.push(psi);
        out.x.push(p.x);
    }
    Ok(out)
}

/// A system whose response to a scalar input can be simulated from rest at
/// the fixed point.
#[derive(Debug, Clone)]
pub enum ResponseModel {
    /// `x' = F(x) + b u`.
    Full {
        model: Arc<dyn DynamicalModel>,
        x0: Vec<f64>,
        channel: Vec<f64>,
    },
    /// `x' = J (x - x0) + b u`.
    Linearized {
        jacobian: DMatrix<f64>,
        x0: Vec<f64>,
        channel: Vec<f64>,
    },
    Reduced(ReducedModel),
}

impl ResponseModel {
    pub fn full(model: Arc<dyn DynamicalModel>, spec: &Spectrum, channel: &[f64]) -> Result<Self> {
        check_channel(channel, spec.dim())?;
        Ok(ResponseModel::Full {
            model,
            x0: spec.x0.clone(),
            channel: channel.to_vec(),
        })
    }

    pub fn linearized(spec: &Spectrum, channel: &[f64]) -> Result<Self> {
        check_channel(channel, spec.dim())?;
        Ok(ResponseModel::Linearized {
            jacobian: spec.jacobian.clone(),
            x0: spec.x0.clone(),
            channel: channel.to_vec(),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ResponseModel::Full { .. } => "full",
            ResponseModel::Linearized { .. } => "linear",
            ResponseModel::Reduced(_) => "rom",
        }
    }

    /// State response on `grid` over `[0, t_end]`, starting at the fixed point.
    pub fn respond(&self, signal: &InputSignal, t_end: f64, grid: &[f64], cfg: &IntegratorConfig) -> Result<Sampled> {
        signal.validate(0.0, t_end)?;
        match self {
            ResponseModel::Full { model, x0, channel } => {
                let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
                    model.rhs(x, dx);
                    let u = signal.value(t);
                    for (d, b) in dx.iter_mut().zip(channel) {
                        *d += b * u;
                    }
                    Ok(())
                };
                integrate(&mut rhs, x0, (0.0, t_end), grid, cfg)
            }
            ResponseModel::Linearized { jacobian, x0, channel } => {
                let n = x0.len();
                let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                    let d = jacobian * DVector::from_column_slice(y);
                    let u = signal.value(t);
                    for i in 0..n {
                        dy[i] = d[i] + channel[i] * u;
                    }
                    Ok(())
                };
                let dev = integrate(&mut rhs, &vec![0.0; n], (0.0, t_end), grid, cfg)?;
                Ok(Sampled {
                    t: dev.t,
                    x: dev
                        .x
                        .into_iter()
                        .map(|d| d.iter().zip(x0).map(|(a, b)| a + b).collect())
                        .collect(),
                })
            }
            ResponseModel::Reduced(rom) => {
                let tr = simulate_rom(rom, signal, c64(0.0, 0.0), t_end, grid, cfg)?;
                Ok(Sampled { t: tr.t, x: tr.x })
            }
        }
    }
}

fn check_channel(channel: &[f64], n: usize) -> Result<()> {
    if channel.len() == n {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "input channel has length {} but the model has dimension {n}",
            channel.len()
        )))
    }
}

/// Settings for steady-state forced responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForcedConfig {
    pub integrator: IntegratorConfig,
    /// Forcing periods simulated before maxima are recorded.
    pub settle_periods: usize,
    /// Successive cycles whose maxima are reported.
    pub cycles: usize,
    pub samples_per_period: usize,
    /// State component whose maxima are recorded.
    pub output: usize,
    /// Largest change allowed between a cycle maximum and the one `cycles` later.
    pub settle_tol: f64,
    /// Split between successive maxima that counts as period doubling.
    pub gap: f64,
}

impl Default for ForcedConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::dopri5(1e-10, 1e-10),
            settle_periods: 20,
            cycles: 2,
            samples_per_period: 400,
            output: 0,
            settle_tol: 1e-3,
            gap: 1e-3,
        }
    }
}

/// Maximum of the samples with a parabolic refinement through the
/// neighbouring samples.
fn refined_max(v: &[f64]) -> f64 {
    let (k, &m) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty cycle");
    if k == 0 || k + 1 == v.len() {
        return m;
    }
    let (a, b, c) = (v[k - 1], v[k], v[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return m;
    }
    let d = 0.5 * (a - c) / denom;
    b - 0.25 * (a - c) * d
}

/// Per-cycle maxima of the configured output over `cycles` successive
/// forcing periods after settling. The simulation runs `2 cycles` periods
/// past the settling time and checks that each maximum repeats after
/// `cycles` periods, which admits period-1 and period-`cycles` responses.
pub fn steady_state_maxima(system: &ResponseModel, signal: &InputSignal, cfg: &ForcedConfig) -> Result<Vec<f64>> {
    let period = signal
        .period()
        .ok_or(Error::InvalidConfig("steady-state maxima need a periodic input".into()))?;
    if cfg.cycles == 0 || cfg.samples_per_period < 8 {
        return Err(Error::InvalidConfig("need at least one cycle and 8 samples per period".into()));
    }
    let total = cfg.settle_periods + 2 * cfg.cycles;
    let t_end = period * total as f64;
    let t_start = period * cfg.settle_periods as f64;
    let m = cfg.samples_per_period;
    let grid = linspace(t_start, t_end, 2 * cfg.cycles * m);
    let out = system.respond(signal, t_end, &grid, &cfg.integrator)?;
    let series: Vec<f64> = out
        .x
        .iter()
        .map(|x| x.get(cfg.output).copied().ok_or(Error::InvalidConfig("output index out of range".into())))
        .collect::<Result<_>>()?;
    let maxima: Vec<f64> = (0..2 * cfg.cycles)
        .map(|c| refined_max(&series[c * m..=(c + 1) * m]))
        .collect();
    let settled = (0..cfg.cycles).all(|k| (maxima[k] - maxima[k + cfg.cycles]).abs() <= cfg.settle_tol);
    if !settled {
        return Err(Error::NotSettled { maxima });
    }
    Ok(maxima[cfg.cycles..].to_vec())
}

/// One amplitude of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub a: f64,
    pub max1: f64,
    pub max2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub model: String,
    pub points: Vec<SweepPoint>,
    /// Smallest amplitude whose successive maxima split by more than the gap.
    pub a_crit: Option<f64>,
    /// Grid value below `a_crit`.
    pub bracket_low: Option<f64>,
}

impl Sweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "max1", "max2"])?;
        for p in &self.points {
            w.write_record([format!("{:?}", p.a), format!("{:?}", p.max1), format!("{:?}", p.max2)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two-cycle maxima for every amplitude on `grid` (in parallel).
pub fn sweep_amplitudes<F>(system: &ResponseModel, family: F, grid: &[f64], cfg: &ForcedConfig) -> Result<Sweep>
where
    F: Fn(f64) -> InputSignal + Sync,
{
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("amplitude grid must be strictly increasing".into()));
    }
    if cfg.cycles != 2 {
        return Err(Error::InvalidConfig("amplitude sweeps record two cycles".into()));
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&a| {
            let m = steady_state_maxima(system, &family(a), cfg)?;
            Ok(SweepPoint {
                a,
                max1: m[0],
                max2: m[1],
            })
        })
        .collect::<Result<_>>()?;
    let idx = points.iter().position(|p| (p.max1 - p.max2).abs() > cfg.gap);
    Ok(Sweep {
        model: system.label().to_string(),
        a_crit: idx.map(|i| points[i].a),
        bracket_low: idx.and_then(|i| i.checked_sub(1)).map(|i| points[i].a),
        points,
    })
}

/// Smallest amplitude on `grid` with a period-2 steady state.
pub fn find_period_doubling<F>(system: &ResponseModel, family: F, grid: &[f64], cfg: &ForcedConfig) -> Result<Sweep>
where
    F: Fn(f64) -> InputSignal + Sync,
{
    let sweep = sweep_amplitudes(system, family, grid, cfg)?;
    if sweep.a_crit.is_none() {
        return Err(Error::NoBifurcationInRange);
    }
    Ok(sweep)
}

/// Amplitude grid `lo, lo + step, ..., hi` (inclusive, rounded to the step).
pub fn amplitude_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && hi >= lo) {
        return Err(Error::InvalidConfig("amplitude grid needs step > 0 and hi >= lo".into()));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| lo + step * k as f64).collect())
}

/// Root-mean-square over time of the 2-norm error between two sampled
/// responses, restricted to `t >= from`.
pub fn error_norm(reference: &Sampled, other: &Sampled, from: f64) -> Result<f64> {
    if reference.t.len() != other.t.len() {
        return Err(Error::GridMismatch("responses are sampled on different grids".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((t, a), b) in reference.t.iter().zip(&reference.x).zip(&other.x) {
        if *t >= from {
            sum += a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::GridMismatch("no samples in the error window".into()));
    }
    Ok((sum / count as f64).sqrt())
}
