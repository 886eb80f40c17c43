//! Explicit Runge-Kutta integrators: fixed-step classical RK4 and the
//! Dormand-Prince 5(4) pair with PI step-size control and its native
//! continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Dopri5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4; initial step guess for the adaptive method.
    pub step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    /// Infinity-norm bound on the state; exceeding it raises `BlowUp`.
    pub blowup_norm: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Dopri5,
            step: 0.01,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 5_000_000,
            blowup_norm: 1e8,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4,
            step,
            ..Self::default()
        }
    }

    pub fn dopri5(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method: Method::Dopri5,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("integrator step must be positive");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad("integrator tolerances must be positive");
        }
        if self.max_steps == 0 {
            return bad("integrator max_steps must be positive");
        }
        if !(self.blowup_norm > 0.0) {
            return bad("integrator blowup_norm must be positive");
        }
        Ok(())
    }
}

/// Fallible right-hand side `f(t, x, dx)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;
}

impl<F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>> Rhs for F {
    fn eval(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self(t, x, dx)
    }
}

/// Adapter for infallible closures.
pub fn infallible<F: FnMut(f64, &[f64], &mut [f64])>(
    mut f: F,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> {
    move |t, x, dx| {
        f(t, x, dx);
        Ok(())
    }
}

/// Interpolation data for one accepted step.
#[derive(Debug, Clone)]
pub enum Interp {
    /// Cubic Hermite from end values and derivatives.
    Hermite { x0: Vec<f64>, x1: Vec<f64>, f0: Vec<f64>, f1: Vec<f64> },
    /// Dormand-Prince continuous extension coefficients.
    Dopri { r: [Vec<f64>; 5] },
}

#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub interp: Interp,
}

impl Step {
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let h = self.t1 - self.t0;
        let th = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        match &self.interp {
            Interp::Hermite { x0, x1, f0, f1 } => {
                let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
                let h10 = th * (1.0 - th) * (1.0 - th);
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = th * th * (th - 1.0);
                (0..x0.len())
                    .map(|i| h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i])
                    .collect()
            }
            Interp::Dopri { r } => {
                let th1 = 1.0 - th;
                (0..r[0].len())
                    .map(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
                    .collect()
            }
        }
    }

    pub fn end_state(&self) -> Vec<f64> {
        self.state_at(self.t1)
    }
}

/// Sampled trajectory on a requested grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

/// Outcome of a driven integration: final time and state.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub steps: usize,
}

fn check_state(t: f64, x: &[f64], cfg: &IntegratorConfig) -> Result<()> {
    let mut norm = 0.0_f64;
    for v in x {
        if !v.is_finite() {
            return Err(Error::NonFinite("integrator state"));
        }
        norm = norm.max(v.abs());
    }
    if norm > cfg.blowup_norm {
        return Err(Error::BlowUp { t, norm });
    }
    Ok(())
}

fn axpy_into(out: &mut [f64], x: &[f64], terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut s = x[i];
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = s;
    }
}

/// One classical RK4 step `x(t) -> x(t+h)`. `f0` must hold `f(t, x)`.
pub fn rk4_step<R: Rhs>(
    rhs: &mut R,
    t: f64,
    x: &[f64],
    f0: &[f64],
    h: f64,
    out: &mut [f64],
) -> Result<()> {
    let n = x.len();
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    axpy_into(&mut tmp, x, &[(0.5 * h, f0)]);
    rhs.eval(t + 0.5 * h, &tmp, &mut k2)?;
    axpy_into(&mut tmp, x, &[(0.5 * h, &k2)]);
    rhs.eval(t + 0.5 * h, &tmp, &mut k3)?;
    axpy_into(&mut tmp, x, &[(h, &k3)]);
    rhs.eval(t + h, &tmp, &mut k4)?;
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (f0[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

/// Integrate from `t0` to `t1` (either direction), calling `on_step` after
/// every accepted step. Returning `false` from `on_step` stops early.
pub fn drive<R, C>(
    rhs: &mut R,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    mut on_step: C,
) -> Result<Endpoint>
where
    R: Rhs,
    C: FnMut(&Step) -> Result<bool>,
{
    cfg.validate()?;
    check_state(t0, x0, cfg)?;
    let n = x0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    rhs.eval(t, &x, &mut f)?;
    let mut steps = 0usize;
    if span == 0.0 {
        return Ok(Endpoint { t, x, steps });
    }
    let end_tol = 1e-12 * span.max(1.0);

    match cfg.method {
        Method::Rk4 => {
            let count = (span / cfg.step - 1e-9).ceil().max(1.0) as usize;
            let h_nominal = span / count as f64;
            let mut xn = vec![0.0; n];
            let mut fn_ = vec![0.0; n];
            for i in 0..count {
                if steps >= cfg.max_steps {
                    return Err(Error::StepLimitExceeded { steps, t });
                }
                let tn = if i + 1 == count { t1 } else { t0 + dir * h_nominal * (i + 1) as f64 };
                rk4_step(rhs, t, &x, &f, tn - t, &mut xn)?;
                check_state(tn, &xn, cfg)?;
                rhs.eval(tn, &xn, &mut fn_)?;
                steps += 1;
                let step = Step {
                    t0: t,
                    t1: tn,
                    interp: Interp::Hermite {
                        x0: x.clone(),
                        x1: xn.clone(),
                        f0: f.clone(),
                        f1: fn_.clone(),
                    },
                };
                std::mem::swap(&mut x, &mut xn);
                std::mem::swap(&mut f, &mut fn_);
                t = tn;
                if !on_step(&step)? {
                    break;
                }
            }
            Ok(Endpoint { t, x, steps })
        }
        Method::Dopri5 => {
            let mut h = cfg.step.min(span);
            let mut err_old = 1e-4_f64;
            let mut rejected_last = false;
            let mut k = vec![vec![0.0; n]; 7];
            let mut tmp = vec![0.0; n];
            let mut y1 = vec![0.0; n];
            loop {
                let remaining = (t1 - t) * dir;
                if remaining <= end_tol {
                    break;
                }
                if steps >= cfg.max_steps {
                    return Err(Error::StepLimitExceeded { steps, t });
                }
                let last = h >= remaining;
                if last {
                    h = remaining;
                }
                let hs = dir * h;
                k[0].copy_from_slice(&f);
                axpy_into(&mut tmp, &x, &[(hs * A21, &k[0])]);
                rhs.eval(t + C2 * hs, &tmp, &mut k[1])?;
                axpy_into(&mut tmp, &x, &[(hs * A31, &k[0]), (hs * A32, &k[1])]);
                rhs.eval(t + C3 * hs, &tmp, &mut k[2])?;
                axpy_into(&mut tmp, &x, &[(hs * A41, &k[0]), (hs * A42, &k[1]), (hs * A43, &k[2])]);
                rhs.eval(t + C4 * hs, &tmp, &mut k[3])?;
                axpy_into(
                    &mut tmp,
                    &x,
                    &[(hs * A51, &k[0]), (hs * A52, &k[1]), (hs * A53, &k[2]), (hs * A54, &k[3])],
                );
                rhs.eval(t + C5 * hs, &tmp, &mut k[4])?;
                axpy_into(
                    &mut tmp,
                    &x,
                    &[
                        (hs * A61, &k[0]),
                        (hs * A62, &k[1]),
                        (hs * A63, &k[2]),
                        (hs * A64, &k[3]),
                        (hs * A65, &k[4]),
                    ],
                );
                rhs.eval(t + hs, &tmp, &mut k[5])?;
                axpy_into(
                    &mut y1,
                    &x,
                    &[
                        (hs * A71, &k[0]),
                        (hs * A73, &k[2]),
                        (hs * A74, &k[3]),
                        (hs * A75, &k[4]),
                        (hs * A76, &k[5]),
                    ],
                );
                let t_new = if last { t1 } else { t + hs };
                rhs.eval(t_new, &y1, &mut k[6])?;

                let mut err = 0.0;
                for i in 0..n {
                    let e = hs
                        * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                            + E7 * k[6][i]);
                    let sk = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(y1[i].abs());
                    err += (e / sk) * (e / sk);
                }
                let err = (err / n.max(1) as f64).sqrt();
                if !err.is_finite() {
                    h *= FAC_MIN;
                    rejected_last = true;
                    if h < 1e-14 * span.max(1.0) {
                        return Err(Error::NonFinite("adaptive step error estimate"));
                    }
                    continue;
                }
                let expo1 = 0.2 - PI_BETA * 0.75;
                let fac11 = err.powf(expo1);
                if err <= 1.0 {
                    let mut fac = fac11 / err_old.powf(PI_BETA);
                    fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                    let mut h_new = h / fac;
                    if rejected_last {
                        h_new = h_new.min(h);
                    }
                    err_old = err.max(1e-4);
                    rejected_last = false;
                    check_state(t_new, &y1, cfg)?;
                    steps += 1;
                    let r = {
                        let mut r0 = vec![0.0; n];
                        let mut r1 = vec![0.0; n];
                        let mut r2 = vec![0.0; n];
                        let mut r3 = vec![0.0; n];
                        let mut r4 = vec![0.0; n];
                        for i in 0..n {
                            let ydiff = y1[i] - x[i];
                            let bspl = hs * k[0][i] - ydiff;
                            r0[i] = x[i];
                            r1[i] = ydiff;
                            r2[i] = bspl;
                            r3[i] = ydiff - hs * k[6][i] - bspl;
                            r4[i] = hs
                                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i]
                                    + D6 * k[5][i]
                                    + D7 * k[6][i]);
                        }
                        [r0, r1, r2, r3, r4]
                    };
                    let step = Step {
                        t0: t,
                        t1: t_new,
                        interp: Interp::Dopri { r },
                    };
                    t = t_new;
                    x.copy_from_slice(&y1);
                    f.copy_from_slice(&k[6]);
                    h = h_new;
                    if !on_step(&step)? {
                        break;
                    }
                } else {
                    h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
                    rejected_last = true;
                    if h < 1e-14 * span.max(1.0) {
                        return Err(Error::StepLimitExceeded { steps, t });
                    }
                }
            }
            Ok(Endpoint { t, x, steps })
        }
    }
}

/// Integrate and sample on `grid` (monotone in the direction of `t_span`,
/// inside the span). An empty grid samples the two endpoints.
pub fn integrate<R: Rhs>(
    rhs: &mut R,
    x0: &[f64],
    t_span: (f64, f64),
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Sampled> {
    let (t0, t1) = t_span;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let owned;
    let grid = if grid.is_empty() {
        owned = vec![t0, t1];
        &owned[..]
    } else {
        grid
    };
    let tol = 1e-12 * (t1 - t0).abs().max(1.0);
    for w in grid.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::GridMismatch("output grid is not monotone".into()));
        }
    }
    if grid.iter().any(|&g| (g - t0) * dir < -tol || (g - t1) * dir > tol) {
        return Err(Error::GridMismatch("output grid leaves the integration span".into()));
    }
    let mut out = Sampled {
        t: Vec::with_capacity(grid.len()),
        x: Vec::with_capacity(grid.len()),
    };
    let mut next = 0;
    while next < grid.len() && (grid[next] - t0).abs() <= tol {
        out.t.push(grid[next]);
        out.x.push(x0.to_vec());
        next += 1;
    }
    drive(rhs, x0, t0, t1, cfg, |step| {
        while next < grid.len() && (grid[next] - step.t1) * dir <= tol {
            out.t.push(grid[next]);
            out.x.push(step.state_at(grid[next]));
            next += 1;
        }
        Ok(true)
    })?;
    Ok(out)
}

/// Evenly spaced grid with `count + 1` points from `t0` to `t1`.
pub fn linspace(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| t0 + (t1 - t0) * i as f64 / count.max(1) as f64)
        .collect()
}
