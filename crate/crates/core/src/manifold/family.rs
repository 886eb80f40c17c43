//! Families of rays seeded on a small circle (complex pair) or at both
//! signs (single real mode), with interpolation over the slow coordinate.
//!
//! For a complex pair, every ray satisfies
//! `psi_1(t~) = eps exp(i theta) exp(-lambda_1 t~)`, so all rays reach the
//! radius `r` at the same backward time `ln(r / eps) / |Re lambda_1|` with
//! phases spread uniformly. Sampling at `psi_1 = r exp(i phi)` interpolates
//! each ray in time and then the rays in phase.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::ExpansionTensors;
use crate::models::DynamicalModel;
use crate::numerics::linalg::{c64, CVector, C64};
use crate::spectrum::Spectrum;

use super::{trace_asym, trace_naive, trace_pc, ManifoldTrajectory, Method, SlowModes, TraceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    pub method: Method,
    /// Number of rays `K` for two slow dimensions.
    pub rays: usize,
    pub seed_radius: f64,
    pub trace: TraceConfig,
    /// Fraction of rays that must succeed.
    pub min_success: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            method: Method::Pc,
            rays: 200,
            seed_radius: 0.01,
            trace: TraceConfig::default(),
            min_success: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFailure {
    pub index: usize,
    pub code: String,
    pub message: String,
}

/// A traced family of rays on a one- or two-dimensional slow manifold.
#[derive(Debug, Clone)]
pub struct SlowManifold {
    pub beta: usize,
    pub method: Method,
    pub x0: Vec<f64>,
    /// Slow eigenvalues.
    pub values: Vec<C64>,
    /// Right and left slow eigenvectors (for the region inside the seeds).
    pub right: Vec<CVector>,
    pub left: Vec<CVector>,
    pub seed_radius: f64,
    /// Seed phase (`theta_k`) or sign (`0` or `pi`) of each ray.
    pub phases: Vec<f64>,
    pub seeds: Vec<Vec<C64>>,
    pub rays: Vec<Option<ManifoldTrajectory>>,
    pub failures: Vec<RayFailure>,
    /// Whether the first two slow modes form a conjugate pair.
    pub pair: bool,
}

/// A point on the manifold with the first slow gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSample {
    pub x: Vec<f64>,
    pub i1: CVector,
}

/// Seeds of the family: both signs for one slow mode, `K` phases otherwise.
pub fn family_seeds(spec: &Spectrum, rays: usize, radius: f64) -> Result<(Vec<f64>, Vec<Vec<C64>>, bool)> {
    let modes = SlowModes::new(spec);
    match modes.beta {
        1 => Ok((
            vec![0.0, PI],
            vec![vec![c64(radius, 0.0)], vec![c64(-radius, 0.0)]],
            false,
        )),
        2 => {
            if rays < 3 {
                return Err(Error::InvalidConfig("at least three rays are needed".into()));
            }
            let pair = modes.partner[0] == Some(1);
            let phases: Vec<f64> = (0..rays).map(|k| 2.0 * PI * k as f64 / rays as f64).collect();
            let seeds = phases
                .iter()
                .map(|&th| {
                    if pair {
                        modes.expand_psi(&[C64::from_polar(radius, th)])
                    } else {
                        vec![c64(radius * th.cos(), 0.0), c64(radius * th.sin(), 0.0)]
                    }
                })
                .collect();
            Ok((phases, seeds, pair))
        }
        beta => Err(Error::InvalidConfig(format!(
            "families are built for one or two slow dimensions, not {beta}"
        ))),
    }
}

/// Trace one ray with the configured method.
pub fn trace_ray(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    exp: Option<&ExpansionTensors>,
    method: Method,
    psi0: &[C64],
    cfg: &TraceConfig,
) -> Result<ManifoldTrajectory> {
    let seed_exp = match cfg.seed_order {
        Some(_) => Some(exp.ok_or(Error::InvalidConfig("seeding from the expansion needs one".into()))?),
        None => None,
    };
    match method {
        Method::Asym { order } => {
            let e = exp.ok_or(Error::InvalidConfig("asymptotic tracing needs an expansion".into()))?;
            trace_asym(model, spec, e, order, psi0, cfg)
        }
        Method::Pc => trace_pc(model, spec, psi0, seed_exp, cfg),
        Method::Naive => trace_naive(model, spec, psi0, seed_exp, cfg),
    }
}

/// Trace the family in parallel. Succeeds when at least `min_success` of
/// the rays complete; failed rays are kept as holes.
pub fn build_manifold(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    exp: Option<&ExpansionTensors>,
    cfg: &FamilyConfig,
) -> Result<SlowManifold> {
    cfg.trace.validate()?;
    if !(cfg.seed_radius > 0.0) {
        return Err(Error::InvalidConfig("seed radius must be positive".into()));
    }
    let (phases, seeds, pair) = family_seeds(spec, cfg.rays, cfg.seed_radius)?;
    let results: Vec<Result<ManifoldTrajectory>> = seeds
        .par_iter()
        .map(|psi0| trace_ray(model, spec, exp, cfg.method, psi0, &cfg.trace))
        .collect();
    let total = results.len();
    let mut rays = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => rays.push(Some(t)),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                failures.push(RayFailure {
                    index,
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
                rays.push(None);
            }
        }
    }
    let succeeded = total - failures.len();
    if (succeeded as f64) < cfg.min_success * total as f64 {
        return Err(Error::InsufficientRays { succeeded, total });
    }
    let beta = spec.beta();
    Ok(SlowManifold {
        beta,
        method: cfg.method,
        x0: spec.x0.clone(),
        values: spec.values[..beta].to_vec(),
        right: (0..beta).map(|k| spec.v(k)).collect(),
        left: (0..beta).map(|k| spec.w(k)).collect(),
        seed_radius: cfg.seed_radius,
        phases,
        seeds,
        rays,
        failures,
        pair,
    })
}

/// Catmull-Rom interpolation of vector samples at non-uniform times.
fn catmull_rom<T>(ts: &[f64], ys: &[T], t: f64, lerp: impl Fn(&[(f64, &T)]) -> T) -> Option<T> {
    let n = ts.len();
    if n == 0 || t < ts[0] || t > ts[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(lerp(&[(1.0, &ys[0])]));
    }
    let i = match ts.binary_search_by(|p| p.total_cmp(&t)) {
        Ok(i) => return Some(lerp(&[(1.0, &ys[i])])),
        Err(i) => i - 1,
    };
    let (t0, t1) = (ts[i], ts[i + 1]);
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
    let h10 = s * s * s - 2.0 * s * s + s;
    let h01 = -2.0 * s * s * s + 3.0 * s * s;
    let h11 = s * s * s - s * s;
    // slopes by centered differences (one-sided at the ends), scaled by h
    let mut terms: Vec<(f64, &T)> = vec![(h00, &ys[i]), (h01, &ys[i + 1])];
    for (k, w) in [(i, h10), (i + 1, h11)] {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
        let span = ts[b] - ts[a];
        terms.push((w * h / span, &ys[b]));
        terms.push((-w * h / span, &ys[a]));
    }
    Some(lerp(&terms))
}

fn combine_real(terms: &[(f64, &Vec<f64>)]) -> Vec<f64> {
    let mut out = vec![0.0; terms[0].1.len()];
    for (w, v) in terms {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    out
}

fn combine_complex(terms: &[(f64, &CVector)]) -> CVector {
    let mut out = CVector::zeros(terms[0].1.len());
    for (w, v) in terms {
        out += *v * c64(*w, 0.0);
    }
    out
}

impl SlowManifold {
    pub fn slow_rate(&self) -> f64 {
        -self.values[0].re
    }

    /// Backward time at which `|psi_1| = r` along every ray.
    pub fn time_at_radius(&self, r: f64) -> f64 {
        (r / self.seed_radius).ln() / self.slow_rate()
    }

    /// Largest `|psi_1|` reached by ray `k`.
    pub fn ray_radius(&self, k: usize) -> Option<f64> {
        self.rays[k]
            .as_ref()
            .map(|t| self.seed_radius * (self.slow_rate() * t.t_back.last().copied().unwrap_or(0.0)).exp())
    }

    /// Largest radius covered by at least `fraction` of the rays.
    pub fn coverage_radius(&self, fraction: f64) -> Option<f64> {
        let total = self.rays.len();
        let mut radii: Vec<f64> = (0..total).filter_map(|k| self.ray_radius(k)).collect();
        radii.sort_by(|a, b| b.total_cmp(a));
        let need = ((fraction * total as f64).ceil() as usize).max(1);
        radii.get(need - 1).copied()
    }

    fn ray_value(&self, k: usize, t: f64) -> Option<ManifoldSample> {
        let ray = self.rays[k].as_ref()?;
        let x = catmull_rom(&ray.t_back, &ray.x, t, combine_real)?;
        let i1: Vec<CVector> = ray.i_slow.iter().map(|v| v[0].clone()).collect();
        let i1 = catmull_rom(&ray.t_back, &i1, t, combine_complex)?;
        Some(ManifoldSample { x, i1 })
    }

    /// Ray value minus the linear approximation at the ray's own coordinate.
    fn ray_residual(&self, k: usize, t: f64) -> Option<ManifoldSample> {
        let v = self.ray_value(k, t)?;
        let r = self.seed_radius * (self.slow_rate() * t).exp();
        let lin = self.linear_sample(C64::from_polar(r, self.ray_phase(k, t)));
        Some(ManifoldSample {
            x: v.x.iter().zip(&lin.x).map(|(a, b)| a - b).collect(),
            i1: v.i1 - lin.i1,
        })
    }

    /// Phase of `psi_1` along ray `k` at backward time `t`.
    fn ray_phase(&self, k: usize, t: f64) -> f64 {
        (self.phases[k] - self.values[0].im * t).rem_euclid(2.0 * PI)
    }

    /// State and first slow gradient at slow coordinate `psi1`. Inside the
    /// seed radius the linear approximation is returned.
    pub fn sample(&self, psi1: C64) -> Option<ManifoldSample> {
        let r = psi1.norm();
        if r <= self.seed_radius {
            return Some(self.linear_sample(psi1));
        }
        let t = self.time_at_radius(r);
        if !self.pair {
            if self.beta != 1 {
                return None;
            }
            let k = if psi1.re >= 0.0 { 0 } else { 1 };
            return self.ray_value(k, t);
        }
        let k_total = self.rays.len();
        let spacing = 2.0 * PI / k_total as f64;
        let base = self.ray_phase(0, t);
        let u = ((psi1.arg() - base).rem_euclid(2.0 * PI)) / spacing;
        let i = (u.floor() as usize) % k_total;
        let s = u - u.floor();
        let idx = |d: isize| ((i as isize + d).rem_euclid(k_total as isize)) as usize;
        let vals: Vec<Option<ManifoldSample>> = (-1..=2).map(|d| self.ray_residual(idx(d), t)).collect();
        let res = match (&vals[0], &vals[1], &vals[2], &vals[3]) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                // uniform Catmull-Rom in phase
                let w = [
                    -0.5 * s * s * s + s * s - 0.5 * s,
                    1.5 * s * s * s - 2.5 * s * s + 1.0,
                    -1.5 * s * s * s + 2.0 * s * s + 0.5 * s,
                    0.5 * s * s * s - 0.5 * s * s,
                ];
                let x = combine_real(&[(w[0], &a.x), (w[1], &b.x), (w[2], &c.x), (w[3], &d.x)]);
                let i1 = combine_complex(&[(w[0], &a.i1), (w[1], &b.i1), (w[2], &c.i1), (w[3], &d.i1)]);
                ManifoldSample { x, i1 }
            }
            (_, Some(b), Some(c), _) => ManifoldSample {
                x: combine_real(&[(1.0 - s, &b.x), (s, &c.x)]),
                i1: combine_complex(&[(1.0 - s, &b.i1), (s, &c.i1)]),
            },
            _ => self.bridge_hole(i, s, t)?,
        };
        let lin = self.linear_sample(psi1);
        Some(ManifoldSample {
            x: lin.x.iter().zip(&res.x).map(|(a, b)| a + b).collect(),
            i1: lin.i1 + res.i1,
        })
    }

    /// Linear interpolation of residuals across a run of failed rays.
    fn bridge_hole(&self, i: usize, s: f64, t: f64) -> Option<ManifoldSample> {
        let k_total = self.rays.len();
        let mut lo = None;
        for d in 0..k_total {
            let k = (i + k_total - d) % k_total;
            if let Some(v) = self.ray_residual(k, t) {
                lo = Some((d as f64, v));
                break;
            }
        }
        let mut hi = None;
        for d in 1..=k_total {
            let k = (i + d) % k_total;
            if let Some(v) = self.ray_residual(k, t) {
                hi = Some((d as f64, v));
                break;
            }
        }
        let ((dl, a), (dh, b)) = (lo?, hi?);
        let w = (dl + s) / (dl + dh);
        Some(ManifoldSample {
            x: combine_real(&[(1.0 - w, &a.x), (w, &b.x)]),
            i1: combine_complex(&[(1.0 - w, &a.i1), (w, &b.i1)]),
        })
    }

    fn linear_sample(&self, psi1: C64) -> ManifoldSample {
        let mut x = self.x0.clone();
        let psi: Vec<C64> = if self.pair {
            vec![psi1, psi1.conj()]
        } else {
            vec![psi1]
        };
        for (p, v) in psi.iter().zip(&self.right) {
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi += (p * vi).re;
            }
        }
        ManifoldSample {
            x,
            i1: self.left[0].clone(),
        }
    }

    /// Points of the level set `|psi_1| = r`, one per available ray, ordered
    /// by phase.
    pub fn level_set(&self, r: f64) -> Vec<(f64, Vec<f64>)> {
        let t = self.time_at_radius(r);
        let mut pts: Vec<(f64, Vec<f64>)> = (0..self.rays.len())
            .filter_map(|k| self.ray_value(k, t).map(|v| (self.ray_phase(k, t), v.x)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn succeeded(&self) -> usize {
        self.rays.iter().filter(|r| r.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{expand, ExpansionOptions};
    use crate::models::{Planar, TensorOptions};
    use crate::numerics::linalg::c64;
    use crate::spectrum::analyze;

    #[test]
    fn catmull_rom_reproduces_nodes_and_cubics() {
        let ts = vec![0.0, 0.5, 1.5, 2.0, 3.0];
        let ys: Vec<Vec<f64>> = ts.iter().map(|t| vec![*t, t * t]).collect();
        for (t, y) in ts.iter().zip(&ys) {
            assert_eq!(&catmull_rom(&ts, &ys, *t, combine_real).unwrap(), y);
        }
        let v = catmull_rom(&ts, &ys, 1.0, combine_real).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(catmull_rom(&ts, &ys, 3.5, combine_real).is_none());
    }

    #[test]
    fn planar_family_is_the_quartic() {
        let s = analyze(&Planar, None).unwrap();
        let (e, _) = expand(&Planar, &s, 4, &ExpansionOptions::default(), &TensorOptions::default()).unwrap();
        let cfg = FamilyConfig {
            method: Method::Asym { order: 4 },
            seed_radius: 0.001,
            trace: TraceConfig {
                t_max: 150.0,
                dt_correct: 0.5,
                psi_cap: Some(1.6),
                ..TraceConfig::default()
            },
            ..FamilyConfig::default()
        };
        let m = build_manifold(&Planar, &s, Some(&e), &cfg).unwrap();
        assert_eq!(m.rays.len(), 2);
        assert!(m.coverage_radius(0.9).unwrap() >= 1.5);
        for p in [-1.5, -0.7, -0.0005, 0.2, 1.1, 1.5] {
            let v = m.sample(c64(p, 0.0)).unwrap();
            assert!((v.x[0] - p).abs() < 1e-4, "{p} {:?}", v.x);
            assert!((v.x[1] - Planar::manifold(v.x[0])).abs() < 1e-4);
            assert!((v.i1[0] - c64(1.0, 0.0)).norm() < 1e-4);
            assert!(v.i1[1].norm() < 1e-4);
        }
    }
}
