//! Tracing with dual vectors from the Taylor series of the state in the
//! slow isostable coordinates.

use crate::error::{Error, Result};
use crate::expansion::ExpansionTensors;
use crate::models::DynamicalModel;
use crate::numerics::linalg::{CVector, C64};
use crate::spectrum::Spectrum;

use super::{backward_rhs, backward_velocity, trace_single_pass, ManifoldTrajectory, Method, SlowModes, TraceConfig};

/// Integrate backward from the series state at `psi0` (all `beta` slow
/// coordinates), using the complement of the series dual vectors truncated
/// at `order` and propagating the slow gradients alongside.
pub fn trace_asym(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    exp: &ExpansionTensors,
    order: usize,
    psi0: &[C64],
    cfg: &TraceConfig,
) -> Result<ManifoldTrajectory> {
    if order == 0 || order > exp.order {
        return Err(Error::OrderUnavailable { order });
    }
    if psi0.len() != spec.beta() || exp.beta != spec.beta() {
        return Err(Error::GridMismatch(format!(
            "{} seed coordinates for {} slow modes",
            psi0.len(),
            spec.beta()
        )));
    }
    let modes = SlowModes::new(spec);
    let x_seed = exp.reconstruct_truncated(psi0, order)?;
    let complement = |t: f64| -> Result<(Vec<C64>, nalgebra::DMatrix<f64>)> {
        let psi = modes.psi_at(psi0, t);
        let g: Vec<CVector> = modes
            .independent
            .iter()
            .map(|&k| exp.g_series(&psi, k, order))
            .collect::<Result<_>>()?;
        Ok((psi, modes.complement(&g)?))
    };
    let velocity = |t: f64, _x: &[f64], grads: &[CVector]| -> Result<Vec<f64>> {
        let (psi, comp) = complement(t)?;
        backward_velocity(&modes, grads, &comp, &psi)
    };
    let cond_at = |t: f64, _x: &[f64], grads: &[CVector]| -> Result<f64> {
        let (psi, comp) = complement(t)?;
        Ok(backward_rhs(&modes, grads, &comp, &psi, cfg.cond_limit)?.1)
    };
    trace_single_pass(model, spec, Method::Asym { order }, psi0, x_seed, cfg, velocity, cond_at, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{expand, ExpansionOptions};
    use crate::models::{LinearModel, Planar, TensorOptions};
    use crate::numerics::linalg::c64;
    use crate::spectrum::analyze;
    use nalgebra::DMatrix;

    fn planar_trace(order: usize, seed: f64) -> ManifoldTrajectory {
        let s = analyze(&Planar, None).unwrap();
        let (e, _) = expand(&Planar, &s, 4, &ExpansionOptions::default(), &TensorOptions::default()).unwrap();
        let cfg = TraceConfig {
            t_max: 200.0,
            psi_cap: Some(1.5),
            ..TraceConfig::default()
        };
        trace_asym(&Planar, &s, &e, order, &[c64(seed, 0.0)], &cfg).unwrap()
    }

    #[test]
    fn planar_fourth_order_follows_the_quartic() {
        for seed in [0.001, -0.001] {
            let tr = planar_trace(4, seed);
            assert_eq!(tr.termination, super::super::Termination::PsiCap);
            assert!(tr.last_state()[0].abs() >= 1.5 - 1e-6);
            let err = tr
                .x
                .iter()
                .map(|x| (x[1] - Planar::manifold(x[0])).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
            for (x, p) in tr.x.iter().zip(&tr.psi) {
                assert!((x[0] - p[0].re).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn planar_first_order_misses_the_quartic() {
        let tr = planar_trace(1, 0.001);
        let err = tr
            .x
            .iter()
            .map(|x| (x[1] - Planar::manifold(x[0])).abs())
            .fold(0.0, f64::max);
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn linear_model_stays_in_slow_subspace() {
        let a = DMatrix::from_row_slice(3, 3, &[-0.1, 1.0, 0.0, -1.0, -0.1, 0.2, 0.0, 0.0, -3.0]);
        let m = LinearModel::new(a);
        let s = analyze(&m, None).unwrap();
        let (e, _) = expand(&m, &s, 3, &ExpansionOptions::default(), &TensorOptions::default()).unwrap();
        let psi0 = e.full_psi(&[c64(0.001, 0.0)]);
        let cfg = TraceConfig {
            t_max: 30.0,
            ..TraceConfig::default()
        };
        let tr = trace_asym(&m, &s, &e, 3, &psi0, &cfg).unwrap();
        for (x, p) in tr.x.iter().zip(&tr.psi) {
            let lin = s.linear_state(p);
            let d: f64 = x.iter().zip(&lin).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d < 1e-8 * (1.0 + lin.iter().map(|v| v * v).sum::<f64>().sqrt()), "{d}");
        }
    }
}
