//! Plain backward integration of `x' = F(x)`, which leaves the slow
//! manifold along the fast directions.

use crate::error::Result;
use crate::expansion::ExpansionTensors;
use crate::models::DynamicalModel;
use crate::numerics::linalg::{CVector, C64};
use crate::spectrum::Spectrum;

use super::{seed_state, trace_single_pass, ManifoldTrajectory, Method, TraceConfig};

/// Integrate `dx/dt~ = -F(x)` from the seed at `psi0`; the recorded `psi`
/// are the closed-form values the slow coordinates would take on the
/// manifold.
pub fn trace_naive(
    model: &dyn DynamicalModel,
    spec: &Spectrum,
    psi0: &[C64],
    exp: Option<&ExpansionTensors>,
    cfg: &TraceConfig,
) -> Result<ManifoldTrajectory> {
    let x_seed = seed_state(spec, psi0, exp)?;
    let velocity = |_t: f64, x: &[f64], _g: &[CVector]| -> Result<Vec<f64>> {
        Ok(model.eval(x).into_iter().map(|v| -v).collect())
    };
    let cond_at = |_t: f64, _x: &[f64], _g: &[CVector]| -> Result<f64> { Ok(f64::NAN) };
    trace_single_pass(model, spec, Method::Naive, psi0, x_seed, cfg, velocity, cond_at, true)
}
