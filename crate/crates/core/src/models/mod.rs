//! Vector fields: the model abstraction, the built-in benchmark systems and
//! forced variants with an external input.

pub mod builtin;
pub mod forced;
pub mod scalar;
pub mod tensor;

use nalgebra::DMatrix;

pub use builtin::{builtin, Coupled, Goodwin, LinearModel, ModelSpec, Pendulum, Planar};
pub use forced::{ForcedModel, InputSignal};
pub use scalar::{Jet, Scalar};
pub use tensor::{derivative_tensors, DerivativeTensor, TensorOptions, TensorSource};

/// An autonomous vector field `x' = F(x)` on `R^N`.
pub trait DynamicalModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn rhs(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Declared parameters with their current values.
    fn parameters(&self) -> Vec<(String, f64)>;

    /// Highest order for which `analytic_tensors` is available (1 = none).
    fn analytic_tensor_order(&self) -> usize {
        1
    }

    /// Derivative tensors of orders `2..=order` at `x`.
    fn analytic_tensors(&self, _x: &[f64], _order: usize) -> Option<Vec<DerivativeTensor>> {
        None
    }

    /// Default input channel `b` for forced experiments.
    fn default_channel(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        if let Some(first) = b.first_mut() {
            *first = 1.0;
        }
        b
    }

    /// Starting guess for the fixed-point search.
    fn fixed_point_guess(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Box `(lo, hi)` per coordinate used for randomized consistency checks.
    fn test_box(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.dim()]
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.rhs(x, &mut out);
        out
    }
}

/// Central-difference Jacobian, used to validate analytic Jacobians.
pub fn fd_jacobian(model: &dyn DynamicalModel, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = model.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let hj = h * x[j].abs().max(1.0);
        xp[j] = x[j] + hj;
        let fp = model.eval(&xp);
        xp[j] = x[j] - hj;
        let fm = model.eval(&xp);
        xp[j] = x[j];
        for i in 0..n {
            out[(i, j)] = (fp[i] - fm[i]) / (2.0 * hj);
        }
    }
    out
}
