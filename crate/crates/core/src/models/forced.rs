//! External inputs entering a model through a fixed channel vector.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DynamicalModel;
use crate::error::{Error, Result};

/// Scalar input signal `u(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Zero,
    Constant { c: f64 },
    /// `a sin(2 pi t / period)`.
    Sine { a: f64, period: f64 },
    /// `a sin(omega(t) t)` with `omega(t) = 2 pi / (c0 - c1 t)`.
    Chirp { a: f64, c0: f64, c1: f64 },
}

impl InputSignal {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Zero => 0.0,
            InputSignal::Constant { c } => c,
            InputSignal::Sine { a, period } => a * (2.0 * PI * t / period).sin(),
            InputSignal::Chirp { a, c0, c1 } => a * (Self::chirp_omega(c0, c1, t) * t).sin(),
        }
    }

    fn chirp_omega(c0: f64, c1: f64, t: f64) -> f64 {
        2.0 * PI / (c0 - c1 * t)
    }

    /// Instantaneous angular frequency (for periodic and chirp signals).
    pub fn omega(&self, t: f64) -> Option<f64> {
        match *self {
            InputSignal::Sine { period, .. } => Some(2.0 * PI / period),
            InputSignal::Chirp { c0, c1, .. } => Some(Self::chirp_omega(c0, c1, t)),
            _ => None,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            InputSignal::Sine { period, .. } => Some(period),
            _ => None,
        }
    }

    /// Check the signal is well defined on `[t0, t1]`.
    pub fn validate(&self, t0: f64, t1: f64) -> Result<()> {
        match *self {
            InputSignal::Sine { period, .. } if !(period > 0.0) => {
                Err(Error::InvalidConfig("sine period must be positive".into()))
            }
            InputSignal::Chirp { c0, c1, .. } => {
                let lo = (c0 - c1 * t0).min(c0 - c1 * t1);
                if lo > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "chirp denominator c0 - c1 t reaches {lo} on [{t0}, {t1}]"
                    )))
                }
            }
            _ => Ok(()),
        }
    }
}

/// `x' = F(x) + b u(t)`.
#[derive(Debug, Clone)]
pub struct ForcedModel {
    pub base: Arc<dyn DynamicalModel>,
    pub channel: Vec<f64>,
    pub signal: InputSignal,
}

impl ForcedModel {
    pub fn new(base: Arc<dyn DynamicalModel>, channel: Vec<f64>, signal: InputSignal) -> Result<Self> {
        if channel.len() != base.dim() {
            return Err(Error::GridMismatch(format!(
                "input channel has length {} but the model has dimension {}",
                channel.len(),
                base.dim()
            )));
        }
        Ok(Self { base, channel, signal })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.rhs(x, out);
        let u = self.signal.value(t);
        if u != 0.0 {
            for (o, b) in out.iter_mut().zip(&self.channel) {
                *o += b * u;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Goodwin;
    use crate::numerics::ode::{infallible, integrate, IntegratorConfig};

    #[test]
    fn zero_amplitude_sine_is_bit_identical() {
        let base: Arc<dyn DynamicalModel> = Arc::new(Goodwin::default());
        let forced = ForcedModel::new(base.clone(), vec![1.0, 0.0, 0.0], InputSignal::Sine { a: 0.0, period: 24.0 })
            .unwrap();
        let x0 = [0.3, 0.4, 1.5];
        let cfg = IntegratorConfig::default();
        let mut f1 = infallible(|_t, x: &[f64], dx: &mut [f64]| base.rhs(x, dx));
        let mut f2 = infallible(|t, x: &[f64], dx: &mut [f64]| forced.rhs(t, x, dx));
        let a = integrate(&mut f1, &x0, (0.0, 50.0), &[], &cfg).unwrap();
        let b = integrate(&mut f2, &x0, (0.0, 50.0), &[], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chirp_frequency_and_validation() {
        let s = InputSignal::Chirp { a: 0.0045, c0: 27.0, c1: 0.15 };
        assert!((s.omega(0.0).unwrap() - 2.0 * PI / 27.0).abs() < 1e-15);
        assert!(s.validate(0.0, 100.0).is_ok());
        assert!(s.validate(0.0, 180.0).is_err());
    }

    #[test]
    fn channel_length_is_checked() {
        let base: Arc<dyn DynamicalModel> = Arc::new(Goodwin::default());
        assert!(ForcedModel::new(base, vec![1.0], InputSignal::Zero).is_err());
    }
}
