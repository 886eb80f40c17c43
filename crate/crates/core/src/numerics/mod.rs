//! Linear algebra and ODE integration kernels.

pub mod eigen;
pub mod linalg;
pub mod ode;

pub use eigen::{dominant_eigenpairs, eig, eig_real, EigenSystem};
pub use linalg::{c64, pinv, solve, CMatrix, CVector, C64};
pub use ode::{integrate, IntegratorConfig, Method, Sampled};
