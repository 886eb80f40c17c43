//! Slow invariant manifolds in isostable coordinates, and reduced-order
//! models built on them, for ODEs with a stable fixed point.

pub mod error;
pub mod expansion;
pub mod io;
pub mod isostable;
pub mod manifold;
pub mod models;
pub mod numerics;
pub mod rom;
pub mod spectrum;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/isostable.md")]
    mod isostable {}
    #[doc = include_str!("../../../book/src/tracing.md")]
    mod tracing {}
    #[doc = include_str!("../../../book/src/rom.md")]
    mod rom {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/results.md")]
    mod results {}
}
