//! Carleman linearization + Schrödingerization for the 1-D reaction-diffusion
//! equation.

pub mod analysis;
pub mod carleman;
pub mod error;
pub mod evolve;
pub mod model;
pub mod schrodinger;
pub mod sparse;

pub use error::{Error, Result};

// The guide's snippets run as doctests: one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/carleman.md")]
    mod carleman {}
    #[doc = include_str!("../../../book/src/schrodinger.md")]
    mod schrodinger {}
    #[doc = include_str!("../../../book/src/evolve.md")]
    mod evolve {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
