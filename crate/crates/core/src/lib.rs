pub mod cell;
pub mod config;
pub mod error;
pub mod export;
pub mod fem;
pub mod fields;
pub mod geometry;
pub mod limit;
pub mod micro;
pub mod mollifier;
pub mod operators;
pub mod presets;
pub mod study;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/unfolding.md")]
    mod unfolding {}
    #[doc = include_str!("../../../book/src/cell_problem.md")]
    mod cell_problem {}
    #[doc = include_str!("../../../book/src/micro_scheme.md")]
    mod micro_scheme {}
    #[doc = include_str!("../../../book/src/limit_system.md")]
    mod limit_system {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
