//! Numerical toolkit for evolutionary equations `(∂₀ M(∂₀⁻¹) + A) U = F` in
//! exponentially weighted time spaces.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary_data;
pub mod config;
pub mod control_system;
pub mod discrete_ops;
pub mod error;
pub mod evo_solver;
pub mod io;
pub mod linalg;
pub mod material_law;
pub mod viscoelastic;
pub mod weighted_time;

pub use error::{EvoError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/weighted-time.md")]
    mod weighted_time {}
    #[doc = include_str!("../../../book/src/material-laws.md")]
    mod material_laws {}
    #[doc = include_str!("../../../book/src/solving.md")]
    mod solving {}
    #[doc = include_str!("../../../book/src/boundary-data.md")]
    mod boundary_data {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/viscoelastic.md")]
    mod viscoelastic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
