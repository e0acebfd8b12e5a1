//! Lyapunov-based boundary feedback design, certification and simulation for
//! one-dimensional parabolic PDEs of Sturm–Liouville type.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod artifact;
pub mod clf;
pub mod config;
pub mod error;
pub mod export;
pub mod grid;
pub mod pipeline;
pub mod reduced;
pub mod reproduce;
pub mod semilinear;
pub mod shapes;
pub mod sim;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::Grid;
