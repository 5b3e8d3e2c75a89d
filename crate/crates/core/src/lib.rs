//! Numerical laboratory for jump diffusion on the half line.
//!
//! The equation du/dt = J*u - u is posed for x >= 0 with zero data on the
//! exterior strip, J a compactly supported even probability density. The
//! crate builds the stationary profile that grows like x, integrates the
//! evolution, constructs the regular part of the whole-line fundamental
//! solution two independent ways, and measures how fast the solution
//! approaches its matched dipole / boundary-layer description.

// Validation guards use negated comparisons so NaN parameters fail closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod fundamental;
pub mod grid;
pub mod heat;
pub mod initial;
pub mod kernel;
pub mod quad;
pub mod stationary;

pub mod acceptance;

pub use error::{Error, Result};
pub use grid::{Convolver, Extension, Field, Grid};
pub use kernel::{Kernel, KernelFamily};
