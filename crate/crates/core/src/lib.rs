//! Dispersion diagrams, branch points and transient synthesis for a
//! three-layer acoustic waveguide with Neumann walls.
//!
//! The crate is organised bottom-up: [`medium`] holds the layer stack,
//! [`dispersion`] evaluates the secular determinant and continues branches
//! `k_n(ω)` over the complex frequency plane, [`modes`] builds mode profiles
//! and excitation amplitudes, [`branchpoints`] traces branch points of the
//! dispersion surface through the linking-parameter homotopy, and
//! [`transient`] synthesises time signals by contour-deformed quadrature.

pub mod branchpoints;
pub mod dispersion;
pub mod error;
pub mod jet;
pub mod medium;
pub mod modes;
pub mod transient;
mod trig;

pub use error::{Error, Result};
pub use medium::{LayerStack, LinkingParams, SpectralVars};
pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
