//! Reduced multi-bubble dynamics for the energy-critical heat equation.
//!
//! The crate covers the finite-dimensional side of the problem: universal
//! constants of the ground state, degeneracy classification of sign/point
//! configurations, the formal scale/center ODE system with its conserved
//! quantities, the self-similar ratio set of the non-degenerate regime, and
//! the symmetric four-bubble rectangle that realizes the degenerate rate.

pub mod configuration;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod quadrature;
pub mod rectangle;
pub mod selfsimilar;
pub mod simplex;

pub use constants::{universal_constants, Dimension, UniversalConstants};
pub use error::{Error, Result};
