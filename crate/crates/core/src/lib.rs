//! Attracting rectangles, stability certificates and finite-difference
//! simulation for two competing species that both react to a shared
//! chemical signal.
//!
//! The model on a bounded interval with no-flux boundaries is
//!
//! ```text
//! u_t = d1 u_xx - chi1 (u w_x)_x + u (a0 - a1 u - a2 v)
//! v_t = d2 v_xx - chi2 (v w_x)_x + v (b0 - b1 u - b2 v)
//! 0   = d3 w_xx + k u + l v - lambda w
//! ```
//!
//! with coefficients that may vary in time and space.

// Negated comparisons below also reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ode;
pub mod params;
pub mod pde;
pub mod rectangle;
pub mod scenario;
pub mod stability;
pub mod tridiag;

pub use error::{Error, Result};
pub use params::{CoefficientField, HypothesisReport, ModelConstants, ModelSpec, UltimateBounds};
pub use rectangle::{Branch, Rectangle};
