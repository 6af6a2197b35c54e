//! Pseudo-first-order analysis of the irreversible Michaelis–Menten
//! mechanism at low initial substrate concentration.
//!
//! - [`model`]: rate parameters, derived constants, vector field, region `D`
//! - [`linear`]: closed-form biexponential solutions of the linearized
//!   system and of the lower/upper comparison systems
//! - [`integrate`]: adaptive Dormand–Prince integration (ground truth)
//! - [`bounds`]: sandwich inequalities and the `O(s0²)` error law
//! - [`timescale`]: eigenvalue-based timescale separation diagnostics
//! - [`fit`]: rate-constant estimation from time-course data
//! - [`data`]: observation table reader

pub mod bounds;
pub mod data;
pub mod error;
pub mod fit;
pub mod integrate;
pub mod linear;
pub mod model;
pub mod timescale;

pub use error::{Error, Result};
pub use model::{DerivedConstants, RateParams, State};
