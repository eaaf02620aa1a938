//! Simultaneous input and state estimation for linear systems with unknown
//! inputs and unstable transmission zeros.
//!
//! The crate factors a stable discrete plant `P = Pₒ Pᵢ` into an outer factor
//! sharing the plant's `A` and `C` and an inner (all-pass) factor, runs the
//! input-and-state estimator on the outer factor, provides the high-variance
//! Kalman filter alternative, and maps second-order input statistics through
//! the inner factor.

pub mod error;
pub mod highd;
pub mod innerouter;
pub mod inputstats;
pub mod linalg;
pub mod matrixeq;
pub mod par;
pub mod simharness;
pub mod sise;
pub mod statespace;

pub use error::{Error, Result};
pub use linalg::{CMat, Mat, Vector};
pub use statespace::{Domain, StateSpaceModel};
