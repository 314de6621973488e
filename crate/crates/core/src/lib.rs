//! Quadrotor flight-safety core.
//!
//! Rigid-body quadrotor dynamics, a cascaded position/attitude/body-rate
//! controller and a two-level quadratic-program safety filter built from
//! rectellipse control barrier functions. The high-level QP modifies total
//! thrust to keep the altitude states safe; the low-level QP modifies the
//! roll and pitch moments to keep the lateral states safe.
//!
//! The crate is `no_std` and only needs `alloc` (for traces and constraint
//! lists). File formats, the CLI and the finite-difference chain oracle live
//! in the `quadsafe` companion crate.
#![cfg_attr(not(test), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod barrier;
pub mod controller;
pub mod dynamics;
mod error;
pub mod filter;
pub mod math;
pub mod qp;
pub mod sim;

pub use error::Error;

pub use barrier::{BarrierDomain, BarrierSpec, ConstraintRow, EcbfGains, LieVector};
pub use controller::{ControllerGains, NominalCommand, Reference};
pub use dynamics::{ControlInput, EulerAngles, QuadParams, QuadState, StateDerivative};
pub use filter::FallbackPolicy;
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use sim::{Scenario, TraceRecord};

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
