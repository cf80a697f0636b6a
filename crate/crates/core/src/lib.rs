//! Pointer statistics for von Neumann measurements.
//!
//! The crate computes exact pointer states, profiles and means for projector
//! measurements on pre-selected and pre/post-selected systems, their
//! first-order weak-coupling approximations for arbitrary Hermitian
//! operators, and the associated measurement sensitivities. Every closed
//! form can be checked against [`oracle`], which evolves the joint
//! system-pointer state directly.

pub mod error;
pub mod cli;
pub mod exact;
pub mod hilbert;
pub mod io;
pub mod oracle;
pub mod pointer;
pub mod weak;

pub use error::{MeasureError, Result};
