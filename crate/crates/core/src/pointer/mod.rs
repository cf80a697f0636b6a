//! One-dimensional measurement pointer on a uniform periodic grid.
//!
//! Position is diagonal on the sample points and momentum is diagonal in the
//! discrete Fourier basis, so translations and momentum functions are applied
//! spectrally without finite-difference error.

mod grid;
mod moments;
mod observable;
mod state;

pub use grid::PointerGrid;
pub use moments::{bracket_expectation, moments, BracketKind, MomentReport};
pub(crate) use moments::ProductExpectations;
pub(crate) use state::{squared_norm, translate_amplitudes};
pub use observable::{PointerObservable, PolynomialTerm};
pub use state::{gaussian_pointer, inner_product, translate, PointerState, EDGE_TOLERANCE, SUPPORT_THRESHOLD};
