//! Gradient blowup in weakly dispersive Burgers-type equations.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which every solver run uses.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod initial_data;
pub mod multiplier;
pub mod physical;
pub mod profile;
pub mod scalar;
pub mod selfsim;
pub mod spectral;

pub use error::{Error, Result};
pub use field::Field;
pub use multiplier::{KernelTable, OperatorSplit};
pub use profile::{ProfileFamily, ProfileJet};
pub use scalar::Real;
pub use selfsim::{ModulationState, SelfSimConfig, SelfSimField, SelfSimSolver};
pub use spectral::{GridSpec, SpectralPlan};

pub type Field64 = Field<f64>;
pub type GridSpec64 = GridSpec<f64>;
pub type ProfileFamily64 = ProfileFamily<f64>;
pub type OperatorSplit64 = OperatorSplit<f64>;
