//! Exact 14-moment extended-thermodynamics closure and numerical verification of
//! its identities: frame-change invariance, compatibility, derivative identities,
//! convexity at the comparison state, the representation theorem and the
//! 5-moment subsystem.

#![allow(clippy::needless_range_loop)]

pub mod ad;
pub mod bundled;
pub mod closure;
pub mod convexity;
pub mod error;
pub mod frame;
pub mod function;
pub mod invariants;
pub mod report;
pub mod state;
pub mod suite;
pub mod verifier;

pub use error::{Error, Result};
