//! Numerical laboratory for lower bounds on the expected communication cost
//! of interactive quantum state redistribution.
//!
//! The crate builds the hard-instance state family, simulates interactive
//! measurement protocols, evaluates the entropic quantities involved, and
//! mechanizes the chain of transformations that turns a protocol with small
//! expected cost into one with bounded worst-case cost.

pub mod bounds;
pub mod compiler;
pub mod entropies;
pub mod error;
pub mod facts;
pub mod hilbert;
pub mod linalg;
pub mod metrics;
pub mod protocol;
pub mod states;
pub mod tol;

pub use error::{Error, Result};
