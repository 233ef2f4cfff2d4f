//! Orthogonal projections with a prescribed diagonal.
//!
//! [`diagonal::classify`] decides feasibility from Kadison's invariants,
//! and [`carpenter::build`] constructs a real symmetric idempotent matrix
//! realizing the diagonal: exactly for summable inputs, as a lazily streamed
//! row sequence for non-summable ones.

pub mod carpenter;
pub mod cli;
pub mod diagonal;
pub mod error;
pub mod horn;
pub mod matrix;
pub mod moves;
pub mod tetris;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::SymmetricMatrix;
