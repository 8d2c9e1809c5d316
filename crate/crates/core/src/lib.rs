//! Anticipating linear SDEs driven by Lévy processes.
//!
//! The crate samples the canonical Lévy space, solves the anticipating
//! Girsanov transformations on a time grid, evaluates the explicit solution of
//!
//! `X_t = X_0 + ∫ b_s X_s ds + ∫ a_s X_s δW_s + ∫∫ v_{s-}(y) X_{s-} dÑ(s, y)`
//!
//! and checks the identities it satisfies by Monte Carlo and exact oracles.

pub mod cli;
pub mod error;
pub mod functional;
pub mod girsanov;
pub mod grid;
pub mod grid_malliavin;
pub mod levy_space;
pub mod mc;
pub mod orbit;
pub mod quadrature;
pub mod scenario;
pub mod solution;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
