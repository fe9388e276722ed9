//! Finite-level laboratory for an asymptotically Hilbertian sequence space
//! and a subspace of it without the approximation property.
//!
//! The levels are the cyclic groups `G_n = Z/(3 * 2^n)`. Each level carries
//! an enumeration of its characters into two lists and a sign pattern; from
//! these come the basis vectors, the functionals, the vectors `Phi^n_g`, and
//! the traces `beta^n` of truncated operators.

pub mod characters;
pub mod commands;
pub mod config;
pub mod construction;
pub mod enumeration;
pub mod error;
pub mod fourier;
pub mod moduli;
pub mod obstruction;
pub mod seeding;
pub mod signs;
pub mod space;
pub mod store;

pub use error::{Error, Result};
