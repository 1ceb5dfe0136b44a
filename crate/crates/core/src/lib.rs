//! Chinese remaindering toolkit.
//!
//! Reconstructs large signed integers (or integer vectors) from residues
//! modulo distinct word-size primes. The crate is split into three layers:
//! a residue [`blackbox`] producing the target modulo a supplied prime, a
//! [`builders`] strategy owning the reconstruction storage and the
//! termination decision, and a [`controller`] (or its [`parallel`]
//! counterpart) driving the loop.

pub mod blackbox;
pub mod builders;
pub mod controller;
pub mod error;
pub mod ladder;
pub mod modarith;
pub mod parallel;
pub mod primes;

pub use error::CraError;
pub use modarith::ResiduePair;
