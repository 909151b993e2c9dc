//! Electron-positron pair creation from the vacuum in a Sauter well whose
//! depth and width oscillate with a relative phase.
//!
//! The Dirac sea is evolved state by state with a split-operator scheme; the
//! created-electron number is the weight the sea transfers onto the positive
//! free branch.

// `!(x > 0.0)` guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bound_states;
pub mod error;
pub mod observables;
pub mod potential;
pub mod propagator;
pub mod sweep;
pub mod config;
pub mod output;
pub mod cli;
pub mod units;

pub use error::{Error, Result};
