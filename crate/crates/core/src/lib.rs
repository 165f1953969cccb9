//! Constrained homogeneous random walks on the nonnegative integer orthant.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! - [`walk`]: face-homogeneous transition kernels, validation, stepping and
//!   seeded simulation.
//! - [`machine`]: a two-counter machine interpreter.
//! - [`reduction`]: compilation of counter machines into deterministic and
//!   stochastic walks, with the induced linear Lyapunov certificate.
//! - [`lyapunov`]: linear and geometric drift checks and the inputs of the
//!   geometric mixing bound.
//! - [`stationary`]: exact propagation, first-return laws, exact stationary
//!   solves, Monte Carlo, certified approximation and large-deviation rates.
//! - [`queueing`]: a single-station multiclass queue under generalized
//!   priority policies.
//!
//! Probabilities are exact [`Prob`] rationals everywhere except inside Monte
//! Carlo accumulators and the float propagation mode.
#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chain;
mod error;
pub mod lyapunov;
pub mod machine;
pub mod rational;
pub mod reduction;
pub mod queueing;
pub mod rng;
pub mod stationary;
pub mod walk;

#[cfg(test)]
mod tests;

pub use chain::MarkovChain;
pub use error::{Error, Result};
pub use rational::{parse_rational, Prob};
pub use walk::{Face, Rule, TransitionKernel, WalkState};
