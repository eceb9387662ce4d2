//! Offline contextual-bandit policy learning with PAC-Bayesian certificates.
//!
//! The library learns stochastic policies from logged interaction data
//! (context, action, cost, logging propensity) by directly minimizing
//! high-probability upper bounds on the true risk. Every learned policy
//! ships with a certificate: a guaranteed risk `GR` valid with probability
//! at least `1 - delta`, and a guaranteed improvement `GI` against the
//! logging policy that drives a deploy / keep-logging decision.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`data`]: logged-bandit datasets, JSON-lines file formats,
//!   supervised-to-bandit conversion and synthetic generators.
//! - [`policies`]: linear softmax (logging), linear independent Gaussian
//!   (the learnable class) and mixed-logit policies, with sampling,
//!   propensities and reparameterized gradients.
//! - [`estimators`]: clipped IPS risk estimators and the conditional
//!   moments feeding the variance-sensitive bound.
//! - [`bounds`]: the three certificates (square-root, Catoni, conditional
//!   Bernstein) and their ingredients.
//! - [`learn`]: bound minimization over policy parameters and the
//!   deployment decision.
//! - [`harness`]: experiment sweeps, the coverage oracle and report files.
//!
//! The `bandit-certify` binary exposes each stage as a subcommand; see the
//! guide under `book/` for a walk-through.

pub mod bounds;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod learn;
pub mod math;
pub mod policies;

mod book;

pub use error::{Error, Result};
