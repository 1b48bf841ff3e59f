//! Policy-optimization laboratory for comparing the clipped surrogate with the
//! clipping-free quadratic-penalty surrogate on small synthetic sequence tasks.
//!
//! The crate is organised bottom-up:
//!
//! - [`objectives`]: per-token surrogate values and their exact derivatives in the ratio.
//! - [`advantages`]: group-relative and leave-one-out advantage estimators.
//! - [`policy`]: a tabular softmax sequence policy with exact log-probabilities,
//!   score functions, entropy and KL.
//! - [`envs`]: verifiable and length-hackable response-level rewards.
//! - [`trainer`]: rollouts, sample reuse, mini-batch lag and per-step diagnostics.
//! - [`theory`]: numerical checks of divergence inequalities, the ε-aligned
//!   property and the performance-improvement lower bound on tiny MDPs.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantages;
pub mod envs;
mod error;
pub mod objectives;
pub mod policy;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
