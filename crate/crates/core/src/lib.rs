//! Optimal production-rate control for an M/M/1 make-to-order
//! production-inventory system.
//!
//! A single production unit builds items one at a time at a controllable rate
//! while customers queue for exponentially distributed service that consumes
//! one item each; demand arriving at an empty stock is lost. The crate
//! provides:
//!
//! * [`model`] — the controlled chain: states, action grid, transition rates,
//!   stage costs, uniformization, parameter validation;
//! * [`steady_state`] — the product-form stationary law available under a
//!   constant rate, plus a numeric invariant measure for arbitrary policies;
//! * [`discounted`] — value iteration and policy iteration for the discounted
//!   criterion;
//! * [`average`] — gain/bias policy iteration for the long-run average
//!   criterion via the Poisson equation;
//! * [`pac_sim`] — seeded trajectory simulation and pathwise-average
//!   certification;
//! * [`cli`] — config parsing and CSV artifact emission behind the `prodinv`
//!   binary.

// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
// where `x <= 0.0` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod average;
pub mod cli;
pub mod discounted;
mod linalg;
pub mod model;
pub mod pac_sim;
pub mod steady_state;

pub use average::{AverageSolveReport, GainBias};
pub use discounted::{DiscountedSolveReport, ValueFunction};
pub use model::{ActionGrid, ModelParams, Policy, RateRow, State, UniformizedRow};
pub use pac_sim::{PacReport, TrajectorySample};
pub use steady_state::{InventoryDist, JointDist, StabilityReport};
