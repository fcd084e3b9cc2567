//! Negative-discount dynamic programming and the equilibrium models built on it.
//!
//! The core problem allocates a task mass `xhat` over periods at per-period
//! loss `l(a)` with discount factor `beta > 1`, so later work weighs more.
//! [`dp`] solves the scalar problem, [`general`] provides the abstract
//! order-interval iteration with certified error bounds, and the model modules
//! turn the value function into equilibrium objects: production chains
//! ([`chain`]), knowledge hierarchies ([`hierarchy`]), city systems
//! ([`spatial`]) and supplier networks ([`network`]).

pub mod chain;
pub mod dp;
pub mod error;
pub mod export;
pub mod general;
pub mod grid;
pub mod hierarchy;
pub mod loss;
pub mod network;
pub mod par;
pub mod presets;
pub mod report;
pub mod search;
pub mod spatial;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, Interpolation, Shape};
pub use loss::{FnLoss, Loss, LossSpec, PowerLoss};
