//! Linear state-feedback synthesis that trades LQR cost against a certified
//! region of attraction.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; IO, file formats, parallel fan-out and the CLI live
//! in the `roaforge` crate.
//!
//! Module map:
//!
//! * [`dynamics`]: plants, linearization, zero-order-hold discretization and
//!   closed-loop simulation.
//! * [`lqr`]: discrete Lyapunov solver, LQR cost metric and the Riccati gain.
//! * [`certificate`]: state grids and level-set ROA certification under the
//!   Lipschitz-tightened decrease condition.
//! * [`nn`]: positive-definite neural Lyapunov candidates and their training.
//! * [`pso`]: deterministic particle swarm and the controller fitness.
//! * [`bench`]: the four benchmark plants.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod bench;
pub mod certificate;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod lqr;
pub mod nn;
pub mod pso;

pub use error::{Error, Result};
