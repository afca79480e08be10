//! Fixed-timestep electromagnetic-transient simulation of a small AC grid
//! with synchronous generators, grid-following inverters and aggregated
//! Type-4 offshore wind plants.
//!
//! The usual flow is: [`case::parse_case`] → [`powerflow::solve_powerflow`]
//! → [`powerflow::snapshot_for_emt`] → [`scenario::run_simulation`], which
//! steps the three-phase nodal network together with every device model and
//! applies the staged start-up of [`sequencer`].

// `!(x > 0.0)` rejects NaN on purpose; per-phase loops index several arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod case;
pub mod control;
pub mod emt;
pub mod error;
pub mod frames;
pub mod gfl;
pub mod machines;
pub mod owf;
mod params;
pub mod powerflow;
pub mod scenario;
pub mod sequencer;

pub use error::{Error, Result};
