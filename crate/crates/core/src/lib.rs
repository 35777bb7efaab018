//! Spatially constrained trajectory tracking for quadrotors.
//!
//! The crate provides the rigid-body model ([`vehicle`]), an asymmetric
//! barrier-Lyapunov backstepping position loop ([`position`]), an adaptive
//! attitude loop built on the same barrier ([`attitude`]), a fixed-step
//! closed-loop simulator ([`sim`]) and a property-check harness ([`verify`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude;
pub mod barrier;
pub mod error;
pub mod position;
pub mod sim;
pub mod vehicle;
pub mod verify;

pub use error::{Error, Result};
