//! Transmission-rate bounds, transmit-power design and Monte Carlo
//! validation for wireless networked control systems.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod lpsolve;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod power;
pub mod protocols;
pub mod sim;
pub mod stability;
pub mod validate;

pub use error::{BindingBound, Error, Result};
