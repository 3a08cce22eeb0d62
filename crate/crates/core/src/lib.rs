//! Importance-driven trajectory downsampling, chunk-predicting policies and an
//! execution engine that skips policy inference while historical chunk
//! predictions agree.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command line and
//! report emission live in the `sril` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;

pub mod downsample;
pub mod executor;
pub mod policy;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
