//! Resource allocation for a network of heterogeneous radars sharing
//! spectrum with a cellular downlink, evaluated in a closed tracking loop.

// `!(x > 0.0)` is used on purpose so NaN lands in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anchor;
pub mod error;
pub mod fim;
pub mod freq_alloc;
pub mod kinematics;
pub mod linalg;
pub mod power_time_alloc;
pub mod projection;
pub mod rng;
pub mod scenario;
pub mod tracking;

pub use error::{Error, Result};
