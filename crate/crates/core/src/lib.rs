#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]
extern crate alloc;

pub mod admm;
pub mod contingency;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod game;
pub mod math;
pub mod oracle;
pub mod simulation;
pub mod verify;

pub use error::{Error, Result};
