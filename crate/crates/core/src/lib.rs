//! Self-supervised pretext training on 3D volumes with leakage-safe
//! downstream evaluation.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod error;
pub mod eval;
pub mod model;
pub mod phantom;
pub mod prep;
pub mod rotgrid;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{read_volume, write_volume, Volume};
