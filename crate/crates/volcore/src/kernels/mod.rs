//! Raw forward/backward kernels over flat buffers. [`crate::Graph`] wires
//! them into the autodiff tape.

pub mod conv;
pub mod dense;
pub mod norm;
pub mod pool;
