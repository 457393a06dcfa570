//! Differentiable operations recorded on a [`Tape`](crate::Tape).
//!
//! Each submodule adds methods to `Tape<T>`; the backward rules stay private.

mod conv;
mod elementwise;
mod loss;
mod norm;
mod pool;

pub use loss::BCE_CLAMP;
pub use norm::BatchStats;
