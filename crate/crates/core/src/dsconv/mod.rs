//! Dynamic snake convolution.
//!
//! A snake kernel is a chain of `K` sampling positions around each output
//! pixel. Along the chain's rigid axis positions sit exactly one pixel apart;
//! along the perpendicular axis each position is displaced by the running sum
//! of learned per-step offsets, scaled by the extension scope. Samples are
//! taken with bilinear interpolation and weighted like an ordinary `1 x K`
//! (or `K x 1`) kernel.
//!
//! Building blocks:
//! * [`build_coordinate_map`] / `Tape::snake_coordinates`: offsets to positions,
//! * `Tape::bilinear_sample`: positions to sampled values,
//! * `Tape::snake_conv`: fused sample-and-weight used by the network,
//! * [`SnakeConv`] and [`DsConvModule`]: the parameterized layers.

mod coords;
mod layer;
mod module;
mod sample;

pub use coords::{build_coordinate_map, CoordinateMap};
pub use layer::SnakeConv;
pub use module::{BranchSet, DsConvModule};

use crate::error::{dim_err, Result};

/// Rigid axis of a snake kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Positions step along x; offsets move them in y.
    X,
    /// Positions step along y; offsets move them in x.
    Y,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
        }
    }
}

/// Configuration of one snake convolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnakeConvSpec {
    pub direction: Direction,
    /// Number of chain positions; odd and at least 3.
    pub kernel_length: usize,
    /// Multiplier on the cumulative offsets.
    pub extension_scope: f64,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl SnakeConvSpec {
    pub const DEFAULT_KERNEL_LENGTH: usize = 9;
    pub const DEFAULT_EXTENSION_SCOPE: f64 = 4.0;

    pub fn new(direction: Direction, in_channels: usize, out_channels: usize) -> Self {
        Self {
            direction,
            kernel_length: Self::DEFAULT_KERNEL_LENGTH,
            extension_scope: Self::DEFAULT_EXTENSION_SCOPE,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_length < 3 || self.kernel_length.is_multiple_of(2) {
            return dim_err(format!(
                "snake kernel length must be odd and >= 3, got {}",
                self.kernel_length
            ));
        }
        if !(self.extension_scope > 0.0 && self.extension_scope.is_finite()) {
            return dim_err(format!(
                "extension scope must be positive, got {}",
                self.extension_scope
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return dim_err("snake convolution needs at least one input and output channel");
        }
        Ok(())
    }

    /// Index of the center position in the chain.
    pub fn center(&self) -> usize {
        self.kernel_length / 2
    }
}
