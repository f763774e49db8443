//! Synthetic problem generation and benchmark grids.

mod grid;
mod synth;

pub use grid::*;
pub use synth::*;
