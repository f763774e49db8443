//! Matrix files, CSV, PGM frames and the video pipeline.

mod matrix_file;
mod pgm;
mod video;

pub use matrix_file::*;
pub use pgm::*;
pub use video::*;
