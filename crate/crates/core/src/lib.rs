//! Neural video fields: fit a video as a continuous coordinate-to-color
//! function, then propagate frame edits by re-optimizing it.
//!
//! The field combines three axis-aligned feature planes and a stack of coarse
//! feature lattices, decoded per coordinate by a small MLP. Fitting regresses
//! it onto random pixel batches; editing pulls it toward frames produced by a
//! [`editing::FrameEditor`] under a progressive strength schedule.

pub mod config;
pub mod editing;
pub mod error;
pub mod field;
pub mod fitting;
pub mod guidance;
pub mod real;
pub mod render;
pub mod synthetic;
pub mod video;

pub use error::{NvfError, Result};
pub use field::{FieldConfig, FieldParams, NormalizedCoord};
pub use fitting::{fit, FitConfig, FitReport};
pub use video::{Frame, VideoShape, VideoTensor};
