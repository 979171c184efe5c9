//! Continuous-time rendering, frame interpolation, file I/O, metrics and
//! memory accounting.

pub mod io;
pub mod memory;
pub mod metrics;

use crate::error::{NvfError, Result};
use crate::field::{axis_coord, forward_cached, frame_grid, FieldParams, Workspace};
use crate::video::{Frame, VideoTensor};

pub use io::{load_video, save_mask_png, save_video};
pub use memory::{memory_report, MemoryReport};
pub use metrics::{psnr, psnr_frames, psnr_per_frame, temporal_consistency, PSNR_CAP_DB};

/// Output resolution and temporal sample positions of a render.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub time_samples: Vec<f64>,
}

impl RenderSpec {
    /// One sample per source frame.
    pub fn frames(width: usize, height: usize, frames: usize) -> Self {
        RenderSpec {
            width,
            height,
            time_samples: integer_time_samples(frames),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(NvfError::contract(format!(
                "render size must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.time_samples.is_empty() {
            return Err(NvfError::contract("render spec has no time samples"));
        }
        if self.time_samples.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(NvfError::contract("time samples must lie in [0, 1]"));
        }
        if self.time_samples.windows(2).any(|w| w[1] < w[0]) {
            return Err(NvfError::contract("time samples must be sorted"));
        }
        Ok(())
    }
}

/// Temporal coordinates of the `frames` source frames.
pub fn integer_time_samples(frames: usize) -> Vec<f64> {
    (0..frames).map(|k| axis_coord(k, frames)).collect()
}

/// Source frame positions with `inserted` evenly spaced novel frames between
/// each consecutive pair: `(frames - 1) * (inserted + 1) + 1` samples.
pub fn interpolated_time_samples(frames: usize, inserted: usize) -> Vec<f64> {
    if frames <= 1 {
        return vec![0.0];
    }
    let steps = (frames - 1) * (inserted + 1);
    (0..=steps).map(|s| s as f64 / steps as f64).collect()
}

fn render_with(params: &FieldParams<f32>, width: usize, height: usize, t: f64, ws: &mut Workspace<f32>) -> Result<Frame> {
    if !(0.0..=1.0).contains(&t) {
        return Err(NvfError::contract(format!("time {t} outside [0, 1]")));
    }
    let grid = frame_grid(width, height, t);
    let out = forward_cached(params, &grid, ws)?;
    Frame::new(height, width, out.to_vec())
}

/// Evaluate the field over the full `width x height` pixel grid at time `t`.
pub fn render_frame(params: &FieldParams<f32>, width: usize, height: usize, t: f64) -> Result<Frame> {
    render_with(params, width, height, t, &mut Workspace::new())
}

/// Render every time sample of `spec`, in order.
pub fn render_video(params: &FieldParams<f32>, spec: &RenderSpec) -> Result<VideoTensor> {
    spec.validate()?;
    let mut ws = Workspace::new();
    let frames = spec
        .time_samples
        .iter()
        .map(|&t| render_with(params, spec.width, spec.height, t, &mut ws))
        .collect::<Result<Vec<_>>>()?;
    VideoTensor::from_frames(frames, 24.0)
}

/// Novel frame at fractional position `frame + alpha` of a `frames`-long video.
pub fn interpolate(
    params: &FieldParams<f32>,
    frames: usize,
    frame: usize,
    alpha: f64,
    width: usize,
    height: usize,
) -> Result<Frame> {
    if frames < 2 {
        return Err(NvfError::contract("interpolation needs at least two source frames"));
    }
    let pos = frame as f64 + alpha;
    if !(0.0..=1.0).contains(&alpha) || pos > (frames - 1) as f64 {
        return Err(NvfError::contract(format!(
            "position {pos} outside the source range [0, {}]",
            frames - 1
        )));
    }
    render_frame(params, width, height, pos / (frames - 1) as f64)
}
