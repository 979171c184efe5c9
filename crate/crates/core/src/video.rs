//! In-memory frames and videos, RGB in `[0, 1]` at 32-bit precision.

use serde::{Deserialize, Serialize};

use crate::error::{NvfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

/// One `height x width x 3` image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(NvfError::contract(format!(
                "frame {height}x{width} needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Frame { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = std::iter::repeat(rgb).take(height * width).flatten().collect();
        Frame { height, width, data }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Quantize to 8-bit RGB with round-to-nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Frame::new(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A `frames x height x width x 3` stack of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f32,
    pub data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(frames: usize, height: usize, width: usize, fps: f32, data: Vec<f32>) -> Result<Self> {
        let v = VideoTensor { frames, height, width, fps, data };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 1 || self.height < 2 || self.width < 2 {
            return Err(NvfError::contract(format!(
                "video must be at least 1x2x2, got {}x{}x{}",
                self.frames, self.height, self.width
            )));
        }
        if self.data.len() != self.frames * self.height * self.width * 3 {
            return Err(NvfError::contract("video data length does not match its shape"));
        }
        if let Some(bad) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NvfError::contract(format!("video value {bad} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn from_frames(frames: Vec<Frame>, fps: f32) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| NvfError::contract("video needs at least one frame"))?;
        let (h, w) = (first.height, first.width);
        if frames.iter().any(|f| f.height != h || f.width != w) {
            return Err(NvfError::contract("frames have inconsistent dimensions"));
        }
        let n = frames.len();
        let data = frames.into_iter().flat_map(|f| f.data).collect();
        VideoTensor::new(n, h, w, fps, data)
    }

    pub fn shape(&self) -> VideoShape {
        VideoShape {
            frames: self.frames,
            height: self.height,
            width: self.width,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.frames * self.height * self.width
    }

    fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame_slice(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            data: self.frame_slice(t).to_vec(),
        }
    }

    pub fn frames_iter(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frames).map(move |t| self.frame(t))
    }

    #[inline]
    pub fn pixel(&self, t: usize, row: usize, col: usize) -> [f32; 3] {
        let i = ((t * self.height + row) * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Apply a per-frame map, keeping fps.
    pub fn map_frames(&self, mut f: impl FnMut(&Frame) -> Frame) -> Result<VideoTensor> {
        VideoTensor::from_frames(self.frames_iter().map(|fr| f(&fr)).collect(), self.fps)
    }
}
