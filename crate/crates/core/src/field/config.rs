use serde::{Deserialize, Serialize};

use crate::error::{NvfError, Result};

/// Shape of one dense 3-D feature lattice, `frames x rows x cols`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeShape {
    pub t: usize,
    pub y: usize,
    pub x: usize,
}

impl LatticeShape {
    pub fn new(t: usize, y: usize, x: usize) -> Self {
        LatticeShape { t, y, x }
    }

    pub fn vertices(&self) -> usize {
        self.t * self.y * self.x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
}

impl HiddenActivation {
    pub fn tag(self) -> i32 {
        match self {
            HiddenActivation::Relu => 0,
        }
    }

    pub fn from_tag(tag: i32) -> Option<Self> {
        match tag {
            0 => Some(HiddenActivation::Relu),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Sigmoid,
}

impl OutputActivation {
    pub fn tag(self) -> i32 {
        match self {
            OutputActivation::Sigmoid => 1,
        }
    }

    pub fn from_tag(tag: i32) -> Option<Self> {
        match tag {
            1 => Some(OutputActivation::Sigmoid),
            _ => None,
        }
    }
}

/// Resolutions and widths of every trainable array of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Plane resolution along x.
    pub res_x: usize,
    /// Plane resolution along y.
    pub res_y: usize,
    /// Plane resolution along t.
    pub res_t: usize,
    /// Channels per plane.
    pub plane_channels: usize,
    /// Coarse lattice levels, coarsest first.
    pub lattice_levels: Vec<LatticeShape>,
    /// Channels per lattice level.
    pub lattice_channels: usize,
    /// Widths of the hidden decoder layers; the decoder has `len + 1` affine layers.
    pub hidden_widths: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl FieldConfig {
    /// Default layout for a `frames x height x width` video.
    ///
    /// Planes run at half spatial resolution, the temporal plane axis at
    /// `max(frames, 16)`. Two lattices follow at quarter and half spatial
    /// resolution with `frames/2` and `frames` temporal samples.
    pub fn for_video(frames: usize, height: usize, width: usize) -> Self {
        let half = |n: usize| (n / 2).max(2);
        let quarter = |n: usize| (n / 4).max(2);
        FieldConfig {
            res_x: half(width),
            res_y: half(height),
            res_t: frames.max(16),
            plane_channels: 12,
            lattice_levels: vec![
                LatticeShape::new(frames.div_ceil(2).max(2), quarter(height), quarter(width)),
                LatticeShape::new(frames.max(2), half(height), half(width)),
            ],
            lattice_channels: 4,
            hidden_widths: vec![64, 64],
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    /// Width of the concatenated feature vector fed to the decoder.
    pub fn feature_width(&self) -> usize {
        3 * self.plane_channels + self.lattice_levels.len() * self.lattice_channels
    }

    /// `(inputs, outputs)` of every affine decoder layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.feature_width();
        for &w in &self.hidden_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, 3));
        dims
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("res_x", self.res_x), ("res_y", self.res_y), ("res_t", self.res_t)] {
            if v < 2 {
                return Err(NvfError::config(name, format!("must be >= 2, got {v}")));
            }
        }
        if self.plane_channels == 0 {
            return Err(NvfError::config("plane_channels", "must be >= 1"));
        }
        if self.lattice_levels.is_empty() {
            return Err(NvfError::config("lattice_levels", "at least one level required"));
        }
        if self.lattice_channels == 0 {
            return Err(NvfError::config("lattice_channels", "must be >= 1"));
        }
        for (i, lvl) in self.lattice_levels.iter().enumerate() {
            if lvl.t < 2 || lvl.y < 2 || lvl.x < 2 {
                return Err(NvfError::config(
                    format!("lattice_levels[{i}]"),
                    format!("every axis must be >= 2, got {}x{}x{}", lvl.t, lvl.y, lvl.x),
                ));
            }
            if i > 0 {
                let prev = self.lattice_levels[i - 1];
                if lvl.t < prev.t || lvl.y < prev.y || lvl.x < prev.x {
                    return Err(NvfError::config(
                        format!("lattice_levels[{i}]"),
                        "resolutions must not decrease from one level to the next",
                    ));
                }
            }
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(NvfError::config("hidden_widths", "hidden layers must be non-empty"));
        }
        Ok(())
    }

    /// Element count of every trainable array, derived from the configuration alone.
    pub fn parameter_count(&self) -> usize {
        let c = self.plane_channels;
        let planes = c * (self.res_y * self.res_x + self.res_t * self.res_x + self.res_t * self.res_y);
        let lattices: usize = self
            .lattice_levels
            .iter()
            .map(|l| l.vertices() * self.lattice_channels)
            .sum();
        let decoder: usize = self.layer_dims().iter().map(|(i, o)| i * o + o).sum();
        planes + lattices + decoder
    }
}
