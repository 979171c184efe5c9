use crate::error::{NvfError, Result};

/// Normalized `(x, y, t)` coordinate, every component in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl NormalizedCoord {
    pub fn new(x: f64, y: f64, t: f64) -> Result<Self> {
        let c = NormalizedCoord { x, y, t };
        c.check()?;
        Ok(c)
    }

    /// Coordinate of pixel `(col, row)` of frame `frame` in a
    /// `frames x height x width` grid.
    pub fn from_index(frame: usize, row: usize, col: usize, frames: usize, height: usize, width: usize) -> Self {
        NormalizedCoord {
            x: axis_coord(col, width),
            y: axis_coord(row, height),
            t: axis_coord(frame, frames),
        }
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("x", self.x), ("y", self.y), ("t", self.t)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(NvfError::contract(format!("coordinate {name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Align-corners mapping of index `k` on an axis of `n` samples.
pub fn axis_coord(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

/// Full pixel grid of one frame at temporal coordinate `t`, row-major.
pub fn frame_grid(width: usize, height: usize, t: f64) -> Vec<NormalizedCoord> {
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = axis_coord(row, height);
        for col in 0..width {
            out.push(NormalizedCoord { x: axis_coord(col, width), y, t });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn align_corners_endpoints() {
        assert_eq!(axis_coord(0, 64), 0.0);
        assert_eq!(axis_coord(63, 64), 1.0);
        assert_eq!(axis_coord(0, 1), 0.0);
        assert_eq!(axis_coord(1, 3), 0.5);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(NormalizedCoord::new(1.01, 0.0, 0.0).is_err());
        assert!(NormalizedCoord::new(0.0, -0.1, 0.0).is_err());
        assert!(NormalizedCoord::new(0.0, 0.0, f64::NAN).is_err());
        assert!(NormalizedCoord::new(1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn frame_grid_corners() {
        let g = frame_grid(4, 3, 0.25);
        assert_eq!(g.len(), 12);
        assert_eq!((g[0].x, g[0].y), (0.0, 0.0));
        assert_eq!((g[11].x, g[11].y), (1.0, 1.0));
        assert!(g.iter().all(|c| c.t == 0.25));
    }
}
