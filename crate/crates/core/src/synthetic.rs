//! Procedural test videos with analytically known content at any time.

use crate::video::{Frame, VideoTensor};

/// An axis-aligned square translating at constant velocity over a flat
/// background, rendered with exact box-filtered (area coverage) edges.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingSquare {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Side length in pixels.
    pub size: f64,
    /// Top-left corner at frame 0, pixels `(x, y)`.
    pub start: (f64, f64),
    /// Displacement per frame, pixels `(x, y)`.
    pub velocity: (f64, f64),
    pub background: [f32; 3],
    pub foreground: [f32; 3],
}

impl MovingSquare {
    /// 16 frames at 64x64: a 16 px red square moving one pixel per frame
    /// diagonally over a blue background.
    pub fn reference() -> Self {
        MovingSquare {
            frames: 16,
            height: 64,
            width: 64,
            size: 16.0,
            start: (8.0, 8.0),
            velocity: (1.0, 1.0),
            background: [0.1, 0.25, 0.85],
            foreground: [0.9, 0.2, 0.1],
        }
    }

    pub fn with_resolution(mut self, height: usize, width: usize) -> Self {
        let sy = height as f64 / self.height as f64;
        let sx = width as f64 / self.width as f64;
        self.size *= sx.min(sy);
        self.start = (self.start.0 * sx, self.start.1 * sy);
        self.velocity = (self.velocity.0 * sx, self.velocity.1 * sy);
        self.height = height;
        self.width = width;
        self
    }

    fn coverage(lo: f64, hi: f64, pixel: usize) -> f64 {
        let a = pixel as f64;
        (hi.min(a + 1.0) - lo.max(a)).clamp(0.0, 1.0)
    }

    /// Frame at a possibly fractional frame position `time`.
    pub fn frame_at(&self, time: f64) -> Frame {
        let x0 = self.start.0 + self.velocity.0 * time;
        let y0 = self.start.1 + self.velocity.1 * time;
        let mut f = Frame::filled(self.height, self.width, self.background);
        for row in 0..self.height {
            let cy = Self::coverage(y0, y0 + self.size, row);
            if cy == 0.0 {
                continue;
            }
            for col in 0..self.width {
                let a = (cy * Self::coverage(x0, x0 + self.size, col)) as f32;
                if a == 0.0 {
                    continue;
                }
                let mut px = [0.0; 3];
                for c in 0..3 {
                    px[c] = (1.0 - a) * self.background[c] + a * self.foreground[c];
                }
                f.set_pixel(row, col, px);
            }
        }
        f
    }

    pub fn video(&self) -> VideoTensor {
        VideoTensor::from_frames((0..self.frames).map(|k| self.frame_at(k as f64)).collect(), 24.0)
            .expect("synthetic video is well formed")
    }
}

pub fn constant_video(frames: usize, height: usize, width: usize, rgb: [f32; 3]) -> VideoTensor {
    VideoTensor::from_frames(vec![Frame::filled(height, width, rgb); frames], 24.0)
        .expect("constant video is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_frames_are_crisp() {
        let sq = MovingSquare::reference();
        let v = sq.video();
        for px in v.data.chunks_exact(3) {
            assert!(px == sq.background || px == sq.foreground);
        }
    }

    #[test]
    fn half_step_has_half_coverage_edges() {
        let sq = MovingSquare::reference();
        let f = sq.frame_at(0.5);
        // Leading vertical edge at x = 8.5 + 16: column 24 is half covered.
        let p = f.pixel(12, 24);
        let want = 0.5 * (sq.background[0] + sq.foreground[0]);
        assert!((p[0] - want).abs() < 1e-6);
    }
}
