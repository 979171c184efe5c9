//! Color-space helpers and resampling used by the built-in editors.

use crate::video::Frame;

/// RGB in `[0,1]` to `(hue degrees in [0,360), saturation, value)`.
pub fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h.rem_euclid(360.0), s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let sector = (h.floor() as i32).rem_euclid(6);
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let rgb = match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    };
    rgb.map(|c| c.clamp(0.0, 1.0))
}

/// Rotate hue by `degrees`, keeping saturation and value.
pub fn hue_rotate(rgb: [f32; 3], degrees: f32) -> [f32; 3] {
    let [h, s, v] = rgb_to_hsv(rgb);
    hsv_to_rgb([h + degrees, s, v])
}

/// Shortest angular distance between two hues, degrees in `[0, 180]`.
pub fn hue_distance(a: f32, b: f32) -> f32 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn sepia([r, g, b]: [f32; 3]) -> [f32; 3] {
    [
        (0.393 * r + 0.769 * g + 0.189 * b).min(1.0),
        (0.349 * r + 0.686 * g + 0.168 * b).min(1.0),
        (0.272 * r + 0.534 * g + 0.131 * b).min(1.0),
    ]
}

/// Quantize to `levels` evenly spaced values in `[0, 1]`.
pub fn posterize(v: f32, levels: u32) -> f32 {
    let l = levels as f32;
    ((v * l).floor().min(l - 1.0) / (l - 1.0)).clamp(0.0, 1.0)
}

fn cubic_weight(x: f32) -> f32 {
    // Keys kernel, a = -0.5.
    const A: f32 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Bicubic resampling with align-corners sample positions and clamped borders.
pub fn resize_bicubic(src: &Frame, height: usize, width: usize) -> Frame {
    let scale = |n_out: usize, n_in: usize| {
        if n_out <= 1 {
            0.0
        } else {
            (n_in - 1) as f32 / (n_out - 1) as f32
        }
    };
    let (sy, sx) = (scale(height, src.height), scale(width, src.width));
    let taps = |pos: f32, n: usize| {
        let base = pos.floor();
        let frac = pos - base;
        let mut out = [(0usize, 0.0f32); 4];
        for (k, o) in out.iter_mut().enumerate() {
            let off = k as f32 - 1.0;
            let idx = (base + off).clamp(0.0, (n - 1) as f32) as usize;
            *o = (idx, cubic_weight(off - frac));
        }
        out
    };
    let mut out = Frame::filled(height, width, [0.0; 3]);
    for row in 0..height {
        let ty = taps(row as f32 * sy, src.height);
        for col in 0..width {
            let tx = taps(col as f32 * sx, src.width);
            let mut acc = [0.0f32; 3];
            for &(yi, wy) in &ty {
                for &(xi, wx) in &tx {
                    let p = src.pixel(yi, xi);
                    for c in 0..3 {
                        acc[c] += wy * wx * p[c];
                    }
                }
            }
            out.set_pixel(row, col, acc.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    out
}

/// Pixel replication by an integer factor.
pub fn resize_nearest(src: &Frame, factor: usize) -> Frame {
    let mut out = Frame::filled(src.height * factor, src.width * factor, [0.0; 3]);
    for row in 0..out.height {
        for col in 0..out.width {
            out.set_pixel(row, col, src.pixel(row / factor, col / factor));
        }
    }
    out
}
