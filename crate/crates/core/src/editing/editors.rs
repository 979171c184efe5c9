use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::color::{hue_rotate, posterize, resize_bicubic, resize_nearest, rgb_to_hsv, hsv_to_rgb, sepia};
use crate::error::{NvfError, Result};
use crate::guidance::pixel_mask_from_frames;
use crate::video::Frame;

/// Everything an editor sees for one pseudo ground truth.
#[derive(Clone, Copy, Debug)]
pub struct EditRequest<'a> {
    pub rendered: &'a Frame,
    pub original: &'a Frame,
    pub instruction: &'a str,
    pub strength: f32,
    pub iteration: usize,
    pub frame_index: usize,
}

/// Produces a pseudo ground-truth frame from a rendered frame.
///
/// Output values lie in `[0, 1]` and the output size is fixed for the lifetime
/// of the editor (it may differ from the input size).
pub trait FrameEditor {
    fn name(&self) -> &str;

    fn edit(&mut self, request: &EditRequest<'_>) -> std::result::Result<Frame, String>;

    /// Serialized configuration; editing must never change it.
    fn state(&self) -> serde_json::Value;
}

/// Deterministic editors that run in-process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinEditor {
    Identity,
    HueShift { degrees: f32 },
    Sepia,
    Posterize { levels: u32 },
    /// Set the hue inside `rect` to `hue`, restricted by a pixel mask at threshold `tau`.
    RegionRecolor { rect: PixelRect, hue: f32, tau: f32 },
    /// Bicubic 2x upscale; the weak end of the schedule is pixel replication.
    Upscale2x,
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.y0..self.y1).contains(&row) && (self.x0..self.x1).contains(&col)
    }
}

impl BuiltinEditor {
    pub fn validate(&self) -> Result<()> {
        match self {
            BuiltinEditor::HueShift { degrees } if !degrees.is_finite() => {
                Err(NvfError::config("edit.hue_degrees", "must be finite"))
            }
            BuiltinEditor::Posterize { levels } if *levels < 2 => {
                Err(NvfError::config("edit.levels", "posterize needs at least 2 levels"))
            }
            BuiltinEditor::RegionRecolor { rect, hue, tau } => {
                if rect.x0 >= rect.x1 || rect.y0 >= rect.y1 {
                    return Err(NvfError::config("edit.rect", "rectangle must be non-empty"));
                }
                if !hue.is_finite() {
                    return Err(NvfError::config("edit.hue_degrees", "must be finite"));
                }
                if !(0.0..=1.0).contains(tau) {
                    return Err(NvfError::config("edit.tau", "must lie in [0, 1]"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Full-strength effect on a frame at its own resolution.
    pub fn full_effect(&self, frame: &Frame) -> Frame {
        let map = |f: &dyn Fn([f32; 3]) -> [f32; 3]| {
            let mut out = frame.clone();
            for px in out.data.chunks_exact_mut(3) {
                let v = f([px[0], px[1], px[2]]);
                px.copy_from_slice(&v);
            }
            out
        };
        match self {
            BuiltinEditor::Identity => frame.clone(),
            BuiltinEditor::HueShift { degrees } => map(&|p| hue_rotate(p, *degrees)),
            BuiltinEditor::Sepia => map(&sepia),
            BuiltinEditor::Posterize { levels } => map(&|p| p.map(|v| posterize(v, *levels))),
            BuiltinEditor::RegionRecolor { rect, hue, .. } => {
                let mut out = frame.clone();
                for row in 0..frame.height {
                    for col in 0..frame.width {
                        if rect.contains(row, col) {
                            let [_, s, v] = rgb_to_hsv(frame.pixel(row, col));
                            out.set_pixel(row, col, hsv_to_rgb([*hue, s, v]));
                        }
                    }
                }
                out
            }
            BuiltinEditor::Upscale2x => resize_bicubic(frame, frame.height * 2, frame.width * 2),
        }
    }

    /// Apply at `strength`, blending linearly from `rendered` toward the full
    /// effect.
    ///
    /// Every edit takes its full effect from `original`, the frame the edit is
    /// conditioned on; re-editing the rendered frame would compound across
    /// iterations. The weak end of `upscale2x` is `rendered` pixel-replicated.
    pub fn apply(&self, rendered: &Frame, original: &Frame, strength: f32) -> Result<Frame> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(NvfError::contract(format!("strength {strength} outside [0, 1]")));
        }
        if matches!(self, BuiltinEditor::Identity) {
            return Ok(rendered.clone());
        }
        if !rendered.same_dims(original) {
            return Err(NvfError::contract(format!(
                "rendered frame is {}x{} but original is {}x{}",
                rendered.height, rendered.width, original.height, original.width
            )));
        }
        if let BuiltinEditor::Upscale2x = self {
            let base = resize_nearest(rendered, 2);
            if strength == 0.0 {
                return Ok(base);
            }
            return Ok(blend(&base, &self.full_effect(original), strength, None));
        }
        if strength == 0.0 {
            return Ok(rendered.clone());
        }
        let full = self.full_effect(original);
        match self {
            BuiltinEditor::RegionRecolor { tau, .. } => {
                let mask = pixel_mask_from_frames(&full, original, *tau)?;
                Ok(blend(rendered, &full, strength, Some(&mask.data)))
            }
            _ => Ok(blend(rendered, &full, strength, None)),
        }
    }
}

fn blend(base: &Frame, full: &Frame, s: f32, mask: Option<&[u8]>) -> Frame {
    let mut out = base.clone();
    for (i, (o, f)) in out.data.iter_mut().zip(&full.data).enumerate() {
        if mask.is_some_and(|m| m[i / 3] == 0) {
            continue;
        }
        *o = ((1.0 - s) * *o + s * f).clamp(0.0, 1.0);
    }
    out
}

impl FrameEditor for BuiltinEditor {
    fn name(&self) -> &str {
        match self {
            BuiltinEditor::Identity => "identity",
            BuiltinEditor::HueShift { .. } => "hue-shift",
            BuiltinEditor::Sepia => "sepia",
            BuiltinEditor::Posterize { .. } => "posterize",
            BuiltinEditor::RegionRecolor { .. } => "region-recolor",
            BuiltinEditor::Upscale2x => "upscale2x",
        }
    }

    fn edit(&mut self, request: &EditRequest<'_>) -> std::result::Result<Frame, String> {
        self.apply(request.rendered, request.original, request.strength).map_err(|e| e.to_string())
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("editor options serialize")
    }
}

/// Build a validated built-in editor.
pub fn builtin_editor(kind: BuiltinEditor) -> Result<BuiltinEditor> {
    kind.validate()?;
    Ok(kind)
}

/// Replace a seeded fraction of another editor's outputs with uniform noise.
pub struct NoiseCorruption<E> {
    pub inner: E,
    pub fraction: f64,
    seed: u64,
    rng: ChaCha8Rng,
    pub corrupted: usize,
}

impl<E: FrameEditor> NoiseCorruption<E> {
    pub fn new(inner: E, fraction: f64, seed: u64) -> Self {
        NoiseCorruption { inner, fraction, seed, rng: ChaCha8Rng::seed_from_u64(seed), corrupted: 0 }
    }
}

impl<E: FrameEditor> FrameEditor for NoiseCorruption<E> {
    fn name(&self) -> &str {
        "noise-corruption"
    }

    fn edit(&mut self, request: &EditRequest<'_>) -> std::result::Result<Frame, String> {
        let clean = self.inner.edit(request)?;
        if self.rng.gen_bool(self.fraction) {
            self.corrupted += 1;
            let data = (0..clean.data.len()).map(|_| self.rng.gen::<f32>()).collect();
            return Frame::new(clean.height, clean.width, data).map_err(|e| e.to_string());
        }
        Ok(clean)
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({
            "inner": self.inner.state(),
            "fraction": self.fraction,
            "seed": self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_frame(h: usize, w: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::new(h, w, (0..h * w * 3).map(|_| rng.gen()).collect()).unwrap()
    }

    fn req<'a>(f: &'a Frame, s: f32) -> EditRequest<'a> {
        EditRequest { rendered: f, original: f, instruction: "", strength: s, iteration: 0, frame_index: 0 }
    }

    fn all_kinds() -> Vec<BuiltinEditor> {
        vec![
            BuiltinEditor::Identity,
            BuiltinEditor::HueShift { degrees: 180.0 },
            BuiltinEditor::Sepia,
            BuiltinEditor::Posterize { levels: 2 },
            BuiltinEditor::RegionRecolor { rect: PixelRect { x0: 1, y0: 1, x1: 5, y1: 4 }, hue: 120.0, tau: 0.1 },
            BuiltinEditor::Upscale2x,
        ]
    }

    #[test]
    fn identity_is_bit_exact() {
        let f = random_frame(5, 7, 1);
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(BuiltinEditor::Identity.edit(&req(&f, s)).unwrap(), f);
        }
    }

    #[test]
    fn zero_strength_leaves_frame_for_same_size_editors() {
        let f = random_frame(6, 6, 2);
        for mut e in all_kinds() {
            let out = e.edit(&req(&f, 0.0)).unwrap();
            if matches!(e, BuiltinEditor::Upscale2x) {
                assert_eq!(out, resize_nearest(&f, 2));
            } else {
                assert_eq!(out, f, "{}", e.name());
            }
        }
    }

    #[test]
    fn outputs_stay_in_unit_range_with_fixed_size() {
        let f = random_frame(6, 8, 3);
        for mut e in all_kinds() {
            let a = e.edit(&req(&f, 0.7)).unwrap();
            let b = e.edit(&req(&random_frame(6, 8, 4), 1.0)).unwrap();
            assert!(a.in_unit_range() && b.in_unit_range());
            assert!(a.same_dims(&b));
        }
    }

    #[test]
    fn hue_shift_red_to_cyan() {
        let f = Frame::filled(2, 2, [1.0, 0.0, 0.0]);
        let out = BuiltinEditor::HueShift { degrees: 180.0 }.apply(&f, &f, 1.0).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0, 1.0, 1.0]);
    }

    #[test]
    fn posterize_low_value_to_zero() {
        let f = Frame::filled(2, 2, [0.4, 0.4, 0.4]);
        let out = BuiltinEditor::Posterize { levels: 2 }.apply(&f, &f, 1.0).unwrap();
        assert_eq!(out.pixel(1, 1), [0.0; 3]);
    }

    #[test]
    fn upscale_doubles_resolution() {
        let f = random_frame(5, 6, 5);
        let out = BuiltinEditor::Upscale2x.apply(&f, &f, 1.0).unwrap();
        assert_eq!((out.height, out.width), (10, 12));
        assert_eq!(out, resize_bicubic(&f, 10, 12));
    }

    #[test]
    fn upscale_blends_replicated_render_toward_upscaled_original() {
        let rendered = random_frame(4, 5, 8);
        let original = random_frame(4, 5, 9);
        let e = BuiltinEditor::Upscale2x;
        assert_eq!(e.apply(&rendered, &original, 0.0).unwrap(), resize_nearest(&rendered, 2));
        assert_eq!(e.apply(&rendered, &original, 1.0).unwrap(), resize_bicubic(&original, 8, 10));
        assert!(e.apply(&rendered, &random_frame(3, 5, 1), 0.5).is_err());
    }

    #[test]
    fn region_recolor_is_confined_to_mask() {
        let f = Frame::filled(10, 10, [0.8, 0.3, 0.2]);
        let rect = PixelRect { x0: 2, y0: 3, x1: 7, y1: 8 };
        let e = BuiltinEditor::RegionRecolor { rect, hue: 200.0, tau: 0.1 };
        let out = e.apply(&f, &f, 1.0).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(out.pixel(r, c) != f.pixel(r, c), rect.contains(r, c), "({r},{c})");
            }
        }
    }

    #[test]
    fn colour_edits_start_from_rendered_and_end_at_edited_original() {
        let rendered = random_frame(4, 4, 7);
        let original = random_frame(4, 4, 8);
        let e = BuiltinEditor::Sepia;
        assert_eq!(e.apply(&rendered, &original, 0.0).unwrap(), rendered);
        assert_eq!(e.apply(&rendered, &original, 1.0).unwrap(), e.full_effect(&original));
        let half = e.apply(&rendered, &original, 0.5).unwrap();
        let full = e.full_effect(&original);
        for i in 0..half.data.len() {
            assert!((half.data[i] - 0.5 * (rendered.data[i] + full.data[i])).abs() < 1e-6);
        }
        assert!(e.apply(&rendered, &random_frame(5, 4, 1), 0.5).is_err());
    }

    #[test]
    fn invalid_options() {
        assert!(builtin_editor(BuiltinEditor::Posterize { levels: 1 }).is_err());
        assert!(builtin_editor(BuiltinEditor::HueShift { degrees: f32::NAN }).is_err());
        let rect = PixelRect { x0: 3, y0: 0, x1: 3, y1: 2 };
        assert!(builtin_editor(BuiltinEditor::RegionRecolor { rect, hue: 0.0, tau: 0.1 }).is_err());
    }

    #[test]
    fn corruption_rate_is_roughly_requested() {
        let f = random_frame(4, 4, 6);
        let mut e = NoiseCorruption::new(BuiltinEditor::Identity, 0.2, 1);
        for _ in 0..1000 {
            e.edit(&req(&f, 1.0)).unwrap();
        }
        assert!((150..250).contains(&e.corrupted), "{}", e.corrupted);
    }
}
