//! Parameter and workspace accounting for a single fit step and edit step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editing::{edit_step, BuiltinEditor, EditConfig, EditSchedule, EditSession, ScheduleShape};
use crate::error::Result;
use crate::field::{AdamConfig, FieldConfig, FieldParams};
use crate::fitting::{fit_step, sample_pixel_batch, Trainer};
use crate::synthetic::MovingSquare;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub batch_size: usize,
    pub parameter_bytes: usize,
    pub fit_workspace_bytes: usize,
    pub edit_workspace_bytes: usize,
    /// Largest of the fit and edit workspaces.
    pub peak_workspace_bytes: usize,
}

/// Build a field for a `frames x height x width` video, run one fit step at
/// `batch_size` and one edit step, and report the memory each needed.
///
/// `config` of `None` uses [`FieldConfig::for_video`].
pub fn memory_report(
    config: Option<&FieldConfig>,
    frames: usize,
    height: usize,
    width: usize,
    batch_size: usize,
    seed: u64,
) -> Result<MemoryReport> {
    let config = match config {
        Some(c) => c.clone(),
        None => FieldConfig::for_video(frames, height, width),
    };
    let video = MovingSquare { frames, ..MovingSquare::reference().with_resolution(height, width) }.video();
    let mut params = FieldParams::init(&config, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = Trainer::new(&params, AdamConfig::default());
    let mut batch = sample_pixel_batch(&video, batch_size, &mut rng)?;
    fit_step(&mut params, &video, batch_size, &mut rng, &mut trainer, &mut batch)?;
    let fit_workspace_bytes = trainer.peak_workspace_bytes();
    drop(trainer);

    let mut edit = EditConfig::for_video(frames);
    edit.schedule = EditSchedule::new(1.0, 1.0, 1, ScheduleShape::Linear)?;
    let mut session = EditSession::new(&params, &edit);
    edit_step(&mut params, &video, &mut BuiltinEditor::Sepia, &edit, 0, &mut session)?;
    let edit_workspace_bytes = session.peak_workspace_bytes();

    Ok(MemoryReport {
        frames,
        height,
        width,
        batch_size,
        parameter_bytes: params.parameter_bytes(),
        fit_workspace_bytes,
        edit_workspace_bytes,
        peak_workspace_bytes: fit_workspace_bytes.max(edit_workspace_bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workspace_constant_in_frames() {
        let a = memory_report(None, 4, 16, 16, 256, 0).unwrap();
        let b = memory_report(None, 40, 16, 16, 256, 0).unwrap();
        assert_eq!(a.peak_workspace_bytes, b.peak_workspace_bytes);
        assert_eq!(a.fit_workspace_bytes, b.fit_workspace_bytes);
        assert!(b.parameter_bytes > a.parameter_bytes);
    }

    #[test]
    fn workspace_scales_with_batch() {
        let a = memory_report(None, 4, 16, 16, 2048, 0).unwrap();
        let b = memory_report(None, 4, 16, 16, 4096, 0).unwrap();
        let ratio = b.fit_workspace_bytes as f64 / a.fit_workspace_bytes as f64;
        assert!((2.0 / 1.2..=2.0 * 1.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn parameter_bytes_match_hand_count() {
        let config = FieldConfig {
            res_x: 2,
            res_y: 2,
            res_t: 2,
            plane_channels: 1,
            lattice_levels: vec![crate::field::LatticeShape::new(2, 2, 2)],
            lattice_channels: 1,
            hidden_widths: vec![1],
            ..FieldConfig::for_video(2, 8, 8)
        };
        let r = memory_report(Some(&config), 2, 8, 8, 4, 0).unwrap();
        // planes 3*4, lattice 8, decoder (4*1 + 1) + (1*3 + 3)
        assert_eq!(r.parameter_bytes, (12 + 8 + 5 + 6) * 4);
    }
}
