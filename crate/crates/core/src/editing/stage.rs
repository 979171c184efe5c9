//! Stage two: pull the fitted field toward editor outputs, one frame per step.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::editors::{EditRequest, FrameEditor};
use super::schedule::EditSchedule;
use crate::error::{NvfError, Result};
use crate::field::{axis_coord, frame_grid, AdamConfig, FieldParams};
use crate::fitting::Trainer;
use crate::render::{render_frame, render_video, temporal_consistency, RenderSpec};
use crate::video::{Frame, VideoTensor};

/// Which source frame each edit iteration supervises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FramePolicy {
    /// `t = i mod T`.
    #[default]
    Cyclic,
    /// Uniform draw from a generator seeded with the config seed.
    Random,
}

impl std::str::FromStr for FramePolicy {
    type Err = NvfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(FramePolicy::Cyclic),
            "random" => Ok(FramePolicy::Random),
            other => Err(NvfError::config("edit.frame_policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// A pseudo ground truth produced for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoGt {
    pub frame_index: usize,
    pub iteration: usize,
    pub image: Frame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditConfig {
    pub schedule: EditSchedule,
    pub frame_policy: FramePolicy,
    pub instruction: String,
    /// Lower and upper bounds of the editor's initial-noise window, as fractions.
    pub t_lower: f64,
    pub t_upper: f64,
    pub tau: Option<f32>,
    pub seed: u64,
    /// Fraction of the iteration budget that may fail before the stage aborts.
    pub max_failure_fraction: f64,
    /// Temporal consistency is recorded every `eval_interval` iterations (0 disables).
    pub eval_interval: usize,
    pub adam: AdamConfig,
    /// Learning rates ramp up linearly over this many iterations...
    pub warmup_iterations: usize,
    /// ...then follow a half cosine down to this fraction of the Adam values
    /// at the last iteration (1 keeps them constant).
    pub final_lr_fraction: f64,
    /// Each update is weighted by `1 / (1 + (L / (k m))^2)`, where `L` is the
    /// pseudo-GT's L1 loss, `m` the median loss over the last
    /// `robust_window` iterations and `k` this scale. Outlying pseudo-GTs
    /// barely move the field. 0 disables.
    pub robust_scale: f64,
    pub robust_window: usize,
    /// The result is the mean of the parameters after each of the last this
    /// many iterations (1 keeps the last iterate).
    pub average_iterations: usize,
}

/// Edit-stage optimizer defaults.
///
/// The decoder carries most of the update: a global colour change is one
/// mapping shared by all frames, while per-frame features adapting on their
/// own make frames drift apart.
pub fn edit_adam_defaults() -> AdamConfig {
    AdamConfig { lr_explicit: 3e-4, lr_implicit: 5e-2, ..AdamConfig::default() }
}

impl EditConfig {
    /// Defaults for a `frames`-long video: strength ramps linearly from 0.3 to
    /// 1.0 over `10 T` iterations.
    pub fn for_video(frames: usize) -> Self {
        EditConfig {
            schedule: EditSchedule::default_for(frames),
            frame_policy: FramePolicy::Cyclic,
            instruction: String::new(),
            t_lower: 0.42,
            t_upper: 0.98,
            tau: None,
            seed: 0,
            max_failure_fraction: 0.1,
            eval_interval: frames.max(1),
            adam: edit_adam_defaults(),
            warmup_iterations: 2 * frames.max(1),
            final_lr_fraction: 0.1,
            robust_scale: 2.0,
            robust_window: frames.max(1),
            average_iterations: frames.max(1),
        }
    }

    /// Learning-rate multiplier at iteration `i`.
    pub fn lr_scale(&self, i: usize) -> f64 {
        let n = self.schedule.total_iterations;
        if n <= 1 {
            return 1.0;
        }
        let u = (i.min(n - 1)) as f64 / (n - 1) as f64;
        let f = self.final_lr_fraction;
        let warm = if self.warmup_iterations > 0 {
            ((i + 1) as f64 / self.warmup_iterations as f64).min(1.0)
        } else {
            1.0
        };
        warm * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * u).cos()))
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(0.0..=1.0).contains(&self.t_lower) || !(0.0..=1.0).contains(&self.t_upper) || self.t_lower > self.t_upper {
            return Err(NvfError::config("edit.t_lower", "need 0 <= t_lower <= t_upper <= 1"));
        }
        if let Some(tau) = self.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(NvfError::config("edit.tau", "must lie in [0, 1]"));
            }
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(NvfError::config("edit.final_lr_fraction", "must lie in (0, 1]"));
        }
        if self.robust_window == 0 {
            return Err(NvfError::config("edit.robust_window", "must be >= 1"));
        }
        if self.average_iterations == 0 {
            return Err(NvfError::config("edit.average_iterations", "must be >= 1"));
        }
        if !(self.robust_scale.is_finite() && self.robust_scale >= 0.0) {
            return Err(NvfError::config("edit.robust_scale", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(NvfError::config("edit.max_failure_fraction", "must lie in [0, 1]"));
        }
        self.adam.validate()
    }
}

/// An editor call that failed and whose iteration was dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedEdit {
    pub iteration: usize,
    pub frame_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub iterations: usize,
    /// `(frame_index, l1_loss)` per completed iteration.
    pub losses: Vec<(usize, f64)>,
    /// Loss history of each source frame.
    pub frame_losses: Vec<Vec<f64>>,
    /// `(iteration, temporal consistency of the rendered video)`.
    pub temporal_consistency_trace: Vec<(usize, f64)>,
    pub skipped: Vec<SkippedEdit>,
    /// Robust weight of each completed iteration's update, aligned with `losses`.
    pub update_weights: Vec<f64>,
    pub final_loss: f64,
    pub peak_workspace_bytes: usize,
    pub wall_seconds: f64,
}

/// Mutable state carried between edit steps.
pub struct EditSession {
    trainer: Trainer,
    rng: ChaCha8Rng,
    recent: VecDeque<f64>,
    last_weight: f64,
}

impl EditSession {
    /// Fresh optimizer state; each edit stage starts from zero moments.
    pub fn new(params: &FieldParams<f32>, config: &EditConfig) -> Self {
        EditSession {
            trainer: Trainer::new(params, config.adam),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            recent: VecDeque::new(),
            last_weight: 1.0,
        }
    }

    /// Weight applied to the most recent update.
    pub fn last_weight(&self) -> f64 {
        self.last_weight
    }

    /// Cauchy weight of a pseudo-GT with loss `loss`, then remember the loss,
    /// winsorized at `scale` medians so bursts of outliers cannot drag the
    /// reference up with them.
    fn robust_weight(&mut self, loss: f64, scale: f64, window: usize) -> f64 {
        let median = (!self.recent.is_empty()).then(|| {
            let mut sorted: Vec<f64> = self.recent.iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            sorted[sorted.len() / 2]
        });
        let (weight, kept) = match median {
            Some(m) if scale > 0.0 && m > 0.0 => {
                (1.0 / (1.0 + (loss / (scale * m)).powi(2)), loss.min(scale * m))
            }
            _ => (1.0, loss),
        };
        self.recent.push_back(kept);
        while self.recent.len() > window.max(1) {
            self.recent.pop_front();
        }
        self.last_weight = weight;
        weight
    }

    pub fn peak_workspace_bytes(&self) -> usize {
        self.trainer.peak_workspace_bytes()
    }

    fn pick_frame(&mut self, policy: FramePolicy, i: usize, frames: usize) -> usize {
        match policy {
            FramePolicy::Cyclic => i % frames,
            FramePolicy::Random => self.rng.gen_range(0..frames),
        }
    }
}

/// Running sum of parameter snapshots.
struct TailAverage {
    sums: Vec<Vec<f64>>,
    count: usize,
}

impl TailAverage {
    fn new(params: &FieldParams<f32>) -> Self {
        TailAverage { sums: params.arrays().iter().map(|(_, a)| vec![0.0; a.len()]).collect(), count: 0 }
    }

    fn add(&mut self, params: &FieldParams<f32>) {
        for (sum, (_, a)) in self.sums.iter_mut().zip(params.arrays()) {
            for (s, &v) in sum.iter_mut().zip(a) {
                *s += v as f64;
            }
        }
        self.count += 1;
    }

    fn write_into(&self, params: &mut FieldParams<f32>) {
        if self.count == 0 {
            return;
        }
        let n = self.count as f64;
        for (sum, (_, a)) in self.sums.iter().zip(params.arrays_mut()) {
            for (v, &s) in a.iter_mut().zip(sum) {
                *v = (s / n) as f32;
            }
        }
    }
}

fn mean_abs_diff(a: &Frame, b: &Frame) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.data.len() as f64
}

/// One edit iteration: render, edit, L1 at the pseudo-GT's resolution, Adam.
/// Returns the frame index and the pre-update loss.
pub fn edit_step(
    params: &mut FieldParams<f32>,
    video: &VideoTensor,
    editor: &mut dyn FrameEditor,
    config: &EditConfig,
    i: usize,
    session: &mut EditSession,
) -> Result<(usize, f64)> {
    let strength = config.schedule.strength(i)?;
    let frame_index = session.pick_frame(config.frame_policy, i, video.frames);
    let time = axis_coord(frame_index, video.frames);
    let rendered = render_frame(params, video.width, video.height, time)?;
    let original = video.frame(frame_index);
    let request = EditRequest {
        rendered: &rendered,
        original: &original,
        instruction: &config.instruction,
        strength,
        iteration: i,
        frame_index,
    };
    let edit_error = |reason: String| NvfError::Edit { frame_index, iteration: i, reason };
    let gt = editor.edit(&request).map_err(edit_error)?;
    if !gt.in_unit_range() {
        return Err(edit_error("pseudo ground truth has values outside [0, 1]".into()));
    }
    let pseudo = PseudoGt { frame_index, iteration: i, image: gt };

    session.trainer.adam.lr_scale = config.lr_scale(i);
    let n = pseudo.image.data.len();
    let probe_loss = if pseudo.image.same_dims(&rendered) {
        mean_abs_diff(&rendered, &pseudo.image)
    } else {
        mean_abs_diff(&render_frame(params, pseudo.image.width, pseudo.image.height, time)?, &pseudo.image)
    };
    let weight = session.robust_weight(probe_loss, config.robust_scale, config.robust_window);
    let coords = frame_grid(pseudo.image.width, pseudo.image.height, time);
    let inv = (weight / n as f64) as f32;
    let extra = coords.capacity() * std::mem::size_of_val(&coords[0])
        + (rendered.data.capacity() + original.data.capacity() + pseudo.image.data.capacity()) * 4;
    let loss = session
        .trainer
        .supervised_step(params, &coords, &pseudo.image.data, extra, 1.0 / n as f64, |p, t| {
            let d = p - t;
            let g = if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            };
            (d.abs() as f64, g)
        })
        .map_err(|e| match e {
            NvfError::Training { reason, .. } => NvfError::Training { iteration: i, reason },
            other => other,
        })?;
    Ok((frame_index, loss))
}

/// Run the whole edit stage.
pub fn field_edit(
    params: &mut FieldParams<f32>,
    video: &VideoTensor,
    editor: &mut dyn FrameEditor,
    config: &EditConfig,
) -> Result<EditReport> {
    field_edit_with_progress(params, video, editor, config, |_, _, _| {})
}

/// [`field_edit`] with a callback after every completed iteration.
pub fn field_edit_with_progress(
    params: &mut FieldParams<f32>,
    video: &VideoTensor,
    editor: &mut dyn FrameEditor,
    config: &EditConfig,
    mut progress: impl FnMut(usize, usize, f64),
) -> Result<EditReport> {
    config.validate()?;
    video.validate()?;
    let started = Instant::now();
    let state_before = editor.state();
    let total = config.schedule.total_iterations;
    let allowed_failures = (config.max_failure_fraction * total as f64).floor() as usize;
    let mut session = EditSession::new(params, config);
    let mut losses = Vec::with_capacity(total);
    let mut frame_losses = vec![Vec::new(); video.frames];
    let mut skipped = Vec::new();
    let mut weights = Vec::with_capacity(total);
    let mut trace = Vec::new();
    let spec = RenderSpec::frames(video.width, video.height, video.frames);
    let average_from = total.saturating_sub(config.average_iterations);
    let mut tail = TailAverage::new(params);

    for i in 0..total {
        match edit_step(params, video, editor, config, i, &mut session) {
            Ok((t, loss)) => {
                losses.push((t, loss));
                weights.push(session.last_weight());
                frame_losses[t].push(loss);
                progress(i, t, loss);
            }
            Err(NvfError::Edit { frame_index, iteration, reason }) => {
                if skipped.len() >= allowed_failures {
                    return Err(NvfError::Edit {
                        frame_index,
                        iteration,
                        reason: format!("{reason} (failure budget of {allowed_failures} exhausted)"),
                    });
                }
                skipped.push(SkippedEdit { iteration, frame_index, reason });
            }
            Err(other) => return Err(other),
        }
        let done = i + 1;
        if i >= average_from {
            tail.add(params);
            if done == total {
                tail.write_into(params);
            }
        }
        if video.frames >= 2 && config.eval_interval > 0 && (done % config.eval_interval == 0 || done == total) {
            trace.push((done, temporal_consistency(&render_video(params, &spec)?)?));
        }
    }

    if editor.state() != state_before {
        return Err(NvfError::contract(format!("editor `{}` changed its state during editing", editor.name())));
    }
    let final_loss = losses.last().map_or(f64::NAN, |&(_, l)| l);
    Ok(EditReport {
        iterations: total,
        losses,
        frame_losses,
        temporal_consistency_trace: trace,
        skipped,
        update_weights: weights,
        final_loss,
        peak_workspace_bytes: session.peak_workspace_bytes(),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
