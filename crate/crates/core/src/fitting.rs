//! Stage one: regress the field onto a source video from random pixel batches.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NvfError, Result};
use crate::field::{backward_cached, forward_cached, AdamConfig, AdamState, FieldParams, GradientBuffer, NormalizedCoord, Workspace};
use crate::render::{psnr, render_video, RenderSpec};
use crate::video::VideoTensor;

/// Pixels drawn from a video together with their coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelBatch {
    pub coords: Vec<NormalizedCoord>,
    /// Flattened `len x 3` target colors.
    pub targets: Vec<f32>,
    /// `(t, y, x)` source index of each pixel.
    pub source_indices: Vec<[usize; 3]>,
}

impl PixelBatch {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.coords.capacity() * std::mem::size_of::<NormalizedCoord>()
            + self.targets.capacity() * std::mem::size_of::<f32>()
            + self.source_indices.capacity() * std::mem::size_of::<[usize; 3]>()
    }
}

/// Draw `batch_size` pixels uniformly with replacement over all frames.
pub fn sample_pixel_batch(video: &VideoTensor, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<PixelBatch> {
    let mut batch = PixelBatch {
        coords: Vec::with_capacity(batch_size),
        targets: Vec::with_capacity(batch_size * 3),
        source_indices: Vec::with_capacity(batch_size),
    };
    sample_into(video, batch_size, rng, &mut batch)?;
    Ok(batch)
}

fn sample_into(video: &VideoTensor, batch_size: usize, rng: &mut ChaCha8Rng, batch: &mut PixelBatch) -> Result<()> {
    if batch_size == 0 {
        return Err(NvfError::config("batch_size", "must be >= 1"));
    }
    let (t_n, h, w) = (video.frames, video.height, video.width);
    let total = video.pixel_count();
    batch.coords.clear();
    batch.targets.clear();
    batch.source_indices.clear();
    for _ in 0..batch_size {
        let flat = rng.gen_range(0..total);
        let t = flat / (h * w);
        let y = (flat / w) % h;
        let x = flat % w;
        batch.coords.push(NormalizedCoord::from_index(t, y, x, t_n, h, w));
        batch.targets.extend_from_slice(&video.pixel(t, y, x));
        batch.source_indices.push([t, y, x]);
    }
    Ok(())
}

/// Optimizer, gradient buffer and scratch memory shared by training steps.
#[derive(Debug)]
pub struct Trainer {
    pub adam: AdamState<f32>,
    pub grads: GradientBuffer<f32>,
    pub workspace: Workspace<f32>,
    upstream: Vec<f32>,
}

impl Trainer {
    pub fn new(params: &FieldParams<f32>, adam: AdamConfig) -> Self {
        Trainer {
            adam: AdamState::new(params, adam),
            grads: GradientBuffer::for_params(params),
            workspace: Workspace::new(),
            upstream: Vec::new(),
        }
    }

    /// Forward, loss, backward and one Adam step on an explicit target set.
    /// `loss_grad` maps `(prediction, target)` to `(loss term, d loss / d prediction)`;
    /// the returned loss is the mean of the terms over all values scaled by `scale`.
    pub(crate) fn supervised_step(
        &mut self,
        params: &mut FieldParams<f32>,
        coords: &[NormalizedCoord],
        targets: &[f32],
        extra_bytes: usize,
        scale: f64,
        loss_grad: impl Fn(f32, f32) -> (f64, f32),
    ) -> Result<f64> {
        let out = forward_cached(params, coords, &mut self.workspace)?;
        if self.upstream.len() != out.len() {
            self.upstream = vec![0.0; out.len()];
        }
        let mut loss = 0.0;
        for ((u, &p), &t) in self.upstream.iter_mut().zip(out).zip(targets) {
            let (l, g) = loss_grad(p, t);
            loss += l;
            *u = g;
        }
        let upstream_bytes = self.upstream.capacity() * std::mem::size_of::<f32>();
        self.workspace.set_extra_bytes(extra_bytes + upstream_bytes);
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(NvfError::Training {
                iteration: self.adam.step as usize,
                reason: format!("non-finite loss {loss}"),
            });
        }
        backward_cached(params, coords, &self.upstream, &mut self.workspace, &mut self.grads)?;
        self.adam.step(params, &mut self.grads)?;
        Ok(loss)
    }

    pub fn peak_workspace_bytes(&self) -> usize {
        self.workspace.peak_bytes()
    }
}

/// Fitting hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Full-video PSNR is evaluated every `log_interval` iterations.
    pub log_interval: usize,
    /// Stop once the evaluated PSNR reaches this value.
    pub target_psnr: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            batch_size: 65_536,
            iterations: 30_000,
            seed: 0,
            log_interval: 500,
            target_psnr: None,
            adam: AdamConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NvfError::config("fit.batch_size", "must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(NvfError::config("fit.iterations", "must be >= 1"));
        }
        if self.log_interval == 0 {
            return Err(NvfError::config("fit.log_interval", "must be >= 1"));
        }
        self.adam.validate()
    }
}

/// Summary of a fitting run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    /// Batch loss of every iteration, before its update.
    pub losses: Vec<f64>,
    /// `(iteration, full-video PSNR)` at each evaluation.
    pub psnr_trace: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub final_psnr: f64,
    pub peak_workspace_bytes: usize,
    pub wall_seconds: f64,
}

/// One fitting iteration: sample a batch, mean squared error, backprop, Adam.
/// Returns the pre-update loss `(1/B) sum ||target - f||^2`.
pub fn fit_step(
    params: &mut FieldParams<f32>,
    video: &VideoTensor,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    trainer: &mut Trainer,
    batch: &mut PixelBatch,
) -> Result<f64> {
    sample_into(video, batch_size, rng, batch)?;
    let b = batch.len() as f32;
    let extra = batch.bytes();
    trainer.supervised_step(params, &batch.coords, &batch.targets, extra, 1.0 / batch.len() as f64, |p, t| {
        let d = p - t;
        ((d as f64) * (d as f64), 2.0 * d / b)
    })
}

/// Full-video PSNR of the field against `video` at the source frame positions.
pub fn video_psnr(params: &FieldParams<f32>, video: &VideoTensor) -> Result<f64> {
    let rendered = render_video(params, &RenderSpec::frames(video.width, video.height, video.frames))?;
    psnr(&rendered, video)
}

/// Run fitting for the configured budget or until the PSNR target is met.
pub fn fit(params: &mut FieldParams<f32>, video: &VideoTensor, config: &FitConfig) -> Result<FitReport> {
    fit_with_progress(params, video, config, |_, _| {})
}

/// [`fit`] with a callback invoked after every PSNR evaluation.
pub fn fit_with_progress(
    params: &mut FieldParams<f32>,
    video: &VideoTensor,
    config: &FitConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<FitReport> {
    config.validate()?;
    video.validate()?;
    let started = Instant::now();
    params.source = Some(video.shape());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trainer = Trainer::new(params, config.adam);
    let mut batch = sample_pixel_batch(video, config.batch_size, &mut rng)?;
    let mut losses = Vec::with_capacity(config.iterations);
    let mut psnr_trace = Vec::new();
    let mut last_eval = None;
    for it in 0..config.iterations {
        let loss = fit_step(params, video, config.batch_size, &mut rng, &mut trainer, &mut batch)
            .map_err(|e| match e {
                NvfError::Training { reason, .. } => NvfError::Training { iteration: it, reason },
                other => other,
            })?;
        losses.push(loss);
        let done = it + 1;
        if done % config.log_interval == 0 || done == config.iterations {
            let p = video_psnr(params, video)?;
            psnr_trace.push((done, p));
            last_eval = Some(p);
            progress(done, p);
            if config.target_psnr.is_some_and(|target| p >= target) {
                break;
            }
        }
    }
    let final_psnr = match last_eval {
        Some(p) => p,
        None => video_psnr(params, video)?,
    };
    Ok(FitReport {
        iterations: losses.len(),
        final_loss: *losses.last().expect("at least one iteration"),
        losses,
        psnr_trace,
        final_psnr,
        peak_workspace_bytes: trainer.peak_workspace_bytes(),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
