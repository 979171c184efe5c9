//! Batched evaluation and reverse-mode differentiation of a field.

use super::config::{HiddenActivation, OutputActivation};
use super::coord::NormalizedCoord;
use super::interp::{gather_features, scatter_features};
use super::params::{FieldParams, GradientBuffer};
use crate::error::{NvfError, Result};
use crate::real::Real;


/// Scratch memory for one batch: features, per-layer activations and two
/// gradient buffers. Sizes depend only on batch length and network widths.
#[derive(Debug, Default)]
pub struct Workspace<R> {
    batch: usize,
    features: Vec<R>,
    acts: Vec<Vec<R>>,
    grad_a: Vec<R>,
    grad_b: Vec<R>,
    pre_out: Vec<R>,
    extra_bytes: usize,
    peak_bytes: usize,
    allocations: usize,
}

fn resize_exact<R: Real>(buf: &mut Vec<R>, len: usize, allocations: &mut usize) {
    if buf.len() != len {
        *buf = vec![R::zero(); len];
        *allocations += 1;
    }
}

impl<R: Real> Workspace<R> {
    pub fn new() -> Self {
        Workspace {
            batch: 0,
            features: Vec::new(),
            acts: Vec::new(),
            grad_a: Vec::new(),
            grad_b: Vec::new(),
            pre_out: Vec::new(),
            extra_bytes: 0,
            peak_bytes: 0,
            allocations: 0,
        }
    }

    fn prepare(&mut self, params: &FieldParams<R>, batch: usize) {
        let f = params.config.feature_width();
        let widest = params.decoder.max_width();
        let mut allocs = self.allocations;
        resize_exact(&mut self.features, batch * f, &mut allocs);
        self.acts.resize_with(params.decoder.layers.len(), Vec::new);
        for (act, layer) in self.acts.iter_mut().zip(&params.decoder.layers) {
            resize_exact(act, batch * layer.outputs, &mut allocs);
        }
        resize_exact(&mut self.grad_a, batch * widest, &mut allocs);
        resize_exact(&mut self.grad_b, batch * widest, &mut allocs);
        resize_exact(&mut self.pre_out, batch * 3, &mut allocs);
        self.allocations = allocs;
        self.batch = batch;
        self.observe();
    }

    /// Bytes currently held by this workspace, including registered extras.
    pub fn current_bytes(&self) -> usize {
        let elems = self.features.capacity()
            + self.acts.iter().map(Vec::capacity).sum::<usize>()
            + self.grad_a.capacity()
            + self.grad_b.capacity()
            + self.pre_out.capacity();
        elems * std::mem::size_of::<R>() + self.extra_bytes
    }

    /// Register caller-owned per-step buffers (sampled batches, frames).
    pub fn set_extra_bytes(&mut self, bytes: usize) {
        self.extra_bytes = bytes;
        self.observe();
    }

    fn observe(&mut self) {
        self.peak_bytes = self.peak_bytes.max(self.current_bytes());
    }

    /// High-water mark of [`Workspace::current_bytes`].
    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    /// Number of buffer (re)allocations performed so far.
    pub fn allocations(&self) -> usize {
        self.allocations
    }

    pub fn reset_peak(&mut self) {
        self.peak_bytes = self.current_bytes();
    }

    /// Output colors of the most recent forward pass, `batch x 3`.
    pub fn output(&self) -> &[R] {
        self.acts.last().map_or(&[], |a| &a[..self.batch * 3])
    }
}

#[inline]
fn sigmoid<R: Real>(z: R) -> R {
    // Exponentiate a non-positive argument only, so neither branch overflows.
    if z >= R::zero() {
        R::one() / (R::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (R::one() + e)
    }
}

/// `sigmoid'(z) = sigmoid(z) sigmoid(-z)`, which stays nonzero long after
/// `y (1 - y)` rounds to zero.
#[inline]
fn sigmoid_grad<R: Real>(z: R) -> R {
    sigmoid(z) * sigmoid(-z)
}

fn check_batch(batch: &[NormalizedCoord]) -> Result<()> {
    batch.iter().try_for_each(NormalizedCoord::check)
}

/// Features of one coordinate: bilinear plane lookups then trilinear lattice lookups.
pub fn sample_features<R: Real>(params: &FieldParams<R>, c: &NormalizedCoord) -> Result<Vec<R>> {
    c.check()?;
    let mut out = vec![R::zero(); params.config.feature_width()];
    gather_features(params, c, &mut out);
    Ok(out)
}

/// Decode one feature vector into an RGB triple in `(0, 1)`.
pub fn decode<R: Real>(params: &FieldParams<R>, features: &[R]) -> Result<[R; 3]> {
    let dec = &params.decoder;
    if features.len() != dec.input_width() {
        return Err(NvfError::contract(format!(
            "decoder expects {} features, got {}",
            dec.input_width(),
            features.len()
        )));
    }
    let mut cur = features.to_vec();
    let last = dec.layers.len() - 1;
    for (li, layer) in dec.layers.iter().enumerate() {
        let mut next = layer.bias.clone();
        for (o, n) in next.iter_mut().enumerate() {
            let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
            for (w, x) in row.iter().zip(&cur) {
                *n += *w * *x;
            }
        }
        if li == last {
            match dec.output {
                OutputActivation::Sigmoid => next.iter_mut().for_each(|v| *v = sigmoid(*v)),
            }
        } else {
            match dec.hidden {
                HiddenActivation::Relu => next.iter_mut().for_each(|v| *v = v.max(R::zero())),
            }
        }
        cur = next;
    }
    Ok([cur[0], cur[1], cur[2]])
}

/// Evaluate the field on a batch, leaving activations cached in `ws` for
/// [`backward_cached`]. Returns the `batch x 3` colors.
pub fn forward_cached<'w, R: Real>(
    params: &FieldParams<R>,
    batch: &[NormalizedCoord],
    ws: &'w mut Workspace<R>,
) -> Result<&'w [R]> {
    check_batch(batch)?;
    let n = batch.len();
    ws.prepare(params, n);
    if n == 0 {
        return Ok(&[]);
    }
    let f = params.config.feature_width();
    for (c, row) in batch.iter().zip(ws.features.chunks_exact_mut(f)) {
        gather_features(params, c, row);
    }
    let dec = &params.decoder;
    let last = dec.layers.len() - 1;
    for (li, layer) in dec.layers.iter().enumerate() {
        let (before, after) = ws.acts.split_at_mut(li);
        let input: &[R] = if li == 0 { &ws.features } else { &before[li - 1] };
        let out = &mut after[0];
        for row in out.chunks_exact_mut(layer.outputs) {
            row.copy_from_slice(&layer.bias);
        }
        // out (n x o) += input (n x i) * W^T (i x o)
        R::gemm(
            n,
            layer.inputs,
            layer.outputs,
            R::one(),
            input,
            (layer.inputs as isize, 1),
            &layer.weight,
            (1, layer.inputs as isize),
            R::one(),
            out,
            (layer.outputs as isize, 1),
        );
        if li == last {
            ws.pre_out.copy_from_slice(out);
            match dec.output {
                OutputActivation::Sigmoid => out.iter_mut().for_each(|v| *v = sigmoid(*v)),
            }
        } else {
            match dec.hidden {
                HiddenActivation::Relu => out.iter_mut().for_each(|v| *v = v.max(R::zero())),
            }
        }
    }
    Ok(ws.output())
}

/// Accumulate the gradient of `sum_i <upstream_i, f(batch_i)>` into `grads`,
/// using the activations cached by the preceding [`forward_cached`] call on
/// the same batch.
pub fn backward_cached<R: Real>(
    params: &FieldParams<R>,
    batch: &[NormalizedCoord],
    upstream: &[R],
    ws: &mut Workspace<R>,
    grads: &mut GradientBuffer<R>,
) -> Result<()> {
    let n = batch.len();
    if upstream.len() != n * 3 {
        return Err(NvfError::contract(format!(
            "upstream gradient has {} entries for a batch of {n}",
            upstream.len()
        )));
    }
    if ws.batch != n {
        return Err(NvfError::contract("workspace does not hold a forward pass for this batch"));
    }
    grads.check_matches(params)?;
    if n == 0 {
        return Ok(());
    }
    let dec = &params.decoder;
    let last = dec.layers.len() - 1;

    // d(loss)/d(pre-activation) of the output layer.
    {
        let dz = &mut ws.grad_a[..n * 3];
        for ((d, &u), &z) in dz.iter_mut().zip(upstream).zip(&ws.pre_out) {
            *d = match dec.output {
                OutputActivation::Sigmoid => u * sigmoid_grad(z),
            };
        }
    }

    let gdec = &mut grads.grads.decoder;
    for li in (0..=last).rev() {
        let layer = &dec.layers[li];
        let (i, o) = (layer.inputs, layer.outputs);
        let input: &[R] = if li == 0 { &ws.features } else { &ws.acts[li - 1] };
        let dz = &ws.grad_a[..n * o];
        let glayer = &mut gdec.layers[li];
        // dW (o x i) += dZ^T (o x n) * input (n x i)
        R::gemm(o, n, i, R::one(), dz, (1, o as isize), input, (i as isize, 1), R::one(), &mut glayer.weight, (i as isize, 1));
        for row in dz.chunks_exact(o) {
            for (b, &g) in glayer.bias.iter_mut().zip(row) {
                *b += g;
            }
        }
        // d input (n x i) = dZ (n x o) * W (o x i)
        let dx = &mut ws.grad_b[..n * i];
        R::gemm(n, o, i, R::one(), dz, (o as isize, 1), &layer.weight, (i as isize, 1), R::zero(), dx, (i as isize, 1));
        if li > 0 {
            match dec.hidden {
                HiddenActivation::Relu => {
                    for (d, &a) in dx.iter_mut().zip(&ws.acts[li - 1]) {
                        if a <= R::zero() {
                            *d = R::zero();
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut ws.grad_a, &mut ws.grad_b);
    }

    let f = params.config.feature_width();
    for (c, g) in batch.iter().zip(ws.grad_a[..n * f].chunks_exact(f)) {
        scatter_features(&mut grads.grads, c, g);
    }
    Ok(())
}

/// Evaluate the field at every coordinate, in input order.
pub fn forward<R: Real>(params: &FieldParams<R>, batch: &[NormalizedCoord]) -> Result<Vec<[R; 3]>> {
    let mut ws = Workspace::new();
    let out = forward_cached(params, batch, &mut ws)?;
    Ok(out.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Accumulate exact gradients of `sum_i <upstream_i, f(batch_i)>` into `out`.
pub fn backward<R: Real>(
    params: &FieldParams<R>,
    batch: &[NormalizedCoord],
    upstream: &[[R; 3]],
    out: &mut GradientBuffer<R>,
) -> Result<()> {
    if upstream.len() != batch.len() {
        return Err(NvfError::contract(format!(
            "{} upstream gradients for {} coordinates",
            upstream.len(),
            batch.len()
        )));
    }
    let mut ws = Workspace::new();
    forward_cached(params, batch, &mut ws)?;
    let flat: Vec<R> = upstream.iter().flatten().copied().collect();
    backward_cached(params, batch, &flat, &mut ws, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::config::FieldConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coords(n: usize, seed: u64) -> Vec<NormalizedCoord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| NormalizedCoord { x: rng.gen(), y: rng.gen(), t: rng.gen() })
            .collect()
    }

    fn randomized(cfg: &FieldConfig, seed: u64) -> FieldParams<f64> {
        let mut p = FieldParams::<f64>::init(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for (_, a) in p.arrays_mut() {
            for v in a.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        p
    }

    #[test]
    fn zero_decoder_outputs_half() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::zeros(&cfg).unwrap();
        let feats = vec![0.3; cfg.feature_width()];
        assert_eq!(decode(&p, &feats).unwrap(), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_layer_bias_decoder() {
        let mut cfg = FieldConfig::for_video(4, 8, 8);
        cfg.hidden_widths.clear();
        let mut p = FieldParams::<f64>::zeros(&cfg).unwrap();
        p.decoder.layers[0].bias = vec![10.0, -10.0, 0.0];
        let out = decode(&p, &vec![1.0; cfg.feature_width()]).unwrap();
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        assert!((out[0] - s(10.0)).abs() < 1e-15);
        assert!((out[1] - s(-10.0)).abs() < 1e-15);
        assert_eq!(out[2], 0.5);
    }

    #[test]
    fn decode_rejects_wrong_width() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::zeros(&cfg).unwrap();
        assert!(matches!(decode(&p, &[0.0; 3]), Err(NvfError::Contract(_))));
    }

    #[test]
    fn empty_batch_is_empty() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::init(&cfg, 1).unwrap();
        assert!(forward(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn batch_matches_scalar_loop() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = randomized(&cfg, 5);
        let mut cs = coords(33, 9);
        cs.push(cs[3]);
        let batch = forward(&p, &cs).unwrap();
        for (c, got) in cs.iter().zip(&batch) {
            let want = decode(&p, &sample_features(&p, c).unwrap()).unwrap();
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-12);
            }
        }
        assert_eq!(batch[3], batch[33]);
    }

    #[test]
    fn forward_rejects_out_of_range() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::init(&cfg, 1).unwrap();
        let bad = NormalizedCoord { x: 1.5, y: 0.0, t: 0.0 };
        assert!(forward(&p, &[bad]).is_err());
    }

    #[test]
    fn zero_upstream_leaves_buffer_unchanged() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = randomized(&cfg, 2);
        let cs = coords(10, 1);
        let mut g = GradientBuffer::for_params(&p);
        backward(&p, &cs, &vec![[0.0; 3]; cs.len()], &mut g).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn backward_shape_mismatch() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = randomized(&cfg, 2);
        let cs = coords(4, 1);
        let mut g = GradientBuffer::for_params(&p);
        assert!(backward(&p, &cs, &[[1.0; 3]; 3], &mut g).is_err());
    }

    #[test]
    fn disjoint_cells_have_disjoint_lattice_support() {
        let cfg = FieldConfig::for_video(8, 16, 16);
        let p = randomized(&cfg, 4);
        let a = NormalizedCoord { x: 0.05, y: 0.05, t: 0.05 };
        let b = NormalizedCoord { x: 0.95, y: 0.95, t: 0.95 };
        let mut ga = GradientBuffer::for_params(&p);
        let mut gb = GradientBuffer::for_params(&p);
        backward(&p, &[a], &[[1.0, -1.0, 0.5]], &mut ga).unwrap();
        backward(&p, &[b], &[[1.0, -1.0, 0.5]], &mut gb).unwrap();
        for (la, lb) in ga.grads.lattices.levels.iter().zip(&gb.grads.lattices.levels) {
            assert!(la.iter().any(|v| *v != 0.0));
            assert!(la.iter().zip(lb).all(|(x, y)| *x == 0.0 || *y == 0.0));
        }
    }

    #[test]
    fn workspace_size_independent_of_video_length() {
        let short = FieldParams::<f32>::init(&FieldConfig::for_video(8, 32, 32), 0).unwrap();
        let long = FieldParams::<f32>::init(&FieldConfig::for_video(128, 32, 32), 0).unwrap();
        let cs = coords(256, 3);
        let mut wa = Workspace::new();
        let mut wb = Workspace::new();
        forward_cached(&short, &cs, &mut wa).unwrap();
        forward_cached(&long, &cs, &mut wb).unwrap();
        assert_eq!(wa.peak_bytes(), wb.peak_bytes());
    }
}
