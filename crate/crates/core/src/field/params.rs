use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FieldConfig, HiddenActivation, LatticeShape, OutputActivation};
use crate::error::{NvfError, Result};
use crate::real::Real;
use crate::video::VideoShape;

const FEATURE_INIT_SCALE: f64 = 1e-4;

/// Three axis-aligned feature planes. Storage is row-major `[row][col][channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriPlane<R> {
    pub res_x: usize,
    pub res_y: usize,
    pub res_t: usize,
    pub channels: usize,
    /// `res_y x res_x x C`
    pub xy: Vec<R>,
    /// `res_t x res_x x C`
    pub xt: Vec<R>,
    /// `res_t x res_y x C`
    pub yt: Vec<R>,
}

/// Coarse dense lattices, each `t x y x x x C_g` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSet<R> {
    pub shapes: Vec<LatticeShape>,
    pub channels: usize,
    pub levels: Vec<Vec<R>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<R> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weight: Vec<R>,
    pub bias: Vec<R>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<R> {
    pub layers: Vec<DenseLayer<R>>,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
}

impl<R: Real> Decoder<R> {
    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0)
    }
}

/// All trainable state of a video field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams<R = f32> {
    pub config: FieldConfig,
    /// Shape of the video this field was fitted to, if known.
    pub source: Option<VideoShape>,
    pub tri_plane: TriPlane<R>,
    pub lattices: LatticeSet<R>,
    pub decoder: Decoder<R>,
}

/// Which optimizer group a parameter array belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    TriPlane,
    Lattices,
    Decoder,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::TriPlane => "tri_plane",
            ParamGroup::Lattices => "lattices",
            ParamGroup::Decoder => "decoder",
        }
    }

    /// Feature arrays are explicit parameters, decoder weights implicit.
    pub fn is_explicit(self) -> bool {
        !matches!(self, ParamGroup::Decoder)
    }
}

impl<R: Real> FieldParams<R> {
    /// All-zero parameters with the layout described by `config`.
    pub fn zeros(config: &FieldConfig) -> Result<Self> {
        config.validate()?;
        let c = config.plane_channels;
        let tri_plane = TriPlane {
            res_x: config.res_x,
            res_y: config.res_y,
            res_t: config.res_t,
            channels: c,
            xy: vec![R::zero(); config.res_y * config.res_x * c],
            xt: vec![R::zero(); config.res_t * config.res_x * c],
            yt: vec![R::zero(); config.res_t * config.res_y * c],
        };
        let lattices = LatticeSet {
            shapes: config.lattice_levels.clone(),
            channels: config.lattice_channels,
            levels: config
                .lattice_levels
                .iter()
                .map(|s| vec![R::zero(); s.vertices() * config.lattice_channels])
                .collect(),
        };
        let decoder = Decoder {
            layers: config
                .layer_dims()
                .into_iter()
                .map(|(inputs, outputs)| DenseLayer {
                    inputs,
                    outputs,
                    weight: vec![R::zero(); inputs * outputs],
                    bias: vec![R::zero(); outputs],
                })
                .collect(),
            hidden: config.hidden_activation,
            output: config.output_activation,
        };
        Ok(FieldParams {
            config: config.clone(),
            source: None,
            tri_plane,
            lattices,
            decoder,
        })
    }

    /// Seeded initialization: feature entries uniform in `[-1e-4, 1e-4]`,
    /// decoder weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    ///
    /// Values are drawn in 64-bit and rounded, so fields of either precision
    /// built from the same seed agree up to rounding.
    pub fn init(config: &FieldConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |buf: &mut [R], scale: f64| {
            for v in buf.iter_mut() {
                *v = R::lit(rng.gen_range(-scale..=scale));
            }
        };
        fill(&mut params.tri_plane.xy, FEATURE_INIT_SCALE);
        fill(&mut params.tri_plane.xt, FEATURE_INIT_SCALE);
        fill(&mut params.tri_plane.yt, FEATURE_INIT_SCALE);
        for level in &mut params.lattices.levels {
            fill(level, FEATURE_INIT_SCALE);
        }
        for layer in &mut params.decoder.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            fill(&mut layer.weight, bound);
        }
        Ok(params)
    }

    /// Every trainable array in declaration order with its optimizer group.
    pub fn arrays(&self) -> Vec<(ParamGroup, &[R])> {
        let mut out: Vec<(ParamGroup, &[R])> = vec![
            (ParamGroup::TriPlane, &self.tri_plane.xy),
            (ParamGroup::TriPlane, &self.tri_plane.xt),
            (ParamGroup::TriPlane, &self.tri_plane.yt),
        ];
        for level in &self.lattices.levels {
            out.push((ParamGroup::Lattices, level));
        }
        for layer in &self.decoder.layers {
            out.push((ParamGroup::Decoder, &layer.weight));
            out.push((ParamGroup::Decoder, &layer.bias));
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(ParamGroup, &mut [R])> {
        let mut out: Vec<(ParamGroup, &mut [R])> = vec![
            (ParamGroup::TriPlane, &mut self.tri_plane.xy),
            (ParamGroup::TriPlane, &mut self.tri_plane.xt),
            (ParamGroup::TriPlane, &mut self.tri_plane.yt),
        ];
        for level in &mut self.lattices.levels {
            out.push((ParamGroup::Lattices, level));
        }
        for layer in &mut self.decoder.layers {
            out.push((ParamGroup::Decoder, &mut layer.weight));
            out.push((ParamGroup::Decoder, &mut layer.bias));
        }
        out
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    /// Bytes needed to hold the parameters at 32-bit precision.
    pub fn parameter_bytes(&self) -> usize {
        self.parameter_count() * std::mem::size_of::<f32>()
    }

    /// Flat copy of every parameter, in declaration order.
    pub fn flatten(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (_, a) in self.arrays() {
            out.extend_from_slice(a);
        }
        out
    }

    /// Read parameter `index` of the flattened view.
    pub fn get_flat(&self, mut index: usize) -> R {
        for (_, a) in self.arrays() {
            if index < a.len() {
                return a[index];
            }
            index -= a.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn set_flat(&mut self, mut index: usize, value: R) {
        for (_, a) in self.arrays_mut() {
            if index < a.len() {
                a[index] = value;
                return;
            }
            index -= a.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn fill(&mut self, value: R) {
        for (_, a) in self.arrays_mut() {
            a.fill(value);
        }
    }

    /// Same parameters at another precision.
    pub fn cast<S: Real>(&self) -> FieldParams<S> {
        let mut out = FieldParams::<S>::zeros(&self.config).expect("layout already validated");
        out.source = self.source;
        for ((_, dst), (_, src)) in out.arrays_mut().into_iter().zip(self.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = S::from_f64(s.to_f64().unwrap()).unwrap();
            }
        }
        out
    }

    pub fn same_layout<S>(&self, other: &FieldParams<S>) -> bool {
        self.config == other.config
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }
}

/// One accumulator per trainable scalar, shaped like [`FieldParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer<R = f32> {
    pub grads: FieldParams<R>,
}

impl<R: Real> GradientBuffer<R> {
    pub fn for_params(params: &FieldParams<R>) -> Self {
        GradientBuffer {
            grads: FieldParams::zeros(&params.config).expect("layout already validated"),
        }
    }

    pub fn zero(&mut self) {
        self.grads.fill(R::zero());
    }

    pub fn is_zero(&self) -> bool {
        self.grads.arrays().iter().all(|(_, a)| a.iter().all(|v| *v == R::zero()))
    }

    pub fn check_matches(&self, params: &FieldParams<R>) -> Result<()> {
        if !self.grads.same_layout(params) {
            return Err(NvfError::contract("gradient buffer layout does not match parameters"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = FieldConfig::for_video(16, 64, 64);
        let a = FieldParams::<f32>::init(&cfg, 7).unwrap();
        let b = FieldParams::<f32>::init(&cfg, 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn different_seeds_differ_on_planes() {
        let cfg = FieldConfig::for_video(16, 64, 64);
        let a = FieldParams::<f32>::init(&cfg, 7).unwrap();
        let b = FieldParams::<f32>::init(&cfg, 8).unwrap();
        assert!(a.tri_plane.xy.iter().zip(&b.tri_plane.xy).any(|(x, y)| x != y));
    }

    #[test]
    fn init_ranges() {
        let cfg = FieldConfig::for_video(4, 16, 16);
        let p = FieldParams::<f64>::init(&cfg, 1).unwrap();
        assert!(p.tri_plane.xy.iter().all(|v| v.abs() <= 1e-4));
        for level in &p.lattices.levels {
            assert!(level.iter().all(|v| v.abs() <= 1e-4));
        }
        for layer in &p.decoder.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn invalid_config_is_rejected_by_init() {
        let mut cfg = FieldConfig::for_video(16, 64, 64);
        cfg.res_x = 1;
        assert!(matches!(FieldParams::<f32>::init(&cfg, 7), Err(NvfError::Config { .. })));
    }

    #[test]
    fn parameter_count_matches_independent_recount() {
        let cfg = FieldConfig::for_video(16, 64, 64);
        let p = FieldParams::<f32>::init(&cfg, 0).unwrap();
        let recount = p.tri_plane.xy.len()
            + p.tri_plane.xt.len()
            + p.tri_plane.yt.len()
            + p.lattices.levels.iter().map(Vec::len).sum::<usize>()
            + p.decoder.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>();
        assert_eq!(p.parameter_count(), recount);
        assert_eq!(cfg.parameter_count(), recount);
    }

    #[test]
    fn flat_accessors_round_trip() {
        let cfg = FieldConfig::for_video(2, 8, 8);
        let mut p = FieldParams::<f64>::init(&cfg, 3).unwrap();
        let n = p.parameter_count();
        p.set_flat(n - 1, 42.0);
        assert_eq!(p.get_flat(n - 1), 42.0);
        assert_eq!(*p.decoder.layers.last().unwrap().bias.last().unwrap(), 42.0);
    }
}
