//! Binary parameter files.
//!
//! Layout: the magic `NVF1`, then a header of little-endian `i32`s
//!
//! ```text
//! source_frames source_height source_width      (0 0 0 when unknown)
//! res_x res_y res_t plane_channels
//! levels lattice_channels { t y x } * levels
//! layers { inputs outputs } * layers
//! hidden_activation output_activation
//! ```
//!
//! followed by every array as little-endian `f32` in declaration order:
//! planes `xy`, `xt`, `yt`, lattice levels, then weight and bias of each
//! decoder layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::{FieldConfig, HiddenActivation, LatticeShape, OutputActivation};
use super::params::FieldParams;
use crate::error::{NvfError, Result};
use crate::video::VideoShape;

pub const MAGIC: &[u8; 4] = b"NVF1";

fn io_err(e: std::io::Error) -> NvfError {
    NvfError::Format(format!("parameter stream: {e}"))
}

fn put(w: &mut impl Write, v: usize) -> Result<()> {
    let v = i32::try_from(v).map_err(|_| NvfError::Format(format!("header value {v} exceeds i32")))?;
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn take(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| NvfError::Format(format!("truncated header while reading {what}")))?;
    let v = i32::from_le_bytes(b);
    usize::try_from(v).map_err(|_| NvfError::Format(format!("negative header value for {what}: {v}")))
}

/// Serialize parameters to any writer.
pub fn write_params(w: &mut impl Write, params: &FieldParams<f32>) -> Result<()> {
    let cfg = &params.config;
    w.write_all(MAGIC).map_err(io_err)?;
    let src = params.source.unwrap_or(VideoShape { frames: 0, height: 0, width: 0 });
    for v in [src.frames, src.height, src.width, cfg.res_x, cfg.res_y, cfg.res_t, cfg.plane_channels] {
        put(w, v)?;
    }
    put(w, cfg.lattice_levels.len())?;
    put(w, cfg.lattice_channels)?;
    for l in &cfg.lattice_levels {
        put(w, l.t)?;
        put(w, l.y)?;
        put(w, l.x)?;
    }
    let dims = cfg.layer_dims();
    put(w, dims.len())?;
    for (i, o) in dims {
        put(w, i)?;
        put(w, o)?;
    }
    w.write_all(&cfg.hidden_activation.tag().to_le_bytes()).map_err(io_err)?;
    w.write_all(&cfg.output_activation.tag().to_le_bytes()).map_err(io_err)?;
    for (_, a) in params.arrays() {
        for v in a {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parse parameters from any reader, validating the header.
pub fn read_params(r: &mut impl Read) -> Result<FieldParams<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NvfError::Format("missing NVF1 magic".into()))?;
    if &magic != MAGIC {
        return Err(NvfError::Format(format!("bad magic {magic:?}, expected \"NVF1\"")));
    }
    let frames = take(r, "source_frames")?;
    let height = take(r, "source_height")?;
    let width = take(r, "source_width")?;
    let res_x = take(r, "res_x")?;
    let res_y = take(r, "res_y")?;
    let res_t = take(r, "res_t")?;
    let plane_channels = take(r, "plane_channels")?;
    let levels = take(r, "levels")?;
    let lattice_channels = take(r, "lattice_channels")?;
    if levels > 64 {
        return Err(NvfError::Format(format!("implausible lattice level count {levels}")));
    }
    let mut lattice_levels = Vec::with_capacity(levels);
    for _ in 0..levels {
        let t = take(r, "lattice t")?;
        let y = take(r, "lattice y")?;
        let x = take(r, "lattice x")?;
        lattice_levels.push(LatticeShape { t, y, x });
    }
    let layers = take(r, "layers")?;
    if layers == 0 || layers > 64 {
        return Err(NvfError::Format(format!("implausible decoder layer count {layers}")));
    }
    let mut dims = Vec::with_capacity(layers);
    for _ in 0..layers {
        dims.push((take(r, "layer inputs")?, take(r, "layer outputs")?));
    }
    let hidden = HiddenActivation::from_tag(take(r, "hidden activation")? as i32)
        .ok_or_else(|| NvfError::Format("unknown hidden activation tag".into()))?;
    let output = OutputActivation::from_tag(take(r, "output activation")? as i32)
        .ok_or_else(|| NvfError::Format("unknown output activation tag".into()))?;
    let cfg = FieldConfig {
        res_x,
        res_y,
        res_t,
        plane_channels,
        lattice_levels,
        lattice_channels,
        hidden_widths: dims[..layers - 1].iter().map(|d| d.1).collect(),
        hidden_activation: hidden,
        output_activation: output,
    };
    if cfg.layer_dims() != dims {
        return Err(NvfError::Format("decoder layout inconsistent with feature width".into()));
    }
    let mut params = FieldParams::<f32>::zeros(&cfg)
        .map_err(|e| NvfError::Format(format!("invalid header: {e}")))?;
    if frames > 0 {
        params.source = Some(VideoShape { frames, height, width });
    }
    let mut b = [0u8; 4];
    for (_, a) in params.arrays_mut() {
        for v in a.iter_mut() {
            r.read_exact(&mut b)
                .map_err(|_| NvfError::Format("truncated parameter data".into()))?;
            *v = f32::from_le_bytes(b);
        }
    }
    if r.read(&mut b).map_err(io_err)? != 0 {
        return Err(NvfError::Format("trailing bytes after parameter data".into()));
    }
    Ok(params)
}

pub fn save_params(params: &FieldParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NvfError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_params(&mut w, params)?;
    w.flush().map_err(|e| NvfError::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<FieldParams<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NvfError::io(path, e))?;
    read_params(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), frames in 1usize..20, side in 4usize..24) {
            let cfg = FieldConfig::for_video(frames, side, side + 2);
            let mut p = FieldParams::<f32>::init(&cfg, seed).unwrap();
            p.source = Some(VideoShape { frames, height: side, width: side + 2 });
            let mut buf = Vec::new();
            write_params(&mut buf, &p).unwrap();
            let q = read_params(&mut buf.as_slice()).unwrap();
            let bits = |f: &FieldParams<f32>| f.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&p), bits(&q));
            prop_assert_eq!(p.config, q.config);
            prop_assert_eq!(p.source, q.source);
        }
    }

    #[test]
    fn starts_with_magic_and_has_exact_length() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::init(&cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"NVF1");
        let header_ints = 7 + 2 + 3 * cfg.lattice_levels.len() + 1 + 2 * cfg.layer_dims().len() + 2;
        assert_eq!(buf.len(), 4 + 4 * header_ints + 4 * p.parameter_count());
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let cfg = FieldConfig::for_video(4, 8, 8);
        let p = FieldParams::<f32>::init(&cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_params(&mut buf.as_slice()), Err(NvfError::Format(_))));
        buf[0] = b'N';
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_params(&mut buf.as_slice()), Err(NvfError::Format(_))));
    }
}
