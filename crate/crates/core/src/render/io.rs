//! Frame-directory (`frame-%05d.png`) and uncompressed 4:4:4 Y4M video files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use crate::error::{NvfError, Result};
use crate::guidance::AuxMask;
use crate::video::{Frame, VideoTensor};

pub fn frame_file_name(index: usize) -> String {
    format!("frame-{index:05}.png")
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

/// Read an 8-bit RGB PNG into a frame.
pub fn read_png(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| NvfError::io(path, e))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Frame::from_rgb8(h as usize, w as usize, rgb.as_raw())
}

/// Write a frame as an 8-bit RGB PNG.
pub fn write_png(frame: &Frame, path: &Path) -> Result<()> {
    let img = RgbImage::from_raw(frame.width as u32, frame.height as u32, frame.to_rgb8())
        .ok_or_else(|| NvfError::contract("frame buffer does not match its dimensions"))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| NvfError::io(path, e))
}

/// Load a frame directory or a `.y4m` file.
pub fn load_video(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    if is_y4m(path) {
        return load_y4m(path);
    }
    if !path.is_dir() {
        return Err(NvfError::io(path, "not a frame directory or .y4m file"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| NvfError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame-") && n.ends_with(".png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(NvfError::io(path, "no frame-NNNNN.png files found"));
    }
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let frame = read_png(f)?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if !first.same_dims(&frame) {
                return Err(NvfError::io(
                    f,
                    format!(
                        "frame is {}x{}, expected {}x{}",
                        frame.width, frame.height, first.width, first.height
                    ),
                ));
            }
        }
        frames.push(frame);
    }
    VideoTensor::from_frames(frames, 24.0).map_err(|e| NvfError::io(path, e))
}

/// Save as a frame directory, or as Y4M when the path ends in `.y4m`.
pub fn save_video(video: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_y4m(path) {
        return save_y4m(video, path);
    }
    fs::create_dir_all(path).map_err(|e| NvfError::io(path, e))?;
    for (k, frame) in video.frames_iter().enumerate() {
        write_png(&frame, &path.join(frame_file_name(k)))?;
    }
    Ok(())
}

/// Export a binary mask as an 8-bit grayscale PNG with values 0 and 255.
pub fn save_mask_png(mask: &AuxMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(
        mask.width as u32,
        mask.height as u32,
        mask.data.iter().map(|&m| m * 255).collect(),
    )
    .ok_or_else(|| NvfError::contract("mask buffer does not match its dimensions"))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| NvfError::io(path, e))
}

// BT.601 full-range conversion.

fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn rgb_to_ycbcr(rgb: [u8; 3]) -> [u8; 3] {
    let [r, g, b] = rgb.map(|v| v as f32);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    [to_u8(y), to_u8(cb), to_u8(cr)]
}

pub fn ycbcr_to_rgb(ycc: [u8; 3]) -> [u8; 3] {
    let y = ycc[0] as f32;
    let cb = ycc[1] as f32 - 128.0;
    let cr = ycc[2] as f32 - 128.0;
    [
        to_u8(y + 1.402 * cr),
        to_u8(y - 0.344_136 * cb - 0.714_136 * cr),
        to_u8(y + 1.772 * cb),
    ]
}

fn save_y4m(video: &VideoTensor, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| NvfError::io(path, e))?;
    let fps = (video.fps.max(1.0).round()) as usize;
    let mut enc = y4m::encode(video.width, video.height, y4m::Ratio::new(fps, 1))
        .with_colorspace(y4m::Colorspace::C444)
        .write_header(BufWriter::new(file))
        .map_err(|e| NvfError::io(path, format!("{e:?}")))?;
    let n = video.width * video.height;
    let (mut yp, mut up, mut vp) = (vec![0u8; n], vec![0u8; n], vec![0u8; n]);
    for frame in video.frames_iter() {
        for (i, px) in frame.to_rgb8().chunks_exact(3).enumerate() {
            let [y, cb, cr] = rgb_to_ycbcr([px[0], px[1], px[2]]);
            yp[i] = y;
            up[i] = cb;
            vp[i] = cr;
        }
        enc.write_frame(&y4m::Frame::new([&yp, &up, &vp], None))
            .map_err(|e| NvfError::io(path, format!("{e:?}")))?;
    }
    Ok(())
}

fn load_y4m(path: &Path) -> Result<VideoTensor> {
    let file = File::open(path).map_err(|e| NvfError::io(path, e))?;
    let mut dec = y4m::decode(BufReader::new(file)).map_err(|e| NvfError::io(path, format!("{e:?}")))?;
    let cs = dec.get_colorspace();
    if !matches!(cs, y4m::Colorspace::C444) {
        return Err(NvfError::io(
            path,
            format!("unsupported Y4M colorspace {cs:?}: only 8-bit 4:4:4 is supported"),
        ));
    }
    let (w, h) = (dec.get_width(), dec.get_height());
    let rate = dec.get_framerate();
    let fps = if rate.den == 0 { 24.0 } else { rate.num as f32 / rate.den as f32 };
    let mut frames = Vec::new();
    loop {
        match dec.read_frame() {
            Ok(f) => {
                let (yp, up, vp) = (f.get_y_plane(), f.get_u_plane(), f.get_v_plane());
                if yp.len() != w * h || up.len() != w * h || vp.len() != w * h {
                    return Err(NvfError::io(path, "truncated Y4M frame"));
                }
                let mut bytes = Vec::with_capacity(w * h * 3);
                for i in 0..w * h {
                    bytes.extend_from_slice(&ycbcr_to_rgb([yp[i], up[i], vp[i]]));
                }
                frames.push(Frame::from_rgb8(h, w, &bytes)?);
            }
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(NvfError::io(path, format!("{e:?}"))),
        }
    }
    if frames.is_empty() {
        return Err(NvfError::io(path, "Y4M file contains no frames"));
    }
    VideoTensor::from_frames(frames, fps).map_err(|e| NvfError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_video(frames: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * h * w * 3).map(|_| rng.gen::<u8>() as f32 / 255.0).collect();
        VideoTensor::new(frames, h, w, 24.0, data).unwrap()
    }

    #[test]
    fn png_directory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_video(3, 7, 9, 1);
        save_video(&v, dir.path()).unwrap();
        assert!(dir.path().join("frame-00002.png").exists());
        let back = load_video(dir.path()).unwrap();
        assert_eq!(back.data, v.data);
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&Frame::filled(4, 4, [0.5; 3]), &dir.path().join(frame_file_name(0))).unwrap();
        write_png(&Frame::filled(5, 4, [0.5; 3]), &dir.path().join(frame_file_name(1))).unwrap();
        assert!(matches!(load_video(dir.path()), Err(NvfError::Io { .. })));
    }

    #[test]
    fn y4m_round_trip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.y4m");
        let v = random_video(2, 6, 8, 2);
        save_video(&v, &path).unwrap();
        let back = load_video(&path).unwrap();
        assert_eq!(back.shape(), v.shape());
        let worst = back.data.iter().zip(&v.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst <= 4.0 / 255.0, "worst error {worst}");
    }

    #[test]
    fn y4m_420_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.y4m");
        {
            let file = File::create(&path).unwrap();
            let mut enc = y4m::encode(4, 4, y4m::Ratio::new(24, 1))
                .with_colorspace(y4m::Colorspace::C420jpeg)
                .write_header(file)
                .unwrap();
            let (y, u, v) = (vec![0u8; 16], vec![128u8; 4], vec![128u8; 4]);
            enc.write_frame(&y4m::Frame::new([&y, &u, &v], None)).unwrap();
        }
        match load_video(&path) {
            Err(NvfError::Io { reason, .. }) => assert!(reason.contains("unsupported")),
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn gray_levels_survive_ycbcr() {
        for v in [0u8, 17, 128, 200, 255] {
            assert_eq!(ycbcr_to_rgb(rgb_to_ycbcr([v, v, v])), [v, v, v]);
        }
    }
}
