use crate::error::{NvfError, Result};
use crate::video::{Frame, VideoTensor};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Mean squared error of two equally sized value arrays.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NvfError::contract(format!("shape mismatch: {} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(NvfError::contract("mse of empty arrays"));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| ((*x - *y) as f64).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(1 / MSE)` on the unit scale, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr_values(a: &[f32], b: &[f32]) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_frames(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(NvfError::contract(format!(
            "frame shapes differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    psnr_values(&a.data, &b.data)
}

pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(NvfError::contract(format!("video shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    psnr_values(&a.data, &b.data)
}

/// PSNR of every frame pair.
pub fn psnr_per_frame(a: &VideoTensor, b: &VideoTensor) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(NvfError::contract("video shapes differ"));
    }
    (0..a.frames).map(|t| psnr_values(a.frame_slice(t), b.frame_slice(t))).collect()
}

/// Mean over consecutive frame pairs of the mean absolute difference.
pub fn temporal_consistency(v: &VideoTensor) -> Result<f64> {
    if v.frames < 2 {
        return Err(NvfError::contract("temporal consistency needs at least two frames"));
    }
    let total: f64 = (1..v.frames)
        .map(|t| {
            let (a, b) = (v.frame_slice(t - 1), v.frame_slice(t));
            a.iter().zip(b).map(|(x, y)| (*x - *y).abs() as f64).sum::<f64>() / a.len() as f64
        })
        .sum();
    Ok(total / (v.frames - 1) as f64)
}
