//! Out-of-process editor speaking the exchange-directory protocol.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::editors::{EditRequest, FrameEditor};
use crate::error::{NvfError, Result};
use crate::render::io::{read_png, write_png};
use crate::video::{quantize, Frame};

const POLL_INTERVAL: Duration = Duration::from_millis(5);

/// Request manifest written as `req-<n>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRequest {
    pub iteration: usize,
    pub frame_index: usize,
    pub instruction: String,
    pub strength: f32,
    pub rendered: String,
    pub original: String,
    pub edited: String,
}

impl ExchangeRequest {
    pub fn file_name(n: u64) -> String {
        format!("req-{n}.json")
    }
}

pub fn done_marker(n: u64) -> String {
    format!("done-{n}")
}

pub fn error_marker(n: u64) -> String {
    format!("error-{n}.json")
}

/// Editor that delegates each call to a responder watching `exchange_dir`.
#[derive(Debug)]
pub struct ExternalEditor {
    exchange_dir: PathBuf,
    timeout: Duration,
    counter: u64,
    output_dims: Option<(usize, usize)>,
}

impl ExternalEditor {
    pub fn new(exchange_dir: impl Into<PathBuf>, timeout: Duration) -> Result<Self> {
        let exchange_dir = exchange_dir.into();
        if !exchange_dir.is_dir() {
            return Err(NvfError::io(&exchange_dir, "exchange directory does not exist"));
        }
        if timeout.is_zero() {
            return Err(NvfError::config("edit.timeout", "must be positive"));
        }
        Ok(ExternalEditor { exchange_dir, timeout, counter: 0, output_dims: None })
    }

    pub fn exchange_dir(&self) -> &Path {
        &self.exchange_dir
    }

    /// Number of requests issued so far.
    pub fn requests(&self) -> u64 {
        self.counter
    }

    fn call(&mut self, request: &EditRequest<'_>) -> std::result::Result<Frame, String> {
        let n = self.counter;
        self.counter += 1;
        let dir = &self.exchange_dir;
        let manifest = ExchangeRequest {
            iteration: request.iteration,
            frame_index: request.frame_index,
            instruction: request.instruction.to_string(),
            strength: request.strength,
            rendered: format!("rendered-{n}.png"),
            original: format!("original-{n}.png"),
            edited: format!("edited-{n}.png"),
        };
        write_png(request.rendered, &dir.join(&manifest.rendered)).map_err(|e| e.to_string())?;
        write_png(request.original, &dir.join(&manifest.original)).map_err(|e| e.to_string())?;
        let json = serde_json::to_vec(&manifest).map_err(|e| e.to_string())?;
        let tmp = dir.join(format!(".req-{n}.json.tmp"));
        fs::write(&tmp, json).map_err(|e| format!("writing {}: {e}", tmp.display()))?;
        fs::rename(&tmp, dir.join(ExchangeRequest::file_name(n))).map_err(|e| e.to_string())?;

        let done = dir.join(done_marker(n));
        let failed = dir.join(error_marker(n));
        let deadline = Instant::now() + self.timeout;
        loop {
            if done.exists() {
                break;
            }
            if failed.exists() {
                let body = fs::read_to_string(&failed).unwrap_or_default();
                return Err(format!("responder reported failure for request {n}: {}", body.trim()));
            }
            if Instant::now() >= deadline {
                return Err(format!("timed out after {:.3}s waiting for {}", self.timeout.as_secs_f64(), done.display()));
            }
            std::thread::sleep(POLL_INTERVAL);
        }

        let edited = read_png(&dir.join(&manifest.edited)).map_err(|e| e.to_string())?;
        let dims = (edited.height, edited.width);
        match self.output_dims {
            Some(expected) if expected != dims => {
                return Err(format!(
                    "edited frame {n} is {}x{}, earlier responses were {}x{}",
                    dims.0, dims.1, expected.0, expected.1
                ))
            }
            _ => self.output_dims = Some(dims),
        }
        Ok(restore_precision(&edited, request.rendered))
    }
}

/// Recover full precision for channels the responder left untouched.
///
/// PNG transport quantizes to 8 bits; where the returned code equals the
/// quantized rendered value the rendered float is used instead, so a responder
/// that echoes its input is indistinguishable from the identity editor.
pub fn restore_precision(edited: &Frame, rendered: &Frame) -> Frame {
    if !edited.same_dims(rendered) {
        return edited.clone();
    }
    let mut out = edited.clone();
    for (o, &r) in out.data.iter_mut().zip(&rendered.data) {
        if quantize(*o) == quantize(r) {
            *o = r;
        }
    }
    out
}

impl FrameEditor for ExternalEditor {
    fn name(&self) -> &str {
        "external"
    }

    fn edit(&mut self, request: &EditRequest<'_>) -> std::result::Result<Frame, String> {
        self.call(request)
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({
            "exchange_dir": self.exchange_dir.display().to_string(),
            "timeout_seconds": self.timeout.as_secs_f64(),
        })
    }
}

/// In-process responder that copies each rendered image to its edited slot.
///
/// Serves requests until `stop` is set; used for protocol testing.
pub fn serve_echo(dir: &Path, stop: &std::sync::atomic::AtomicBool) -> Result<u64> {
    use std::sync::atomic::Ordering;
    let mut n = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let req_path = dir.join(ExchangeRequest::file_name(n));
        if !req_path.exists() {
            std::thread::sleep(Duration::from_millis(1));
            continue;
        }
        let text = fs::read_to_string(&req_path).map_err(|e| NvfError::io(&req_path, e))?;
        let req: ExchangeRequest =
            serde_json::from_str(&text).map_err(|e| NvfError::Format(format!("{}: {e}", req_path.display())))?;
        let src = dir.join(&req.rendered);
        fs::copy(&src, dir.join(&req.edited)).map_err(|e| NvfError::io(&src, e))?;
        let done = dir.join(done_marker(n));
        fs::write(&done, b"").map_err(|e| NvfError::io(&done, e))?;
        n += 1;
    }
    Ok(n)
}
