//! Flat `key = value` run configuration with a fixed, typed schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::editing::{
    builtin_editor, BuiltinEditor, EditConfig, EditSchedule, ExternalEditor, FrameEditor, FramePolicy, PixelRect,
    ScheduleShape,
};
use crate::error::{NvfError, Result};
use crate::field::{AdamConfig, FieldConfig, LatticeShape};
use crate::fitting::FitConfig;

/// Value type of a configuration key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyType {
    Int,
    Float,
    Text,
    /// Comma-separated non-negative integers.
    IntList,
}

impl KeyType {
    pub fn name(self) -> &'static str {
        match self {
            KeyType::Int => "integer",
            KeyType::Float => "number",
            KeyType::Text => "string",
            KeyType::IntList => "integer-list",
        }
    }
}

/// `(key, type, description)` for every accepted key.
pub const SCHEMA: &[(&str, KeyType, &str)] = &[
    ("seed", KeyType::Int, "seed for initialization, sampling and frame picking"),
    ("field.res_x", KeyType::Int, "plane resolution along x"),
    ("field.res_y", KeyType::Int, "plane resolution along y"),
    ("field.res_t", KeyType::Int, "plane resolution along t"),
    ("field.plane_channels", KeyType::Int, "channels per feature plane"),
    ("field.lattice_channels", KeyType::Int, "channels per lattice level"),
    ("field.lattice_levels", KeyType::IntList, "t,y,x triples of each lattice level, coarsest first"),
    ("field.hidden_widths", KeyType::IntList, "hidden decoder layer widths"),
    ("fit.batch_size", KeyType::Int, "pixels per fitting iteration"),
    ("fit.iterations", KeyType::Int, "fitting iteration budget"),
    ("fit.log_interval", KeyType::Int, "iterations between full-video PSNR evaluations"),
    ("fit.target_psnr", KeyType::Float, "stop fitting once this PSNR (dB) is reached"),
    ("adam.lr_explicit", KeyType::Float, "fitting learning rate of planes and lattices"),
    ("adam.lr_implicit", KeyType::Float, "fitting learning rate of the decoder"),
    ("adam.beta1", KeyType::Float, "first moment decay"),
    ("adam.beta2", KeyType::Float, "second moment decay"),
    ("adam.eps", KeyType::Float, "denominator epsilon"),
    ("edit.iterations", KeyType::Int, "edit iteration budget (default 10 x frames)"),
    ("edit.s_min", KeyType::Float, "initial edit strength"),
    ("edit.s_max", KeyType::Float, "final edit strength"),
    ("edit.schedule", KeyType::Text, "linear | cosine-ramp"),
    ("edit.frame_policy", KeyType::Text, "cyclic | random"),
    ("edit.instruction", KeyType::Text, "instruction passed to the editor"),
    ("edit.t_lower", KeyType::Float, "lower bound of the editor noise window"),
    ("edit.t_upper", KeyType::Float, "upper bound of the editor noise window"),
    ("edit.tau", KeyType::Float, "mask threshold"),
    ("edit.max_failure_fraction", KeyType::Float, "fraction of editor failures tolerated"),
    ("edit.lr_explicit", KeyType::Float, "edit-stage learning rate of planes and lattices"),
    ("edit.lr_implicit", KeyType::Float, "edit-stage learning rate of the decoder"),
    ("edit.warmup_iterations", KeyType::Int, "edit iterations of linear learning-rate warmup (default 2 x frames)"),
    ("edit.final_lr_fraction", KeyType::Float, "learning-rate fraction reached at the last edit iteration"),
    ("edit.robust_scale", KeyType::Float, "scale of the robust per-update weight relative to the recent median loss (0 disables)"),
    ("edit.robust_window", KeyType::Int, "number of recent losses whose median sets the robust weight scale"),
    ("edit.average_iterations", KeyType::Int, "the result averages the parameters over this many final edit iterations"),
    ("edit.eval_interval", KeyType::Int, "iterations between temporal-consistency evaluations"),
    ("editor.kind", KeyType::Text, "identity | hue-shift | sepia | posterize | region-recolor | upscale2x | external"),
    ("editor.hue_degrees", KeyType::Float, "hue rotation (hue-shift) or target hue (region-recolor)"),
    ("editor.levels", KeyType::Int, "posterize levels"),
    ("editor.rect", KeyType::IntList, "x0,y0,x1,y1 half-open pixel rectangle (region-recolor)"),
    ("editor.exchange_dir", KeyType::Text, "exchange directory of the external editor"),
    ("editor.timeout", KeyType::Float, "external editor timeout in seconds"),
];

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Int(u64),
    Float(f64),
    Text(String),
    IntList(Vec<usize>),
}

/// Parsed configuration; every key has already been type-checked.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

fn key_type(key: &str) -> Option<KeyType> {
    SCHEMA.iter().find(|(k, _, _)| *k == key).map(|&(_, t, _)| t)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| NvfError::config(format!("line {}", lineno + 1), "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let ty = key_type(key).ok_or_else(|| NvfError::config(key, "unknown key"))?;
            let parsed = parse_value(key, ty, value)?;
            if values.insert(key.to_string(), parsed).is_some() {
                return Err(NvfError::config(key, "given more than once"));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NvfError::io(path, e))?;
        Self::parse(&text)
    }

    /// Set a key from its textual form, with the same checks as the parser.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ty = key_type(key).ok_or_else(|| NvfError::config(key, "unknown key"))?;
        self.values.insert(key.to_string(), parse_value(key, ty, value)?);
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn int(&self, key: &str) -> Option<u64> {
        match self.values.get(key) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }

    fn usize(&self, key: &str, default: usize) -> usize {
        self.int(key).map_or(default, |v| v as usize)
    }

    fn float(&self, key: &str) -> Option<f64> {
        match self.values.get(key) {
            Some(Value::Float(v)) => Some(*v),
            _ => None,
        }
    }

    fn text(&self, key: &str) -> Option<&str> {
        match self.values.get(key) {
            Some(Value::Text(v)) => Some(v),
            _ => None,
        }
    }

    fn list(&self, key: &str) -> Option<&[usize]> {
        match self.values.get(key) {
            Some(Value::IntList(v)) => Some(v),
            _ => None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.int("seed").unwrap_or(0)
    }

    pub fn field_config(&self, frames: usize, height: usize, width: usize) -> Result<FieldConfig> {
        let d = FieldConfig::for_video(frames, height, width);
        let lattice_levels = match self.list("field.lattice_levels") {
            None => d.lattice_levels,
            Some(v) if v.len() % 3 == 0 && !v.is_empty() => {
                v.chunks_exact(3).map(|c| LatticeShape::new(c[0], c[1], c[2])).collect()
            }
            Some(_) => return Err(NvfError::config("field.lattice_levels", "expected t,y,x triples")),
        };
        let config = FieldConfig {
            res_x: self.usize("field.res_x", d.res_x),
            res_y: self.usize("field.res_y", d.res_y),
            res_t: self.usize("field.res_t", d.res_t),
            plane_channels: self.usize("field.plane_channels", d.plane_channels),
            lattice_channels: self.usize("field.lattice_channels", d.lattice_channels),
            lattice_levels,
            hidden_widths: self.list("field.hidden_widths").map_or(d.hidden_widths, <[usize]>::to_vec),
            ..d
        };
        config.validate()?;
        Ok(config)
    }

    pub fn adam(&self) -> Result<AdamConfig> {
        let d = AdamConfig::default();
        let config = AdamConfig {
            lr_explicit: self.float("adam.lr_explicit").unwrap_or(d.lr_explicit),
            lr_implicit: self.float("adam.lr_implicit").unwrap_or(d.lr_implicit),
            beta1: self.float("adam.beta1").unwrap_or(d.beta1),
            beta2: self.float("adam.beta2").unwrap_or(d.beta2),
            eps: self.float("adam.eps").unwrap_or(d.eps),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let d = FitConfig::default();
        let config = FitConfig {
            batch_size: self.usize("fit.batch_size", d.batch_size),
            iterations: self.usize("fit.iterations", d.iterations),
            log_interval: self.usize("fit.log_interval", d.log_interval),
            target_psnr: self.float("fit.target_psnr").or(d.target_psnr),
            seed: self.seed(),
            adam: self.adam()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn edit_config(&self, frames: usize) -> Result<EditConfig> {
        let d = EditConfig::for_video(frames);
        let shape = match self.text("edit.schedule") {
            Some(s) => s.parse::<ScheduleShape>()?,
            None => d.schedule.shape,
        };
        let frame_policy = match self.text("edit.frame_policy") {
            Some(s) => s.parse::<FramePolicy>()?,
            None => d.frame_policy,
        };
        let schedule = EditSchedule::new(
            self.float("edit.s_min").map_or(d.schedule.s_min, |v| v as f32),
            self.float("edit.s_max").map_or(d.schedule.s_max, |v| v as f32),
            self.usize("edit.iterations", d.schedule.total_iterations),
            shape,
        )?;
        let config = EditConfig {
            schedule,
            frame_policy,
            instruction: self.text("edit.instruction").map_or(d.instruction, str::to_string),
            t_lower: self.float("edit.t_lower").unwrap_or(d.t_lower),
            t_upper: self.float("edit.t_upper").unwrap_or(d.t_upper),
            tau: self.float("edit.tau").map(|v| v as f32).or(d.tau),
            seed: self.seed(),
            max_failure_fraction: self.float("edit.max_failure_fraction").unwrap_or(d.max_failure_fraction),
            eval_interval: self.usize("edit.eval_interval", d.eval_interval),
            adam: AdamConfig {
                lr_explicit: self.float("edit.lr_explicit").unwrap_or(d.adam.lr_explicit),
                lr_implicit: self.float("edit.lr_implicit").unwrap_or(d.adam.lr_implicit),
                ..self.adam()?
            },
            warmup_iterations: self.usize("edit.warmup_iterations", d.warmup_iterations),
            final_lr_fraction: self.float("edit.final_lr_fraction").unwrap_or(d.final_lr_fraction),
            robust_scale: self.float("edit.robust_scale").unwrap_or(d.robust_scale),
            robust_window: self.usize("edit.robust_window", d.robust_window),
            average_iterations: self.usize("edit.average_iterations", d.average_iterations),
        };
        config.validate()?;
        Ok(config)
    }

    /// The configured built-in editor, or `None` when `editor.kind = external`.
    pub fn builtin_editor(&self) -> Result<Option<BuiltinEditor>> {
        let kind = self.text("editor.kind").ok_or_else(|| NvfError::config("editor.kind", "required for editing"))?;
        let hue = || {
            self.float("editor.hue_degrees")
                .map(|v| v as f32)
                .ok_or_else(|| NvfError::config("editor.hue_degrees", format!("required by `{kind}`")))
        };
        let editor = match kind {
            "identity" => BuiltinEditor::Identity,
            "hue-shift" => BuiltinEditor::HueShift { degrees: hue()? },
            "sepia" => BuiltinEditor::Sepia,
            "posterize" => BuiltinEditor::Posterize { levels: self.usize("editor.levels", 2) as u32 },
            "upscale2x" => BuiltinEditor::Upscale2x,
            "region-recolor" => {
                let rect = match self.list("editor.rect") {
                    Some(&[x0, y0, x1, y1]) => PixelRect { x0, y0, x1, y1 },
                    _ => return Err(NvfError::config("editor.rect", "region-recolor needs x0,y0,x1,y1")),
                };
                let tau = self.float("edit.tau").map_or(0.1, |v| v as f32);
                BuiltinEditor::RegionRecolor { rect, hue: hue()?, tau }
            }
            "external" => return Ok(None),
            other => return Err(NvfError::config("editor.kind", format!("unknown editor `{other}`"))),
        };
        builtin_editor(editor).map(Some)
    }

    /// Instantiate the configured editor. `default_exchange_dir` is used when
    /// an external editor has no `editor.exchange_dir`.
    pub fn editor(&self, default_exchange_dir: Option<PathBuf>) -> Result<Box<dyn FrameEditor>> {
        if let Some(builtin) = self.builtin_editor()? {
            return Ok(Box::new(builtin));
        }
        let dir = self
            .text("editor.exchange_dir")
            .map(PathBuf::from)
            .or(default_exchange_dir)
            .ok_or_else(|| NvfError::config("editor.exchange_dir", "required by the external editor"))?;
        let timeout = self.float("editor.timeout").unwrap_or(60.0);
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(NvfError::config("editor.timeout", "must be a positive number of seconds"));
        }
        Ok(Box::new(ExternalEditor::new(dir, Duration::from_secs_f64(timeout))?))
    }
}

fn parse_value(key: &str, ty: KeyType, value: &str) -> Result<Value> {
    let bad = || NvfError::config(key, format!("expected {}, got `{value}`", ty.name()));
    Ok(match ty {
        KeyType::Int => Value::Int(value.parse().map_err(|_| bad())?),
        KeyType::Float => {
            let v: f64 = value.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            Value::Float(v)
        }
        KeyType::Text => Value::Text(value.trim_matches('"').to_string()),
        KeyType::IntList => Value::IntList(
            value
                .split([',', ';', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?,
        ),
    })
}

/// JSON schema describing the accepted keys.
pub fn schema_json() -> serde_json::Value {
    let properties: serde_json::Map<String, serde_json::Value> = SCHEMA
        .iter()
        .map(|&(key, ty, desc)| {
            let t = match ty {
                KeyType::Int => serde_json::json!({ "type": "integer", "minimum": 0 }),
                KeyType::Float => serde_json::json!({ "type": "number" }),
                KeyType::Text => serde_json::json!({ "type": "string" }),
                KeyType::IntList => serde_json::json!({ "type": "array", "items": { "type": "integer", "minimum": 0 } }),
            };
            let mut t = t.as_object().unwrap().clone();
            t.insert("description".into(), desc.into());
            (key.to_string(), serde_json::Value::Object(t))
        })
        .collect();
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "RunConfig",
        "type": "object",
        "additionalProperties": false,
        "properties": properties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values_and_comments() {
        let c = RunConfig::parse(
            "# fit\nseed = 7\nfit.iterations = 100 # short\nadam.lr_explicit=0.02\n\nfield.hidden_widths = 32,32\neditor.kind = hue-shift\neditor.hue_degrees = 180\n",
        )
        .unwrap();
        assert_eq!(c.seed(), 7);
        let fit = c.fit_config().unwrap();
        assert_eq!(fit.iterations, 100);
        assert_eq!(fit.adam.lr_explicit, 0.02);
        assert_eq!(c.field_config(4, 8, 8).unwrap().hidden_widths, vec![32, 32]);
        assert_eq!(c.builtin_editor().unwrap(), Some(BuiltinEditor::HueShift { degrees: 180.0 }));
    }

    #[test]
    fn rejects_unknown_and_mistyped_keys() {
        let kind = |text: &str| match RunConfig::parse(text) {
            Err(NvfError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(kind("fit.iteratons = 3"), "fit.iteratons");
        assert_eq!(kind("fit.iterations = many"), "fit.iterations");
        assert_eq!(kind("seed = 1\nseed = 2"), "seed");
        assert_eq!(kind("no equals sign"), "line 1");
    }

    #[test]
    fn unknown_editor_kind() {
        let c = RunConfig::parse("editor.kind = watercolor").unwrap();
        assert!(matches!(c.builtin_editor(), Err(NvfError::Config { .. })));
    }

    #[test]
    fn defaults_follow_video() {
        let c = RunConfig::default();
        assert_eq!(c.field_config(16, 64, 64).unwrap(), FieldConfig::for_video(16, 64, 64));
        assert_eq!(c.edit_config(16).unwrap().schedule.total_iterations, 160);
        assert_eq!(c.fit_config().unwrap(), FitConfig::default());
    }

    #[test]
    fn lattice_levels_triples() {
        let c = RunConfig::parse("field.lattice_levels = 2,4,4; 4,8,8").unwrap();
        assert_eq!(c.field_config(4, 16, 16).unwrap().lattice_levels[1], LatticeShape::new(4, 8, 8));
        let c = RunConfig::parse("field.lattice_levels = 2,4").unwrap();
        assert!(c.field_config(4, 16, 16).is_err());
    }

    #[test]
    fn schema_lists_every_key() {
        let s = schema_json();
        assert_eq!(s["properties"].as_object().unwrap().len(), SCHEMA.len());
    }
}
