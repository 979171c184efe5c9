use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvf_core::render::{load_video, psnr, save_video};
use nvf_core::synthetic::MovingSquare;

fn nvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvf")).arg("--quiet").args(args).output().unwrap()
}

fn error_kind(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"));
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut square = MovingSquare::reference().with_resolution(16, 16);
        square.frames = 6;
        save_video(&square.video(), dir.path().join("video")).unwrap();
        std::fs::write(
            dir.path().join("run.conf"),
            "fit.iterations = 150\nfit.batch_size = 1024\nfit.log_interval = 50\nedit.iterations = 24\n",
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, seed: u64) -> serde_json::Value {
        let (video, out, conf) = (self.path("video"), self.path(out), self.path("run.conf"));
        let seed = seed.to_string();
        stdout_json(&nvf(&["fit", s(&video), "--out", s(&out), "--config", s(&conf), "--seed", &seed]))
    }
}

#[test]
fn fit_writes_magic_and_is_deterministic() {
    let f = Fixture::new();
    let report = f.fit("a.nvf", 3);
    assert_eq!(report["iterations"], 150);
    f.fit("b.nvf", 3);
    let a = std::fs::read(f.path("a.nvf")).unwrap();
    let b = std::fs::read(f.path("b.nvf")).unwrap();
    assert_eq!(&a[..4], b"NVF1");
    assert_eq!(a, b);
}

#[test]
fn missing_video_is_an_io_error() {
    let f = Fixture::new();
    let out = nvf(&["fit", s(&f.path("nope")), "--out", s(&f.path("x.nvf"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn corrupted_magic_is_a_format_error() {
    let f = Fixture::new();
    std::fs::write(f.path("bad.nvf"), b"XXXX\0\0\0\0").unwrap();
    let out = nvf(&["render", s(&f.path("bad.nvf")), "--out", s(&f.path("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "format");
}

#[test]
fn usage_errors_exit_two() {
    let out = nvf(&["bench-mem", "--frames"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
    let out = nvf(&["--threads", "0", "metrics", "a", "b"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
    let out = nvf(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_edit_and_metrics_round_trip() {
    let f = Fixture::new();
    f.fit("field.nvf", 1);

    for (interp, expected) in [(0, 6), (1, 11)] {
        let out = f.path(&format!("render{interp}"));
        let interp = interp.to_string();
        let report = stdout_json(&nvf(&["render", s(&f.path("field.nvf")), "--out", s(&out), "--interp", &interp]));
        assert_eq!(report["frames"], expected);
        assert_eq!(load_video(&out).unwrap().frames, expected);
    }
    let y4m = f.path("clip.y4m");
    stdout_json(&nvf(&["render", s(&f.path("field.nvf")), "--out", s(&y4m), "--width", "24", "--height", "20"]));
    let clip = load_video(&y4m).unwrap();
    assert_eq!((clip.frames, clip.height, clip.width), (6, 20, 24));

    let m = stdout_json(&nvf(&["metrics", s(&f.path("video")), s(&f.path("video"))]));
    assert_eq!(m["psnr"], 99.0);
    assert_eq!(m["psnr_per_frame"].as_array().unwrap().len(), 6);
    let out = nvf(&["metrics", s(&f.path("video")), s(&y4m)]);
    assert_eq!(out.status.code(), Some(2));

    // Identity edits keep the field where it was.
    std::fs::write(f.path("identity.conf"), "editor.kind = identity\nedit.iterations = 24\n").unwrap();
    let report = stdout_json(&nvf(&[
        "edit",
        s(&f.path("field.nvf")),
        "--out",
        s(&f.path("same.nvf")),
        "--config",
        s(&f.path("identity.conf")),
        "--video",
        s(&f.path("video")),
    ]));
    assert_eq!(report["iterations"], 24);
    stdout_json(&nvf(&["render", s(&f.path("same.nvf")), "--out", s(&f.path("same"))]));
    let original = load_video(f.path("video")).unwrap();
    let before = psnr(&load_video(f.path("render0")).unwrap(), &original).unwrap();
    let after = psnr(&load_video(f.path("same")).unwrap(), &original).unwrap();
    assert!((before - after).abs() <= 0.5, "identity edit moved psnr {before} -> {after}");

    // Chained: the second edit starts from the first field's render.
    std::fs::write(f.path("sepia.conf"), "editor.kind = sepia\nedit.iterations = 12\n").unwrap();
    for (input, output) in [("field.nvf", "one.nvf"), ("one.nvf", "two.nvf")] {
        let conf = f.path("sepia.conf");
        stdout_json(&nvf(&["edit", s(&f.path(input)), "--out", s(&f.path(output)), "--config", s(&conf)]));
    }
    assert_eq!(&std::fs::read(f.path("two.nvf")).unwrap()[..4], b"NVF1");
}

#[test]
fn static_video_has_zero_temporal_change() {
    let f = Fixture::new();
    let mut still = MovingSquare::reference().with_resolution(8, 8);
    still.frames = 3;
    still.velocity = (0.0, 0.0);
    save_video(&still.video(), f.path("still")).unwrap();
    let m = stdout_json(&nvf(&["metrics", s(&f.path("still")), s(&f.path("still"))]));
    assert_eq!(m["temporal_consistency"], 0.0);
}

#[test]
fn unknown_editor_is_a_config_error() {
    let f = Fixture::new();
    f.fit("field.nvf", 2);
    std::fs::write(f.path("bad.conf"), "editor.kind = watercolor\n").unwrap();
    let out = nvf(&["edit", s(&f.path("field.nvf")), "--out", s(&f.path("o.nvf")), "--config", s(&f.path("bad.conf"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn bench_mem_reports_every_frame_count() {
    let out = stdout_json(&nvf(&["bench-mem", "--frames", "2,4", "--height", "16", "--width", "16"]));
    let reports = out["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["peak_workspace_bytes"], reports[1]["peak_workspace_bytes"]);
}
