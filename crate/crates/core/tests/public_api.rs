use std::path::PathBuf;

use nvf_core::config::schema_json;
use nvf_core::field::{forward, load_params, save_params};
use nvf_core::render::{interpolated_time_samples, psnr, render_video, RenderSpec};
use nvf_core::synthetic::MovingSquare;
use nvf_core::{fit, FieldConfig, FieldParams, FitConfig, NormalizedCoord};
use proptest::prelude::*;

fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas/run-config.schema.json")
}

#[test]
fn run_config_schema_file_is_current() {
    let expected = serde_json::to_string_pretty(&schema_json()).unwrap() + "\n";
    if std::env::var_os("NVF_BLESS").is_some() {
        std::fs::write(schema_path(), &expected).unwrap();
    }
    let on_disk = std::fs::read_to_string(schema_path()).expect("run NVF_BLESS=1 cargo test to write the schema");
    assert_eq!(on_disk, expected);
}

#[test]
fn fitted_field_survives_a_save_load_round_trip() {
    let mut square = MovingSquare::reference().with_resolution(16, 16);
    square.frames = 4;
    let video = square.video();
    let mut params = FieldParams::<f32>::init(&FieldConfig::for_video(4, 16, 16), 0).unwrap();
    let config = FitConfig { iterations: 200, batch_size: 512, ..FitConfig::default() };
    let report = fit(&mut params, &video, &config).unwrap();
    assert!(report.final_psnr > 20.0, "{}", report.final_psnr);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.nvf");
    save_params(&params, &path).unwrap();
    let loaded = load_params(&path).unwrap();
    let spec = RenderSpec { width: 16, height: 16, time_samples: interpolated_time_samples(4, 0) };
    let a = render_video(&params, &spec).unwrap();
    let b = render_video(&loaded, &spec).unwrap();
    assert_eq!(a.data, b.data);
    assert!(psnr(&a, &video).unwrap() > 20.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_stays_in_the_unit_cube(seed in 0u64..1000, x in 0.0f64..=1.0, y in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let params = FieldParams::<f32>::init(&FieldConfig::for_video(4, 8, 8), seed).unwrap();
        let rgb = forward(&params, &[NormalizedCoord::new(x, y, t).unwrap()]).unwrap()[0];
        prop_assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
