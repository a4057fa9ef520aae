use std::path::Path;

use charface::pipeline::{
    run_pipeline, run_stages, write_sample, PipelineConfig, Stage, MANIFEST_FILE, MESH_ARTIFACT,
    PREVIEW_ARTIFACT, REPORT_ARTIFACT, TEXTURE_ARTIFACT,
};

fn sample_config(dir: &Path) -> PipelineConfig {
    let path = write_sample(dir, 128, 256).unwrap();
    PipelineConfig::load(&path).unwrap()
}

#[test]
fn sample_run_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sample_config(dir.path());
    let first = run_pipeline(&cfg).unwrap();
    for name in [MESH_ARTIFACT, TEXTURE_ARTIFACT, PREVIEW_ARTIFACT, REPORT_ARTIFACT, MANIFEST_FILE] {
        assert!(first.output_dir.join(name).is_file(), "{name} missing");
    }
    let report = &first.outputs.report;
    assert!(report.texture_metrics.is_some());
    assert!(report.breakdown.total.is_finite() && report.breakdown.total > 0.0);
    assert!(report.texture.poisson.as_ref().unwrap().max_relative_residual() <= 1e-6);
    let stages: Vec<Stage> = first.manifest.timings.iter().map(|t| t.stage).collect();
    assert_eq!(
        stages,
        [Stage::Load, Stage::Synthesize, Stage::Transfer, Stage::CoarseTexture, Stage::Render, Stage::Loss, Stage::Write]
    );

    cfg.output_dir = dir.path().join("second");
    let second = run_pipeline(&cfg).unwrap();
    assert_eq!(first.manifest.config_hash, second.manifest.config_hash);
    assert_eq!(first.manifest.artifacts, second.manifest.artifacts);
    for a in &first.manifest.artifacts {
        let x = std::fs::read(first.output_dir.join(&a.name)).unwrap();
        let y = std::fs::read(second.output_dir.join(&a.name)).unwrap();
        assert!(x == y, "{} differs between runs", a.name);
    }
}

#[test]
fn changing_an_input_changes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sample_config(dir.path());
    let (before, _) = cfg.hash().unwrap();
    let mut moved = cfg.clone();
    moved.output_dir = "elsewhere".into();
    assert_eq!(moved.hash().unwrap().0, before, "output location is not part of the hash");

    let coeffs = dir.path().join(&cfg.inputs.coefficients);
    let mut values: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&coeffs).unwrap()).unwrap();
    values[0] += 0.5;
    std::fs::write(&coeffs, serde_json::to_string(&values).unwrap()).unwrap();
    assert_ne!(cfg.hash().unwrap().0, before);
}

#[test]
fn missing_mask_fails_validation_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sample_config(dir.path());
    let mask = dir.path().join(&cfg.inputs.portrait_mask);
    std::fs::remove_file(&mask).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert!(err.source.is_invalid_input());
    assert!(err.to_string().contains(&mask.display().to_string()), "{err}");
}

#[test]
fn camera_must_match_the_portrait() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sample_config(dir.path());
    cfg.camera.as_mut().unwrap().image_size = [64, 64];
    let err = run_stages(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Load);
    assert!(err.source.is_invalid_input());
}

#[cfg(feature = "parallel")]
#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sample_config(dir.path());
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_stages(&cfg).unwrap().0)
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mesh, b.mesh);
    assert_eq!(a.coarse_texture, b.coarse_texture);
    assert_eq!(a.preview, b.preview);
    assert_eq!(a.report, b.report);
}
