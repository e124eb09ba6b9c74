use std::path::Path;

use scenesynth::coco::CocoDataset;
use scenesynth::diffusion::MockBackend;
use scenesynth::metrics::{ground_truth_as_results, AkdConfig, CocoResult, MetricsError};
use scenesynth_cli::evaluate::{evaluate, EvaluateError, Task};
use scenesynth_cli::http::{spawn_mock_backend, HttpBackend};
use scenesynth_cli::pipeline::{halving_sizes, make_splits, ImageStatus};
use scenesynth_cli::{Manifest, Pipeline, PipelineConfig, PipelineError, TexturingMethod};

fn config(root: &Path, scenes: u64, method: TexturingMethod) -> PipelineConfig {
    let mut c = PipelineConfig::smoke(scenes);
    c.resolution = 128;
    c.output_root = root.to_path_buf();
    c.master_seed = 5;
    c.texturing.method = method;
    c
}

#[test]
fn smoke_run_produces_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path(), 10, TexturingMethod::Diff1)).unwrap();
    let mock = MockBackend::new();
    let summary = p.run(Some(&mock)).unwrap();
    assert_eq!(summary.textured + summary.dropped, 20);
    assert_eq!(summary.failed, 0);
    assert_eq!(mock.call_count(), summary.textured);

    let manifest = Manifest::read(&p.layout.abs(&p.layout.manifest(TexturingMethod::Diff1))).unwrap();
    assert_eq!(manifest.header.records + manifest.header.dropped.len(), 20);
    assert_eq!(manifest.header.config_hash, p.config_hash_for(TexturingMethod::Diff1));
    let coco = CocoDataset::read(&p.layout.abs(&p.layout.coco(TexturingMethod::Diff1))).unwrap();
    assert_eq!(coco.images.len(), manifest.records.len());
    coco.check_images(dir.path()).unwrap();
    for r in &manifest.records {
        assert_eq!(r.status, ImageStatus::Ok);
        assert!(r.prompt.as_ref().is_some_and(|p| p.combined == "A photo of a mug"));
        let img = image::open(dir.path().join(&r.paths.rgb)).unwrap();
        assert_eq!((img.width(), img.height()), (128, 128));
    }
}

#[test]
fn rerun_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path(), 3, TexturingMethod::Random)).unwrap();
    p.run(None).unwrap();
    let path = p.layout.abs(&p.layout.manifest(TexturingMethod::Random));
    let first = std::fs::read(&path).unwrap();
    // drop one image as if interrupted mid-stage
    let victim = Manifest::read(&path).unwrap().records[1].paths.rgb.clone();
    std::fs::remove_file(dir.path().join(&victim)).unwrap();
    let again = p.run(None).unwrap();
    assert_eq!(again.textured, 1);
    assert_eq!(std::fs::read(&path).unwrap(), first);
    assert_eq!(p.gen_scenes().unwrap(), 0);
    assert_eq!(p.render().unwrap(), 0);
}

#[test]
fn changed_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::new(config(dir.path(), 2, TexturingMethod::Random)).unwrap().run(None).unwrap();
    let mut c = config(dir.path(), 2, TexturingMethod::Random);
    c.texturing.procedural.tiles_per_meter = [1.0, 2.0];
    let err = Pipeline::new(c).unwrap().texture(TexturingMethod::Random, None).unwrap_err();
    assert!(matches!(err, PipelineError::ConfigMismatch { .. }));
}

#[test]
fn http_backend_drives_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_mock_backend().unwrap();
    let http = HttpBackend::new(&format!("http://{addr}")).unwrap();
    let p = Pipeline::new(config(dir.path(), 2, TexturingMethod::Diff2)).unwrap();
    p.gen_scenes().unwrap();
    p.render().unwrap();
    let remote = p.texture(TexturingMethod::Diff2, Some(&http)).unwrap();
    let remote_dir = dir.path().join("images");
    let remote_bytes: Vec<Vec<u8>> = sorted_files(&remote_dir.join("diff2")).iter().map(|f| std::fs::read(f).unwrap()).collect();
    std::fs::remove_dir_all(&remote_dir).unwrap();
    std::fs::remove_file(p.layout.abs(&p.layout.manifest(TexturingMethod::Diff2))).unwrap();
    let local = p.texture(TexturingMethod::Diff2, Some(&MockBackend::new())).unwrap();
    assert_eq!(remote.textured, local.textured);
    let local_bytes: Vec<Vec<u8>> = sorted_files(&remote_dir.join("diff2")).iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(remote_bytes, local_bytes);
}

fn sorted_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn splits_are_nested() {
    let ids: Vec<u64> = (0..5000).collect();
    let sizes = halving_sizes(5000, 5);
    assert_eq!(sizes, [312, 625, 1250, 2500, 5000]);
    let splits = make_splits(&ids, &sizes, 1).unwrap();
    for w in splits.windows(2) {
        assert!(w[0].iter().all(|id| w[1].binary_search(id).is_ok()));
    }
    assert_eq!(splits, make_splits(&ids, &sizes, 1).unwrap());
    assert!(matches!(make_splits(&ids, &[10, 6000], 1), Err(PipelineError::SizeExceedsDataset { .. })));
    assert!(matches!(make_splits(&ids, &[10, 5], 1), Err(PipelineError::UnsortedSizes)));
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path(), 3, TexturingMethod::Random)).unwrap();
    p.run(None).unwrap();
    let gt = CocoDataset::read(&p.layout.abs(&p.layout.coco(TexturingMethod::Random))).unwrap();
    let results = ground_truth_as_results(&gt);
    let kp = evaluate(&gt, &results, Task::Keypoints, "self", &AkdConfig::default()).unwrap();
    assert_eq!(kp.akd.unwrap().mean, 0.0);
    let seg = evaluate(&gt, &results, Task::Segmentation, "self", &AkdConfig::default()).unwrap();
    assert_eq!(seg.segmentation.unwrap().map, 1.0);

    let empty = CocoDataset { annotations: vec![], ..gt.clone() };
    let none: Vec<CocoResult> = vec![];
    assert!(matches!(
        evaluate(&empty, &none, Task::Segmentation, "x", &AkdConfig::default()),
        Err(EvaluateError::Metrics(MetricsError::NoGroundTruth))
    ));
}

#[test]
fn heatmaps_peak_at_visible_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path(), 3, TexturingMethod::Random)).unwrap();
    p.gen_scenes().unwrap();
    let rendered = p.render().unwrap();
    assert_eq!(p.write_heatmaps().unwrap(), rendered);
    for id in 0..6 {
        let Ok(file) = p.load_annotation(id) else { continue };
        for k in &file.annotation.keypoints {
            let img = image::open(p.layout.abs(&p.layout.heatmap(id, &k.name))).unwrap().into_luma8();
            let peak = img.pixels().map(|px| px.0[0]).max().unwrap();
            if k.state == scenesynth::raster::KeypointState::Visible {
                let (x, y) = k.pixel();
                assert_eq!(img.get_pixel(x as u32, y as u32).0[0], 255);
            } else {
                assert_eq!(peak, 0, "{} in image {id}", k.name);
            }
        }
    }
}
