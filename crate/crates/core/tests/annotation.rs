use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenesynth::annotate::{annotate_image, generate_heatmap, HeatmapConfig, ImageAnnotation, KeypointAnnotation};
use scenesynth::catalog::{CategorySchema, MeshCatalog};
use scenesynth::coco::{build_coco, CocoDataset};
use scenesynth::mask::BinaryMask;
use scenesynth::polygon::{mask_to_polygons, DEFAULT_TOLERANCE};
use scenesynth::raster::{rasterize, KeypointState, DEFAULT_VISIBILITY_EPS};
use scenesynth::scene::{compose_scene, SceneRandomizationConfig};
use serde_json::Value;

fn annotations(n: u64) -> Vec<ImageAnnotation> {
    let catalog = MeshCatalog::builtin("mug").unwrap();
    let schema = CategorySchema::builtin("mug").unwrap();
    let cfg = SceneRandomizationConfig { resolution: 256, ..Default::default() };
    let mut out = Vec::new();
    for id in 0..n {
        let scene = compose_scene(id, &catalog, &cfg, 21).unwrap();
        let mesh = catalog.get(&scene.object_ref).unwrap();
        for (c, cam) in scene.cameras.iter().enumerate() {
            let fb = rasterize(&scene, cam, mesh, None);
            let image_id = id * 2 + c as u64;
            out.push(annotate_image(image_id, &scene, cam, &fb, mesh, &schema, DEFAULT_VISIBILITY_EPS).unwrap());
        }
    }
    out
}

#[test]
fn bbox_and_visible_keypoints_agree_with_mask() {
    for a in annotations(6) {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..a.height {
            for x in 0..a.width {
                if a.mask.get(x, y) {
                    (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
                }
            }
        }
        assert_eq!((a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h), (x0, y0, x1 - x0 + 1, y1 - y0 + 1));
        assert_eq!(a.area, a.mask.count());
        for k in a.keypoints.iter().filter(|k| k.state == KeypointState::Visible) {
            let (x, y) = k.pixel();
            assert!(a.mask.get_signed(x, y), "{} at ({x}, {y})", k.name);
        }
    }
}

#[test]
fn heatmap_values() {
    let kp = |name: &str, u, v, state| KeypointAnnotation { name: name.into(), u, v, state };
    let names = vec!["top".to_string(), "handle".to_string()];
    let cfg = HeatmapConfig { sigma: 8.0, width: 64, height: 64 };
    let h = generate_heatmap(
        &[kp("top", 20.3, 30.9, KeypointState::Visible), kp("handle", 5.0, 5.0, KeypointState::Occluded)],
        &names,
        &cfg,
    )
    .unwrap();
    assert_eq!(h.get(0, 20, 30), 1.0);
    assert!((h.get(0, 28, 30) as f64 - (-0.5f64).exp()).abs() < 1e-6);
    assert!((h.get(0, 20, 22) as f64 - (-0.5f64).exp()).abs() < 1e-6);
    assert!(h.data[0].iter().all(|&v| v <= 1.0));
    assert!(h.data[1].iter().all(|&v| v == 0.0));
}

#[test]
fn coco_export_reparses_losslessly() {
    let anns = annotations(3);
    let schema = CategorySchema::builtin("mug").unwrap();
    let items: Vec<(String, &ImageAnnotation)> = anns.iter().map(|a| (format!("{:06}.png", a.image_id), a)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coco.json");
    build_coco(&schema, &items, DEFAULT_TOLERANCE).unwrap().write(&path).unwrap();

    let json: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let cat = &json["categories"][0];
    assert_eq!(cat["keypoints"].as_array().unwrap().len(), schema.keypoints.len());
    for (ann, a) in json["annotations"].as_array().unwrap().iter().zip(&anns) {
        assert_eq!(ann["image_id"].as_u64().unwrap(), a.image_id);
        assert_eq!(ann["iscrowd"].as_u64().unwrap(), 0);
        let bbox: Vec<f64> = ann["bbox"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(bbox, [a.bbox.x as f64, a.bbox.y as f64, a.bbox.w as f64, a.bbox.h as f64]);
        let flat: Vec<f64> = ann["keypoints"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        for (t, k) in flat.chunks(3).zip(&a.keypoints) {
            let want = match k.state {
                KeypointState::Outside => [0.0, 0.0, 0.0],
                KeypointState::Occluded => [k.u, k.v, 1.0],
                KeypointState::Visible => [k.u, k.v, 2.0],
            };
            assert_eq!(t, want);
        }
    }

    let back = CocoDataset::read(&path).unwrap();
    for (ann, a) in back.annotations.iter().zip(&anns) {
        let kps = back.keypoints_of(ann).unwrap();
        for (k, orig) in kps.iter().zip(&a.keypoints) {
            assert_eq!(k.state, orig.state);
            if orig.state != KeypointState::Outside {
                assert_eq!((k.u, k.v), (orig.u, orig.v));
            }
        }
    }
}

/// Even-odd point-in-polygon by horizontal ray crossings.
fn inside(polys: &[Vec<f64>], x: f64, y: f64) -> bool {
    let mut odd = false;
    for p in polys {
        let n = p.len() / 2;
        for i in 0..n {
            let (ax, ay) = (p[2 * i], p[2 * i + 1]);
            let (bx, by) = (p[2 * ((i + 1) % n)], p[2 * ((i + 1) % n) + 1]);
            if (ay > y) != (by > y) && x < ax + (y - ay) / (by - ay) * (bx - ax) {
                odd = !odd;
            }
        }
    }
    odd
}

fn blob_mask(rng: &mut impl Rng) -> BinaryMask {
    let shapes: Vec<(f64, f64, f64, f64, bool)> = (0..rng.random_range(1..5))
        .map(|_| (rng.random_range(10.0..54.0), rng.random_range(10.0..54.0), rng.random_range(3.0..14.0), rng.random_range(3.0..14.0), rng.random_bool(0.25)))
        .collect();
    BinaryMask::from_fn(64, 64, |x, y| {
        let mut on = false;
        for &(cx, cy, rx, ry, hole) in &shapes {
            let d = ((x as f64 + 0.5 - cx) / rx).powi(2) + ((y as f64 + 0.5 - cy) / ry).powi(2);
            if d <= 1.0 {
                on = !hole;
            }
        }
        on
    })
}

#[test]
fn polygons_rerasterize_close_to_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let m = blob_mask(&mut rng);
        if m.is_empty() {
            continue;
        }
        let polys = mask_to_polygons(&m, DEFAULT_TOLERANCE);
        let back = BinaryMask::from_fn(64, 64, |x, y| inside(&polys, x as f64 + 0.5, y as f64 + 0.5));
        let inter = (0..64 * 64).filter(|&i| m.data()[i] && back.data()[i]).count();
        let union = (0..64 * 64).filter(|&i| m.data()[i] || back.data()[i]).count();
        assert!(inter as f64 / union as f64 >= 0.98, "{inter}/{union}");
    }
}
