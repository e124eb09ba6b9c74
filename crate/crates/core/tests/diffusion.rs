use std::sync::Mutex;

use image::GrayImage;
use proptest::prelude::*;
use scenesynth::diffusion::{
    depth_to_control_image, dilate_mask, mock_block_color, texture_inpainting_baseline, texture_one_stage,
    texture_three_stage, texture_two_stage, DiffusionError, DiffusionParams, InpaintRequest, MockBackend, RequestMode,
    TextureRequest, TexturingBackend, TexturingResult,
};
use scenesynth::geometry::primitives::cuboid;
use scenesynth::geometry::{look_at, Mesh, PinholeCamera, Point3, RigidTransform, Vec3};
use scenesynth::mask::BinaryMask;
use scenesynth::prompt::{classname_prompt, PromptSpec};
use scenesynth::raster::{rasterize, render_surfaces, Framebuffer, Surface, INSTANCE_OBJECT};
use scenesynth::scene::{SceneSpec, TableSpec};

const SIZE: u32 = 128;

fn scene() -> (SceneSpec, PinholeCamera, Mesh) {
    let pose = look_at(&Point3::new(0.1, -0.2, 0.8), &Point3::origin(), &Vec3::z()).unwrap();
    let cam = PinholeCamera::from_fov(SIZE, SIZE, 60.0, pose).unwrap();
    let spec = SceneSpec {
        version: 1,
        scene_id: 0,
        object_ref: "box".into(),
        object_pose: RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.05)),
        table: TableSpec { width: 1.0, depth: 1.0, yaw: 0.3, center: Point3::origin() },
        cameras: vec![cam],
        seed: 4,
    };
    (spec, cam, cuboid(0.1, 0.1, 0.1))
}

fn params() -> DiffusionParams {
    DiffusionParams { seed: 42, resolution: SIZE, ..Default::default() }
}

fn prompt() -> PromptSpec {
    classname_prompt("mug").unwrap()
}

/// Mock that also keeps every inpaint mask it receives.
#[derive(Default)]
struct MaskLog {
    inner: MockBackend,
    masks: Mutex<Vec<GrayImage>>,
}

impl TexturingBackend for MaskLog {
    fn texture(&self, req: &TextureRequest) -> Result<TexturingResult, DiffusionError> {
        self.inner.texture(req)
    }
    fn inpaint(&self, req: &InpaintRequest) -> Result<TexturingResult, DiffusionError> {
        self.masks.lock().unwrap().push(req.mask.clone());
        self.inner.inpaint(req)
    }
}

fn plane(z: f64, half: f64) -> Mesh {
    let v = vec![
        Point3::new(-half, -half, z),
        Point3::new(half, -half, z),
        Point3::new(half, half, z),
        Point3::new(-half, half, z),
    ];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], None, Default::default()).unwrap()
}

#[test]
fn control_image_examples() {
    let cam = PinholeCamera::from_fov(32, 32, 60.0, RigidTransform::identity()).unwrap();
    let (near, far) = (plane(0.5, 0.1), plane(1.0, 10.0));
    let surf = |m| Surface { mesh: m, pose: RigidTransform::identity(), instance: 1, material: None };
    let fb = render_surfaces(&[surf(&near), surf(&far)], &cam, None);
    let c = depth_to_control_image(&fb);
    assert_eq!(c.get_pixel(16, 16).0[0], 255);
    assert_eq!(c.get_pixel(0, 0).0[0], 1);

    let flat = render_surfaces(&[surf(&far)], &cam, None);
    assert!(depth_to_control_image(&flat).pixels().all(|p| p.0[0] == 255));
    assert!(depth_to_control_image(&Framebuffer::empty(8, 8)).pixels().all(|p| p.0[0] == 0));
}

fn dilate_oracle(m: &BinaryMask, r: i64) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        (-r..=r).any(|dy| (-r..=r).any(|dx| m.get_signed(x as i64 + dx, y as i64 + dy)))
    })
}

fn random_mask() -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(prop::bool::weighted(0.05), 32 * 32).prop_map(|v| BinaryMask::from_vec(32, 32, v))
}

#[test]
fn dilation_examples() {
    let mut m = BinaryMask::new(7, 7);
    m.set(3, 3, true);
    assert_eq!(dilate_mask(&m, 0), m);
    let d = dilate_mask(&m, 1);
    assert_eq!(d.count(), 9);
    assert!((2..5).all(|x| (2..5).all(|y| d.get(x, y))));
}

proptest! {
    #[test]
    fn dilation_matches_sliding_max(m in random_mask(), r in 0u32..5) {
        let d = dilate_mask(&m, r);
        prop_assert_eq!(&d, &dilate_oracle(&m, r as i64));
        prop_assert!(m.is_subset_of(&d));
    }

    #[test]
    fn dilation_composes(m in random_mask()) {
        prop_assert_eq!(dilate_mask(&dilate_mask(&m, 1), 1), dilate_mask(&m, 2));
    }
}

#[test]
fn request_counts_and_modes() {
    let (spec, cam, mesh) = scene();
    let fb = rasterize(&spec, &cam, &mesh, None);
    let p = params();
    let mock = MockBackend::new();
    let modes = |m: &MockBackend| m.calls().iter().map(|c| c.mode).collect::<Vec<_>>();

    assert_eq!(texture_one_stage(&fb, &prompt(), &p, &mock).unwrap().requests, 1);
    assert_eq!(modes(&mock), [RequestMode::DepthTexture]);
    mock.clear();
    assert_eq!(texture_two_stage(&fb, &prompt(), &p, &mock, 16, 8).unwrap().requests, 2);
    assert_eq!(modes(&mock), [RequestMode::DepthTexture, RequestMode::Inpaint]);
    mock.clear();
    assert_eq!(texture_three_stage(&spec, &cam, &mesh, &prompt(), &p, &mock, 16, 8).unwrap().requests, 3);
    assert_eq!(mock.call_count(), 3);
    mock.clear();
    assert_eq!(texture_inpainting_baseline(&fb, &prompt(), &p, &mock).unwrap().requests, 2);
    assert_eq!(modes(&mock), [RequestMode::Inpaint, RequestMode::Inpaint]);
}

#[test]
fn one_stage_follows_mock_contract_and_repeats() {
    let (spec, cam, mesh) = scene();
    let fb = rasterize(&spec, &cam, &mesh, None);
    let p = params();
    let a = texture_one_stage(&fb, &prompt(), &p, &MockBackend::new()).unwrap();
    let b = texture_one_stage(&fb, &prompt(), &p, &MockBackend::new()).unwrap();
    assert_eq!(a.image, b.image);
    let control = depth_to_control_image(&fb);
    for (x, y, px) in a.image.enumerate_pixels() {
        let c = control.get_pixel(x, y).0[0] as u16;
        let pattern = mock_block_color(&prompt().combined, 42, 1.5, x / 16, y / 16);
        assert_eq!(px.0, pattern.map(|v| ((v as u16 + c + 1) / 2) as u8));
    }
    let other = texture_one_stage(&fb, &prompt(), &p.with_seed(43), &MockBackend::new()).unwrap();
    assert_ne!(a.image, other.image);
}

#[test]
fn two_stage_inpaints_outside_dilated_object() {
    let (spec, cam, mesh) = scene();
    let fb = rasterize(&spec, &cam, &mesh, None);
    let object = fb.instance_mask(INSTANCE_OBJECT);
    for dilation in [0, 8] {
        let log = MaskLog::default();
        let out = texture_two_stage(&fb, &prompt(), &params(), &log, 16, dilation).unwrap();
        let region = BinaryMask::from_gray(&log.masks.lock().unwrap()[0]);
        let keep = dilate_oracle(&object, dilation as i64);
        // the whole dilated region sits inside the padded crop here
        assert_eq!(region, keep.complement(), "dilation {dilation}");
        let stage = out.stage("object").unwrap();
        for (x, y, px) in out.image.enumerate_pixels() {
            if keep.get(x, y) {
                assert_eq!(px, stage.get_pixel(x, y));
            }
        }
    }
}

#[test]
fn three_stage_overlays_object_on_empty_table() {
    let (spec, cam, mesh) = scene();
    let fb = rasterize(&spec, &cam, &mesh, None);
    let object = fb.instance_mask(INSTANCE_OBJECT);
    let out = texture_three_stage(&spec, &cam, &mesh, &prompt(), &params(), &MockBackend::new(), 16, 8).unwrap();
    let (table, obj) = (out.stage("empty_table").unwrap(), out.stage("object").unwrap());
    for (x, y, px) in out.image.enumerate_pixels() {
        let want = if object.get(x, y) { obj } else { table };
        assert_eq!(px, want.get_pixel(x, y));
    }
}

#[test]
fn baseline_is_deterministic_and_needs_object() {
    let (spec, cam, mesh) = scene();
    let fb = rasterize(&spec, &cam, &mesh, None);
    let a = texture_inpainting_baseline(&fb, &prompt(), &params(), &MockBackend::new()).unwrap();
    let b = texture_inpainting_baseline(&fb, &prompt(), &params(), &MockBackend::new()).unwrap();
    assert_eq!(a.image, b.image);
    let empty = Framebuffer::empty(SIZE, SIZE);
    assert!(matches!(
        texture_inpainting_baseline(&empty, &prompt(), &params(), &MockBackend::new()),
        Err(DiffusionError::ObjectNotVisible)
    ));
    assert!(matches!(
        texture_two_stage(&empty, &prompt(), &params(), &MockBackend::new(), 16, 8),
        Err(DiffusionError::ObjectNotVisible)
    ));
}
