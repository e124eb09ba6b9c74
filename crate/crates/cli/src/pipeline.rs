//! Stage runner: scenes → renders → textured images → COCO export.
//!
//! Every stage reads its inputs from and writes its outputs to the dataset
//! directory, so texturing methods can be swapped without re-rendering and an
//! interrupted run resumes where it stopped. Files are written through a
//! temporary name and renamed, so a present file is always complete.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::{GrayImage, ImageBuffer};
use rayon::prelude::*;
use scenesynth::annotate::{annotate_image, generate_heatmap, AnnotationError, HeatmapConfig, ImageAnnotation};
use scenesynth::catalog::{CategorySchema, MeshCatalog};
use scenesynth::coco::build_coco;
use scenesynth::diffusion::{
    depth_to_control_image, texture_inpainting_baseline, texture_one_stage, texture_three_stage_from_renders,
    texture_two_stage, DiffusionError, Retrying, TexturedImage, TexturingBackend,
};
use scenesynth::geometry::Mesh;
use scenesynth::mask::BinaryMask;
use scenesynth::prompt::{
    classname_prompt, combine_descriptions, sample_caption_prompts, DescriptionPool, PromptSpec, PromptStrategy,
};
use scenesynth::raster::{rasterize, render_depth_without_object, Framebuffer, SceneShading, INSTANCE_OBJECT};
use scenesynth::scene::{compose_scene, SceneSpec};
use scenesynth::seeding;
use scenesynth::texture::{assign_random_textures, TextureLibrary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, TexturingMethod};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Catalog(#[from] scenesynth::catalog::CatalogError),
    #[error(transparent)]
    Scene(#[from] scenesynth::scene::SceneError),
    #[error(transparent)]
    Texture(#[from] scenesynth::texture::TextureError),
    #[error(transparent)]
    Prompt(#[from] scenesynth::prompt::PromptError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Coco(#[from] scenesynth::coco::CocoError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("stage input missing: {0}")]
    MissingInput(String),
    #[error("annotation files of image {image_id} changed during texturing ({file})")]
    ImmutabilityViolation { image_id: u64, file: String },
    #[error("existing manifest {path} was produced by a different config (hash {found}, expected {expected})")]
    ConfigMismatch { path: PathBuf, found: String, expected: String },
    #[error("split size {size} exceeds the {available} available images")]
    SizeExceedsDataset { size: usize, available: usize },
    #[error("split sizes must be positive and strictly ascending")]
    UnsortedSizes,
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `bytes` through a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| file_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| file_err(path, e))
}

fn png_bytes<P, C>(img: &ImageBuffer<P, C>) -> Result<Vec<u8>, PipelineError>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| file_err(Path::new("<png>"), e))?;
    Ok(buf.into_inner())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| file_err(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| file_err(path, e))
}

fn sha256_file(path: &Path) -> Result<[u8; 32], PipelineError> {
    let bytes = fs::read(path).map_err(|e| file_err(path, e))?;
    Ok(Sha256::digest(&bytes).into())
}

/// Dataset directory layout. Paths recorded in manifests are relative to the root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn scene(&self, scene: u64) -> String {
        format!("scenes/scene_{scene:05}.json")
    }

    fn render_file(&self, image_id: u64, name: &str) -> String {
        format!("renders/{image_id:06}/{name}")
    }

    pub fn depth(&self, image_id: u64) -> String {
        self.render_file(image_id, "depth.png")
    }

    pub fn mask(&self, image_id: u64) -> String {
        self.render_file(image_id, "mask.png")
    }

    pub fn control(&self, image_id: u64) -> String {
        self.render_file(image_id, "control.png")
    }

    pub fn annotation(&self, image_id: u64) -> String {
        self.render_file(image_id, "annotation.json")
    }

    pub fn dropped(&self, image_id: u64) -> String {
        self.render_file(image_id, "dropped.json")
    }

    pub fn rgb(&self, method: TexturingMethod, image_id: u64) -> String {
        format!("images/{method}/{image_id:06}.png")
    }

    pub fn manifest(&self, method: TexturingMethod) -> String {
        format!("manifests/{method}.jsonl")
    }

    pub fn texture_timings(&self, method: TexturingMethod) -> String {
        format!("manifests/{method}.timings.jsonl")
    }

    pub fn render_timings(&self) -> String {
        "renders/timings.jsonl".into()
    }

    pub fn coco(&self, method: TexturingMethod) -> String {
        format!("annotations/{method}.coco.json")
    }

    pub fn splits_dir(&self, method: TexturingMethod) -> String {
        format!("splits/{method}")
    }

    pub fn heatmap(&self, image_id: u64, keypoint: &str) -> String {
        format!("heatmaps/{image_id:06}/{keypoint}.png")
    }
}

/// Per-image annotation file written by the render stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub scene_id: u64,
    pub camera_index: u32,
    #[serde(flatten)]
    pub annotation: ImageAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedImage {
    pub image_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordPaths {
    pub rgb: String,
    pub depth: String,
    pub mask: String,
    pub control: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: u64,
    pub scene_id: u64,
    pub camera_index: u32,
    pub texture_method: TexturingMethod,
    pub prompt: Option<PromptSpec>,
    pub seed: u64,
    pub paths: RecordPaths,
    pub status: ImageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    #[serde(rename = "type")]
    pub kind: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub texture_method: TexturingMethod,
    pub images: u64,
    pub records: usize,
    pub failed: usize,
    pub dropped: Vec<DroppedImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = lines
            .next()
            .ok_or_else(|| file_err(path, "empty manifest"))
            .and_then(|l| serde_json::from_str(l).map_err(|e| file_err(path, e)))?;
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(|e| file_err(path, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, records })
    }

    pub fn ok_ids(&self) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.status == ImageStatus::Ok)
            .map(|r| r.image_id)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextureSummary {
    pub textured: usize,
    pub skipped: usize,
    pub failed: usize,
    pub dropped: usize,
}

#[derive(Serialize)]
struct Timing {
    image_id: u64,
    stage: &'static str,
    millis: f64,
}

fn timings_jsonl(mut t: Vec<Timing>) -> String {
    t.sort_by_key(|t| t.image_id);
    t.iter()
        .map(|t| serde_json::to_string(t).expect("timing serializes") + "\n")
        .collect()
}

/// A configured dataset generator.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
    pub catalog: MeshCatalog,
    pub schema: CategorySchema,
}

/// Keypoint names of the first mesh, for categories without a built-in schema.
fn schema_from_meshes(category: &str, catalog: &MeshCatalog) -> CategorySchema {
    let names = catalog
        .entries()
        .first()
        .map(|e| e.mesh.keypoints.keys().cloned().collect())
        .unwrap_or_default();
    CategorySchema {
        name: category.to_string(),
        keypoints: names,
        skeleton: Vec::new(),
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let catalog = match &config.mesh_dir {
            Some(dir) => MeshCatalog::load_dir(dir)?,
            None => MeshCatalog::builtin(&config.category)?,
        };
        let schema = CategorySchema::builtin(&config.category).unwrap_or_else(|_| schema_from_meshes(&config.category, &catalog));
        Ok(Self {
            layout: Layout::new(config.output_root.clone()),
            config,
            catalog,
            schema,
        })
    }

    fn image_id(&self, scene: u64, camera: u32) -> u64 {
        scene * self.config.counts.cameras_per_scene as u64 + camera as u64
    }

    fn split_id(&self, image_id: u64) -> (u64, u32) {
        let c = self.config.counts.cameras_per_scene as u64;
        (image_id / c, (image_id % c) as u32)
    }

    pub fn load_scene(&self, scene: u64) -> Result<SceneSpec, PipelineError> {
        read_json(&self.layout.abs(&self.layout.scene(scene)))
    }

    fn mesh(&self, scene: &SceneSpec) -> Result<&Mesh, PipelineError> {
        Ok(self.catalog.get(&scene.object_ref)?.as_ref())
    }

    /// Composes and stores every scene not yet on disk. Returns the number written.
    pub fn gen_scenes(&self) -> Result<usize, PipelineError> {
        let cfg = self.config.scene_config();
        let written: Vec<bool> = (0..self.config.counts.scenes)
            .into_par_iter()
            .map(|i| {
                let path = self.layout.abs(&self.layout.scene(i));
                if path.exists() {
                    return Ok(false);
                }
                let scene = compose_scene(i, &self.catalog, &cfg, self.config.master_seed)?;
                write_json(&path, &scene)?;
                Ok(true)
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(written.iter().filter(|&&w| w).count())
    }

    fn render_image(&self, scene: &SceneSpec, camera: u32) -> Result<Option<f64>, PipelineError> {
        let id = self.image_id(scene.scene_id, camera);
        let l = &self.layout;
        if l.abs(&l.annotation(id)).exists() || l.abs(&l.dropped(id)).exists() {
            return Ok(None);
        }
        let start = Instant::now();
        let cam = &scene.cameras[camera as usize];
        let mesh = self.mesh(scene)?;
        let fb = rasterize(scene, cam, mesh, None);
        match annotate_image(id, scene, cam, &fb, mesh, &self.schema, self.config.visibility_eps) {
            Ok(annotation) => {
                write_atomic(&l.abs(&l.depth(id)), &png_bytes(&fb.depth_image_u16())?)?;
                write_atomic(&l.abs(&l.mask(id)), &png_bytes(&fb.instance_image())?)?;
                write_atomic(&l.abs(&l.control(id)), &png_bytes(&depth_to_control_image(&fb))?)?;
                // written last: its presence marks the image as rendered
                write_json(
                    &l.abs(&l.annotation(id)),
                    &AnnotationFile {
                        scene_id: scene.scene_id,
                        camera_index: camera,
                        annotation,
                    },
                )?;
            }
            Err(AnnotationError::ObjectNotVisible(_)) => {
                write_json(
                    &l.abs(&l.dropped(id)),
                    &DroppedImage {
                        image_id: id,
                        reason: "object not visible".into(),
                    },
                )?;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Some(start.elapsed().as_secs_f64() * 1e3))
    }

    /// Renders depth, instance mask, control image and annotation for every
    /// image not yet rendered. Returns the number rendered.
    pub fn render(&self) -> Result<usize, PipelineError> {
        let cps = self.config.counts.cameras_per_scene;
        let timings: Vec<Timing> = (0..self.config.counts.scenes)
            .into_par_iter()
            .map(|s| {
                let scene = self.load_scene(s)?;
                let mut out = Vec::new();
                for c in 0..cps {
                    if let Some(ms) = self.render_image(&scene, c)? {
                        out.push(Timing {
                            image_id: self.image_id(s, c),
                            stage: "render",
                            millis: ms,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?
            .into_iter()
            .flatten()
            .collect();
        let n = timings.len();
        if n > 0 {
            append(&self.layout.abs(&self.layout.render_timings()), &timings_jsonl(timings))?;
        }
        Ok(n)
    }

    /// Ids of rendered images and the dropped ones, in id order.
    fn rendered(&self) -> Result<(Vec<u64>, Vec<DroppedImage>), PipelineError> {
        let l = &self.layout;
        let mut ok = Vec::new();
        let mut dropped = Vec::new();
        for id in 0..self.config.counts.images {
            if l.abs(&l.annotation(id)).exists() {
                ok.push(id);
            } else if l.abs(&l.dropped(id)).exists() {
                dropped.push(read_json(&l.abs(&l.dropped(id)))?);
            } else {
                return Err(PipelineError::MissingInput(format!("image {id} has not been rendered")));
            }
        }
        Ok((ok, dropped))
    }

    /// The prompt set for `method`, or an empty list for random texturing.
    pub fn prompts(&self, method: TexturingMethod) -> Result<Vec<PromptSpec>, PipelineError> {
        if !method.uses_backend() {
            return Ok(Vec::new());
        }
        let p = &self.config.texturing.prompts;
        let seed = self.config.master_seed;
        Ok(match p.strategy {
            PromptStrategy::Classname => vec![classname_prompt(&self.schema.name)?],
            PromptStrategy::Captions => {
                let file = p
                    .captions_file
                    .as_ref()
                    .ok_or_else(|| PipelineError::MissingInput("captions_file".into()))?;
                sample_caption_prompts(file, p.count, seed)?
            }
            PromptStrategy::LlmCombined => {
                let pool = match (&p.pool_file, &p.objects_file, &p.surfaces_file) {
                    (Some(f), _, _) => DescriptionPool::from_json_file(f)?,
                    (None, Some(o), Some(s)) => DescriptionPool::from_text_files(o, s)?,
                    _ => return Err(PipelineError::MissingInput("description pool".into())),
                };
                combine_descriptions(&pool, p.count, seed)?
            }
        })
    }

    fn annotation_digests(&self, id: u64) -> Result<Vec<(String, [u8; 32])>, PipelineError> {
        let l = &self.layout;
        [l.depth(id), l.mask(id), l.control(id), l.annotation(id)]
            .into_iter()
            .map(|rel| Ok((rel.clone(), sha256_file(&l.abs(&rel))?)))
            .collect()
    }

    /// Re-renders image `id` and checks the result against the stored depth and mask.
    fn reproduce(&self, id: u64, shading: Option<&SceneShading<'_>>) -> Result<(SceneSpec, Framebuffer), PipelineError> {
        let (scene_idx, cam) = self.split_id(id);
        let scene = self.load_scene(scene_idx)?;
        let fb = rasterize(&scene, &scene.cameras[cam as usize], self.mesh(&scene)?, shading);
        let l = &self.layout;
        let stored_depth = image::open(l.abs(&l.depth(id))).map_err(|e| file_err(&l.abs(&l.depth(id)), e))?;
        let stored_mask = image::open(l.abs(&l.mask(id))).map_err(|e| file_err(&l.abs(&l.mask(id)), e))?;
        if stored_depth.into_luma16() != fb.depth_image_u16() || stored_mask.into_luma8() != fb.instance_image() {
            return Err(PipelineError::ImmutabilityViolation {
                image_id: id,
                file: "render does not reproduce stored depth/mask".into(),
            });
        }
        Ok((scene, fb))
    }

    fn texture_random(&self, id: u64, lib: &TextureLibrary) -> Result<image::RgbImage, PipelineError> {
        let (scene_idx, _) = self.split_id(id);
        let a = assign_random_textures(scene_idx, lib, self.config.master_seed)?;
        let (object, table, environment) = (lib.resolve(&a.object_texture)?, lib.resolve(&a.table_texture)?, lib.resolve(&a.environment)?);
        let shading = SceneShading {
            object: &object,
            table: &table,
            environment: &environment,
            object_tiles_per_meter: a.object_tiles_per_meter,
            table_tiles_per_meter: a.table_tiles_per_meter,
        };
        let (_, fb) = self.reproduce(id, Some(&shading))?;
        Ok(fb.rgb.expect("shaded render has rgb"))
    }

    fn texture_diffusion(
        &self,
        id: u64,
        method: TexturingMethod,
        prompt: &PromptSpec,
        seed: u64,
        backend: &dyn TexturingBackend,
    ) -> Result<Result<TexturedImage, DiffusionError>, PipelineError> {
        let (scene, fb) = self.reproduce(id, None)?;
        let params = self.config.diffusion_params().with_seed(seed);
        let t = &self.config.texturing;
        Ok(match method {
            TexturingMethod::Diff1 => texture_one_stage(&fb, prompt, &params, backend),
            TexturingMethod::Diff2 => texture_two_stage(&fb, prompt, &params, backend, t.bbox_pad, t.dilation),
            TexturingMethod::Diff3 => {
                let cam = &scene.cameras[self.split_id(id).1 as usize];
                let empty = render_depth_without_object(&scene, cam);
                texture_three_stage_from_renders(&fb, &empty, prompt, &params, backend, t.bbox_pad, t.dilation)
            }
            TexturingMethod::InpaintBaseline => texture_inpainting_baseline(&fb, prompt, &params, backend),
            TexturingMethod::Random => unreachable!("random texturing has no backend"),
        })
    }

    fn seed_for(&self, method: TexturingMethod, id: u64) -> u64 {
        let stream = if method.uses_backend() { seeding::DIFFUSION } else { seeding::TEXTURE };
        seeding::derive_seed(self.config.master_seed, stream, id)
    }

    /// Textures every rendered image with `method` and writes the manifest.
    /// Images whose RGB file already exists are kept. Backend failures (after
    /// retries) are recorded as failed images.
    pub fn texture(&self, method: TexturingMethod, backend: Option<&dyn TexturingBackend>) -> Result<TextureSummary, PipelineError> {
        let l = &self.layout;
        let hash = self.config_hash_for(method);
        let manifest_path = l.abs(&l.manifest(method));
        if manifest_path.exists() {
            let existing = Manifest::read(&manifest_path)?;
            if existing.header.config_hash != hash {
                return Err(PipelineError::ConfigMismatch {
                    path: manifest_path,
                    found: existing.header.config_hash,
                    expected: hash,
                });
            }
        }
        let (ids, dropped) = self.rendered()?;
        let prompts = self.prompts(method)?;
        let lib = match &self.config.texture_dir {
            Some(dir) => TextureLibrary::load(dir, self.config.texturing.procedural.clone())?,
            None => TextureLibrary::procedural(self.config.texturing.procedural.clone()),
        };
        let mock;
        let backend: &dyn TexturingBackend = match backend {
            Some(b) => b,
            None => {
                mock = scenesynth::diffusion::MockBackend::new();
                &mock
            }
        };
        let retrying = Retrying::new(backend);

        let work = |id: u64| -> Result<(ManifestRecord, Option<f64>), PipelineError> {
            let (scene_id, camera_index) = self.split_id(id);
            let seed = self.seed_for(method, id);
            let prompt = (!prompts.is_empty()).then(|| prompts[(id % prompts.len() as u64) as usize].clone());
            let rgb_rel = l.rgb(method, id);
            let mut record = ManifestRecord {
                image_id: id,
                scene_id,
                camera_index,
                texture_method: method,
                prompt: prompt.clone(),
                seed,
                paths: RecordPaths {
                    rgb: rgb_rel.clone(),
                    depth: l.depth(id),
                    mask: l.mask(id),
                    control: l.control(id),
                },
                status: ImageStatus::Ok,
                error: None,
            };
            if l.abs(&rgb_rel).exists() {
                return Ok((record, None));
            }
            let before = self.annotation_digests(id)?;
            let start = Instant::now();
            let rgb = match (method, &prompt) {
                (TexturingMethod::Random, _) => Ok(self.texture_random(id, &lib)?),
                (m, Some(p)) => self.texture_diffusion(id, m, p, seed, &retrying)?.map(|t| t.image),
                (_, None) => unreachable!("diffusion methods always have prompts"),
            };
            let millis = start.elapsed().as_secs_f64() * 1e3;
            match rgb {
                Ok(img) => write_atomic(&l.abs(&rgb_rel), &png_bytes(&img)?)?,
                Err(e) => {
                    log::warn!("texturing image {id} failed: {e}");
                    record.status = ImageStatus::Failed;
                    record.error = Some(e.to_string());
                }
            }
            for ((file, a), (_, b)) in before.iter().zip(self.annotation_digests(id)?) {
                if *a != b {
                    return Err(PipelineError::ImmutabilityViolation { image_id: id, file: file.clone() });
                }
            }
            Ok((record, Some(millis)))
        };

        let results: Vec<(ManifestRecord, Option<f64>)> = if method.uses_backend() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.texturing.max_in_flight)
                .build()
                .map_err(|e| PipelineError::MissingInput(e.to_string()))?;
            pool.install(|| ids.par_iter().map(|&id| work(id)).collect::<Result<_, _>>())?
        } else {
            ids.par_iter().map(|&id| work(id)).collect::<Result<_, _>>()?
        };

        let mut summary = TextureSummary {
            dropped: dropped.len(),
            ..Default::default()
        };
        let mut timings = Vec::new();
        let mut records = Vec::with_capacity(results.len());
        for (r, t) in results {
            match (r.status, t) {
                (ImageStatus::Failed, _) => summary.failed += 1,
                (_, Some(_)) => summary.textured += 1,
                (_, None) => summary.skipped += 1,
            }
            if let Some(ms) = t {
                timings.push(Timing { image_id: r.image_id, stage: "texture", millis: ms });
            }
            records.push(r);
        }
        let manifest = Manifest {
            header: ManifestHeader {
                kind: "header".into(),
                schema_version: MANIFEST_SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config_hash: hash,
                texture_method: method,
                images: self.config.counts.images,
                records: records.len(),
                failed: summary.failed,
                dropped,
            },
            records,
        };
        write_atomic(&manifest_path, manifest.to_jsonl().as_bytes())?;
        if !timings.is_empty() {
            append(&l.abs(&l.texture_timings(method)), &timings_jsonl(timings))?;
        }
        Ok(summary)
    }

    /// Config hash recorded in the manifest of `method`.
    pub fn config_hash_for(&self, method: TexturingMethod) -> String {
        let mut c = self.config.clone();
        c.texturing.method = method;
        c.hash()
    }

    pub fn load_annotation(&self, id: u64) -> Result<AnnotationFile, PipelineError> {
        let l = &self.layout;
        let mut file: AnnotationFile = read_json(&l.abs(&l.annotation(id)))?;
        let mask_path = l.abs(&l.mask(id));
        let ids = image::open(&mask_path).map_err(|e| file_err(&mask_path, e))?.into_luma8();
        file.annotation.mask = BinaryMask::from_vec(ids.width(), ids.height(), ids.pixels().map(|p| p.0[0] == INSTANCE_OBJECT).collect());
        Ok(file)
    }

    /// Writes one 8-bit heatmap per keypoint name for every rendered image.
    pub fn write_heatmaps(&self) -> Result<usize, PipelineError> {
        let (ids, _) = self.rendered()?;
        ids.par_iter()
            .map(|&id| {
                let a = self.load_annotation(id)?.annotation;
                let cfg = HeatmapConfig { sigma: self.config.heatmap_sigma, width: a.width, height: a.height };
                let maps = generate_heatmap(&a.keypoints, &self.schema.keypoints, &cfg)?;
                for (name, data) in maps.names.iter().zip(&maps.data) {
                    let px = data.iter().map(|v| (v * 255.0).round() as u8).collect();
                    let img = GrayImage::from_raw(a.width, a.height, px).expect("heatmap size matches the image");
                    write_atomic(&self.layout.abs(&self.layout.heatmap(id, name)), &png_bytes(&img)?)?;
                }
                Ok(())
            })
            .collect::<Result<Vec<_>, PipelineError>>()
            .map(|v| v.len())
    }

    /// Writes the COCO file for the successfully textured images of `method`.
    pub fn export(&self, method: TexturingMethod) -> Result<PathBuf, PipelineError> {
        let l = &self.layout;
        let manifest = Manifest::read(&l.abs(&l.manifest(method)))?;
        let files = manifest
            .records
            .par_iter()
            .filter(|r| r.status == ImageStatus::Ok)
            .map(|r| Ok((r.paths.rgb.clone(), self.load_annotation(r.image_id)?)))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let items: Vec<(String, &ImageAnnotation)> = files.iter().map(|(p, f)| (p.clone(), &f.annotation)).collect();
        let coco = build_coco(&self.schema, &items, self.config.polygon_tolerance)?;
        coco.check_images(&l.root)?;
        let out = l.abs(&l.coco(method));
        if let Some(dir) = out.parent() {
            fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
        }
        coco.write(&out)?;
        Ok(out)
    }

    /// All stages in order.
    pub fn run(&self, backend: Option<&dyn TexturingBackend>) -> Result<TextureSummary, PipelineError> {
        let method = self.config.texturing.method;
        let n = self.gen_scenes()?;
        log::info!("composed {n} scenes");
        let n = self.render()?;
        log::info!("rendered {n} images");
        let summary = self.texture(method, backend)?;
        log::info!("textured {summary:?}");
        let coco = self.export(method)?;
        log::info!("wrote {}", coco.display());
        Ok(summary)
    }
}

fn append(path: &Path, text: &str) -> Result<(), PipelineError> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| file_err(path, e))
}

/// Nested random subsets of `ids`: split `k` holds the first `sizes[k]` ids of
/// one seeded permutation, so every split contains all smaller ones.
pub fn make_splits(ids: &[u64], sizes: &[usize], seed: u64) -> Result<Vec<Vec<u64>>, PipelineError> {
    use rand::seq::SliceRandom;
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PipelineError::UnsortedSizes);
    }
    let max = *sizes.last().expect("non-empty");
    if max > ids.len() {
        return Err(PipelineError::SizeExceedsDataset { size: max, available: ids.len() });
    }
    let mut order = ids.to_vec();
    order.sort_unstable();
    order.dedup();
    if max > order.len() {
        return Err(PipelineError::SizeExceedsDataset { size: max, available: order.len() });
    }
    order.shuffle(&mut seeding::rng(seed, seeding::SPLITS, 0));
    Ok(sizes
        .iter()
        .map(|&n| {
            let mut s = order[..n].to_vec();
            s.sort_unstable();
            s
        })
        .collect())
}

/// Halving schedule ending at `total`: `[total/2^(levels-1), ..., total/2, total]`.
pub fn halving_sizes(total: usize, levels: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..levels).rev().map(|k| total >> k).filter(|&n| n > 0).collect();
    sizes.dedup();
    sizes
}

/// Writes one `split_<n>.txt` (image ids, one per line) per split.
pub fn write_splits(dir: &Path, splits: &[Vec<u64>]) -> Result<Vec<PathBuf>, PipelineError> {
    splits
        .iter()
        .map(|s| {
            let path = dir.join(format!("split_{}.txt", s.len()));
            let text: String = s.iter().map(|id| format!("{id}\n")).collect();
            write_atomic(&path, text.as_bytes())?;
            Ok(path)
        })
        .collect()
}
