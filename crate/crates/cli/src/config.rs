//! Pipeline configuration: a single versioned JSON document.

use std::path::{Path, PathBuf};

use scenesynth::diffusion::{DiffusionParams, DEFAULT_BBOX_PAD, DEFAULT_DILATION};
use scenesynth::prompt::{PromptStrategy, DEFAULT_PROMPT_COUNT};
use scenesynth::scene::SceneRandomizationConfig;
use scenesynth::texture::ProceduralConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TexturingMethod {
    Random,
    Diff1,
    Diff2,
    Diff3,
    InpaintBaseline,
}

impl TexturingMethod {
    pub const ALL: [TexturingMethod; 5] = [Self::Random, Self::Diff1, Self::Diff2, Self::Diff3, Self::InpaintBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Diff1 => "diff1",
            Self::Diff2 => "diff2",
            Self::Diff3 => "diff3",
            Self::InpaintBaseline => "inpaint_baseline",
        }
    }

    pub fn uses_backend(self) -> bool {
        self != Self::Random
    }

    /// Backend requests issued per image.
    pub fn requests_per_image(self) -> usize {
        match self {
            Self::Random => 0,
            Self::Diff1 => 1,
            Self::Diff2 | Self::InpaintBaseline => 2,
            Self::Diff3 => 3,
        }
    }
}

impl std::fmt::Display for TexturingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub scenes: u64,
    pub cameras_per_scene: u32,
    pub images: u64,
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            scenes: 2500,
            cameras_per_scene: 2,
            images: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub strategy: PromptStrategy,
    /// Newline-delimited captions (captions strategy).
    pub captions_file: Option<PathBuf>,
    /// JSON `{objects, surfaces}` pool (llm_combined strategy).
    pub pool_file: Option<PathBuf>,
    /// Newline-delimited object / surface descriptions, used when `pool_file` is unset.
    pub objects_file: Option<PathBuf>,
    pub surfaces_file: Option<PathBuf>,
    /// Size of the sampled prompt set; images cycle through it.
    pub count: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            strategy: PromptStrategy::Classname,
            captions_file: None,
            pool_file: None,
            objects_file: None,
            surfaces_file: None,
            count: DEFAULT_PROMPT_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TexturingConfig {
    pub method: TexturingMethod,
    pub params: DiffusionParams,
    pub prompts: PromptConfig,
    pub bbox_pad: u32,
    pub dilation: u32,
    pub max_in_flight: usize,
    pub procedural: ProceduralConfig,
}

impl Default for TexturingConfig {
    fn default() -> Self {
        Self {
            method: TexturingMethod::Random,
            params: DiffusionParams::default(),
            prompts: PromptConfig::default(),
            bbox_pad: DEFAULT_BBOX_PAD,
            dilation: DEFAULT_DILATION,
            max_in_flight: 4,
            procedural: ProceduralConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub version: u32,
    pub category: String,
    /// Directory of `.obj` meshes with keypoint sidecars; built-in meshes when unset.
    pub mesh_dir: Option<PathBuf>,
    /// Texture library root (`textures/`, `envmaps/`); procedural only when unset.
    pub texture_dir: Option<PathBuf>,
    pub counts: Counts,
    pub resolution: u32,
    /// Scene ranges. Its `resolution` and `cameras_per_scene` are taken from the fields above.
    pub scene: SceneRandomizationConfig,
    pub texturing: TexturingConfig,
    pub heatmap_sigma: f64,
    /// Keypoint visibility depth slack in meters.
    pub visibility_eps: f64,
    /// Polygon simplification tolerance in pixels.
    pub polygon_tolerance: f64,
    pub master_seed: u64,
    pub output_root: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            category: "mug".into(),
            mesh_dir: None,
            texture_dir: None,
            counts: Counts::default(),
            resolution: 512,
            scene: SceneRandomizationConfig::default(),
            texturing: TexturingConfig::default(),
            heatmap_sigma: scenesynth::annotate::DEFAULT_HEATMAP_SIGMA,
            visibility_eps: scenesynth::raster::DEFAULT_VISIBILITY_EPS,
            polygon_tolerance: scenesynth::polygon::DEFAULT_TOLERANCE,
            master_seed: 0,
            output_root: PathBuf::from("dataset"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// A small configuration with `scenes` scenes of two cameras each.
    pub fn smoke(scenes: u64) -> Self {
        let mut c = Self::default();
        c.set_scenes(scenes);
        c
    }

    /// Sets the scene count and keeps `images = scenes x cameras_per_scene`.
    pub fn set_scenes(&mut self, scenes: u64) {
        self.counts.scenes = scenes;
        self.counts.images = scenes * self.counts.cameras_per_scene as u64;
    }

    pub fn set_cameras_per_scene(&mut self, cameras: u32) {
        self.counts.cameras_per_scene = cameras;
        self.counts.images = self.counts.scenes * cameras as u64;
    }

    /// Scene ranges with the pipeline-level resolution and camera count applied.
    pub fn scene_config(&self) -> SceneRandomizationConfig {
        SceneRandomizationConfig {
            resolution: self.resolution,
            cameras_per_scene: self.counts.cameras_per_scene,
            ..self.scene.clone()
        }
    }

    /// Diffusion parameters with the working resolution matched to the render resolution.
    pub fn diffusion_params(&self) -> DiffusionParams {
        DiffusionParams {
            resolution: self.resolution,
            ..self.texturing.params.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.category.trim().is_empty() {
            return bad("category is empty");
        }
        if self.mesh_dir.is_none() {
            scenesynth::catalog::CategorySchema::builtin(&self.category)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.counts.scenes == 0 || self.counts.cameras_per_scene == 0 {
            return bad("counts.scenes and counts.cameras_per_scene must be positive");
        }
        if self.counts.images != self.counts.scenes * self.counts.cameras_per_scene as u64 {
            return bad("counts.images must equal counts.scenes * counts.cameras_per_scene");
        }
        if self.resolution == 0 || self.resolution % scenesynth::diffusion::CROP_MULTIPLE != 0 {
            return bad("resolution must be a positive multiple of 8");
        }
        self.scene_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.heatmap_sigma > 0.0) {
            return bad("heatmap_sigma must be positive");
        }
        if !(self.visibility_eps >= 0.0) || !(self.polygon_tolerance >= 0.0) {
            return bad("visibility_eps and polygon_tolerance must be non-negative");
        }
        let t = &self.texturing;
        if t.max_in_flight == 0 {
            return bad("texturing.max_in_flight must be at least 1");
        }
        if t.method.uses_backend() {
            self.diffusion_params()
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let p = &t.prompts;
            if p.count == 0 {
                return bad("texturing.prompts.count must be positive");
            }
            match p.strategy {
                PromptStrategy::Classname => {}
                PromptStrategy::Captions if p.captions_file.is_none() => {
                    return bad("captions strategy requires texturing.prompts.captions_file")
                }
                PromptStrategy::LlmCombined
                    if p.pool_file.is_none() && (p.objects_file.is_none() || p.surfaces_file.is_none()) =>
                {
                    return bad("llm_combined strategy requires pool_file or objects_file + surfaces_file")
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_root`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_root");
        }
        let digest = Sha256::digest(serde_json::to_vec(&v).expect("value serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_paper_scale() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.counts.scenes, c.counts.images, c.resolution), (2500, 5000, 512));
        assert_eq!(c.texturing.params.conditioning_scale, 1.5);
    }

    #[test]
    fn image_count_must_match() {
        let mut c = PipelineConfig::default();
        c.counts.images = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_root() {
        let a = PipelineConfig::smoke(3);
        let mut b = a.clone();
        b.output_root = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"category": "shoe", "master_seed": 4}"#).unwrap();
        assert_eq!(c.counts.scenes, 2500);
        assert_eq!(c.category, "shoe");
    }
}
