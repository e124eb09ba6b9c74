//! Prompt sets for diffusion texturing: fixed class template, sampled image
//! captions, and random object × surface description pairs.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;

/// Join template for object and surface descriptions.
pub const COMBINE_TEMPLATE: &str = "{object}, on {surface}";
/// Background prompt used by the class-name strategy in multi-stage pipelines.
pub const CLASSNAME_BACKGROUND: &str = "A photo of a table";
pub const DEFAULT_PROMPT_COUNT: usize = 5000;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("category name is empty")]
    EmptyCategory,
    #[error("caption file {0} contains no captions")]
    EmptyFile(PathBuf),
    #[error("caption list is empty")]
    NoCaptions,
    #[error("description pool has no {0} descriptions")]
    EmptyPool(&'static str),
    #[error("description subject is empty")]
    EmptySubject,
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    Classname,
    Captions,
    LlmCombined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub object_text: String,
    pub background_text: String,
    pub combined: String,
    pub strategy: PromptStrategy,
    /// Caption line indices, or `[object_index, surface_index]` for combined pools.
    pub source_ids: Vec<usize>,
}

pub fn classname_prompt(category: &str) -> Result<PromptSpec, PromptError> {
    let category = category.trim();
    if category.is_empty() {
        return Err(PromptError::EmptyCategory);
    }
    let text = format!("A photo of a {category}");
    Ok(PromptSpec {
        object_text: text.clone(),
        background_text: CLASSNAME_BACKGROUND.to_string(),
        combined: text,
        strategy: PromptStrategy::Classname,
        source_ids: Vec::new(),
    })
}

/// Non-blank lines of a newline-delimited caption file, with their 0-based line numbers.
pub fn parse_captions(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let l = l.trim();
            (!l.is_empty()).then(|| (i, l.to_string()))
        })
        .collect()
}

fn read(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `n` uniform draws with replacement from the captions in `path`.
pub fn sample_caption_prompts(path: &Path, n: usize, seed: u64) -> Result<Vec<PromptSpec>, PromptError> {
    let captions = parse_captions(&read(path)?);
    if captions.is_empty() {
        return Err(PromptError::EmptyFile(path.to_path_buf()));
    }
    sample_captions(&captions, n, seed)
}

/// Same as [`sample_caption_prompts`] over already-parsed `(line, caption)` pairs.
pub fn sample_captions(captions: &[(usize, String)], n: usize, seed: u64) -> Result<Vec<PromptSpec>, PromptError> {
    if captions.is_empty() {
        return Err(PromptError::NoCaptions);
    }
    let mut rng = seeding::rng(seed, seeding::PROMPTS, 0);
    Ok((0..n)
        .map(|_| {
            let (line, text) = &captions[rng.random_range(0..captions.len())];
            PromptSpec {
                object_text: text.clone(),
                background_text: text.clone(),
                combined: text.clone(),
                strategy: PromptStrategy::Captions,
                source_ids: vec![*line],
            }
        })
        .collect())
}

/// Object and surface descriptions, typically produced offline by a language model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionPool {
    #[serde(alias = "object_descriptions")]
    pub objects: Vec<String>,
    #[serde(alias = "surface_descriptions")]
    pub surfaces: Vec<String>,
}

impl DescriptionPool {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.objects.is_empty() {
            return Err(PromptError::EmptyPool("object"));
        }
        if self.surfaces.is_empty() {
            return Err(PromptError::EmptyPool("surface"));
        }
        Ok(())
    }

    /// Reads `{"objects": [...], "surfaces": [...]}`.
    pub fn from_json_file(path: &Path) -> Result<Self, PromptError> {
        serde_json::from_str(&read(path)?).map_err(|source| PromptError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads two newline-delimited description files.
    pub fn from_text_files(objects: &Path, surfaces: &Path) -> Result<Self, PromptError> {
        let lines = |p: &Path| -> Result<Vec<String>, PromptError> {
            Ok(parse_captions(&read(p)?).into_iter().map(|(_, s)| s).collect())
        };
        Ok(Self {
            objects: lines(objects)?,
            surfaces: lines(surfaces)?,
        })
    }
}

pub fn combine(object: &str, surface: &str) -> String {
    COMBINE_TEMPLATE.replace("{object}", object).replace("{surface}", surface)
}

/// `n` independent uniform (object, surface) pairs.
pub fn combine_descriptions(pool: &DescriptionPool, n: usize, seed: u64) -> Result<Vec<PromptSpec>, PromptError> {
    pool.validate()?;
    let mut rng = seeding::rng(seed, seeding::PROMPTS, 1);
    Ok((0..n)
        .map(|_| {
            let i = rng.random_range(0..pool.objects.len());
            let j = rng.random_range(0..pool.surfaces.len());
            PromptSpec {
                object_text: pool.objects[i].clone(),
                background_text: pool.surfaces[j].clone(),
                combined: combine(&pool.objects[i], &pool.surfaces[j]),
                strategy: PromptStrategy::LlmCombined,
                source_ids: vec![i, j],
            }
        })
        .collect())
}

/// The query text sent to a language model to describe `subject`.
pub fn llm_description_request(subject: &str) -> Result<String, PromptError> {
    if subject.trim().is_empty() {
        return Err(PromptError::EmptySubject);
    }
    Ok(format!(
        "provide a description for {subject}. Include color, patterns, materials and other visual characteristics."
    ))
}
