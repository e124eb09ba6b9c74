//! Orchestration of the dataset pipeline: configuration, stage runner,
//! texturing HTTP client, mock texturing server, evaluation and previews.

pub mod config;
pub mod evaluate;
pub mod http;
pub mod pipeline;
pub mod preview;

pub use config::{PipelineConfig, TexturingMethod};
pub use pipeline::{Manifest, Pipeline, PipelineError};

use scenesynth::diffusion::{MockBackend, TexturingBackend};

/// Backend from a `--backend` value: `mock`, a base URL, or (when absent)
/// the URL in [`http::BACKEND_URL_ENV`], falling back to the mock.
pub fn make_backend(spec: Option<&str>) -> anyhow::Result<Box<dyn TexturingBackend>> {
    let env = std::env::var(http::BACKEND_URL_ENV).ok();
    match spec.map(str::to_string).or(env).as_deref() {
        None => {
            log::warn!("no texturing backend given; using the built-in mock");
            Ok(Box::new(MockBackend::new()))
        }
        Some("mock") => Ok(Box::new(MockBackend::new())),
        Some(url) => Ok(Box::new(http::HttpBackend::new(url)?)),
    }
}
