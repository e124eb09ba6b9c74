pub mod annotate;
pub mod catalog;
pub mod coco;
pub mod geometry;
pub mod scene;
pub mod seeding;
pub mod texture;
pub mod mask;
pub mod metrics;
pub mod polygon;
pub mod raster;
pub mod prompt;
pub mod diffusion;
