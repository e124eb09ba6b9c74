//! Evaluation of prediction files against an exported COCO dataset.

use std::path::{Path, PathBuf};

use scenesynth::coco::CocoDataset;
use scenesynth::metrics::{
    akd, coco_map, keypoint_ground_truth, keypoint_predictions, segmentation_ground_truth, segmentation_predictions,
    AkdConfig, CocoResult, EvaluationReport, MetricsError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Keypoints,
    Segmentation,
}

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Coco(#[from] scenesynth::coco::CocoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

/// Reads a COCO results file (a JSON array of detections).
pub fn read_results(path: &Path) -> Result<Vec<CocoResult>, EvaluateError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvaluateError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| EvaluateError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn evaluate(
    gt: &CocoDataset,
    results: &[CocoResult],
    task: Task,
    name: &str,
    akd_cfg: &AkdConfig,
) -> Result<EvaluationReport, EvaluateError> {
    let mut report = EvaluationReport {
        name: name.to_string(),
        akd: None,
        segmentation: None,
    };
    match task {
        Task::Keypoints => {
            report.akd = Some(akd(&keypoint_ground_truth(gt)?, &keypoint_predictions(gt, results)?, akd_cfg)?);
        }
        Task::Segmentation => {
            report.segmentation = Some(coco_map(&segmentation_ground_truth(gt)?, &segmentation_predictions(gt, results)?)?);
        }
    }
    Ok(report)
}
