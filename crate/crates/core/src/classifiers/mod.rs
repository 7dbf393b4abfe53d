//! The six human-likeness classifiers: proxy-label training, uniform batch
//! sampling, per-trajectory majority vote and k-fold model selection.

mod data;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use data::{
    bilinear_resize, downsample_frame, encode_for, majority_vote, sample_batches, BatchStream, EncodedTrajectory,
    Preprocess, SampleRef, SYMBOLIC_STEP_FEATURES,
};
pub use model::{Network, TrainedModel, MODEL_KIND};
pub use train::{
    kfold_cv, kfold_folds, predict_trajectory, sample_logits, synthetic_symbolic, train_classifier, train_unchecked, trajectory_accuracy, CvResult, EpochLog, Hyperparams, TrainRun,
    TrajectoryVerdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "SYM-FF")]
    SymFf,
    #[serde(rename = "SYM-GRU")]
    SymGru,
    #[serde(rename = "VIS-FF")]
    VisFf,
    #[serde(rename = "VIS-GRU")]
    VisGru,
    #[serde(rename = "TD-CNN")]
    TdCnn,
    #[serde(rename = "BC-CNN")]
    BcCnn,
}

/// Which encoding a model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSpace {
    Symbolic,
    Visual,
    TopDown,
    Barcode,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::SymFf,
        ModelKind::SymGru,
        ModelKind::VisFf,
        ModelKind::VisGru,
        ModelKind::TdCnn,
        ModelKind::BcCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SymFf => "SYM-FF",
            ModelKind::SymGru => "SYM-GRU",
            ModelKind::VisFf => "VIS-FF",
            ModelKind::VisGru => "VIS-GRU",
            ModelKind::TdCnn => "TD-CNN",
            ModelKind::BcCnn => "BC-CNN",
        }
    }

    pub fn input_space(self) -> InputSpace {
        match self {
            ModelKind::SymFf | ModelKind::SymGru => InputSpace::Symbolic,
            ModelKind::VisFf | ModelKind::VisGru => InputSpace::Visual,
            ModelKind::TdCnn => InputSpace::TopDown,
            ModelKind::BcCnn => InputSpace::Barcode,
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::SymGru | ModelKind::VisGru)
    }

    pub fn is_image(self) -> bool {
        matches!(self, ModelKind::TdCnn | ModelKind::BcCnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| ClassifierError::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("encoding does not match model {kind}: {detail}")]
    EncodingMismatch { kind: ModelKind, detail: String },
    #[error("generator {0} appears in both training and validation data")]
    Leakage(String),
    #[error("non-finite loss at epoch {epoch}: {log}")]
    NonFinite { epoch: usize, log: String },
    #[error("model load failed: {0}")]
    Load(String),
    #[error(transparent)]
    Nn(#[from] crate::nnkit::NnError),
    #[error(transparent)]
    Encode(#[from] crate::encoders::EncodeError),
}
