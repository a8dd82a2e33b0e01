//! Trainable presentation scorers: a pixel-wise supervised CNN, a late-fusion multi-channel
//! CNN and a GMM-labelled pixel SVM, with a small binary model file format.

mod adapt;
mod gmm;
mod mccnn;
pub mod nn;
mod pixbis;
mod pixel;
mod scorer;
mod svm;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adapt::adapt_first_layer;
pub use gmm::{fit_skin_gmm, GmmFit, Mixture};
pub use mccnn::{McCnnConfig, McCnnNet, HEAD_HIDDEN};
pub use nn::{Activation, Scalar};
pub use pixbis::{bce, pixbis_loss, PixBisConfig, PixBisNet, BCE_CLAMP};
pub use pixel::{
    derive_pixel_labels, face_proxy_mask, pixel_features, score_pixel_svm, train_pixel_scorer,
    LabelThreshold, PixelSvmConfig, SkinPixelModel, SVM_TARGET_WAVELENGTHS,
};
pub use scorer::{Provenance, ScorerConfig, TrainedScorer, MODEL_MAGIC, MODEL_VERSION};
pub use svm::{Svm, SvmParams};
pub use train::{
    aggregate, dev_acer, prepare_input, presentation_inputs, score_presentation, train_model,
    train_network, Adam, EpochStats, TrainConfig, TrainReport,
};

use crate::dataset::DatasetError;
use crate::evalkit::EvalError;
use crate::swirdiff::SwirError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("training failed at epoch {epoch}, batch {batch}: {msg}")]
    Training { epoch: usize, batch: usize, msg: String },
    #[error(transparent)]
    Swir(#[from] SwirError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pixbis,
    Mccnn,
    PixelSvm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Pixbis, ModelKind::Mccnn, ModelKind::PixelSvm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pixbis => "pixbis",
            ModelKind::Mccnn => "mccnn",
            ModelKind::PixelSvm => "pixel-svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pixbis" => Ok(ModelKind::Pixbis),
            "mccnn" => Ok(ModelKind::Mccnn),
            "pixel-svm" | "pixel_svm" => Ok(ModelKind::PixelSvm),
            _ => Err(ModelError::Config(format!(
                "unknown model {s:?} (expected pixbis, mccnn or pixel-svm)"
            ))),
        }
    }
}

/// How per-frame scores combine into one presentation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameAgg {
    #[default]
    Mean,
    Min,
    Median,
}

impl FromStr for FrameAgg {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(FrameAgg::Mean),
            "min" => Ok(FrameAgg::Min),
            "median" => Ok(FrameAgg::Median),
            _ => Err(ModelError::Config(format!(
                "unknown frame aggregation {s:?} (expected mean, min or median)"
            ))),
        }
    }
}

/// A network architecture; parameters live in one flat vector in declaration order.
pub trait Network: Sync {
    fn param_len(&self) -> usize;
    /// `(channels, side)` of the square input.
    fn input_shape(&self) -> (usize, usize);
    fn init(&self, rng: &mut dyn rand::RngCore) -> Vec<f32>;
    fn loss<T: Scalar>(&self, params: &[T], x: &[T], label: T) -> T;
    /// Per-sample loss; its gradient is added into `grad`.
    fn loss_grad<T: Scalar>(&self, params: &[T], x: &[T], label: T, grad: &mut [T]) -> T;
    /// Bonafide score in `[0, 1]`.
    fn score<T: Scalar>(&self, params: &[T], x: &[T]) -> T;
}
