//! Inference runtime: weight stores, trial sets, pre-processing, graph
//! execution and simulated 8-bit quantization.

mod exec;
pub mod format;
mod quant;
mod trials;
mod weights;

pub use exec::{
    forward, forward_with, predict_batch, run_graph, Backend, FastBackend, LayerHook, NaiveBackend,
    Prediction,
};
pub use format::{
    load_container, load_trials, load_weights, save_trials, save_weights, EtcwContainer, EtcwMeta,
    FormatError, ManifestEntry, StoredTensor, DTYPE_F32, DTYPE_I8, ETCW_MAGIC, ETRL_MAGIC, FORMAT_VERSION,
};
pub use quant::{
    calibrate, dequantize, forward_quantized, predict_batch_quantized, quantize_symmetric, quantize_weights,
    QScale, QTensor, QuantParams, WeightStore8,
};
pub use trials::{
    apply_standardization, extract_window, fit_standardization, StandardizationStats, TrialSet,
    STD_FLOOR, WINDOW_POST_CUE_S, WINDOW_PRE_CUE_S, WINDOW_SAMPLES,
};
pub use weights::WeightStore;

use crate::archspec::ArchError;
use crate::kernels::KernelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("{layer}: {source}")]
    Kernel { layer: String, source: KernelError },
    #[error("non-finite value produced by {layer}")]
    NonFinite { layer: String },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("trial geometry mismatch: expected C={expected_channels}, T={expected_samples}; found C={found_channels}, T={found_samples}")]
    Geometry {
        expected_channels: usize,
        expected_samples: usize,
        found_channels: usize,
        found_samples: usize,
    },
    #[error("trial set is empty")]
    EmptyTrialSet,
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("window [{start}, {end}) is outside the recording of {len} samples")]
    WindowOutOfRange { start: i64, end: i64, len: usize },
    #[error("sampling rate {0} Hz is not supported (expected 250 Hz, no resampling)")]
    WrongSamplingRate(f32),
    #[error("invalid trial set: {0}")]
    InvalidTrials(String),
}
