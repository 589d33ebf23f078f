//! Inference engine and static cost analyzer for the EEG-TCNet family of
//! motor-imagery classifiers.
//!
//! The crate is organised around a single [`LayerGraph`] description that is
//! shared by every stage:
//!
//! - [`archspec`] builds validated graphs from [`HyperParams`] (EEG-TCNet and
//!   the EEGNet baseline) and computes the TCN receptive field.
//! - [`kernels`] holds the numeric layer kernels, each paired with a naive
//!   loop implementation in [`kernels::naive`].
//! - [`analyzer`] counts parameters, MACs and peak feature-map memory.
//! - [`runtime`] executes graphs on trials, handles standardization, 8-bit
//!   simulated quantization and the ETCW / ETRL containers.
//! - [`metrics`] computes accuracy, kappa and per-subject reports.

pub mod analyzer;
pub mod archspec;
pub mod kernels;
pub mod metrics;
pub mod presets;
pub mod runtime;
pub mod tensor;

pub use analyzer::{count_macs, count_params, peak_memory_bytes, report, CostReport, LayerCost};
pub use archspec::{
    build, build_eeg_tcnet, build_eegnet, receptive_field_size, ArchError, Family, HyperParams,
    LayerGraph, LayerKind, LayerSpec,
};
pub use metrics::{accuracy, kappa, EvalReport};
pub use runtime::{
    forward, predict_batch, Prediction, QuantParams, StandardizationStats, TrialSet, WeightStore,
};
pub use tensor::Tensor;
