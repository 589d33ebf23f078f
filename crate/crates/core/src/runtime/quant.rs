//! Simulated 8-bit post-training quantization.
//!
//! Weights are quantized symmetrically per tensor to codes in [−127, 127]
//! with a zero-point of 0. Activations get an asymmetric per-buffer range
//! from the min/max seen on a calibration set (widened to include 0) and are
//! fake-quantized to [−128, 127] wherever an 8-bit engine would store them.
//! Outputs consumed only by a following BatchNorm or ELU are fused into that
//! consumer and stay in full precision, as does the final softmax.
//! Arithmetic stays in floating point.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exec::{check_geometry, run_graph, FastBackend, Prediction};
use super::format::{EtcwContainer, FormatError, StoredTensor};
use super::trials::{StandardizationStats, TrialSet};
use super::weights::{check_names, WeightStore};
use super::RuntimeError;
use crate::archspec::{build, Family, HyperParams, LayerGraph, LayerKind};
use crate::tensor::Tensor;

/// Smallest scale ever used; all-zero tensors and constant activations fall
/// back to it.
pub const MIN_SCALE: f32 = 1e-12;
const WEIGHT_QMAX: f64 = 127.0;
const ACT_QMIN: i32 = -128;
const ACT_QMAX: i32 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QScale {
    pub scale: f32,
    pub zero_point: i32,
}

impl QScale {
    /// Asymmetric int8 range covering `[min, max] ∪ {0}`.
    pub fn from_range(min: f32, max: f32) -> Self {
        let lo = min.min(0.0) as f64;
        let hi = max.max(0.0) as f64;
        let scale = (((hi - lo) / (ACT_QMAX - ACT_QMIN) as f64) as f32).max(MIN_SCALE);
        let zero_point = (ACT_QMIN as f64 - lo / scale as f64).round() as i32;
        Self {
            scale,
            zero_point: zero_point.clamp(ACT_QMIN, ACT_QMAX),
        }
    }

    pub fn quantize(&self, v: f32) -> i8 {
        let q = (v as f64 / self.scale as f64).round() + self.zero_point as f64;
        q.clamp(ACT_QMIN as f64, ACT_QMAX as f64) as i8
    }

    pub fn dequantize(&self, q: i8) -> f32 {
        ((q as i32 - self.zero_point) as f64 * self.scale as f64) as f32
    }

    pub fn fake_quantize(&self, v: f32) -> f32 {
        self.dequantize(self.quantize(v))
    }
}

/// An 8-bit tensor with its per-tensor scale and zero-point.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub dims: Vec<usize>,
    pub codes: Vec<i8>,
    pub scale: f32,
    pub zero_point: i32,
}

impl QTensor {
    pub fn qscale(&self) -> QScale {
        QScale {
            scale: self.scale,
            zero_point: self.zero_point,
        }
    }
}

/// Symmetric per-tensor quantization: `scale = max|w| / 127`.
pub fn quantize_symmetric(t: &Tensor) -> QTensor {
    let max_abs = t.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    let scale = ((max_abs as f64 / WEIGHT_QMAX) as f32).max(MIN_SCALE);
    let codes = t
        .data()
        .iter()
        .map(|&v| (v as f64 / scale as f64).round().clamp(-WEIGHT_QMAX, WEIGHT_QMAX) as i8)
        .collect();
    QTensor {
        dims: t.dims().to_vec(),
        codes,
        scale,
        zero_point: 0,
    }
}

pub fn dequantize(q: &QTensor) -> Tensor {
    let s = q.qscale();
    Tensor::new(q.dims.clone(), q.codes.iter().map(|&c| s.dequantize(c)).collect()).expect("codes match dims")
}

/// Quantized weights of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore8 {
    hp: HyperParams,
    family: Family,
    entries: BTreeMap<String, QTensor>,
}

/// Scales of every weight tensor and every activation buffer (indexed by
/// layer; `None` for the softmax output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub weights: BTreeMap<String, QScale>,
    pub activations: Vec<Option<QScale>>,
}

impl WeightStore8 {
    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn graph(&self) -> LayerGraph {
        build(&self.hp, self.family).expect("store was validated against this graph")
    }

    pub fn get(&self, name: &str) -> Option<&QTensor> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> &BTreeMap<String, QTensor> {
        &self.entries
    }

    /// Float store holding the dequantized weights.
    pub fn dequantized(&self) -> WeightStore {
        let entries = self.entries.iter().map(|(k, q)| (k.clone(), dequantize(q))).collect();
        WeightStore::new(self.hp.clone(), self.family, entries).expect("same names and dims")
    }

    /// ETCW bytes with dtype 1 tensors and the activation calibration in
    /// the metadata.
    pub fn to_bytes(&self, params: &QuantParams) -> Result<Vec<u8>, FormatError> {
        let tensors = self
            .graph()
            .param_specs()
            .into_iter()
            .map(|p| {
                let q = self.entries[&p.name].clone();
                (p.name, StoredTensor::I8(q))
            })
            .collect();
        EtcwContainer::build(&self.hp, self.family, tensors, Some(params.activations.clone())).to_bytes()
    }

    /// Reads a quantized ETCW container back into weights and scales.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, QuantParams), FormatError> {
        let c = EtcwContainer::from_bytes(bytes)?;
        let mut entries = BTreeMap::new();
        for (name, t) in c.tensors {
            match t {
                StoredTensor::I8(q) => {
                    entries.insert(name, q);
                }
                StoredTensor::F32(_) => return Err(FormatError::FloatContainer),
            }
        }
        let graph = build(&c.meta.hyperparams, c.meta.family)?;
        check_names(
            &graph.param_specs(),
            entries.iter().map(|(k, q)| (k.as_str(), q.dims.as_slice())),
        )?;
        let activations = c
            .meta
            .activations
            .ok_or_else(|| FormatError::BadMeta("quantized container lacks activation scales".into()))?;
        if activations.len() != graph.len() {
            return Err(FormatError::BadMeta(format!(
                "{} activation scales for {} layers",
                activations.len(),
                graph.len()
            )));
        }
        let params = QuantParams {
            weights: entries.iter().map(|(k, q)| (k.clone(), q.qscale())).collect(),
            activations,
        };
        Ok((
            Self {
                hp: c.meta.hyperparams,
                family: c.meta.family,
                entries,
            },
            params,
        ))
    }
}

/// Per-layer `(min, max)` of every buffer over the calibration trials, using
/// the float weights.
pub fn calibrate(
    weights: &WeightStore,
    calibration: &TrialSet,
    stats: Option<&StandardizationStats>,
) -> Result<Vec<(f32, f32)>, RuntimeError> {
    if calibration.is_empty() {
        return Err(RuntimeError::EmptyCalibration);
    }
    let graph = weights.graph();
    check_geometry(&graph, calibration)?;
    let set = match stats {
        Some(s) => calibration.standardized(s)?,
        None => calibration.clone(),
    };
    let per_trial: Vec<Vec<(f32, f32)>> = (0..set.n_trials())
        .into_par_iter()
        .map(|i| {
            let mut ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); graph.len()];
            run_graph(
                &FastBackend,
                &graph,
                &|name| weights.get(name),
                &set.trial(i),
                &mut |layer, _, out| {
                    let r = &mut ranges[layer];
                    for &v in out.data() {
                        r.0 = r.0.min(v);
                        r.1 = r.1.max(v);
                    }
                },
            )?;
            Ok(ranges)
        })
        .collect::<Result<_, RuntimeError>>()?;
    let mut ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); graph.len()];
    for trial in per_trial {
        for (acc, r) in ranges.iter_mut().zip(trial) {
            acc.0 = acc.0.min(r.0);
            acc.1 = acc.1.max(r.1);
        }
    }
    Ok(ranges)
}

/// True when layer `index` feeds exactly one consumer and that consumer is a
/// BatchNorm or ELU, so an integer engine would keep it in the accumulator.
fn is_fused(graph: &LayerGraph, index: usize) -> bool {
    let mut consumers = graph.layers.iter().filter(|l| l.inputs.contains(&index));
    match (consumers.next(), consumers.next()) {
        (Some(only), None) => matches!(only.kind, LayerKind::BatchNorm | LayerKind::EluAct),
        _ => false,
    }
}

/// Quantizes every weight tensor and calibrates activation ranges.
pub fn quantize_weights(
    weights: &WeightStore,
    calibration: &TrialSet,
    stats: Option<&StandardizationStats>,
) -> Result<(WeightStore8, QuantParams), RuntimeError> {
    let ranges = calibrate(weights, calibration, stats)?;
    let graph = weights.graph();
    let entries: BTreeMap<String, QTensor> = weights
        .entries()
        .iter()
        .map(|(k, t)| (k.clone(), quantize_symmetric(t)))
        .collect();
    let activations = graph
        .layers
        .iter()
        .zip(ranges)
        .enumerate()
        .map(|(i, (layer, (lo, hi)))| {
            let stored = !matches!(layer.kind, LayerKind::SoftmaxAct) && !is_fused(&graph, i);
            stored.then(|| QScale::from_range(lo, hi))
        })
        .collect();
    let params = QuantParams {
        weights: entries.iter().map(|(k, q)| (k.clone(), q.qscale())).collect(),
        activations,
    };
    Ok((
        WeightStore8 {
            hp: weights.hp().clone(),
            family: weights.family(),
            entries,
        },
        params,
    ))
}

/// Forward pass with dequantized weights and fake-quantized activations.
pub fn forward_quantized(
    graph: &LayerGraph,
    weights: &WeightStore8,
    params: &QuantParams,
    trial: &Tensor,
) -> Result<Tensor, RuntimeError> {
    forward_dequantized(graph, &weights.dequantized(), params, trial)
}

fn forward_dequantized(
    graph: &LayerGraph,
    float: &WeightStore,
    params: &QuantParams,
    trial: &Tensor,
) -> Result<Tensor, RuntimeError> {
    run_graph(&FastBackend, graph, &|name| float.get(name), trial, &mut |layer, _, out| {
        if let Some(Some(q)) = params.activations.get(layer) {
            for v in out.data_mut() {
                *v = q.fake_quantize(*v);
            }
        }
    })
}

pub fn predict_batch_quantized(
    graph: &LayerGraph,
    weights: &WeightStore8,
    params: &QuantParams,
    trials: &TrialSet,
    stats: Option<&StandardizationStats>,
) -> Result<Vec<Prediction>, RuntimeError> {
    check_geometry(graph, trials)?;
    let trials = match stats {
        Some(s) => trials.standardized(s)?,
        None => trials.clone(),
    };
    let float = weights.dequantized();
    (0..trials.n_trials())
        .into_par_iter()
        .map(|i| forward_dequantized(graph, &float, params, &trials.trial(i)).map(Prediction::from_probs))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_endpoints() {
        let q = quantize_symmetric(&Tensor::new(vec![2], vec![-1.0, 1.0]).unwrap());
        assert_eq!(q.scale, 1.0 / 127.0);
        assert_eq!(q.codes, vec![-127, 127]);
        assert_eq!(q.zero_point, 0);
    }

    #[test]
    fn lattice_values_are_exact() {
        let scale = 0.03125f32;
        let codes: Vec<i32> = vec![-127, -64, -1, 0, 5, 90, 127];
        let t = Tensor::new(vec![codes.len()], codes.iter().map(|&c| c as f32 * scale).collect()).unwrap();
        let q = quantize_symmetric(&t);
        assert_eq!(q.scale, scale);
        assert_eq!(dequantize(&q), t);
    }

    #[test]
    fn all_zero_tensor_uses_floor_scale() {
        let q = quantize_symmetric(&Tensor::zeros(vec![3]));
        assert_eq!(q.scale, MIN_SCALE);
        assert!(q.codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn activation_range_includes_zero() {
        let s = QScale::from_range(0.5, 2.0);
        assert_eq!(s.zero_point, -128);
        assert_eq!(s.fake_quantize(0.0), 0.0);
        let s = QScale::from_range(-3.0, 1.0);
        assert!((s.fake_quantize(-3.0) + 3.0).abs() <= s.scale / 2.0 + 1e-6);
        assert!((s.fake_quantize(1.0) - 1.0).abs() <= s.scale / 2.0 + 1e-6);
        assert_eq!(s.quantize(100.0), 127);
    }
}
