use rayon::prelude::*;

use super::trials::{StandardizationStats, TrialSet};
use super::weights::WeightStore;
use super::RuntimeError;
use crate::archspec::{layer_number, LayerGraph, LayerKind};
use crate::kernels::{self, naive, KernelError, BN_EPS, ELU_ALPHA};
use crate::tensor::Tensor;

/// Kernel set used to execute a graph.
pub trait Backend: Sync {
    fn conv2d_same(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError>;
    fn depthwise_conv2d(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError>;
    fn separable_conv2d(&self, x: &Tensor, dw: &Tensor, pw: &Tensor) -> Result<Tensor, KernelError>;
    fn causal_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor, KernelError>;
    fn pointwise_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError>;
    fn batchnorm(&self, x: &Tensor, p: [&Tensor; 4]) -> Result<Tensor, KernelError>;
    fn elu(&self, x: &Tensor) -> Tensor;
    fn avg_pool(&self, x: &Tensor, pool: (usize, usize)) -> Result<Tensor, KernelError>;
    fn dense(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError>;
    fn softmax(&self, x: &Tensor) -> Result<Tensor, KernelError>;
}

/// The row-oriented parallel kernels.
#[derive(Debug, Clone, Copy, Default)]
pub struct FastBackend;

/// The direct loop oracles.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveBackend;

impl Backend for FastBackend {
    fn conv2d_same(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
        kernels::conv2d_same(x, w)
    }
    fn depthwise_conv2d(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
        kernels::depthwise_conv2d(x, w)
    }
    fn separable_conv2d(&self, x: &Tensor, dw: &Tensor, pw: &Tensor) -> Result<Tensor, KernelError> {
        kernels::separable_conv2d(x, dw, pw)
    }
    fn causal_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor, KernelError> {
        kernels::causal_conv1d(x, w, b, dilation)
    }
    fn pointwise_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
        kernels::pointwise_conv1d(x, w, b)
    }
    fn batchnorm(&self, x: &Tensor, [g, b, m, v]: [&Tensor; 4]) -> Result<Tensor, KernelError> {
        kernels::batchnorm_infer(x, g, b, m, v, BN_EPS)
    }
    fn elu(&self, x: &Tensor) -> Tensor {
        kernels::elu(x, ELU_ALPHA)
    }
    fn avg_pool(&self, x: &Tensor, pool: (usize, usize)) -> Result<Tensor, KernelError> {
        kernels::avg_pool(x, pool)
    }
    fn dense(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
        kernels::dense(x, w, b)
    }
    fn softmax(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        kernels::softmax(x)
    }
}

impl Backend for NaiveBackend {
    fn conv2d_same(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
        naive::conv2d_same(x, w)
    }
    fn depthwise_conv2d(&self, x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
        naive::depthwise_conv2d(x, w)
    }
    fn separable_conv2d(&self, x: &Tensor, dw: &Tensor, pw: &Tensor) -> Result<Tensor, KernelError> {
        naive::separable_conv2d(x, dw, pw)
    }
    fn causal_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor, KernelError> {
        naive::causal_conv1d(x, w, b, dilation)
    }
    fn pointwise_conv1d(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
        naive::pointwise_conv1d(x, w, b)
    }
    fn batchnorm(&self, x: &Tensor, [g, b, m, v]: [&Tensor; 4]) -> Result<Tensor, KernelError> {
        naive::batchnorm_infer(x, g, b, m, v, BN_EPS)
    }
    fn elu(&self, x: &Tensor) -> Tensor {
        naive::elu(x, ELU_ALPHA)
    }
    fn avg_pool(&self, x: &Tensor, pool: (usize, usize)) -> Result<Tensor, KernelError> {
        naive::avg_pool(x, pool)
    }
    fn dense(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
        naive::dense(x, w, b)
    }
    fn softmax(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        naive::softmax(x)
    }
}

/// Called with every layer output (the input included) before it is stored.
pub type LayerHook<'a> = dyn FnMut(usize, &LayerKind, &mut Tensor) + 'a;

/// Executes `graph` on one `(C, T)` trial, one buffer per layer output.
/// Buffers are released after their last reader has run.
pub fn run_graph<'w>(
    backend: &dyn Backend,
    graph: &LayerGraph,
    params: &dyn Fn(&str) -> Option<&'w Tensor>,
    trial: &Tensor,
    hook: &mut LayerHook<'_>,
) -> Result<Tensor, RuntimeError> {
    let input_shape = graph.input_shape();
    let (c, t) = match *input_shape {
        [1, c, t] => (c, t),
        _ => (input_shape[0], *input_shape.last().unwrap_or(&0)),
    };
    let found = match *trial.dims() {
        [fc, ft] | [1, fc, ft] => (fc, ft),
        _ => (0, 0),
    };
    if found != (c, t) {
        return Err(RuntimeError::Geometry {
            expected_channels: c,
            expected_samples: t,
            found_channels: found.0,
            found_samples: found.1,
        });
    }

    let mut last_use = vec![0usize; graph.len()];
    for (i, layer) in graph.layers.iter().enumerate() {
        for &src in &layer.inputs {
            last_use[src] = i;
        }
    }

    let mut buffers: Vec<Option<Tensor>> = vec![None; graph.len()];
    for (i, layer) in graph.layers.iter().enumerate() {
        let label = || graph.layer_label(i);
        let param = |role: &str| -> Result<&'w Tensor, RuntimeError> {
            let name = format!("L{:02}.{role}", layer_number(i));
            params(&name).ok_or(RuntimeError::MissingParameter(name))
        };
        let input = |k: usize| buffers[layer.inputs[k]].as_ref().expect("buffer is live until its last use");
        let kernel = |r: Result<Tensor, KernelError>| r.map_err(|source| RuntimeError::Kernel { layer: label(), source });

        let mut out = match &layer.kind {
            LayerKind::Input => trial.clone().reshape(input_shape.to_vec()).expect("geometry checked"),
            LayerKind::Conv2DSame { .. } => kernel(backend.conv2d_same(input(0), param("weight")?))?,
            LayerKind::DepthwiseConv2D { .. } => kernel(backend.depthwise_conv2d(input(0), param("weight")?))?,
            LayerKind::SeparableConv2D { .. } => {
                kernel(backend.separable_conv2d(input(0), param("depthwise")?, param("pointwise")?))?
            }
            LayerKind::BatchNorm => kernel(backend.batchnorm(
                input(0),
                [param("gamma")?, param("beta")?, param("mean")?, param("var")?],
            ))?,
            LayerKind::EluAct => backend.elu(input(0)),
            LayerKind::AvgPool2D { pool } => kernel(backend.avg_pool(input(0), *pool))?,
            LayerKind::Dropout { .. } => input(0).clone(),
            LayerKind::CausalConv1D { dilation, .. } => {
                kernel(backend.causal_conv1d(input(0), param("weight")?, param("bias")?, *dilation))?
            }
            LayerKind::PointwiseConv1D { .. } => {
                kernel(backend.pointwise_conv1d(input(0), param("weight")?, param("bias")?))?
            }
            LayerKind::Add => kernel(kernels::add(input(0), input(1)))?,
            LayerKind::SliceLastTimestep => kernel(kernels::slice_last_timestep(input(0)))?,
            LayerKind::Flatten => kernels::flatten(input(0)),
            LayerKind::Dense { .. } => kernel(backend.dense(input(0), param("weight")?, param("bias")?))?,
            LayerKind::SoftmaxAct => kernel(backend.softmax(input(0)))?,
        };
        hook(i, &layer.kind, &mut out);
        if !out.is_finite() {
            return Err(RuntimeError::NonFinite { layer: label() });
        }
        for &src in &layer.inputs {
            if last_use[src] == i {
                buffers[src] = None;
            }
        }
        buffers[i] = Some(out);
    }
    Ok(buffers.pop().flatten().expect("graph has an output layer"))
}

/// Class probabilities for one `(C, T)` trial. Dropout is the identity.
pub fn forward(graph: &LayerGraph, weights: &WeightStore, trial: &Tensor) -> Result<Tensor, RuntimeError> {
    forward_with(&FastBackend, graph, weights, trial)
}

pub fn forward_with(
    backend: &dyn Backend,
    graph: &LayerGraph,
    weights: &WeightStore,
    trial: &Tensor,
) -> Result<Tensor, RuntimeError> {
    run_graph(backend, graph, &|name| weights.get(name), trial, &mut |_, _, _| {})
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f32>,
}

impl Prediction {
    pub(crate) fn from_probs(p: Tensor) -> Self {
        Self {
            class: p.argmax(),
            probabilities: p.into_data(),
        }
    }
}

pub(crate) fn check_geometry(graph: &LayerGraph, trials: &TrialSet) -> Result<(), RuntimeError> {
    let shape = graph.input_shape();
    let (c, t) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if (trials.channels(), trials.samples()) != (c, t) {
        return Err(RuntimeError::Geometry {
            expected_channels: c,
            expected_samples: t,
            found_channels: trials.channels(),
            found_samples: trials.samples(),
        });
    }
    Ok(())
}

/// Runs every trial (optionally standardized first). Trials are processed
/// in parallel; results are returned in input order.
pub fn predict_batch(
    graph: &LayerGraph,
    weights: &WeightStore,
    trials: &TrialSet,
    stats: Option<&StandardizationStats>,
) -> Result<Vec<Prediction>, RuntimeError> {
    check_geometry(graph, trials)?;
    let trials = match stats {
        Some(s) => std::borrow::Cow::Owned(trials.standardized(s)?),
        None => std::borrow::Cow::Borrowed(trials),
    };
    (0..trials.n_trials())
        .into_par_iter()
        .map(|i| forward(graph, weights, &trials.trial(i)).map(Prediction::from_probs))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspec::{build_eeg_tcnet, Family, HyperParams};

    fn small_hp() -> HyperParams {
        HyperParams {
            channels: 3,
            samples: 128,
            ..HyperParams::fixed()
        }
    }

    #[test]
    fn constant_network_gives_softmax_of_bias() {
        let hp = small_hp();
        let graph = build_eeg_tcnet(&hp).unwrap();
        let dense_bias = graph.param_specs().into_iter().last().unwrap().name;
        let store = WeightStore::from_fn(hp, Family::EegTcnet, |spec, i| match spec.role {
            "var" => 1.0,
            "bias" if spec.name == dense_bias && i == 0 => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let trial = Tensor::from_fn(vec![3, 128], |i| (i as f32).sin());
        let p = forward(&graph, &store, &trial).unwrap();
        let expected = [0.475_367_2, 0.174_877_6, 0.174_877_6, 0.174_877_6];
        for (a, b) in p.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn geometry_mismatch_is_reported() {
        let hp = small_hp();
        let graph = build_eeg_tcnet(&hp).unwrap();
        let store = WeightStore::from_fn(hp, Family::EegTcnet, |_, _| 0.1).unwrap();
        let err = forward(&graph, &store, &Tensor::zeros(vec![4, 128])).unwrap_err();
        assert!(matches!(err, RuntimeError::Geometry { found_channels: 4, .. }));
    }

    #[test]
    fn non_finite_names_the_layer() {
        let hp = small_hp();
        let graph = build_eeg_tcnet(&hp).unwrap();
        let store = WeightStore::from_fn(hp, Family::EegTcnet, |spec, _| match spec.role {
            "var" => -1.0,
            _ => 0.5,
        })
        .unwrap();
        let err = forward(&graph, &store, &Tensor::filled(vec![3, 128], 1.0)).unwrap_err();
        assert_eq!(err, RuntimeError::NonFinite { layer: "L01 (BatchNorm)".into() });
    }
}
