//! Hyperparameters, layer graphs and the two network builders.
//!
//! A [`LayerGraph`] is an ordered list of [`LayerSpec`]s. Each layer names the
//! indices of the layers it reads from (always earlier in the list), carries
//! its inferred output shape, and, for TCN layers, the residual block it
//! belongs to. Shapes follow the `(depth, height, width)` convention for the
//! convolutional front-end and `(depth, width)` inside the TCN; a
//! `(depth, 1, width)` map is accepted wherever a sequence is expected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Depth multiplier of the spatial depthwise convolution.
pub const DEPTH_MULTIPLIER: usize = 2;
/// Temporal kernel length of the separable convolution.
pub const SEPARABLE_KERNEL: usize = 16;
/// Width of both average pools (kernel and stride).
pub const POOL_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArchError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("receptive field {rfs} is smaller than the pooled sequence length {required}")]
    ReceptiveFieldTooSmall { rfs: u64, required: usize },
    #[error("shape inference failed at {layer}: {reason}")]
    Shape { layer: String, reason: String },
    #[error("invalid graph: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("bad configuration document: {0}")]
    Config(String),
}

/// Network family a graph belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "eeg_tcnet")]
    EegTcnet,
    #[serde(rename = "eegnet")]
    Eegnet,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::EegTcnet => "eeg_tcnet",
            Family::Eegnet => "eegnet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eeg_tcnet" | "eeg-tcnet" => Ok(Family::EegTcnet),
            "eegnet" => Ok(Family::Eegnet),
            other => Err(ArchError::Config(format!("unknown family `{other}`"))),
        }
    }
}

/// Full hyperparameter vector. Field names on the wire match the symbols
/// used in the architecture tables (`F1`, `K_E`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Temporal filters.
    #[serde(rename = "F1")]
    pub f1: usize,
    /// Pointwise filters of the separable convolution; `2 * F1` when absent.
    #[serde(rename = "F2", default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<usize>,
    /// Temporal kernel length of the first convolution.
    #[serde(rename = "K_E")]
    pub kernel_e: usize,
    /// TCN kernel length.
    #[serde(rename = "K_T")]
    pub kernel_t: usize,
    /// Number of TCN residual blocks.
    #[serde(rename = "L")]
    pub blocks: usize,
    /// TCN filters.
    #[serde(rename = "F_T")]
    pub tcn_filters: usize,
    #[serde(rename = "p_e")]
    pub dropout_e: f64,
    #[serde(rename = "p_t")]
    pub dropout_t: f64,
    pub standardize: bool,
    /// EEG channels.
    #[serde(rename = "C")]
    pub channels: usize,
    /// Time samples per trial.
    #[serde(rename = "T")]
    pub samples: usize,
    pub n_classes: usize,
}

impl HyperParams {
    /// The single configuration used for every subject by the fixed network.
    pub fn fixed() -> Self {
        Self {
            f1: 8,
            f2: Some(16),
            kernel_e: 32,
            kernel_t: 4,
            blocks: 2,
            tcn_filters: 12,
            dropout_e: 0.2,
            dropout_t: 0.3,
            standardize: true,
            channels: 22,
            samples: 1125,
            n_classes: 4,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ArchError> {
        let hp: Self = serde_json::from_str(text).map_err(|e| ArchError::Config(e.to_string()))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hyperparameters always serialize")
    }

    /// Resolved F2.
    pub fn f2(&self) -> usize {
        self.f2.unwrap_or(2 * self.f1)
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let counts = [
            ("F1", self.f1),
            ("F2", self.f2()),
            ("K_E", self.kernel_e),
            ("K_T", self.kernel_t),
            ("L", self.blocks),
            ("F_T", self.tcn_filters),
            ("C", self.channels),
            ("T", self.samples),
            ("n_classes", self.n_classes),
        ];
        let mut problems: Vec<String> = counts
            .iter()
            .filter(|(_, v)| *v == 0)
            .map(|(name, _)| format!("{name} must be at least 1"))
            .collect();
        for (name, p) in [("p_e", self.dropout_e), ("p_t", self.dropout_t)] {
            if !(0.0..1.0).contains(&p) {
                problems.push(format!("{name} = {p} is outside [0, 1)"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ArchError::InvalidHyperParams(problems.join(", ")))
        }
    }
}

/// Receptive field of a stack of `blocks` residual blocks with two causal
/// convolutions each, kernel `kernel` and dilation doubling per block.
pub fn receptive_field_size(kernel: usize, blocks: u32) -> u64 {
    let growth = if blocks >= 63 {
        u64::MAX
    } else {
        (1u64 << blocks) - 1
    };
    (kernel.saturating_sub(1) as u64)
        .saturating_mul(2)
        .saturating_mul(growth)
        .saturating_add(1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    /// 2D convolution with "same" zero padding, no bias.
    Conv2DSame { filters: usize, kernel: (usize, usize) },
    BatchNorm,
    /// Unpadded depthwise convolution, no bias.
    DepthwiseConv2D { multiplier: usize, kernel: (usize, usize) },
    EluAct,
    /// Non-overlapping average pool, stride equal to the kernel.
    AvgPool2D { pool: (usize, usize) },
    /// Depthwise "same" stage followed by 1x1 mixing, no bias.
    SeparableConv2D { filters: usize, kernel: (usize, usize) },
    Dropout { rate: f64 },
    CausalConv1D { filters: usize, kernel: usize, dilation: usize },
    /// 1x1 projection on a residual skip path.
    PointwiseConv1D { filters: usize },
    Add,
    SliceLastTimestep,
    Flatten,
    Dense { units: usize },
    SoftmaxAct,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::Conv2DSame { .. } => "Conv2DSame",
            LayerKind::BatchNorm => "BatchNorm",
            LayerKind::DepthwiseConv2D { .. } => "DepthwiseConv2D",
            LayerKind::EluAct => "EluAct",
            LayerKind::AvgPool2D { .. } => "AvgPool2D",
            LayerKind::SeparableConv2D { .. } => "SeparableConv2D",
            LayerKind::Dropout { .. } => "Dropout",
            LayerKind::CausalConv1D { .. } => "CausalConv1D",
            LayerKind::PointwiseConv1D { .. } => "PointwiseConv1D",
            LayerKind::Add => "Add",
            LayerKind::SliceLastTimestep => "SliceLastTimestep",
            LayerKind::Flatten => "Flatten",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::SoftmaxAct => "SoftmaxAct",
        }
    }

    fn arity(&self) -> usize {
        match self {
            LayerKind::Input => 0,
            LayerKind::Add => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Indices of the layers feeding this one.
    pub inputs: Vec<usize>,
    pub output_shape: Vec<usize>,
    /// Residual block index for TCN layers.
    pub block: Option<usize>,
}

/// One learned tensor of a graph, with its canonical name and extents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub layer: usize,
    pub role: &'static str,
    pub dims: Vec<usize>,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub layers: Vec<LayerSpec>,
    /// `(skip source, add layer)` pairs.
    pub residual_edges: Vec<(usize, usize)>,
    pub n_classes: usize,
}

/// Interprets a shape as a `(depth, width)` sequence.
pub fn as_sequence(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [d, w] => Some((d, w)),
        [d, 1, w] => Some((d, w)),
        _ => None,
    }
}

fn as_map(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [d, h, w] => Some((d, h, w)),
        _ => None,
    }
}

/// Output shape of `kind` applied to `inputs`.
pub fn infer_shape(kind: &LayerKind, inputs: &[&[usize]]) -> Result<Vec<usize>, String> {
    if inputs.len() != kind.arity() {
        return Err(format!(
            "expects {} input(s), got {}",
            kind.arity(),
            inputs.len()
        ));
    }
    let need_map = |s: &[usize]| as_map(s).ok_or_else(|| format!("expects a 3-axis input, got {s:?}"));
    let need_seq = |s: &[usize]| {
        as_sequence(s).ok_or_else(|| format!("expects a sequence input, got {s:?}"))
    };
    let need_vec = |s: &[usize]| match *s {
        [n] => Ok(n),
        _ => Err(format!("expects a vector input, got {s:?}")),
    };
    match kind {
        LayerKind::Input => Err("input layers carry an explicit shape".into()),
        LayerKind::Conv2DSame { filters, kernel } => {
            let (_, h, w) = need_map(inputs[0])?;
            check_kernel(*kernel)?;
            if kernel.0 > h && kernel.0 != 1 {
                return Err(format!("kernel height {} exceeds input height {h}", kernel.0));
            }
            Ok(vec![*filters, h, w])
        }
        LayerKind::BatchNorm | LayerKind::EluAct | LayerKind::Dropout { .. } => {
            Ok(inputs[0].to_vec())
        }
        LayerKind::DepthwiseConv2D { multiplier, kernel } => {
            let (d, h, w) = need_map(inputs[0])?;
            check_kernel(*kernel)?;
            if kernel.0 > h || kernel.1 > w {
                return Err(format!("kernel {kernel:?} larger than input ({h}, {w})"));
            }
            Ok(vec![d * multiplier, h - kernel.0 + 1, w - kernel.1 + 1])
        }
        LayerKind::AvgPool2D { pool } => {
            let (d, h, w) = need_map(inputs[0])?;
            check_kernel(*pool)?;
            if h < pool.0 || w < pool.1 {
                return Err(format!("pool {pool:?} larger than input ({h}, {w})"));
            }
            Ok(vec![d, h / pool.0, w / pool.1])
        }
        LayerKind::SeparableConv2D { filters, kernel } => {
            let (_, h, w) = need_map(inputs[0])?;
            check_kernel(*kernel)?;
            Ok(vec![*filters, h, w])
        }
        LayerKind::CausalConv1D {
            filters,
            kernel,
            dilation,
        } => {
            let (_, w) = need_seq(inputs[0])?;
            if *kernel == 0 || *dilation == 0 {
                return Err("kernel and dilation must be at least 1".into());
            }
            Ok(vec![*filters, w])
        }
        LayerKind::PointwiseConv1D { filters } => {
            let (_, w) = need_seq(inputs[0])?;
            Ok(vec![*filters, w])
        }
        LayerKind::Add => {
            let a = need_seq(inputs[0])?;
            let b = need_seq(inputs[1])?;
            if a != b {
                return Err(format!(
                    "operands differ: depth {} width {} vs depth {} width {}",
                    a.0, a.1, b.0, b.1
                ));
            }
            Ok(vec![a.0, a.1])
        }
        LayerKind::SliceLastTimestep => {
            let (d, w) = need_seq(inputs[0])?;
            if w == 0 {
                return Err("empty sequence".into());
            }
            Ok(vec![d])
        }
        LayerKind::Flatten => Ok(vec![inputs[0].iter().product()]),
        LayerKind::Dense { units } => {
            need_vec(inputs[0])?;
            Ok(vec![*units])
        }
        LayerKind::SoftmaxAct => Ok(vec![need_vec(inputs[0])?]),
    }
}

/// Canonical layer number: zero-based, not counting the input layer.
pub fn layer_number(index: usize) -> usize {
    index.saturating_sub(1)
}

fn layer_label(index: usize, kind: &LayerKind) -> String {
    if index == 0 {
        "Input".to_string()
    } else {
        format!("L{:02} ({})", layer_number(index), kind.name())
    }
}

fn check_kernel(k: (usize, usize)) -> Result<(), String> {
    if k.0 == 0 || k.1 == 0 {
        Err(format!("kernel {k:?} has a zero extent"))
    } else {
        Ok(())
    }
}

impl LayerGraph {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.layers[0].output_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("graph has layers").output_shape
    }

    /// Display label such as `L02 (DepthwiseConv2D)`, numbered like the
    /// canonical parameter names.
    pub fn layer_label(&self, index: usize) -> String {
        layer_label(index, &self.layers[index].kind)
    }

    /// Shape of the first input of layer `index`.
    fn input_of(&self, index: usize) -> &[usize] {
        &self.layers[self.layers[index].inputs[0]].output_shape
    }

    /// Learned tensors of one layer, in canonical order.
    pub fn layer_params(&self, index: usize) -> Vec<ParamSpec> {
        let layer = &self.layers[index];
        let spec = |role: &'static str, dims: Vec<usize>| ParamSpec {
            name: format!("L{:02}.{role}", layer_number(index)),
            layer: index,
            role,
            dims,
        };
        let in_depth = || self.input_of(index)[0];
        match &layer.kind {
            LayerKind::Conv2DSame { filters, kernel } => {
                vec![spec("weight", vec![*filters, in_depth(), kernel.0, kernel.1])]
            }
            LayerKind::DepthwiseConv2D { multiplier, kernel } => {
                vec![spec("weight", vec![in_depth(), *multiplier, kernel.0, kernel.1])]
            }
            LayerKind::SeparableConv2D { filters, kernel } => vec![
                spec("depthwise", vec![in_depth(), 1, kernel.0, kernel.1]),
                spec("pointwise", vec![*filters, in_depth(), 1, 1]),
            ],
            LayerKind::BatchNorm => {
                let d = in_depth();
                ["gamma", "beta", "mean", "var"]
                    .into_iter()
                    .map(|role| spec(role, vec![d]))
                    .collect()
            }
            LayerKind::CausalConv1D {
                filters, kernel, ..
            } => vec![
                spec("weight", vec![*filters, in_depth(), *kernel]),
                spec("bias", vec![*filters]),
            ],
            LayerKind::PointwiseConv1D { filters } => vec![
                spec("weight", vec![*filters, in_depth(), 1]),
                spec("bias", vec![*filters]),
            ],
            LayerKind::Dense { units } => vec![
                spec("weight", vec![*units, self.input_of(index)[0]]),
                spec("bias", vec![*units]),
            ],
            _ => Vec::new(),
        }
    }

    /// Every learned tensor of the graph, in layer order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        (0..self.layers.len())
            .flat_map(|i| self.layer_params(i))
            .collect()
    }

    /// Checks ordering, shapes, residual edges and the dilation schedule.
    /// Every problem found is reported, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut diags = Vec::new();
        if self.layers.is_empty() {
            return Err(vec!["graph has no layers".into()]);
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let label = self.layer_label(i);
            if matches!(layer.kind, LayerKind::Input) != (i == 0) {
                diags.push(format!("{label}: the input layer must be exactly layer 0"));
                continue;
            }
            if layer.inputs.len() != layer.kind.arity() {
                diags.push(format!(
                    "{label}: expects {} input(s), has {}",
                    layer.kind.arity(),
                    layer.inputs.len()
                ));
                continue;
            }
            if let Some(&bad) = layer.inputs.iter().find(|&&src| src >= i) {
                diags.push(format!("{label}: reads layer {bad}, which is not earlier (topological order)"));
                continue;
            }
            if i == 0 {
                if layer.output_shape.contains(&0) || layer.output_shape.is_empty() {
                    diags.push(format!("{label}: empty input shape {:?}", layer.output_shape));
                }
                continue;
            }
            let shapes: Vec<&[usize]> = layer
                .inputs
                .iter()
                .map(|&src| self.layers[src].output_shape.as_slice())
                .collect();
            if matches!(layer.kind, LayerKind::Add) {
                let depths: Vec<_> = shapes.iter().map(|s| as_sequence(s).map(|q| q.0)).collect();
                if let [Some(a), Some(b)] = depths[..] {
                    if a != b {
                        diags.push(format!(
                            "{label}: inputs have depths {a} and {b} and no 1x1 projection reconciles them"
                        ));
                        continue;
                    }
                }
            }
            match infer_shape(&layer.kind, &shapes) {
                Ok(shape) if shape == layer.output_shape => {}
                Ok(shape) => diags.push(format!(
                    "{label}: declared output {:?} but inferred {shape:?}",
                    layer.output_shape
                )),
                Err(reason) => diags.push(format!("{label}: {reason}")),
            }
        }

        match self.layers.last().map(|l| l.output_shape.as_slice()) {
            Some([n]) if *n == self.n_classes => {}
            Some(shape) => diags.push(format!(
                "final output {shape:?} does not match {} classes",
                self.n_classes
            )),
            None => {}
        }

        self.validate_residuals(&mut diags);
        self.validate_dilations(&mut diags);

        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    fn validate_residuals(&self, diags: &mut Vec<String>) {
        for (i, layer) in self.layers.iter().enumerate() {
            if !matches!(layer.kind, LayerKind::Add) {
                continue;
            }
            let edges: Vec<_> = self.residual_edges.iter().filter(|e| e.1 == i).collect();
            if edges.len() != 1 {
                diags.push(format!(
                    "{}: expected exactly one residual edge, found {}",
                    self.layer_label(i),
                    edges.len()
                ));
            }
        }
        for &(src, add) in &self.residual_edges {
            let Some(add_layer) = self.layers.get(add) else {
                diags.push(format!("residual edge ({src}, {add}) points past the graph"));
                continue;
            };
            let label = self.layer_label(add);
            if !matches!(add_layer.kind, LayerKind::Add) {
                diags.push(format!("residual edge ({src}, {add}) does not end at an Add layer"));
                continue;
            }
            if src >= add {
                diags.push(format!("{label}: residual source {src} is not earlier"));
                continue;
            }
            let skip_ok = add_layer.inputs.iter().any(|&inp| {
                inp == src
                    || (matches!(self.layers[inp].kind, LayerKind::PointwiseConv1D { .. })
                        && self.layers[inp].inputs == [src])
            });
            if !skip_ok {
                diags.push(format!(
                    "{label}: neither input is the residual source {} or its projection",
                    self.layer_label(src)
                ));
            }
            let Some(block) = add_layer.block else {
                diags.push(format!("{label}: Add outside a residual block"));
                continue;
            };
            let spans_one = self.layers[src + 1..add]
                .iter()
                .all(|l| l.block == Some(block))
                && self.layers[src].block != Some(block);
            if !spans_one {
                diags.push(format!(
                    "{label}: residual edge from {} does not span exactly block {block}",
                    self.layer_label(src)
                ));
            }
        }
    }

    fn validate_dilations(&self, diags: &mut Vec<String>) {
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerKind::CausalConv1D { dilation, .. } = layer.kind {
                let label = self.layer_label(i);
                if !dilation.is_power_of_two() {
                    diags.push(format!("{label}: non-power-of-two dilation {dilation}"));
                    continue;
                }
                match layer.block {
                    Some(b) if b < usize::BITS as usize && dilation == 1usize << b => {}
                    Some(b) => diags.push(format!(
                        "{label}: dilation {dilation} breaks the schedule 1, 2, 4, ... (block {b} needs {})",
                        1u128 << b.min(127)
                    )),
                    None => diags.push(format!("{label}: causal convolution outside a residual block")),
                }
            }
        }
    }
}

/// Appends layers while running shape inference.
pub struct GraphBuilder {
    layers: Vec<LayerSpec>,
    residual_edges: Vec<(usize, usize)>,
    block: Option<usize>,
}

impl GraphBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            layers: vec![LayerSpec {
                kind: LayerKind::Input,
                inputs: Vec::new(),
                output_shape: input_shape,
                block: None,
            }],
            residual_edges: Vec::new(),
            block: None,
        }
    }

    pub fn last(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn depth_of(&self, index: usize) -> usize {
        self.layers[index].output_shape[0]
    }

    /// Marks subsequent layers as members of residual block `block`.
    pub fn set_block(&mut self, block: Option<usize>) {
        self.block = block;
    }

    pub fn push_from(&mut self, kind: LayerKind, inputs: Vec<usize>) -> Result<usize, ArchError> {
        let index = self.layers.len();
        let shapes: Vec<&[usize]> = inputs
            .iter()
            .map(|&i| self.layers[i].output_shape.as_slice())
            .collect();
        let output_shape = infer_shape(&kind, &shapes).map_err(|reason| ArchError::Shape {
            layer: layer_label(index, &kind),
            reason,
        })?;
        self.layers.push(LayerSpec {
            kind,
            inputs,
            output_shape,
            block: self.block,
        });
        Ok(index)
    }

    /// Appends a layer reading from the previous one.
    pub fn push(&mut self, kind: LayerKind) -> Result<usize, ArchError> {
        let prev = self.last();
        self.push_from(kind, vec![prev])
    }

    pub fn residual(&mut self, source: usize, add: usize) {
        self.residual_edges.push((source, add));
    }

    pub fn finish(self, n_classes: usize) -> LayerGraph {
        LayerGraph {
            layers: self.layers,
            residual_edges: self.residual_edges,
            n_classes,
        }
    }
}

/// Conv2D → BN → DepthwiseConv2D → BN → ELU → AvgPool → Dropout →
/// SeparableConv2D → BN → ELU → AvgPool → Dropout.
fn push_front_end(b: &mut GraphBuilder, hp: &HyperParams) -> Result<(), ArchError> {
    b.push(LayerKind::Conv2DSame {
        filters: hp.f1,
        kernel: (1, hp.kernel_e),
    })?;
    b.push(LayerKind::BatchNorm)?;
    b.push(LayerKind::DepthwiseConv2D {
        multiplier: DEPTH_MULTIPLIER,
        kernel: (hp.channels, 1),
    })?;
    b.push(LayerKind::BatchNorm)?;
    b.push(LayerKind::EluAct)?;
    b.push(LayerKind::AvgPool2D {
        pool: (1, POOL_WIDTH),
    })?;
    b.push(LayerKind::Dropout { rate: hp.dropout_e })?;
    b.push(LayerKind::SeparableConv2D {
        filters: hp.f2(),
        kernel: (1, SEPARABLE_KERNEL),
    })?;
    b.push(LayerKind::BatchNorm)?;
    b.push(LayerKind::EluAct)?;
    b.push(LayerKind::AvgPool2D {
        pool: (1, POOL_WIDTH),
    })?;
    b.push(LayerKind::Dropout { rate: hp.dropout_e })?;
    Ok(())
}

pub fn build_eeg_tcnet(hp: &HyperParams) -> Result<LayerGraph, ArchError> {
    hp.validate()?;
    let mut b = GraphBuilder::new(vec![1, hp.channels, hp.samples]);
    push_front_end(&mut b, hp)?;

    let pooled = as_sequence(&b.layers[b.last()].output_shape)
        .map(|(_, w)| w)
        .unwrap_or(0);
    let rfs = receptive_field_size(hp.kernel_t, hp.blocks.min(u32::MAX as usize) as u32);
    if rfs < pooled as u64 {
        return Err(ArchError::ReceptiveFieldTooSmall {
            rfs,
            required: pooled,
        });
    }

    for block in 0..hp.blocks {
        let source = b.last();
        b.set_block(Some(block));
        let dilation = 1usize
            .checked_shl(block as u32)
            .filter(|&d| d != 0)
            .ok_or_else(|| ArchError::InvalidHyperParams(format!("L = {} is too deep", hp.blocks)))?;
        for _ in 0..2 {
            b.push(LayerKind::CausalConv1D {
                filters: hp.tcn_filters,
                kernel: hp.kernel_t,
                dilation,
            })?;
            b.push(LayerKind::BatchNorm)?;
            b.push(LayerKind::EluAct)?;
            b.push(LayerKind::Dropout { rate: hp.dropout_t })?;
        }
        let main = b.last();
        let skip = if b.depth_of(source) != hp.tcn_filters {
            b.push_from(
                LayerKind::PointwiseConv1D {
                    filters: hp.tcn_filters,
                },
                vec![source],
            )?
        } else {
            source
        };
        let add = b.push_from(LayerKind::Add, vec![main, skip])?;
        b.residual(source, add);
    }
    b.set_block(None);

    b.push(LayerKind::SliceLastTimestep)?;
    b.push(LayerKind::Dense {
        units: hp.n_classes,
    })?;
    b.push(LayerKind::SoftmaxAct)?;
    Ok(b.finish(hp.n_classes))
}

/// EEGNet baseline: the shared front-end, then Flatten → Dense → Softmax.
pub fn build_eegnet(hp: &HyperParams) -> Result<LayerGraph, ArchError> {
    hp.validate()?;
    let mut b = GraphBuilder::new(vec![1, hp.channels, hp.samples]);
    push_front_end(&mut b, hp)?;
    b.push(LayerKind::Flatten)?;
    b.push(LayerKind::Dense {
        units: hp.n_classes,
    })?;
    b.push(LayerKind::SoftmaxAct)?;
    Ok(b.finish(hp.n_classes))
}

pub fn build(hp: &HyperParams, family: Family) -> Result<LayerGraph, ArchError> {
    match family {
        Family::EegTcnet => build_eeg_tcnet(hp),
        Family::Eegnet => build_eegnet(hp),
    }
}
