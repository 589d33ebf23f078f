//! Static cost accounting: parameters, multiply-accumulates and peak
//! feature-map memory under layer-by-layer execution.
//!
//! Parameter counting includes the BatchNorm moving statistics (four values
//! per channel) and biases only on TCN convolutions, skip projections and the
//! dense head. MACs follow the per-layer convolution formulas; bias additions,
//! normalisation, activations, pooling and residual adds are free. Memory
//! assumes every layer writes its own output buffer and that two consecutive
//! buffers are live at once.

use serde::{Deserialize, Serialize};

use crate::archspec::{self, as_sequence, ArchError, Family, HyperParams, LayerGraph, LayerKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyzeError {
    #[error("graph failed validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    pub output_shape: Vec<usize>,
    pub params: u64,
    pub macs: u64,
    pub output_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub family: Family,
    pub params: u64,
    pub macs: u64,
    pub peak_memory_bytes: u64,
    pub bytes_per_element: u64,
    /// TCN receptive field; absent for graphs without a TCN.
    pub rfs: Option<u64>,
    pub per_layer: Vec<LayerCost>,
}

fn checked(graph: &LayerGraph) -> Result<(), AnalyzeError> {
    graph.validate().map_err(AnalyzeError::Invalid)
}

fn in_shape(graph: &LayerGraph, index: usize) -> &[usize] {
    &graph.layers[graph.layers[index].inputs[0]].output_shape
}

fn product(dims: &[usize]) -> u64 {
    dims.iter().map(|&d| d as u64).product()
}

/// Learned values of one layer.
pub fn layer_params(graph: &LayerGraph, index: usize) -> u64 {
    let layer = &graph.layers[index];
    let cin = || in_shape(graph, index)[0] as u64;
    match layer.kind {
        LayerKind::Conv2DSame { filters, kernel } => (kernel.0 * kernel.1) as u64 * cin() * filters as u64,
        LayerKind::DepthwiseConv2D { multiplier, kernel } => {
            (kernel.0 * kernel.1) as u64 * cin() * multiplier as u64
        }
        LayerKind::SeparableConv2D { filters, kernel } => {
            (kernel.0 * kernel.1) as u64 * cin() + cin() * filters as u64
        }
        LayerKind::CausalConv1D { filters, kernel, .. } => {
            kernel as u64 * cin() * filters as u64 + filters as u64
        }
        LayerKind::PointwiseConv1D { filters } => cin() * filters as u64 + filters as u64,
        LayerKind::Dense { units } => product(in_shape(graph, index)) * units as u64 + units as u64,
        LayerKind::BatchNorm => 4 * cin(),
        _ => 0,
    }
}

/// Multiply-accumulates of one layer.
pub fn layer_macs(graph: &LayerGraph, index: usize) -> u64 {
    let layer = &graph.layers[index];
    let out = &layer.output_shape;
    let cin = || in_shape(graph, index)[0] as u64;
    let spatial = || product(&out[1..]);
    match layer.kind {
        LayerKind::Conv2DSame { filters, kernel } => {
            (kernel.0 * kernel.1) as u64 * cin() * filters as u64 * spatial()
        }
        LayerKind::DepthwiseConv2D { multiplier, kernel } => {
            (kernel.0 * kernel.1) as u64 * cin() * multiplier as u64 * spatial()
        }
        LayerKind::SeparableConv2D { filters, kernel } => {
            ((kernel.0 * kernel.1) as u64 + filters as u64) * cin() * spatial()
        }
        LayerKind::CausalConv1D { filters, kernel, .. } => {
            let width = as_sequence(out).map_or(0, |(_, w)| w) as u64;
            kernel as u64 * cin() * filters as u64 * width
        }
        LayerKind::PointwiseConv1D { filters } => {
            let width = as_sequence(out).map_or(0, |(_, w)| w) as u64;
            cin() * filters as u64 * width
        }
        LayerKind::Dense { units } => product(in_shape(graph, index)) * units as u64,
        _ => 0,
    }
}

pub fn count_params(graph: &LayerGraph) -> Result<u64, AnalyzeError> {
    checked(graph)?;
    Ok((0..graph.len()).map(|i| layer_params(graph, i)).sum())
}

pub fn count_macs(graph: &LayerGraph) -> Result<u64, AnalyzeError> {
    checked(graph)?;
    Ok((0..graph.len()).map(|i| layer_macs(graph, i)).sum())
}

/// Largest sum of two consecutive output buffers (the input counts as
/// buffer 0).
pub fn peak_memory_bytes(graph: &LayerGraph, bytes_per_element: u64) -> Result<u64, AnalyzeError> {
    checked(graph)?;
    let sizes: Vec<u64> = graph
        .layers
        .iter()
        .map(|l| product(&l.output_shape) * bytes_per_element)
        .collect();
    Ok(match sizes.len() {
        1 => sizes[0],
        _ => sizes.windows(2).map(|p| p[0] + p[1]).max().unwrap_or(0),
    })
}

/// Receptive field of a graph's TCN, taken from its causal convolutions.
pub fn graph_receptive_field(graph: &LayerGraph) -> Option<u64> {
    let mut rfs = 1u64;
    let mut any = false;
    for layer in &graph.layers {
        if let LayerKind::CausalConv1D { kernel, dilation, .. } = layer.kind {
            rfs += ((kernel - 1) * dilation) as u64;
            any = true;
        }
    }
    any.then_some(rfs)
}

pub fn analyze(graph: &LayerGraph, family: Family, bytes_per_element: u64) -> Result<CostReport, AnalyzeError> {
    let params = count_params(graph)?;
    let macs = count_macs(graph)?;
    let peak = peak_memory_bytes(graph, bytes_per_element)?;
    let per_layer = graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerCost {
            name: if i == 0 {
                "input".to_string()
            } else {
                format!("L{:02}", archspec::layer_number(i))
            },
            kind: l.kind.name().to_string(),
            output_shape: l.output_shape.clone(),
            params: layer_params(graph, i),
            macs: layer_macs(graph, i),
            output_bytes: product(&l.output_shape) * bytes_per_element,
        })
        .collect();
    Ok(CostReport {
        family,
        params,
        macs,
        peak_memory_bytes: peak,
        bytes_per_element,
        rfs: graph_receptive_field(graph),
        per_layer,
    })
}

/// Builds the graph for `hp` and runs every counter at one byte per element.
pub fn report(hp: &HyperParams, family: Family) -> Result<CostReport, AnalyzeError> {
    let graph = archspec::build(hp, family)?;
    analyze(&graph, family, 1)
}

impl CostReport {
    /// Aligned text rendering: summary `key=value` lines then the per-layer
    /// table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("family={}\n", self.family));
        s.push_str(&format!("params={}\n", self.params));
        s.push_str(&format!("macs={}\n", self.macs));
        s.push_str(&format!("peak_memory_bytes={}\n", self.peak_memory_bytes));
        match self.rfs {
            Some(r) => s.push_str(&format!("rfs={r}\n")),
            None => s.push_str("rfs=n/a\n"),
        }
        s.push('\n');
        s.push_str(&format!(
            "{:<6} {:<18} {:<16} {:>8} {:>12} {:>10}\n",
            "layer", "kind", "output", "params", "macs", "bytes"
        ));
        for l in &self.per_layer {
            s.push_str(&format!(
                "{:<6} {:<18} {:<16} {:>8} {:>12} {:>10}\n",
                l.name,
                l.kind,
                format!("{:?}", l.output_shape),
                l.params,
                l.macs,
                l.output_bytes
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}
