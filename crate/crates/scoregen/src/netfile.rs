//! JSON network files.
//!
//! `{input_dim, output_dim, layers: [{rows, cols, weights | entries, bias, activation}]}`.
//! Small or dense layers store `weights` row-major; large sparse ones store
//! `entries` as `[row, col, value]` triples, since the kernel networks have
//! layers with hundreds of millions of dense slots but well under a million
//! nonzeros.

use std::path::Path;

use scoregen_core::relu::{Layer, ReluNetwork, Sparse};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Layers with at most this many dense slots are always written densely.
const DENSE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(usize, usize, f64)>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerFile>,
}

impl NetworkFile {
    pub fn from_network(net: &ReluNetwork) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                let (rows, cols) = (l.weights.rows(), l.weights.cols());
                let dense = rows * cols <= DENSE_LIMIT || 4 * l.weights.nnz() >= rows * cols;
                LayerFile {
                    rows,
                    cols,
                    weights: dense.then(|| l.weights.to_dense()),
                    entries: (!dense).then(|| l.weights.triplets()),
                    bias: l.bias.clone(),
                    activation: if l.relu { Activation::Relu } else { Activation::Identity },
                }
            })
            .collect();
        Self { input_dim: net.input_dim(), output_dim: net.output_dim(), layers }
    }

    /// Checks shapes and rebuilds the network. Errors name the offending layer.
    pub fn to_network(&self) -> std::result::Result<ReluNetwork, String> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.rows {
                return Err(format!("layer {i}: {} biases for {} rows", l.bias.len(), l.rows));
            }
            let weights = match (&l.weights, &l.entries) {
                (Some(w), None) => {
                    if w.len() != l.rows * l.cols {
                        return Err(format!("layer {i}: {} weights for a {}x{} matrix", w.len(), l.rows, l.cols));
                    }
                    Sparse::from_dense(l.rows, l.cols, w)
                }
                (None, Some(e)) => {
                    let mut rows = vec![Vec::new(); l.rows];
                    for &(r, c, v) in e {
                        if r >= l.rows || c >= l.cols {
                            return Err(format!("layer {i}: entry ({r}, {c}) outside a {}x{} matrix", l.rows, l.cols));
                        }
                        rows[r].push((c, v));
                    }
                    Sparse::from_rows(l.cols, &rows)
                }
                _ => return Err(format!("layer {i}: exactly one of weights and entries is required")),
            };
            layers.push(Layer::new(weights, l.bias.clone(), l.activation == Activation::Relu));
        }
        let net = ReluNetwork::new(self.input_dim, layers).map_err(|e| e.to_string())?;
        if net.output_dim() != self.output_dim {
            return Err(format!("output_dim is {} but the last layer has {} rows", self.output_dim, net.output_dim()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network files serialize")
    }
}

pub fn save(net: &ReluNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, NetworkFile::from_network(net).to_json()).map_err(|e| HarnessError::io(path, e))
}

pub fn load(path: &Path) -> Result<ReluNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| HarnessError::input(path, e.to_string()))?;
    file.to_network().map_err(|m| HarnessError::input(path, m))
}
