//! Self-describing JSON documents for network parameters.
//!
//! Each tensor is stored under its layer name with explicit shape metadata.
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so a save/load cycle reproduces every bit of the payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpParameters, Topology};
use crate::error::{invalid, Result};

pub const FORMAT: &str = "starris.mlp/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDocument {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format: String,
    pub topology: Topology,
    pub activations: Vec<Activation>,
    pub tensors: BTreeMap<String, TensorDocument>,
}

impl NetworkDocument {
    pub fn from_params(params: &MlpParameters) -> Self {
        let tensors = params
            .named_tensors()
            .into_iter()
            .map(|(name, shape, data)| {
                (
                    name,
                    TensorDocument {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            topology: params.topology,
            activations: params.activations(),
            tensors,
        }
    }

    pub fn into_params(self) -> Result<MlpParameters> {
        if self.format != FORMAT {
            return invalid(format!("unknown network format `{}`", self.format));
        }
        let mut params = MlpParameters::zeros(self.topology);
        if params.activations() != self.activations {
            return invalid("activation tags do not match the topology");
        }
        let expected: BTreeMap<String, Vec<usize>> = params
            .named_tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.tensors.len() {
            return invalid("tensor set does not match the topology");
        }
        for (name, slot) in params.named_tensors_mut() {
            let doc = self
                .tensors
                .get(&name)
                .ok_or_else(|| crate::Error::InvalidArgument(format!("missing tensor `{name}`")))?;
            if doc.shape != expected[&name] || doc.data.len() != slot.len() {
                return invalid(format!("tensor `{name}` has the wrong shape"));
            }
            slot.copy_from_slice(&doc.data);
        }
        for layer in &params.layers {
            if let Some(bn) = &layer.norm {
                if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                    return invalid("running variance must be positive");
                }
            }
        }
        Ok(params)
    }
}

pub fn to_json(params: &MlpParameters) -> Result<String> {
    Ok(serde_json::to_string(&NetworkDocument::from_params(params))?)
}

pub fn from_json(text: &str) -> Result<MlpParameters> {
    let doc: NetworkDocument = serde_json::from_str(text)?;
    doc.into_params()
}

pub fn save(params: &MlpParameters, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MlpParameters> {
    from_json(&std::fs::read_to_string(path)?)
}
