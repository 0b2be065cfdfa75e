//! JSON model files.
//!
//! ```json
//! {"input_dim": 40, "left_context": 2, "right_context": 2, "n_classes": 5,
//!  "layers": [{"activation": "tanh", "in_dim": 200, "out_dim": 16,
//!              "weight": [...row-major out_dim x in_dim...], "bias": [...]}]}
//! ```

use std::fs;
use std::path::Path;

use agekit_core::am::{AcousticModel, Activation, Layer};
use agekit_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    activation: String,
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    input_dim: usize,
    left_context: usize,
    right_context: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_classes: Option<usize>,
    layers: Vec<LayerFile>,
}

pub fn model_to_json(model: &AcousticModel) -> String {
    let file = ModelFile {
        input_dim: model.input_dim(),
        left_context: model.left_context(),
        right_context: model.right_context(),
        n_classes: Some(model.n_classes()),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerFile {
                activation: l.activation.name().to_string(),
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                weight: l.weight.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> std::result::Result<AcousticModel, String> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let activation: Activation = l.activation.parse().map_err(|e: agekit_core::Error| e.to_string())?;
        let weight = Matrix::from_vec(l.out_dim, l.in_dim, l.weight)
            .map_err(|_| format!("layer {i}: weight length does not match {}x{}", l.out_dim, l.in_dim))?;
        layers.push(Layer { weight, bias: l.bias, activation });
    }
    let model = AcousticModel::new(layers, file.input_dim, file.left_context, file.right_context)
        .map_err(|e| e.to_string())?;
    if let Some(n) = file.n_classes {
        if n != model.n_classes() {
            return Err(format!("n_classes is {n} but the final layer has {} outputs", model.n_classes()));
        }
    }
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AcousticModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text).map_err(|m| Error::format(path, m))
}

/// Floats are written in shortest round-trip form, so loading gives back
/// bit-identical parameters.
pub fn save_model(model: &AcousticModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model) + "\n").map_err(|e| Error::io(path, e))
}
