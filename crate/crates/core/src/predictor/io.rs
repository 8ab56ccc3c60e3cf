//! Model persistence: a single JSON document carrying the format version,
//! role, config, normalization parameters, and weight tensors as row-major
//! decimal arrays. The decimal encoding round-trips every f64 bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lstm::LstmLayerParams;
use super::model::EncoderDecoderModel;
use super::{ModelConfig, NormParams, PredictorError, Role};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    role: Role,
    config: ModelConfig,
    norm: NormParams,
    enc1: LstmLayerParams,
    enc2: LstmLayerParams,
    dec1: LstmLayerParams,
    dec2: LstmLayerParams,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

/// Serializes a model to its JSON document.
pub fn model_to_json(model: &EncoderDecoderModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        role: model.role,
        config: model.config.clone(),
        norm: model.norm.clone(),
        enc1: model.enc1.clone(),
        enc2: model.enc2.clone(),
        dec1: model.dec1.clone(),
        dec2: model.dec2.clone(),
        head_w: model.head_w.clone(),
        head_b: model.head_b.clone(),
    };
    serde_json::to_string(&file).expect("model serialization")
}

/// Parses a model JSON document, checking the format version before the
/// full structure and validating tensor shapes afterwards.
pub fn model_from_json(json: &str) -> Result<EncoderDecoderModel, PredictorError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| PredictorError::Format(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| PredictorError::Format("missing format_version".into()))?
        as u32;
    if found != FORMAT_VERSION {
        return Err(PredictorError::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| PredictorError::Format(e.to_string()))?;
    let model = EncoderDecoderModel {
        role: file.role,
        config: file.config,
        norm: file.norm,
        enc1: file.enc1,
        enc2: file.enc2,
        dec1: file.dec1,
        dec2: file.dec2,
        head_w: file.head_w,
        head_b: file.head_b,
    };
    if !model.shapes_consistent() {
        return Err(PredictorError::Format("tensor shapes do not chain".into()));
    }
    model.config.validate(model.role)?;
    Ok(model)
}

pub fn save_model(model: &EncoderDecoderModel, path: &Path) -> Result<(), PredictorError> {
    fs::write(path, model_to_json(model))
        .map_err(|e| PredictorError::Format(format!("write {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<EncoderDecoderModel, PredictorError> {
    let json = fs::read_to_string(path)
        .map_err(|e| PredictorError::Format(format!("read {}: {e}", path.display())))?;
    model_from_json(&json)
}
