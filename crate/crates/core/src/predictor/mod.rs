//! Encoder-decoder LSTM predictors: forward pass, backpropagation through
//! time, Adam training, min-max normalization, metrics, and persistence.
//!
//! Three model roles share one architecture (two encoder layers, a repeat
//! vector, two decoder layers, and a time-distributed ReLU head); they
//! differ in input steps and training corpus. A constant-velocity baseline
//! serves as a test oracle.

mod io;
mod lstm;
mod model;
mod train;

pub use io::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use lstm::{lstm_cell_step, LayerGrads, LstmLayerParams};
pub use model::{batch_gradients, batch_loss, EncoderDecoderModel, ModelGrads};
pub use train::{adam_step, eval_rmse, train, AdamParams, AdamState, Dataset};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FeatureWindow, TrackState, FEATURE_COUNT};

#[derive(Error, Debug, PartialEq)]
pub enum PredictorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error("model format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
}

/// Which predictor a model implements. The role pins the input window
/// length: 4 steps for the pedestrian, 10 for both vehicle maneuvers.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pedestrian,
    VehicleThrough,
    VehicleLeft,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Pedestrian, Role::VehicleThrough, Role::VehicleLeft];

    pub fn input_steps(self) -> usize {
        match self {
            Role::Pedestrian => 4,
            Role::VehicleThrough | Role::VehicleLeft => 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Pedestrian => "pedestrian",
            Role::VehicleThrough => "vehicle_through",
            Role::VehicleLeft => "vehicle_left",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "pedestrian" => Some(Role::Pedestrian),
            "vehicle_through" => Some(Role::VehicleThrough),
            "vehicle_left" => Some(Role::VehicleLeft),
            _ => None,
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_steps: usize,
    pub output_steps: usize,
    pub features_in: usize,
    pub enc1_units: usize,
    pub enc2_units: usize,
    pub dec_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size configuration for a role: 128/128 encoder units, 64-unit
    /// decoder layers, Adam at 0.01.
    pub fn for_role(role: Role) -> Self {
        Self {
            input_steps: role.input_steps(),
            output_steps: 8,
            features_in: FEATURE_COUNT,
            enc1_units: 128,
            enc2_units: 128,
            dec_units: 64,
            learning_rate: 0.01,
            epochs: 60,
            batch_size: 32,
            seed: 7,
        }
    }

    /// Small configuration for fast tests; same topology, fewer units.
    pub fn reduced(role: Role, enc1: usize, enc2: usize, dec: usize) -> Self {
        Self {
            enc1_units: enc1,
            enc2_units: enc2,
            dec_units: dec,
            ..Self::for_role(role)
        }
    }

    pub fn validate(&self, role: Role) -> Result<(), PredictorError> {
        if self.input_steps != role.input_steps() {
            return Err(PredictorError::Config(format!(
                "role {} requires {} input steps, config has {}",
                role.as_str(),
                role.input_steps(),
                self.input_steps
            )));
        }
        if self.features_in != FEATURE_COUNT {
            return Err(PredictorError::Config(format!(
                "features_in must be {FEATURE_COUNT}"
            )));
        }
        let counts = [
            self.input_steps,
            self.output_steps,
            self.enc1_units,
            self.enc2_units,
            self.dec_units,
            self.batch_size,
            self.epochs,
        ];
        let lr_ok = self.learning_rate.is_finite() && self.learning_rate > 0.0;
        if counts.contains(&0) || !lr_ok {
            return Err(PredictorError::Config(
                "counts must be positive and learning rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature min-max bounds for the 8 input features plus the output
/// distance channel. Degenerate features (max = min) normalize to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub feat_min: [f64; FEATURE_COUNT],
    pub feat_max: [f64; FEATURE_COUNT],
    pub out_min: f64,
    pub out_max: f64,
}

fn norm_value(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (x - min) / (max - min)
    } else {
        0.0
    }
}

impl NormParams {
    /// Pass-through parameters (unit range on every channel); handy in tests.
    pub fn identity() -> Self {
        Self {
            feat_min: [0.0; FEATURE_COUNT],
            feat_max: [1.0; FEATURE_COUNT],
            out_min: 0.0,
            out_max: 1.0,
        }
    }

    /// Fits bounds over raw windows and raw targets.
    pub fn fit(windows: &[FeatureWindow], targets: &[Vec<f64>]) -> Self {
        let mut p = Self {
            feat_min: [f64::INFINITY; FEATURE_COUNT],
            feat_max: [f64::NEG_INFINITY; FEATURE_COUNT],
            out_min: f64::INFINITY,
            out_max: f64::NEG_INFINITY,
        };
        for w in windows {
            for row in &w.values {
                for (j, v) in row.iter().enumerate() {
                    p.feat_min[j] = p.feat_min[j].min(*v);
                    p.feat_max[j] = p.feat_max[j].max(*v);
                }
            }
        }
        for t in targets {
            for v in t {
                p.out_min = p.out_min.min(*v);
                p.out_max = p.out_max.max(*v);
            }
        }
        // Collapse untouched channels to a degenerate (0, 0) pair.
        for j in 0..FEATURE_COUNT {
            if p.feat_min[j] > p.feat_max[j] {
                p.feat_min[j] = 0.0;
                p.feat_max[j] = 0.0;
            }
        }
        if p.out_min > p.out_max {
            p.out_min = 0.0;
            p.out_max = 0.0;
        }
        p
    }

    pub fn normalize_window(&self, w: &FeatureWindow) -> FeatureWindow {
        let values = w
            .values
            .iter()
            .map(|row| {
                let mut out = [0.0; FEATURE_COUNT];
                for (j, v) in row.iter().enumerate() {
                    out[j] = norm_value(*v, self.feat_min[j], self.feat_max[j]);
                }
                out
            })
            .collect();
        FeatureWindow {
            values,
            normalized: true,
        }
    }

    pub fn normalize_targets(&self, targets: &[f64]) -> Vec<f64> {
        targets
            .iter()
            .map(|v| norm_value(*v, self.out_min, self.out_max))
            .collect()
    }

    pub fn denormalize_output(&self, y: f64) -> f64 {
        self.out_min + y * (self.out_max - self.out_min)
    }

    pub fn denormalize_outputs(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| self.denormalize_output(*v)).collect()
    }
}

/// Per-epoch loss trace plus the final denormalized validation RMSE.
/// Losses are mean absolute error in normalized space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    pub final_rmse_m: f64,
}

/// Mean absolute error between equal-length sequences.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, PredictorError> {
    if pred.len() != truth.len() {
        return Err(PredictorError::LengthMismatch {
            a: pred.len(),
            b: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(PredictorError::EmptyInput);
    }
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Root mean square error between equal-length sequences.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, PredictorError> {
    if pred.len() != truth.len() {
        return Err(PredictorError::LengthMismatch {
            a: pred.len(),
            b: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(PredictorError::EmptyInput);
    }
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Constant-velocity baseline: the k-th prediction is `k * dt * latest
/// speed`. Used as an independent oracle for the trained predictors.
pub fn constant_velocity_predict(
    track: &TrackState,
    steps: usize,
    dt: f64,
) -> Result<Vec<f64>, PredictorError> {
    let latest = track.latest().ok_or(PredictorError::EmptyInput)?;
    let v = latest.record.speed_mps;
    Ok((1..=steps).map(|k| k as f64 * dt * v).collect())
}
