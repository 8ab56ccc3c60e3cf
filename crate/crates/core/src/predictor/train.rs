//! Adam optimization and the deterministic training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{batch_gradients, batch_loss, EncoderDecoderModel, ModelGrads};
use super::{rmse, ModelConfig, NormParams, PredictorError, Role, TrainReport};
use crate::ingest::FeatureWindow;

/// Adam hyperparameters; defaults follow the usual 0.9 / 0.999 / 1e-8.
#[derive(Copy, Clone, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per tensor, plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_model(model: &EncoderDecoderModel) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Self {
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update applied in place to every tensor.
pub fn adam_step(
    tensors: &mut [&mut Vec<f64>],
    grads: &[&Vec<f64>],
    state: &mut AdamState,
    hp: &AdamParams,
) {
    assert_eq!(tensors.len(), grads.len());
    assert_eq!(tensors.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    for (i, (params, g)) in tensors.iter_mut().zip(grads.iter()).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..params.len() {
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            params[j] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

fn apply_adam(
    model: &mut EncoderDecoderModel,
    grads: &ModelGrads,
    state: &mut AdamState,
    hp: &AdamParams,
) {
    let mut tensors = model.tensors_mut();
    adam_step(&mut tensors, &grads.tensors(), state, hp);
}

/// Per-epoch multiplier on the base learning rate.
const LR_DECAY: f64 = 0.98;

/// A raw supervised dataset: unnormalized windows paired with meter-space
/// target sequences.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub windows: Vec<FeatureWindow>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn push(&mut self, window: FeatureWindow, targets: Vec<f64>) {
        self.windows.push(window);
        self.targets.push(targets);
    }

    pub fn extend(&mut self, other: Dataset) {
        self.windows.extend(other.windows);
        self.targets.extend(other.targets);
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Trains a model for `role` on a raw dataset.
///
/// Deterministic given the config seed: seeded initialization, a
/// chronological train/validation split (the earliest `split` fraction
/// trains), normalization fitted on the training portion only, and batches
/// taken in order without shuffling. Losses are recorded as normalized MAE;
/// the report's final RMSE is denormalized meters over the validation
/// portion (training portion when the split leaves no validation samples).
pub fn train(
    role: Role,
    config: &ModelConfig,
    dataset: &Dataset,
    split: f64,
) -> Result<(EncoderDecoderModel, TrainReport), PredictorError> {
    config.validate(role)?;
    if dataset.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(PredictorError::Config(format!(
            "split {split} must be in (0, 1)"
        )));
    }
    for w in &dataset.windows {
        if w.values.len() != config.input_steps {
            return Err(PredictorError::ShapeMismatch(format!(
                "window has {} rows, config expects {}",
                w.values.len(),
                config.input_steps
            )));
        }
    }
    for t in &dataset.targets {
        if t.len() != config.output_steps {
            return Err(PredictorError::ShapeMismatch(format!(
                "target has {} steps, config expects {}",
                t.len(),
                config.output_steps
            )));
        }
    }

    let n = dataset.len();
    let n_train = (((n as f64) * split).round() as usize).clamp(1, n);
    let norm = NormParams::fit(&dataset.windows[..n_train], &dataset.targets[..n_train]);

    let norm_windows: Vec<FeatureWindow> = dataset
        .windows
        .iter()
        .map(|w| norm.normalize_window(w))
        .collect();
    let norm_targets: Vec<Vec<f64>> = dataset
        .targets
        .iter()
        .map(|t| norm.normalize_targets(t))
        .collect();
    let (train_w, val_w) = norm_windows.split_at(n_train);
    let (train_t, val_t) = norm_targets.split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = EncoderDecoderModel::new_random(role, config.clone(), norm, &mut rng);
    let mut adam = AdamState::for_model(&model);

    let mut train_mae = Vec::with_capacity(config.epochs);
    let mut val_mae = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        // The MAE subgradient keeps a constant magnitude near the optimum,
        // so a fixed rate leaves Adam orbiting it; decaying the base rate
        // shrinks that floor.
        let hp = AdamParams::with_lr(config.learning_rate * LR_DECAY.powi(epoch as i32));
        let mut epoch_sum = 0.0;
        let mut start = 0;
        while start < train_w.len() {
            let end = (start + config.batch_size).min(train_w.len());
            let (loss, grads) =
                batch_gradients(&model, &train_w[start..end], &train_t[start..end])?;
            epoch_sum += loss * (end - start) as f64;
            apply_adam(&mut model, &grads, &mut adam, &hp);
            start = end;
        }
        let epoch_train = epoch_sum / train_w.len() as f64;
        let epoch_val = if val_w.is_empty() {
            epoch_train
        } else {
            batch_loss(&model, val_w, val_t)?
        };
        train_mae.push(epoch_train);
        val_mae.push(epoch_val);
    }

    let (rmse_w, rmse_t) = if val_w.is_empty() {
        (&dataset.windows[..n_train], &dataset.targets[..n_train])
    } else {
        (&dataset.windows[n_train..], &dataset.targets[n_train..])
    };
    let final_rmse_m = eval_rmse(&model, rmse_w, rmse_t)?;

    Ok((
        model,
        TrainReport {
            seed: config.seed,
            train_mae,
            val_mae,
            final_rmse_m,
        },
    ))
}

/// Denormalized RMSE of a model over raw windows and meter-space targets.
pub fn eval_rmse(
    model: &EncoderDecoderModel,
    windows: &[FeatureWindow],
    targets: &[Vec<f64>],
) -> Result<f64, PredictorError> {
    if windows.len() != targets.len() {
        return Err(PredictorError::LengthMismatch {
            a: windows.len(),
            b: targets.len(),
        });
    }
    if windows.is_empty() {
        return Err(PredictorError::EmptyInput);
    }
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for (w, t) in windows.iter().zip(targets.iter()) {
        let normalized = model.norm.normalize_window(w);
        preds.extend(model.forward(&normalized)?);
        truth.extend_from_slice(t);
    }
    rmse(&preds, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FEATURE_COUNT;

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut p = vec![1.0];
        let g = vec![0.37];
        let mut tensors = [&mut p];
        let mut state = AdamState {
            t: 0,
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
        };
        adam_step(&mut tensors, &[&g], &mut state, &AdamParams::with_lr(0.01));
        // Bias-corrected first step is lr * g / (|g| + tiny) ~ lr * sign(g).
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6, "got {}", p[0]);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut p = vec![0.5, -0.25];
        let g = vec![0.0, 0.0];
        let mut state = AdamState {
            t: 0,
            m: vec![vec![0.0; 2]],
            v: vec![vec![0.0; 2]],
        };
        for _ in 0..5 {
            let mut tensors = [&mut p];
            adam_step(&mut tensors, &[&g], &mut state, &AdamParams::with_lr(0.01));
        }
        assert_eq!(p, vec![0.5, -0.25]);
    }

    #[test]
    fn adam_matches_scalar_recurrence_oracle() {
        let (b1, b2, eps, lr, g) = (0.9, 0.999, 1e-8, 0.01, -0.8);
        let mut p = vec![0.2];
        let mut state = AdamState {
            t: 0,
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
        };
        // Hand-rolled two-step recurrence.
        let mut m = 0.0;
        let mut v = 0.0;
        let mut expect = 0.2;
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t as i32));
            let vh = v / (1.0 - f64::powi(b2, t as i32));
            expect -= lr * mh / (vh.sqrt() + eps);

            let grads = vec![g];
            let mut tensors = [&mut p];
            adam_step(
                &mut tensors,
                &[&grads],
                &mut state,
                &AdamParams::with_lr(lr),
            );
        }
        assert!((p[0] - expect).abs() < 1e-12, "{} vs {expect}", p[0]);
    }

    fn constant_speed_dataset(n: usize, speed: f64, input_steps: usize) -> Dataset {
        // Rows: speed plus a window-relative distance ramp; other channels 0.
        let mut ds = Dataset::default();
        for _ in 0..n {
            let mut row = [0.0; FEATURE_COUNT];
            row[0] = speed;
            let values: Vec<[f64; FEATURE_COUNT]> = (0..input_steps)
                .map(|i| {
                    let mut r = row;
                    r[7] = speed * i as f64;
                    r
                })
                .collect();
            ds.push(
                FeatureWindow {
                    values,
                    normalized: false,
                },
                (1..=8).map(|k| speed * k as f64).collect(),
            );
        }
        ds
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let config = ModelConfig {
            epochs: 3,
            ..ModelConfig::reduced(Role::Pedestrian, 6, 6, 4)
        };
        let ds = constant_speed_dataset(10, 1.4, 4);
        let (m1, r1) = train(Role::Pedestrian, &config, &ds, 0.8).unwrap();
        let (m2, r2) = train(Role::Pedestrian, &config, &ds, 0.8).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn training_learns_constant_speed_motion() {
        let config = ModelConfig {
            epochs: 200,
            batch_size: 8,
            ..ModelConfig::reduced(Role::Pedestrian, 32, 32, 16)
        };
        let ds = constant_speed_dataset(12, 1.4, 4);
        let (model, report) = train(Role::Pedestrian, &config, &ds, 0.8).unwrap();

        assert_eq!(report.train_mae.len(), config.epochs);
        assert!(report.train_mae.last().unwrap() <= report.train_mae.first().unwrap());
        assert!(
            report.final_rmse_m <= 0.05,
            "rmse {} m",
            report.final_rmse_m
        );

        // Constant-velocity oracle: targets are exactly speed * k.
        let probe = constant_speed_dataset(1, 1.4, 4);
        let normalized = model.norm.normalize_window(&probe.windows[0]);
        let y = model.forward(&normalized).unwrap();
        for (k, v) in y.iter().enumerate() {
            let expect = 1.4 * (k + 1) as f64;
            assert!((v - expect).abs() < 0.1, "step {}: {v} vs {expect}", k + 1);
        }
    }

    #[test]
    fn train_rejects_empty_and_bad_split() {
        let config = ModelConfig::reduced(Role::Pedestrian, 4, 4, 3);
        assert!(matches!(
            train(Role::Pedestrian, &config, &Dataset::default(), 0.8),
            Err(PredictorError::EmptyDataset)
        ));
        let ds = constant_speed_dataset(4, 1.4, 4);
        assert!(matches!(
            train(Role::Pedestrian, &config, &ds, 1.0),
            Err(PredictorError::Config(_))
        ));
    }

    #[test]
    fn eval_rmse_zero_for_perfect_targets() {
        let config = ModelConfig {
            epochs: 2,
            ..ModelConfig::reduced(Role::Pedestrian, 4, 4, 3)
        };
        let ds = constant_speed_dataset(6, 2.0, 4);
        let (model, _) = train(Role::Pedestrian, &config, &ds, 0.5).unwrap();
        // Feed the model's own outputs back as targets.
        let normalized = model.norm.normalize_window(&ds.windows[0]);
        let y = model.forward(&normalized).unwrap();
        let r = eval_rmse(&model, &ds.windows[..1], &[y]).unwrap();
        assert!(r < 1e-12);
    }
}
