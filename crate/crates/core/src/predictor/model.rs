//! The encoder-decoder network: two encoder LSTM layers, a repeat vector
//! feeding two decoder LSTM layers, and a time-distributed ReLU head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{layer_backward, layer_forward, LayerGrads, LayerRun, LstmLayerParams};
use super::{ModelConfig, NormParams, PredictorError, Role};
use crate::ingest::FeatureWindow;

/// A trained (or freshly initialized) predictor. Immutable once built;
/// `forward` may run concurrently from any number of threads.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderDecoderModel {
    pub role: Role,
    pub config: ModelConfig,
    pub norm: NormParams,
    pub enc1: LstmLayerParams,
    pub enc2: LstmLayerParams,
    pub dec1: LstmLayerParams,
    pub dec2: LstmLayerParams,
    /// Dense head mapping each decoder step to one value: weights over
    /// `dec_units` plus a single bias (kept as a 1-element tensor so the
    /// optimizer treats every parameter uniformly).
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

fn init_tensor(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn init_layer(rng: &mut ChaCha8Rng, input_dim: usize, units: usize) -> LstmLayerParams {
    LstmLayerParams {
        input_dim,
        units,
        w_x: init_tensor(rng, 4 * units * input_dim, input_dim),
        w_h: init_tensor(rng, 4 * units * units, units),
        b: vec![0.0; 4 * units],
    }
}

impl EncoderDecoderModel {
    /// Seeded initialization: weights uniform in +/- 1/sqrt(fan_in), gate
    /// biases zero. The head bias starts at the normalized-output midpoint
    /// so the ReLU head is live from the first step. Identical seeds
    /// produce bitwise-identical models.
    pub fn new_random(
        role: Role,
        config: ModelConfig,
        norm: NormParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let f = config.features_in;
        let (u1, u2, ud) = (config.enc1_units, config.enc2_units, config.dec_units);
        Self {
            role,
            norm,
            enc1: init_layer(rng, f, u1),
            enc2: init_layer(rng, u1, u2),
            dec1: init_layer(rng, u2, ud),
            dec2: init_layer(rng, ud, ud),
            head_w: init_tensor(rng, ud, ud),
            head_b: vec![0.5],
            config,
        }
    }

    /// All-zero parameters; every forward output is `denormalize(0)`.
    pub fn zeros(role: Role, config: ModelConfig, norm: NormParams) -> Self {
        let f = config.features_in;
        let (u1, u2, ud) = (config.enc1_units, config.enc2_units, config.dec_units);
        Self {
            role,
            norm,
            enc1: LstmLayerParams::zeros(f, u1),
            enc2: LstmLayerParams::zeros(u1, u2),
            dec1: LstmLayerParams::zeros(u2, ud),
            dec2: LstmLayerParams::zeros(ud, ud),
            head_w: vec![0.0; ud],
            head_b: vec![0.0],
            config,
        }
    }

    pub fn shapes_consistent(&self) -> bool {
        let c = &self.config;
        self.enc1.input_dim == c.features_in
            && self.enc1.units == c.enc1_units
            && self.enc2.input_dim == c.enc1_units
            && self.enc2.units == c.enc2_units
            && self.dec1.input_dim == c.enc2_units
            && self.dec1.units == c.dec_units
            && self.dec2.input_dim == c.dec_units
            && self.dec2.units == c.dec_units
            && self.head_w.len() == c.dec_units
            && self.head_b.len() == 1
            && self.enc1.shapes_consistent()
            && self.enc2.shapes_consistent()
            && self.dec1.shapes_consistent()
            && self.dec2.shapes_consistent()
    }

    /// Predicted traveled distances in meters for the next
    /// `output_steps` steps. The window must be normalized with this
    /// model's parameters and have `input_steps` rows.
    pub fn forward(&self, window: &FeatureWindow) -> Result<Vec<f64>, PredictorError> {
        if window.values.len() != self.config.input_steps {
            return Err(PredictorError::ShapeMismatch(format!(
                "window has {} rows, model expects {}",
                window.values.len(),
                self.config.input_steps
            )));
        }
        if !window.normalized {
            return Err(PredictorError::ShapeMismatch(
                "window must be normalized".into(),
            ));
        }
        let (y, _) = self.forward_normalized(window);
        Ok(self.norm.denormalize_outputs(&y))
    }

    /// Batched forward: one output row per window.
    pub fn forward_batch(
        &self,
        windows: &[FeatureWindow],
    ) -> Result<Vec<Vec<f64>>, PredictorError> {
        windows.iter().map(|w| self.forward(w)).collect()
    }

    /// Forward pass in normalized space, returning the cache for BPTT.
    pub(crate) fn forward_normalized(&self, window: &FeatureWindow) -> (Vec<f64>, ForwardCache) {
        let inputs: Vec<Vec<f64>> = window.values.iter().map(|r| r.to_vec()).collect();
        let run1 = layer_forward(&self.enc1, &inputs);
        let run2 = layer_forward(
            &self.enc2,
            &run1
                .outputs()
                .iter()
                .map(|h| h.to_vec())
                .collect::<Vec<_>>(),
        );
        let ctx = run2.caches.last().expect("non-empty window").h.clone();
        let dec_inputs: Vec<Vec<f64>> = vec![ctx.clone(); self.config.output_steps];
        let run3 = layer_forward(&self.dec1, &dec_inputs);
        let run4 = layer_forward(
            &self.dec2,
            &run3
                .outputs()
                .iter()
                .map(|h| h.to_vec())
                .collect::<Vec<_>>(),
        );

        let mut preact = Vec::with_capacity(self.config.output_steps);
        let mut y = Vec::with_capacity(self.config.output_steps);
        for cache in &run4.caches {
            let mut u = self.head_b[0];
            for (w, h) in self.head_w.iter().zip(cache.h.iter()) {
                u += w * h;
            }
            preact.push(u);
            y.push(u.max(0.0));
        }
        (
            y,
            ForwardCache {
                run1,
                run2,
                run3,
                run4,
                preact,
            },
        )
    }

    /// Accumulates gradients for one sample given `d_y`, the loss gradient
    /// w.r.t. the normalized outputs.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_y: &[f64], grads: &mut ModelGrads) {
        let steps = self.config.output_steps;
        let ud = self.config.dec_units;

        // Head: y = relu(w . h + b); subgradient at 0 is 0.
        let mut d_run4 = vec![vec![0.0; ud]; steps];
        for k in 0..steps {
            let dy_pre = if cache.preact[k] > 0.0 { d_y[k] } else { 0.0 };
            if dy_pre == 0.0 {
                continue;
            }
            let h = &cache.run4.caches[k].h;
            for j in 0..ud {
                grads.head_w[j] += dy_pre * h[j];
                d_run4[k][j] = dy_pre * self.head_w[j];
            }
            grads.head_b[0] += dy_pre;
        }

        let d_run3 = layer_backward(&self.dec2, &cache.run4, &d_run4, &mut grads.dec2);
        let d_dec_in = layer_backward(&self.dec1, &cache.run3, &d_run3, &mut grads.dec1);

        // The repeat vector broadcast the encoder context to every decoder
        // step; its gradient is the sum over steps, applied at the final
        // encoder step only.
        let u2 = self.config.enc2_units;
        let mut d_ctx = vec![0.0; u2];
        for d in &d_dec_in {
            for (acc, v) in d_ctx.iter_mut().zip(d.iter()) {
                *acc += v;
            }
        }
        let enc_steps = cache.run2.caches.len();
        let mut d_run2 = vec![vec![0.0; u2]; enc_steps];
        d_run2[enc_steps - 1] = d_ctx;

        let d_run1 = layer_backward(&self.enc2, &cache.run2, &d_run2, &mut grads.enc2);
        let _ = layer_backward(&self.enc1, &cache.run1, &d_run1, &mut grads.enc1);
    }

    /// Parameter tensors in a fixed order (shared with [`ModelGrads`] and
    /// the optimizer state).
    pub fn tensors(&self) -> [&Vec<f64>; 14] {
        [
            &self.enc1.w_x,
            &self.enc1.w_h,
            &self.enc1.b,
            &self.enc2.w_x,
            &self.enc2.w_h,
            &self.enc2.b,
            &self.dec1.w_x,
            &self.dec1.w_h,
            &self.dec1.b,
            &self.dec2.w_x,
            &self.dec2.w_h,
            &self.dec2.b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.enc1.w_x,
            &mut self.enc1.w_h,
            &mut self.enc1.b,
            &mut self.enc2.w_x,
            &mut self.enc2.w_h,
            &mut self.enc2.b,
            &mut self.dec1.w_x,
            &mut self.dec1.w_h,
            &mut self.dec1.b,
            &mut self.dec2.w_x,
            &mut self.dec2.w_h,
            &mut self.dec2.b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

pub(crate) struct ForwardCache {
    run1: LayerRun,
    run2: LayerRun,
    run3: LayerRun,
    run4: LayerRun,
    preact: Vec<f64>,
}

/// Gradients for every model parameter, in the same tensor order as
/// [`EncoderDecoderModel::tensors`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub enc1: LayerGrads,
    pub enc2: LayerGrads,
    pub dec1: LayerGrads,
    pub dec2: LayerGrads,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros(model: &EncoderDecoderModel) -> Self {
        Self {
            enc1: LayerGrads::zeros(&model.enc1),
            enc2: LayerGrads::zeros(&model.enc2),
            dec1: LayerGrads::zeros(&model.dec1),
            dec2: LayerGrads::zeros(&model.dec2),
            head_w: vec![0.0; model.head_w.len()],
            head_b: vec![0.0],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 14] {
        [
            &self.enc1.w_x,
            &self.enc1.w_h,
            &self.enc1.b,
            &self.enc2.w_x,
            &self.enc2.w_h,
            &self.enc2.b,
            &self.dec1.w_x,
            &self.dec1.w_h,
            &self.dec1.b,
            &self.dec2.w_x,
            &self.dec2.w_h,
            &self.dec2.b,
            &self.head_w,
            &self.head_b,
        ]
    }

    fn scale(&mut self, factor: f64) {
        for t in [
            &mut self.enc1.w_x,
            &mut self.enc1.w_h,
            &mut self.enc1.b,
            &mut self.enc2.w_x,
            &mut self.enc2.w_h,
            &mut self.enc2.b,
            &mut self.dec1.w_x,
            &mut self.dec1.w_h,
            &mut self.dec1.b,
            &mut self.dec2.w_x,
            &mut self.dec2.w_h,
            &mut self.dec2.b,
            &mut self.head_w,
            &mut self.head_b,
        ] {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Mean absolute error of the model over a normalized batch.
pub fn batch_loss(
    model: &EncoderDecoderModel,
    windows: &[FeatureWindow],
    norm_targets: &[Vec<f64>],
) -> Result<f64, PredictorError> {
    if windows.len() != norm_targets.len() {
        return Err(PredictorError::LengthMismatch {
            a: windows.len(),
            b: norm_targets.len(),
        });
    }
    if windows.is_empty() {
        return Err(PredictorError::EmptyInput);
    }
    let steps = model.config.output_steps as f64;
    let mut total = 0.0;
    for (w, t) in windows.iter().zip(norm_targets.iter()) {
        let (y, _) = model.forward_normalized(w);
        let sum: f64 = y.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).sum();
        total += sum / steps;
    }
    Ok(total / windows.len() as f64)
}

/// Mean MAE loss and its gradients over a normalized batch, computed by
/// backpropagation through time. The MAE subgradient at zero error is 0;
/// a zero-error batch therefore has all-zero gradients.
pub fn batch_gradients(
    model: &EncoderDecoderModel,
    windows: &[FeatureWindow],
    norm_targets: &[Vec<f64>],
) -> Result<(f64, ModelGrads), PredictorError> {
    if windows.len() != norm_targets.len() {
        return Err(PredictorError::LengthMismatch {
            a: windows.len(),
            b: norm_targets.len(),
        });
    }
    if windows.is_empty() {
        return Err(PredictorError::EmptyInput);
    }
    let steps = model.config.output_steps;
    let mut grads = ModelGrads::zeros(model);
    let mut total = 0.0;
    for (w, t) in windows.iter().zip(norm_targets.iter()) {
        let (y, cache) = model.forward_normalized(w);
        let mut d_y = vec![0.0; steps];
        for k in 0..steps {
            let e = y[k] - t[k];
            total += e.abs() / steps as f64;
            d_y[k] = if e > 0.0 {
                1.0
            } else if e < 0.0 {
                -1.0
            } else {
                0.0
            } / steps as f64;
        }
        model.backward(&cache, &d_y, &mut grads);
    }
    let n = windows.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_config() -> ModelConfig {
        ModelConfig::reduced(Role::Pedestrian, 4, 4, 3)
    }

    fn window(rows: usize, seed: u64) -> FeatureWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureWindow {
            values: (0..rows)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                .collect(),
            normalized: true,
        }
    }

    #[test]
    fn forward_shape_contract_per_role() {
        for role in Role::ALL {
            let config = ModelConfig::reduced(role, 4, 4, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let model =
                EncoderDecoderModel::new_random(role, config, NormParams::identity(), &mut rng);
            let w = window(role.input_steps(), 42);
            let y = model.forward(&w).unwrap();
            assert_eq!(y.len(), 8);
        }
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = EncoderDecoderModel::new_random(
            Role::Pedestrian,
            tiny_config(),
            NormParams::identity(),
            &mut rng,
        );
        assert!(matches!(
            model.forward(&window(3, 0)),
            Err(PredictorError::ShapeMismatch(_))
        ));
        let mut raw = window(4, 0);
        raw.normalized = false;
        assert!(matches!(
            model.forward(&raw),
            Err(PredictorError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_model_outputs_denormalize_of_zero() {
        let norm = NormParams {
            feat_min: [0.0; 8],
            feat_max: [1.0; 8],
            out_min: 2.5,
            out_max: 9.0,
        };
        let model = EncoderDecoderModel::zeros(Role::Pedestrian, tiny_config(), norm);
        let y = model.forward(&window(4, 3)).unwrap();
        for v in y {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_forward_matches_single_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = EncoderDecoderModel::new_random(
            Role::Pedestrian,
            tiny_config(),
            NormParams::identity(),
            &mut rng,
        );
        let windows: Vec<FeatureWindow> = (0..4).map(|i| window(4, i)).collect();
        let batch = model.forward_batch(&windows).unwrap();
        for (i, w) in windows.iter().enumerate() {
            let single = model.forward(w).unwrap();
            for (a, b) in batch[i].iter().zip(single.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_error_batch_has_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = EncoderDecoderModel::new_random(
            Role::Pedestrian,
            tiny_config(),
            NormParams::identity(),
            &mut rng,
        );
        let w = window(4, 11);
        let (y, _) = model.forward_normalized(&w);
        let (loss, grads) = batch_gradients(&model, &[w], &[y]).unwrap();
        assert_eq!(loss, 0.0);
        for t in grads.tensors() {
            assert!(t.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn duplicated_sample_leaves_mean_gradient_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = EncoderDecoderModel::new_random(
            Role::Pedestrian,
            tiny_config(),
            NormParams::identity(),
            &mut rng,
        );
        let w = window(4, 13);
        let t = vec![0.3, 0.1, 0.9, 0.5, 0.2, 0.7, 0.4, 0.6];
        let (l1, g1) =
            batch_gradients(&model, std::slice::from_ref(&w), std::slice::from_ref(&t)).unwrap();
        let (l2, g2) =
            batch_gradients(&model, &[w.clone(), w.clone()], &[t.clone(), t.clone()]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // indices drive in-place parameter nudges
    fn gradients_match_finite_differences_on_tiny_model() {
        // Reduced model; full-size fidelity is covered by the acceptance
        // suite with the same oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut model = EncoderDecoderModel::new_random(
            Role::Pedestrian,
            tiny_config(),
            NormParams::identity(),
            &mut rng,
        );
        let windows: Vec<FeatureWindow> = (0..3).map(|i| window(4, 100 + i)).collect();
        let targets: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(200 + i);
                (0..8).map(|_| r.random_range(0.0..1.0)).collect()
            })
            .collect();

        let (_, grads) = batch_gradients(&model, &windows, &targets).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| (*t).clone()).collect();

        let h = 1e-5;
        for ti in 0..14 {
            let len = model.tensors()[ti].len();
            // Spot-check a deterministic subset of each tensor.
            let stride = (len / 7).max(1);
            for j in (0..len).step_by(stride) {
                let orig = model.tensors()[ti][j];
                model.tensors_mut()[ti][j] = orig + h;
                let up = batch_loss(&model, &windows, &targets).unwrap();
                model.tensors_mut()[ti][j] = orig - h;
                let down = batch_loss(&model, &windows, &targets).unwrap();
                model.tensors_mut()[ti][j] = orig;

                let numeric = (up - down) / (2.0 * h);
                let a = analytic[ti][j];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4);
                assert!(rel < 1e-4, "tensor {ti} elem {j}: {a} vs {numeric}");
            }
        }
    }
}
