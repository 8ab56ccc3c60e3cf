//! LSTM layer parameters, the cell step, and backpropagation through time
//! for one layer over a sequence.
//!
//! Gate rows are packed i, f, g, o: input gate, forget gate, cell candidate,
//! output gate. Weight matrices are row-major.

use serde::{Deserialize, Serialize};

/// Parameters of one LSTM layer: per-gate input weights `w_x`
/// (`4*units x input_dim`), recurrent weights `w_h` (`4*units x units`) and
/// biases `b` (`4*units`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub units: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            input_dim,
            units,
            w_x: vec![0.0; 4 * units * input_dim],
            w_h: vec![0.0; 4 * units * units],
            b: vec![0.0; 4 * units],
        }
    }

    pub fn shapes_consistent(&self) -> bool {
        self.w_x.len() == 4 * self.units * self.input_dim
            && self.w_h.len() == 4 * self.units * self.units
            && self.b.len() == 4 * self.units
            && self.w_x.iter().all(|v| v.is_finite())
            && self.w_h.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
    }
}

/// Gradients for one layer, same shapes as the parameters.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros(params: &LstmLayerParams) -> Self {
        Self {
            w_x: vec![0.0; params.w_x.len()],
            w_h: vec![0.0; params.w_h.len()],
            b: vec![0.0; params.b.len()],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// out += W x for a row-major `rows x cols` matrix.
fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x.iter()) {
            acc += wv * xv;
        }
        *o += acc;
    }
}

/// out += W^T dz for a row-major `rows x cols` matrix.
fn matvec_transpose_add(w: &[f64], rows: usize, cols: usize, dz: &[f64], out: &mut [f64]) {
    debug_assert_eq!(dz.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for (r, dzr) in dz.iter().enumerate() {
        if *dzr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row.iter()) {
            *o += wv * dzr;
        }
    }
}

/// g += dz (x) x, accumulating the outer product row by row.
fn outer_add(dz: &[f64], x: &[f64], g: &mut [f64]) {
    let cols = x.len();
    for (r, dzr) in dz.iter().enumerate() {
        if *dzr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x.iter()) {
            *gv += dzr * xv;
        }
    }
}

/// Per-step forward cache needed by the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct CellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

fn cell_forward(params: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellCache {
    let u = params.units;
    let mut z = params.b.clone();
    matvec_add(&params.w_x, 4 * u, params.input_dim, x, &mut z);
    matvec_add(&params.w_h, 4 * u, u, h_prev, &mut z);

    let mut i = vec![0.0; u];
    let mut f = vec![0.0; u];
    let mut g = vec![0.0; u];
    let mut o = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut tanh_c = vec![0.0; u];
    let mut h = vec![0.0; u];
    for j in 0..u {
        i[j] = sigmoid(z[j]);
        f[j] = sigmoid(z[u + j]);
        g[j] = z[2 * u + j].tanh();
        o[j] = sigmoid(z[3 * u + j]);
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }
    CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        tanh_c,
        c,
        h,
    }
}

/// One LSTM cell step with the standard gate equations; returns `(h, c)`.
pub fn lstm_cell_step(
    params: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let cache = cell_forward(params, x, h_prev, c_prev);
    (cache.h, cache.c)
}

/// Forward pass of one layer over a full sequence, caching every step.
#[derive(Clone, Debug)]
pub(crate) struct LayerRun {
    pub caches: Vec<CellCache>,
}

impl LayerRun {
    pub fn outputs(&self) -> Vec<&[f64]> {
        self.caches.iter().map(|c| c.h.as_slice()).collect()
    }
}

pub(crate) fn layer_forward(params: &LstmLayerParams, inputs: &[Vec<f64>]) -> LayerRun {
    let u = params.units;
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let cache = cell_forward(params, x, &h, &c);
        h = cache.h.clone();
        c = cache.c.clone();
        caches.push(cache);
    }
    LayerRun { caches }
}

/// Backpropagation through time for one layer.
///
/// `d_outputs[t]` is the loss gradient w.r.t. the step-`t` hidden state from
/// above; parameter gradients accumulate into `grads` and the gradient
/// w.r.t. each step input is returned.
pub(crate) fn layer_backward(
    params: &LstmLayerParams,
    run: &LayerRun,
    d_outputs: &[Vec<f64>],
    grads: &mut LayerGrads,
) -> Vec<Vec<f64>> {
    let u = params.units;
    let steps = run.caches.len();
    debug_assert_eq!(d_outputs.len(), steps);

    let mut d_inputs = vec![vec![0.0; params.input_dim]; steps];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];

    for t in (0..steps).rev() {
        let cache = &run.caches[t];
        for j in 0..u {
            let dh = d_outputs[t][j] + dh_next[j];
            let do_j = dh * cache.tanh_c[j];
            let dc = dc_next[j] + dh * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);

            let di = dc * cache.g[j];
            let df = dc * cache.c_prev[j];
            let dg = dc * cache.i[j];
            dc_next[j] = dc * cache.f[j];

            dz[j] = di * cache.i[j] * (1.0 - cache.i[j]);
            dz[u + j] = df * cache.f[j] * (1.0 - cache.f[j]);
            dz[2 * u + j] = dg * (1.0 - cache.g[j] * cache.g[j]);
            dz[3 * u + j] = do_j * cache.o[j] * (1.0 - cache.o[j]);
        }
        outer_add(&dz, &cache.x, &mut grads.w_x);
        outer_add(&dz, &cache.h_prev, &mut grads.w_h);
        for (gb, d) in grads.b.iter_mut().zip(dz.iter()) {
            *gb += d;
        }
        matvec_transpose_add(&params.w_x, 4 * u, params.input_dim, &dz, &mut d_inputs[t]);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_transpose_add(&params.w_h, 4 * u, u, &dz, &mut dh_next);
    }
    d_inputs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_yield_zero_state() {
        let params = LstmLayerParams::zeros(3, 2);
        let (h, c) = lstm_cell_step(&params, &[1.0, -2.0, 0.5], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_gates_carry_cell_state() {
        // Large forget bias, very negative input-gate bias: c stays c_prev.
        let mut params = LstmLayerParams::zeros(1, 1);
        params.b[0] = -50.0; // input gate closed
        params.b[1] = 50.0; // forget gate open
        let c_prev = vec![0.7];
        let (_, c) = lstm_cell_step(&params, &[1.0], &[0.3], &c_prev);
        assert!((c[0] - 0.7).abs() < 1e-9, "c = {}", c[0]);
    }

    #[test]
    fn scalar_cell_matches_hand_computation() {
        // 1 unit over 1 input with hand-set weights; compare against the
        // gate equations evaluated longhand.
        let params = LstmLayerParams {
            input_dim: 1,
            units: 1,
            w_x: vec![0.5, -0.3, 0.8, 0.2],
            w_h: vec![0.1, 0.4, -0.6, 0.9],
            b: vec![0.05, -0.02, 0.03, 0.07],
        };
        let (x, h_prev, c_prev) = (0.9, -0.4, 0.25);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1 * h_prev + 0.05);
        let f = sig(-0.3 * x + 0.4 * h_prev - 0.02);
        let g = (0.8 * x - 0.6 * h_prev + 0.03).tanh();
        let o = sig(0.2 * x + 0.9 * h_prev + 0.07);
        let c = f * c_prev + i * g;
        let h = o * c.tanh();

        let (h_got, c_got) = lstm_cell_step(&params, &[x], &[h_prev], &[c_prev]);
        assert!((h_got[0] - h).abs() < 1e-12);
        assert!((c_got[0] - c).abs() < 1e-12);
    }

    #[test]
    fn layer_forward_threads_state_through_steps() {
        let params = LstmLayerParams {
            input_dim: 1,
            units: 1,
            w_x: vec![0.5, -0.3, 0.8, 0.2],
            w_h: vec![0.1, 0.4, -0.6, 0.9],
            b: vec![0.0; 4],
        };
        let inputs = vec![vec![1.0], vec![-0.5]];
        let run = layer_forward(&params, &inputs);

        let (h1, c1) = lstm_cell_step(&params, &[1.0], &[0.0], &[0.0]);
        let (h2, _) = lstm_cell_step(&params, &[-0.5], &h1, &c1);
        assert_eq!(run.caches[0].h, h1);
        assert_eq!(run.caches[1].h, h2);
    }
}
