//! Stacked LSTM regressor: forward pass, backpropagation through time and
//! recursive forecasting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{axpy, dot, input_grads, step_backward, step_into};
use super::params::{LstmLayerParams, ModelParams};
use super::LstmError;

/// Samples per work unit in batched forward/backward. Fixed so that the
/// gradient summation order does not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: ModelParams,
    /// Inverted dropout rate applied between stacked layers while training.
    pub dropout_rate: f64,
    pub seq_len: usize,
}

/// Builds a model whose layer `k` has `layer_sizes[k]` hidden units; the
/// first layer reads a scalar series. Deterministic for a given seed.
pub fn init_model(layer_sizes: &[usize], seq_len: usize, dropout: f64, seed: u64) -> Result<LstmModel, LstmError> {
    if layer_sizes.is_empty() || layer_sizes.contains(&0) {
        return Err(LstmError::InvalidConfig("layer sizes must be positive".into()));
    }
    if seq_len == 0 {
        return Err(LstmError::InvalidConfig("seq_len must be positive".into()));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(LstmError::InvalidConfig(format!("dropout {dropout} not in [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(layer_sizes.len());
    let mut input = 1;
    for &h in layer_sizes {
        layers.push(LstmLayerParams::glorot(input, h, &mut rng));
        input = h;
    }
    let lim = super::params::glorot_limit(input, 1);
    let head_w = (0..input).map(|_| rng.gen_range(-lim..=lim)).collect();
    Ok(LstmModel {
        params: ModelParams {
            layers,
            head_w,
            head_b: 0.0,
        },
        dropout_rate: dropout,
        seq_len,
    })
}

impl LstmModel {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.params.layers.iter().map(|l| l.hidden).collect()
    }

    pub fn check(&self) -> Result<(), LstmError> {
        let mut input = 1;
        for l in &self.params.layers {
            l.check()?;
            if l.input_size != input {
                return Err(LstmError::ShapeMismatch(format!(
                    "layer expects input {} but previous layer emits {input}",
                    l.input_size
                )));
            }
            input = l.hidden;
        }
        if self.params.head_w.len() != input {
            return Err(LstmError::ShapeMismatch("head width".into()));
        }
        Ok(())
    }
}

/// Per-layer activations of one sample, flattened over time.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// `T x in`, the (dropped-out) input this layer consumed.
    pub xs: Vec<f64>,
    /// `(T + 1) x h`, row 0 is the zero initial state.
    pub hs: Vec<f64>,
    /// `(T + 1) x h`.
    pub cs: Vec<f64>,
    /// `T x 4h`, activated gates.
    pub gates: Vec<f64>,
    /// `T x h`.
    pub tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCache {
    pub layers: Vec<LayerCache>,
    /// Dropout masks applied to the output sequence of layer `k` before
    /// layer `k + 1`; `None` when dropout was inactive.
    pub masks: Vec<Option<Vec<f64>>>,
}

impl SampleCache {
    fn last_hidden(&self) -> &[f64] {
        let top = self.layers.last().expect("at least one layer");
        // hs has one more row than tanh_c.
        let hid = top.hs.len() - top.tanh_c.len();
        &top.hs[top.hs.len() - hid..]
    }
}

/// Everything [`backward`] needs from a [`forward`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub samples: Vec<SampleCache>,
    pub shapes: Vec<(usize, usize)>,
    pub seq_len: usize,
    pub training: bool,
}

/// Dropout masks for one sample: one `T x h` mask per layer boundary.
pub fn draw_masks<R: Rng + ?Sized>(model: &LstmModel, rng: &mut R) -> Vec<Option<Vec<f64>>> {
    let rate = model.dropout_rate;
    let n = model.params.layers.len();
    (0..n.saturating_sub(1))
        .map(|k| {
            if rate <= 0.0 {
                return None;
            }
            let keep = 1.0 / (1.0 - rate);
            let len = model.seq_len * model.params.layers[k].hidden;
            Some(
                (0..len)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect(),
            )
        })
        .collect()
}

fn forward_sample(model: &LstmModel, seq: &[f64], masks: Vec<Option<Vec<f64>>>) -> (f64, SampleCache) {
    let t_len = seq.len();
    let mut layers = Vec::with_capacity(model.params.layers.len());
    let mut input: Vec<f64> = seq.to_vec();
    let mut pre = Vec::new();
    for (k, p) in model.params.layers.iter().enumerate() {
        let h = p.hidden;
        let n_in = p.input_size;
        let mut hs = vec![0.0; (t_len + 1) * h];
        let mut cs = vec![0.0; (t_len + 1) * h];
        let mut gates = vec![0.0; t_len * 4 * h];
        let mut tanh_c = vec![0.0; t_len * h];
        pre.resize(4 * h, 0.0);
        for t in 0..t_len {
            let (h_prev, h_rest) = hs.split_at_mut((t + 1) * h);
            let (c_prev, c_rest) = cs.split_at_mut((t + 1) * h);
            step_into(
                p,
                &input[t * n_in..(t + 1) * n_in],
                &h_prev[t * h..],
                &c_prev[t * h..],
                &mut pre,
                &mut gates[t * 4 * h..(t + 1) * 4 * h],
                &mut c_rest[..h],
                &mut tanh_c[t * h..(t + 1) * h],
                &mut h_rest[..h],
            );
        }
        let mut next: Vec<f64> = hs[h..].to_vec();
        if let Some(Some(mask)) = masks.get(k) {
            next.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        layers.push(LayerCache {
            xs: input,
            hs,
            cs,
            gates,
            tanh_c,
        });
        input = next;
    }
    let cache = SampleCache { layers, masks };
    let pred = dot(&model.params.head_w, cache.last_hidden()) + model.params.head_b;
    (pred, cache)
}

/// Runs a batch of `inputs.len() / seq_len` windows.
///
/// Stacked layers pass their full hidden sequence upward, with inverted
/// dropout between layers when `training`; the top layer's final hidden
/// state feeds the affine head.
pub fn forward<R: Rng + ?Sized>(
    model: &LstmModel,
    inputs: &[f64],
    training: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, ForwardCache), LstmError> {
    let batch = batch_len(model, inputs)?;
    let masks: Vec<Vec<Option<Vec<f64>>>> = (0..batch)
        .map(|_| {
            if training {
                draw_masks(model, rng)
            } else {
                vec![None; model.params.layers.len().saturating_sub(1)]
            }
        })
        .collect();
    forward_with_masks(model, inputs, masks, training)
}

/// [`forward`] with caller-supplied dropout masks (one entry per sample).
pub fn forward_with_masks(
    model: &LstmModel,
    inputs: &[f64],
    masks: Vec<Vec<Option<Vec<f64>>>>,
    training: bool,
) -> Result<(Vec<f64>, ForwardCache), LstmError> {
    let batch = batch_len(model, inputs)?;
    if masks.len() != batch {
        return Err(LstmError::ShapeMismatch(format!(
            "{} mask sets for a batch of {batch}",
            masks.len()
        )));
    }
    let seq_len = model.seq_len;
    let (preds, samples): (Vec<f64>, Vec<SampleCache>) = inputs
        .par_chunks(seq_len)
        .zip(masks)
        .map(|(seq, m)| forward_sample(model, seq, m))
        .unzip();
    let cache = ForwardCache {
        samples,
        shapes: shapes(model),
        seq_len,
        training,
    };
    Ok((preds, cache))
}

fn shapes(model: &LstmModel) -> Vec<(usize, usize)> {
    model
        .params
        .layers
        .iter()
        .map(|l| (l.input_size, l.hidden))
        .collect()
}

fn batch_len(model: &LstmModel, inputs: &[f64]) -> Result<usize, LstmError> {
    model.check()?;
    if inputs.is_empty() {
        return Err(LstmError::EmptyData);
    }
    if inputs.len() % model.seq_len != 0 {
        return Err(LstmError::ShapeMismatch(format!(
            "{} input values is not a multiple of seq_len {}",
            inputs.len(),
            model.seq_len
        )));
    }
    Ok(inputs.len() / model.seq_len)
}

/// Mean squared error and its gradient `2 (pred − target) / n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), LstmError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(LstmError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

fn backward_sample(model: &LstmModel, cache: &SampleCache, dpred: f64, grads: &mut ModelParams) {
    let layers = &model.params.layers;
    let top = layers.len() - 1;
    let t_len = model.seq_len;

    axpy(dpred, cache.last_hidden(), &mut grads.head_w);
    grads.head_b += dpred;

    // Gradient arriving from above, per time step of the current layer.
    let h_top = layers[top].hidden;
    let mut dh_above = vec![0.0; t_len * h_top];
    dh_above[(t_len - 1) * h_top..].copy_from_slice(&model.params.head_w);
    dh_above[(t_len - 1) * h_top..].iter_mut().for_each(|v| *v *= dpred);

    for k in (0..=top).rev() {
        let p = &layers[k];
        let lc = &cache.layers[k];
        let h = p.hidden;
        let n_in = p.input_size;
        let mut dx_seq = if k > 0 { vec![0.0; t_len * n_in] } else { Vec::new() };
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dh = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        let g = &mut grads.layers[k];
        for t in (0..t_len).rev() {
            for j in 0..h {
                dh[j] = dh_above[t * h + j] + dh_next[j];
            }
            step_backward(
                p,
                g,
                &lc.xs[t * n_in..(t + 1) * n_in],
                &lc.hs[t * h..(t + 1) * h],
                &lc.cs[t * h..(t + 1) * h],
                &lc.gates[t * 4 * h..(t + 1) * 4 * h],
                &lc.tanh_c[t * h..(t + 1) * h],
                &dh,
                &dc_next,
                &mut dz,
                &mut dc_prev,
            );
            let dx = if k > 0 {
                Some(&mut dx_seq[t * n_in..(t + 1) * n_in])
            } else {
                None
            };
            input_grads(p, &dz, dx, &mut dh_next);
            std::mem::swap(&mut dc_next, &mut dc_prev);
        }
        if k > 0 {
            if let Some(Some(mask)) = cache.masks.get(k - 1) {
                dx_seq.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
            dh_above = dx_seq;
        }
    }
}

/// Backpropagation through time. `loss_grad[s]` is ∂loss/∂pred for sample
/// `s`; gradients are summed over the batch, so a mean loss must carry its
/// `1/n` inside `loss_grad` (as [`mse_loss`] does).
pub fn backward(model: &LstmModel, cache: &ForwardCache, loss_grad: &[f64]) -> Result<ModelParams, LstmError> {
    if cache.shapes != shapes(model) || cache.seq_len != model.seq_len {
        return Err(LstmError::StaleCache);
    }
    if loss_grad.len() != cache.samples.len() {
        return Err(LstmError::LengthMismatch {
            pred: cache.samples.len(),
            target: loss_grad.len(),
        });
    }
    let partials: Vec<ModelParams> = cache
        .samples
        .par_chunks(CHUNK)
        .zip(loss_grad.par_chunks(CHUNK))
        .map(|(samples, dpreds)| {
            let mut g = ModelParams::zeros_like(&model.params);
            for (s, &d) in samples.iter().zip(dpreds) {
                backward_sample(model, s, d, &mut g);
            }
            g
        })
        .collect();
    let mut total = ModelParams::zeros_like(&model.params);
    for g in &partials {
        total.add_assign(g);
    }
    Ok(total)
}

/// Inference on a batch of windows without keeping caches.
pub fn predict_batch(model: &LstmModel, inputs: &[f64]) -> Result<Vec<f64>, LstmError> {
    batch_len(model, inputs)?;
    Ok(inputs
        .par_chunks(model.seq_len)
        .map(|seq| predict_one(model, seq))
        .collect())
}

fn predict_one(model: &LstmModel, seq: &[f64]) -> f64 {
    let mut input = seq.to_vec();
    let mut pre = Vec::new();
    let mut gates = Vec::new();
    let mut tanh_c = Vec::new();
    let mut last = Vec::new();
    for p in &model.params.layers {
        let h = p.hidden;
        let n_in = p.input_size;
        pre.resize(4 * h, 0.0);
        gates.resize(4 * h, 0.0);
        tanh_c.resize(h, 0.0);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        let mut c_new = vec![0.0; h];
        let mut out = Vec::with_capacity(seq.len() * h);
        for t in 0..seq.len() {
            step_into(
                p,
                &input[t * n_in..(t + 1) * n_in],
                &h_prev,
                &c_prev,
                &mut pre,
                &mut gates,
                &mut c_new,
                &mut tanh_c,
                &mut h_new,
            );
            std::mem::swap(&mut h_prev, &mut h_new);
            std::mem::swap(&mut c_prev, &mut c_new);
            out.extend_from_slice(&h_prev);
        }
        last = h_prev;
        input = out;
    }
    dot(&model.params.head_w, &last) + model.params.head_b
}

/// Closed-loop forecast: each prediction is appended to the window and the
/// oldest value dropped, `horizon` times.
pub fn predict_horizon(model: &LstmModel, seed_window: &[f64], horizon: usize) -> Result<Vec<f64>, LstmError> {
    if seed_window.len() != model.seq_len {
        return Err(LstmError::BadWindow {
            expected: model.seq_len,
            got: seed_window.len(),
        });
    }
    model.check()?;
    let mut window = seed_window.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let y = predict_one(model, &window);
        out.push(y);
        window.remove(0);
        window.push(y);
    }
    Ok(out)
}
