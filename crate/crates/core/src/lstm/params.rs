use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LstmError;

/// Weights of one LSTM layer. Gate rows are stacked `[input, forget,
/// candidate, output]`, each block `hidden` rows tall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden: usize,
    /// `4h x input_size`, row-major.
    pub w: Vec<f64>,
    /// `4h x h`, row-major.
    pub u: Vec<f64>,
    /// `4h`.
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            input_size,
            hidden,
            w: vec![0.0; 4 * hidden * input_size],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Glorot-uniform `w` and `u`, forget-gate bias 1, other biases 0.
    pub fn glorot<R: Rng + ?Sized>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden);
        let w_lim = glorot_limit(input_size, 4 * hidden);
        let u_lim = glorot_limit(hidden, 4 * hidden);
        p.w.iter_mut().for_each(|x| *x = rng.gen_range(-w_lim..=w_lim));
        p.u.iter_mut().for_each(|x| *x = rng.gen_range(-u_lim..=u_lim));
        p.b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        p
    }

    pub fn forget_bias(&self) -> &[f64] {
        &self.b[self.hidden..2 * self.hidden]
    }

    pub fn check(&self) -> Result<(), LstmError> {
        let h = self.hidden;
        if self.w.len() != 4 * h * self.input_size || self.u.len() != 4 * h * h || self.b.len() != 4 * h {
            return Err(LstmError::ShapeMismatch(format!(
                "layer ({} -> {h}) has w {}, u {}, b {}",
                self.input_size,
                self.w.len(),
                self.u.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// All trainable tensors of a stacked model. Also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<LstmLayerParams>,
    /// Output head weights, one per unit of the last layer.
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl ModelParams {
    pub fn zeros_like(other: &ModelParams) -> Self {
        Self {
            layers: other
                .layers
                .iter()
                .map(|l| LstmLayerParams::zeros(l.input_size, l.hidden))
                .collect(),
            head_w: vec![0.0; other.head_w.len()],
            head_b: 0.0,
        }
    }

    /// Tensors in a fixed order: per layer `w, u, b`, then `head_w, head_b`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(&l.w);
            out.push(&l.u);
            out.push(&l.b);
        }
        out.push(&self.head_w);
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.u);
            out.push(&mut l.b);
        }
        out.push(&mut self.head_w);
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    /// Names matching [`ModelParams::tensors`], for diagnostics.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.layers.len() {
            for t in ["w", "u", "b"] {
                out.push(format!("layer{k}.{t}"));
            }
        }
        out.push("head.w".into());
        out.push("head.b".into());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every tensor from a flat vector in [`ModelParams::tensors`] order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), LstmError> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(LstmError::ShapeMismatch(format!(
                "flat parameter vector has {} values, model needs {n}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.input_size == b.input_size && a.hidden == b.hidden)
            && self.head_w.len() == other.head_w.len()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
