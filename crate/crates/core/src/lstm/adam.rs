use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::LstmError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            config,
        }
    }

    /// One bias-corrected Adam update over the concatenation of `params`
    /// tensors.
    pub fn step_tensors(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<(), LstmError> {
        let n: usize = params.iter().map(|p| p.len()).sum();
        let ng: usize = grads.iter().map(|g| g.len()).sum();
        if n != self.m.len() || ng != n || params.len() != grads.len() {
            return Err(LstmError::ShapeMismatch(format!(
                "adam state has {} slots, params {n}, grads {ng}",
                self.m.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            if p.len() != g.len() {
                return Err(LstmError::ShapeMismatch("tensor length".into()));
            }
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for (((theta, &grad), m), v) in p.iter_mut().zip(g).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * grad;
                *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += p.len();
        }
        Ok(())
    }

    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), LstmError> {
        self.step_tensors(vec![params], vec![grads])
    }
}

/// Applies one Adam update to every tensor of `params`.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState) -> Result<(), LstmError> {
    if !params.same_shape(grads) {
        return Err(LstmError::ShapeMismatch("gradients do not match parameters".into()));
    }
    state.step_tensors(params.tensors_mut(), grads.tensors())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = [1.0, -2.0, 3.0];
        st.step_flat(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(1, cfg);
        let mut p = [0.0];
        st.step_flat(&mut p, &[1.0]).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert_eq!(p[0], -cfg.lr / (1.0 + cfg.eps));
    }

    #[test]
    fn three_steps_on_quadratic() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(1, cfg);
        let mut theta = [1.0];
        for _ in 0..3 {
            let g = [2.0 * theta[0]];
            st.step_flat(&mut theta, &g).unwrap();
        }
        // Hand-iterated recurrence.
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * th;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= 1e-3 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((theta[0] - th).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(st.step_flat(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
