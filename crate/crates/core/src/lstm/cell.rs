//! Single LSTM time step, forward and backward.

use super::params::LstmLayerParams;
use super::LstmError;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Values kept from a forward step for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate pre-activations `W x + U h_prev + b`, in `[i, f, g, o]` order.
    pub pre: Vec<f64>,
    /// Activated gates `[σ(i), σ(f), tanh(g), σ(o)]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Gradients of one step with respect to its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Writes pre-activations and activated gates, then the new cell and hidden
/// state. All slices are sized for `p`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn step_into(
    p: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    pre: &mut [f64],
    gates: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let hid = p.hidden;
    let n_in = p.input_size;
    for r in 0..4 * hid {
        let wx = if n_in == 1 {
            p.w[r] * x[0]
        } else {
            dot(&p.w[r * n_in..(r + 1) * n_in], x)
        };
        pre[r] = p.b[r] + wx + dot(&p.u[r * hid..(r + 1) * hid], h_prev);
    }
    for j in 0..hid {
        let i = sigmoid(pre[j]);
        let f = sigmoid(pre[hid + j]);
        let g = pre[2 * hid + j].tanh();
        let o = sigmoid(pre[3 * hid + j]);
        gates[j] = i;
        gates[hid + j] = f;
        gates[2 * hid + j] = g;
        gates[3 * hid + j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
}

/// One LSTM step:
/// `i, f, o = σ(·)`, `g = tanh(·)`, `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.
pub fn cell_forward(
    p: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, CellCache), LstmError> {
    p.check()?;
    let hid = p.hidden;
    if x.len() != p.input_size || h_prev.len() != hid || c_prev.len() != hid {
        return Err(LstmError::ShapeMismatch(format!(
            "cell expects x {}, h {hid}, c {hid}; got {}, {}, {}",
            p.input_size,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut pre = vec![0.0; 4 * hid];
    let mut gates = vec![0.0; 4 * hid];
    let mut c = vec![0.0; hid];
    let mut tanh_c = vec![0.0; hid];
    let mut h = vec![0.0; hid];
    step_into(p, x, h_prev, c_prev, &mut pre, &mut gates, &mut c, &mut tanh_c, &mut h);
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        pre,
        gates,
        c: c.clone(),
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Backward through one step given upstream `dh` and `dc`; accumulates the
/// parameter gradients into `grads` and writes `dz` (pre-activation
/// gradients) to the scratch slice.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn step_backward(
    p: &LstmLayerParams,
    grads: &mut LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc_in: &[f64],
    dz: &mut [f64],
    dc_prev: &mut [f64],
) {
    let hid = p.hidden;
    for j in 0..hid {
        let i = gates[j];
        let f = gates[hid + j];
        let g = gates[2 * hid + j];
        let o = gates[3 * hid + j];
        let tc = tanh_c[j];
        let d_o = dh[j] * tc;
        let dc = dh[j] * o * (1.0 - tc * tc) + dc_in[j];
        dz[j] = dc * g * i * (1.0 - i);
        dz[hid + j] = dc * c_prev[j] * f * (1.0 - f);
        dz[2 * hid + j] = dc * i * (1.0 - g * g);
        dz[3 * hid + j] = d_o * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }
    let n_in = p.input_size;
    for r in 0..4 * hid {
        let d = dz[r];
        if d == 0.0 {
            continue;
        }
        axpy(d, x, &mut grads.w[r * n_in..(r + 1) * n_in]);
        axpy(d, h_prev, &mut grads.u[r * hid..(r + 1) * hid]);
        grads.b[r] += d;
    }
}

/// `dx = Wᵀ dz` and `dh_prev = Uᵀ dz`.
#[inline]
pub(crate) fn input_grads(p: &LstmLayerParams, dz: &[f64], dx: Option<&mut [f64]>, dh_prev: &mut [f64]) {
    let hid = p.hidden;
    let n_in = p.input_size;
    dh_prev.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..4 * hid {
        let d = dz[r];
        if d != 0.0 {
            axpy(d, &p.u[r * hid..(r + 1) * hid], dh_prev);
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..4 * hid {
            let d = dz[r];
            if d != 0.0 {
                axpy(d, &p.w[r * n_in..(r + 1) * n_in], dx);
            }
        }
    }
}

/// Backward through a single step, returning input gradients and
/// accumulating parameter gradients into `grads`.
pub fn cell_backward(
    p: &LstmLayerParams,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmLayerParams,
) -> Result<CellGrads, LstmError> {
    let hid = p.hidden;
    if dh.len() != hid || dc.len() != hid || cache.gates.len() != 4 * hid {
        return Err(LstmError::ShapeMismatch("cell_backward".into()));
    }
    let mut dz = vec![0.0; 4 * hid];
    let mut dc_prev = vec![0.0; hid];
    step_backward(
        p,
        grads,
        &cache.x,
        &cache.h_prev,
        &cache.c_prev,
        &cache.gates,
        &cache.tanh_c,
        dh,
        dc,
        &mut dz,
        &mut dc_prev,
    );
    let mut dx = vec![0.0; p.input_size];
    let mut dh_prev = vec![0.0; hid];
    input_grads(p, &dz, Some(&mut dx), &mut dh_prev);
    Ok(CellGrads { dx, dh_prev, dc_prev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmLayerParams {
        let mut p = LstmLayerParams::zeros(input, hidden);
        for t in [&mut p.w, &mut p.u, &mut p.b] {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
        }
        p
    }

    #[test]
    fn all_zero_cell() {
        let p = LstmLayerParams::zeros(2, 3);
        let (h, c, cache) = cell_forward(&p, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
        assert_eq!(&cache.gates[0..3], &[0.5; 3]);
        assert_eq!(&cache.gates[3..6], &[0.5; 3]);
        assert_eq!(&cache.gates[6..9], &[0.0; 3]);
        assert_eq!(&cache.gates[9..12], &[0.5; 3]);
    }

    #[test]
    fn saturated_gates_hold_memory() {
        let mut p = LstmLayerParams::zeros(1, 2);
        p.b[0..2].iter_mut().for_each(|b| *b = -30.0);
        p.b[2..4].iter_mut().for_each(|b| *b = 30.0);
        let c_prev = [0.7, -1.3];
        let (_, c, _) = cell_forward(&p, &[0.0], &[0.2, -0.4], &c_prev).unwrap();
        // f = σ(30) = 1 − 9.4e-14 and i = σ(−30) = 9.4e-14.
        for (a, b) in c.iter().zip(c_prev) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_straight_line_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_layer(3, 4, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (h, c, _) = cell_forward(&p, &x, &h0, &c0).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let affine = |gate: usize, j: usize| {
            let row = gate * 4 + j;
            let mut s = p.b[row];
            for k in 0..3 {
                s += p.w[row * 3 + k] * x[k];
            }
            for k in 0..4 {
                s += p.u[row * 4 + k] * h0[k];
            }
            s
        };
        for j in 0..4 {
            let i = sig(affine(0, j));
            let f = sig(affine(1, j));
            let g = affine(2, j).tanh();
            let o = sig(affine(3, j));
            let c_ref = f * c0[j] + i * g;
            let h_ref = o * c_ref.tanh();
            assert!((c[j] - c_ref).abs() < 1e-12);
            assert!((h[j] - h_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = LstmLayerParams::zeros(2, 3);
        assert!(matches!(
            cell_forward(&p, &[0.0], &[0.0; 3], &[0.0; 3]),
            Err(LstmError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn single_step_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_layer(2, 3, &mut rng);
        let x = [0.3, -0.6];
        let h0 = [0.1, 0.5, -0.2];
        let c0 = [0.4, -0.3, 0.9];
        // Loss = Σ h + 0.5 Σ c.
        let loss = |p: &LstmLayerParams, x: &[f64]| {
            let (h, c, _) = cell_forward(p, x, &h0, &c0).unwrap();
            h.iter().sum::<f64>() + 0.5 * c.iter().sum::<f64>()
        };
        let (_, _, cache) = cell_forward(&p, &x, &h0, &c0).unwrap();
        let mut grads = LstmLayerParams::zeros(2, 3);
        let g = cell_backward(&p, &cache, &[1.0; 3], &[0.5; 3], &mut grads).unwrap();
        let eps = 1e-6;
        for k in 0..p.w.len() {
            let mut a = p.clone();
            a.w[k] += eps;
            let mut b = p.clone();
            b.w[k] -= eps;
            let fd = (loss(&a, &x) - loss(&b, &x)) / (2.0 * eps);
            assert!((fd - grads.w[k]).abs() < 1e-8, "w[{k}]");
        }
        for k in 0..2 {
            let mut xa = x;
            xa[k] += eps;
            let mut xb = x;
            xb[k] -= eps;
            let fd = (loss(&p, &xa) - loss(&p, &xb)) / (2.0 * eps);
            assert!((fd - g.dx[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        let b = vec![1.0; 7];
        assert_eq!(dot(&a, &b), 21.0);
    }
}
