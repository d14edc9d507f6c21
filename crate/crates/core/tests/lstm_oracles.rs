//! Independent oracles for the LSTM: straight-line forward pass, loss
//! gradient, initialisation statistics and small convergence runs.

use co2cast::lstm::{
    glorot_limit, init_model, mse_loss, predict_batch, predict_horizon, train, LstmLayerParams, LstmModel, TrainConfig,
};
use co2cast::metrics::evaluate;
use co2cast::preprocess::{make_supervised, minmax_scale, SupervisedSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Four gate equations written out directly, one row at a time.
fn unrolled_layer(p: &LstmLayerParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = p.hidden;
    let n_in = p.input_size;
    let mut hp = vec![0.0; h];
    let mut cp = vec![0.0; h];
    let mut out = Vec::new();
    for x in xs {
        let z = |row: usize| -> f64 {
            let mut s = p.b[row];
            for k in 0..n_in {
                s += p.w[row * n_in + k] * x[k];
            }
            for k in 0..h {
                s += p.u[row * h + k] * hp[k];
            }
            s
        };
        let mut hn = vec![0.0; h];
        let mut cn = vec![0.0; h];
        for j in 0..h {
            let i = sig(z(j));
            let f = sig(z(h + j));
            let g = z(2 * h + j).tanh();
            let o = sig(z(3 * h + j));
            cn[j] = f * cp[j] + i * g;
            hn[j] = o * cn[j].tanh();
        }
        out.push(hn.clone());
        hp = hn;
        cp = cn;
    }
    out
}

#[test]
fn forward_matches_hand_unrolled_micro_model() {
    let model = init_model(&[3, 3], 4, 0.0, 99).unwrap();
    let seq = [0.1, 0.7, -0.3, 0.4];
    let mut xs: Vec<Vec<f64>> = seq.iter().map(|v| vec![*v]).collect();
    for layer in &model.params.layers {
        xs = unrolled_layer(layer, &xs);
    }
    let last = xs.last().unwrap();
    let want: f64 = model.params.head_w.iter().zip(last).map(|(w, h)| w * h).sum::<f64>() + model.params.head_b;
    let got = predict_batch(&model, &seq).unwrap()[0];
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let pred: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grad) = mse_loss(&pred, &target).unwrap();
    let h = 1e-6;
    for i in 0..16 {
        let mut up = pred.clone();
        up[i] += h;
        let mut down = pred.clone();
        down[i] -= h;
        let num = (mse_loss(&up, &target).unwrap().0 - mse_loss(&down, &target).unwrap().0) / (2.0 * h);
        assert!((num - grad[i]).abs() < 1e-8, "{i}: {num} vs {}", grad[i]);
    }
}

#[test]
fn init_weight_mean_is_within_three_sigma() {
    let model = init_model(&[50, 50], 30, 0.0, 2024).unwrap();
    let w = &model.params.layers[1].w;
    assert_eq!(w.len(), 10_000);
    let lim = glorot_limit(50, 200);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    // Uniform(-L, L) has variance L^2 / 3.
    let sigma = lim / 3f64.sqrt() / (w.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * sigma, "mean {mean}, 3 sigma {}", 3.0 * sigma);
    assert!(w.iter().all(|v| v.abs() <= lim));
    for l in &model.params.layers {
        assert!(l.forget_bias().iter().all(|&b| b == 1.0));
    }
}

fn cfg(epochs: usize, batch_size: usize, dropout: f64) -> TrainConfig {
    TrainConfig {
        batch_size,
        epochs,
        dropout,
        lr: 1e-3,
        seed: 3,
        clip_norm: None,
        validation_fraction: 0.1,
    }
}

#[test]
fn constant_target_is_learned() {
    let series = vec![0.6; 80];
    let data = make_supervised(&series, 10).unwrap();
    let model = init_model(&[8], 10, 0.0, 1).unwrap();
    let (model, history) = train(model, &data, &cfg(100, 8, 0.0)).unwrap();
    let last = history.epochs.last().unwrap().train_loss;
    assert!(last < 1e-4, "final train loss {last}");
    let horizon = predict_horizon(&model, &series[..10], 5).unwrap();
    assert!(horizon.iter().all(|v| (v - 0.6).abs() < 0.02), "{horizon:?}");
}

#[test]
fn sine_validation_loss_is_small() {
    let raw: Vec<f64> = (0..400).map(|t| (std::f64::consts::TAU * t as f64 / 40.0).sin()).collect();
    let (scaled, _) = minmax_scale(&raw).unwrap();
    let data = make_supervised(&scaled, 30).unwrap();
    let model = init_model(&[16], 30, 0.0, 5).unwrap();
    let (model, history) = train(model, &data, &cfg(100, 16, 0.0)).unwrap();
    let val = history.epochs.last().unwrap().val_loss.unwrap();
    assert!(val < 1e-3, "final validation loss {val}");
    let (_, tail) = co2cast::lstm::validation_split(&data, 0.1);
    let r2 = evaluate(tail.targets(), &predict_batch(&model, tail.inputs()).unwrap()).unwrap().r2;
    assert!(r2 > 0.95, "validation R2 {r2}");
}

#[test]
fn three_by_fifty_model_loss_trends_down() {
    let raw = co2cast::synthetic::sine_with_trend(200, 25.0, 0.002);
    let (scaled, _) = minmax_scale(&raw).unwrap();
    let data = make_supervised(&scaled, 30).unwrap();
    let model = init_model(&[50, 50, 50], 30, 0.16, 0).unwrap();
    let (_, history) = train(model, &data, &cfg(100, 16, 0.16)).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
    let first = losses[..10].iter().sum::<f64>() / 10.0;
    let last = losses[90..].iter().sum::<f64>() / 10.0;
    assert!(last < first, "first-10 mean {first}, last-10 mean {last}");
}

#[test]
fn training_is_bitwise_reproducible() {
    let series: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).cos() * 0.4 + 0.5).collect();
    let data = make_supervised(&series, 6).unwrap();
    let run = || {
        let m = init_model(&[5, 4], 6, 0.2, 11).unwrap();
        train(m, &data, &cfg(5, 7, 0.2)).unwrap()
    };
    let (a, ha) = run();
    let (b, hb) = run();
    let bits = |m: &LstmModel| m.params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ha, hb);
}

#[test]
fn last_batch_may_be_short() {
    // 23 fit samples with batch 8 gives batches of 8, 8 and 7.
    let series: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
    let data: SupervisedSet = make_supervised(&series, 4).unwrap().slice(0..23);
    let m = init_model(&[3], 4, 0.0, 0).unwrap();
    let c = TrainConfig {
        validation_fraction: 0.0,
        ..cfg(2, 8, 0.0)
    };
    let (_, h) = train(m, &data, &c).unwrap();
    assert_eq!(h.len(), 2);
    assert!(h.epochs.iter().all(|e| e.val_loss.is_none() && e.train_loss.is_finite()));
}
