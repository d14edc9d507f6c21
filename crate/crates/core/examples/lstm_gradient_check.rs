//! Compares backpropagated gradients with central finite differences on a
//! small stacked LSTM, dropout masks held fixed.
//!
//!     cargo run --release --example lstm_gradient_check

use co2cast::lstm::{backward, draw_masks, forward_with_masks, init_model, mse_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut model = init_model(&[6, 5], 8, 0.3, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = 4;
    let inputs: Vec<f64> = (0..batch * 8).map(|_| rng.gen_range(0.0..1.0)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(0.0..1.0)).collect();
    let masks: Vec<_> = (0..batch).map(|_| draw_masks(&model, &mut rng)).collect();

    let loss = |m: &co2cast::LstmModel| -> f64 {
        let (p, _) = forward_with_masks(m, &inputs, masks.clone(), true).unwrap();
        mse_loss(&p, &targets).unwrap().0
    };
    let (pred, cache) = forward_with_masks(&model, &inputs, masks.clone(), true)?;
    let (l0, dl) = mse_loss(&pred, &targets)?;
    let grads = backward(&model, &cache, &dl)?.to_flat();
    println!("loss {l0:.6}, {} parameters", grads.len());

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let n = grads.len();
    for idx in (0..n).step_by(n / 40 + 1) {
        let mut flat = model.params.to_flat();
        let orig = flat[idx];
        flat[idx] = orig + h;
        model.params.assign_flat(&flat)?;
        let up = loss(&model);
        flat[idx] = orig - h;
        model.params.assign_flat(&flat)?;
        let down = loss(&model);
        flat[idx] = orig;
        model.params.assign_flat(&flat)?;
        let num = (up - down) / (2.0 * h);
        let rel = (num - grads[idx]).abs() / (num.abs() + grads[idx].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    println!("worst relative error over sampled parameters: {worst:.2e}");
    Ok(())
}
