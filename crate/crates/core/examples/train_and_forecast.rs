//! Fits one (region, sector) model on the synthetic fixture, saves a
//! checkpoint, reloads it and forecasts ahead.
//!
//!     cargo run --release --example train_and_forecast -- [epochs]

use std::path::PathBuf;

use co2cast::config::PipelineConfig;
use co2cast::lstm::Checkpoint;
use co2cast::pipeline::{fit_pair, forecast_fitted, Selection};
use co2cast::Sector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let conf = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic.conf");
    let mut cfg = PipelineConfig::load(&conf)?;
    if let Some(e) = std::env::args().nth(1) {
        cfg.set("epochs", &e)?;
    }
    let sel = Selection::load(&cfg)?;
    let fitted = fit_pair(&sel.filtered, "Alderney", Sector::Power, &cfg)?;
    if let Some(h) = &fitted.history {
        for e in h.epochs.iter().step_by(5) {
            println!("epoch {:3}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss.unwrap_or(f64::NAN));
        }
    }

    let path = std::env::temp_dir().join("co2cast_example_model.json");
    Checkpoint::new(&fitted.model, Some(fitted.data.scaler), Some(fitted.train_config.clone())).save(&path)?;
    let reloaded = Checkpoint::load(&path)?.model()?;
    assert_eq!(reloaded.params.to_flat(), fitted.model.params.to_flat());
    println!("checkpoint round trip ok: {}", path.display());

    for p in forecast_fitted(&fitted, cfg.horizon)?.iter().step_by(5) {
        println!("{:>3}  {}  {:.4}", p.step, p.date, p.value.unwrap_or(f64::NAN));
    }
    Ok(())
}
