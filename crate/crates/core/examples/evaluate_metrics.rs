//! MSE, RMSE, MAE and R2 in scaled and original units, first on toy vectors
//! then on a trained model's test windows.
//!
//!     cargo run --release --example evaluate_metrics

use std::path::PathBuf;

use co2cast::config::PipelineConfig;
use co2cast::metrics::evaluate;
use co2cast::pipeline::{evaluate_fitted, fit_pair, Selection};
use co2cast::Sector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = evaluate(&[1.0, 2.0, 3.0, 4.0], &[1.1, 1.9, 3.2, 3.8])?;
    println!("toy: mse {:.4} rmse {:.4} mae {:.4} r2 {:.4}", r.mse, r.rmse, r.mae, r.r2);

    let flat = evaluate(&[5.0, 5.0, 5.0], &[5.0, 5.1, 4.9])?;
    println!("constant actuals: r2 {} (degenerate {})", flat.r2, flat.degenerate_variance);

    let conf = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic.conf");
    let cfg = PipelineConfig::load(&conf)?;
    let sel = Selection::load(&cfg)?;
    let fitted = fit_pair(&sel.filtered, "Lakes, North", Sector::Industry, &cfg)?;
    let (ev, _csv) = evaluate_fitted(&fitted, &cfg)?;
    println!("{} / {}: {} train, {} test windows", ev.region, ev.sector, ev.n_train, ev.n_test);
    let s = &ev.scaled;
    println!("  scaled    mse {:.5} rmse {:.5} mae {:.5} r2 {:.4}", s.mse, s.rmse, s.mae, s.r2);
    if let Some(o) = &ev.original {
        println!("  original  mse {:.5} rmse {:.5} mae {:.5} r2 {:.4}", o.mse, o.rmse, o.mae, o.r2);
    }
    Ok(())
}
