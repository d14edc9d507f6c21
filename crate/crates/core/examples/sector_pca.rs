//! PCA of a region's five sector columns, after cleaning and min-max scaling.
//!
//!     cargo run --example sector_pca -- [region]

use std::collections::BTreeSet;

use co2cast::config::PipelineConfig;
use co2cast::ingest::{filter_period, pivot_sector_matrix};
use co2cast::pca::{pca_fit_with, project, reconstruct};
use co2cast::pipeline::pca_input;
use co2cast::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PipelineConfig::default();
    let ds = generate(&SyntheticSpec::default());
    let ds = filter_period(&ds, cfg.start, cfg.end, &BTreeSet::from([2020]))?;
    let region = std::env::args().nth(1).unwrap_or_else(|| ds.regions()[0].clone());

    let m = pca_input(&pivot_sector_matrix(&ds, &region)?, &cfg)?;
    let r = pca_fit_with(&m, true)?;
    println!("{region}: {} days", m.n_rows());
    println!("  pc  eigenvalue  explained  cumulative  top sector");
    let mut cum = 0.0;
    for j in 0..r.dim() {
        cum += r.explained_ratio[j];
        println!(
            "  {:>2}  {:10.5}  {:8.2}%  {:9.2}%  {}",
            j + 1,
            r.eigenvalues[j],
            100.0 * r.explained_ratio[j],
            100.0 * cum,
            r.sector_attribution[j]
        );
    }

    let k = 3;
    let back = reconstruct(&r, &project(&r, &m, k)?)?;
    let mut err = 0.0;
    for i in 0..m.n_rows() {
        for j in 0..m.n_cols() {
            err += (back[(i, j)] - m.get(i, j)).powi(2);
        }
    }
    println!("rank-{k} reconstruction, mean squared error {:.3e}", err / m.data().len() as f64);
    Ok(())
}
