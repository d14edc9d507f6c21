//! Parse an emissions CSV, drop 2020, pivot one region into a date x sector
//! matrix and check it against the per-day total.
//!
//!     cargo run --example ingest_and_pivot -- [path.csv] [date-format]

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::NaiveDate;
use co2cast::ingest::{aggregate_total, filter_period, parse_emissions_csv, pivot_sector_matrix, ISO_DATE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic.csv"));
    let fmt = args.next().unwrap_or_else(|| ISO_DATE.to_string());

    let ds = parse_emissions_csv(std::fs::File::open(&path)?, &fmt)?;
    println!("{} rows, regions {:?}", ds.len(), ds.regions());

    let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2023, 2, 28).unwrap();
    let kept = filter_period(&ds, start, end, &BTreeSet::from([2020]))?;
    println!("{} rows after dropping 2020", kept.len());

    let region = &kept.regions()[0];
    let m = pivot_sector_matrix(&kept, region)?;
    let total = aggregate_total(&kept, region)?;
    println!("{region}: {} days x {:?}", m.n_rows(), m.col_labels());
    for i in 0..3.min(m.n_rows()) {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:8.3}")).collect();
        println!("  {} {}  total {:.3}", m.row_labels()[i], row.join(" "), total[i].1);
    }
    let worst = (0..m.n_rows())
        .map(|i| (m.row(i).iter().sum::<f64>() - total[i].1).abs())
        .fold(0.0, f64::max);
    println!("max |row sum - total| = {worst:.2e}");
    Ok(())
}
