//! Z-score outlier replacement followed by a trailing moving average.
//!
//!     cargo run --example clean_and_smooth

use co2cast::preprocess::{clean_outliers, mean_sd, moving_average};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut series: Vec<f64> = (0..60).map(|t| 100.0 + 10.0 * (t as f64 / 7.0).sin()).collect();
    series[20] = 400.0;
    series[41] = -150.0;

    let (mean, sd) = mean_sd(&series);
    println!("mean {mean:.2}, population sd {sd:.2}");

    let out = clean_outliers(&series, 3.0)?;
    for &i in &out.flagged {
        println!("day {i:2}: {:8.2} -> {:8.2}", series[i], out.cleaned[i]);
    }

    let smooth = moving_average(&out.cleaned, 7)?;
    println!("{} cleaned values, {} after the 7-day window", out.cleaned.len(), smooth.len());
    for (k, v) in smooth.iter().enumerate().skip(14).take(10) {
        // smoothed[k] covers days k..=k+6
        println!("  days {:2}..={:2}  {v:.3}", k, k + 6);
    }
    Ok(())
}
