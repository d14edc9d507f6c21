//! Full batch run on generated data: writes every artifact under one
//! directory and prints the artifact hashes.
//!
//!     cargo run --release --example synthetic_report -- [out-dir]

use std::path::PathBuf;

use co2cast::config::PipelineConfig;
use co2cast::pipeline::{run, Command};
use co2cast::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("co2cast_synthetic_report"));
    std::fs::create_dir_all(&out)?;
    let data = out.join("data.csv");
    let spec = SyntheticSpec {
        regions: vec!["Westmoor".into()],
        ..SyntheticSpec::default()
    };
    generate(&spec).write_canonical_csv(std::fs::File::create(&data)?)?;

    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let text = format!(
        "data = {}\nenergy_input = {}\nunits = 8\nlayers = 1\nepochs = 5\nhorizon = 14\nseed = 1\n",
        data.display(),
        fixtures.join("energy.json").display()
    );
    let cfg = PipelineConfig::parse(&text)?;
    let summary = run(Command::Report, &cfg, &out)?;
    println!("config_hash {}", summary.config_hash);
    for (path, hash) in &summary.artifacts {
        println!("{}  {path}", &hash[..12]);
    }
    println!("report: {}", out.join("report.json").display());
    Ok(())
}
