//! Regenerates `fixtures/synthetic.csv`, or writes it to the path given as
//! the first argument.
//!
//!     cargo run --example write_synthetic_fixture -- /tmp/synthetic.csv

use std::path::PathBuf;

use co2cast::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic.csv"));
    let ds = generate(&SyntheticSpec::default());
    let file = std::fs::File::create(&path)?;
    ds.write_canonical_csv(std::io::BufWriter::new(file))?;
    println!("wrote {} rows for {:?} to {}", ds.len(), ds.regions(), path.display());
    Ok(())
}
