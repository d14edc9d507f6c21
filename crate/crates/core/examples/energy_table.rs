//! Cohesive and binding energies from a JSON input, printed as a table.
//!
//!     cargo run --example energy_table -- [energy.json]

use std::path::PathBuf;

use co2cast::energy::{binding_energy, energy_report, BindingInput, EnergyInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/energy.json"));
    let input = EnergyInput::from_json(std::fs::File::open(&path)?)?;
    let report = energy_report(&input)?;
    print!("{}", report.to_table());
    for s in report.systems.iter().filter(|s| s.count_mismatch) {
        println!("warning: {} atom count differs from its constituents", s.name);
    }

    // Negative means the adsorbate sticks.
    let eb = binding_energy(&BindingInput {
        e_total: -100.0,
        e_substrate: -90.0,
        e_adsorbate: -8.5,
    })?;
    println!("\nhand example: E_b = {eb:.2} eV");
    Ok(())
}
