//! Cohesive/formation and adsorption binding energies, in eV, plus a
//! tabular report over several material systems.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("normalization count must be positive, got {0}")]
    ZeroNormalization(f64),
    #[error("species {0:?} has a non-positive count")]
    BadCount(String),
    #[error("energy {0} is not finite")]
    NonFinite(&'static str),
    #[error("energy input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constituent {
    pub species: String,
    /// Energy of one isolated atom, eV.
    pub energy: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesiveInput {
    /// Total energy of the sheet, eV.
    pub e_system: f64,
    pub constituents: Vec<Constituent>,
    /// Total atom count. Defaults to the sum of constituent counts; only
    /// used as a cross-check.
    #[serde(default)]
    pub n_atoms: Option<u32>,
    /// Normalization count N.
    pub normalization: f64,
}

impl CohesiveInput {
    pub fn atom_count(&self) -> u32 {
        self.constituents.iter().map(|c| c.count).sum()
    }

    /// True when an explicit `n_atoms` disagrees with the constituent counts.
    pub fn count_mismatch(&self) -> bool {
        self.n_atoms.is_some_and(|n| n != self.atom_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingInput {
    pub e_total: f64,
    pub e_substrate: f64,
    pub e_adsorbate: f64,
}

/// `(E_system − Σ count_x · E_x) / N`.
pub fn cohesive_energy(input: &CohesiveInput) -> Result<f64, EnergyError> {
    if !(input.normalization > 0.0) {
        return Err(EnergyError::ZeroNormalization(input.normalization));
    }
    if !input.e_system.is_finite() {
        return Err(EnergyError::NonFinite("e_system"));
    }
    let mut reference = 0.0;
    for c in &input.constituents {
        if c.count == 0 {
            return Err(EnergyError::BadCount(c.species.clone()));
        }
        if !c.energy.is_finite() {
            return Err(EnergyError::NonFinite("constituent energy"));
        }
        reference += f64::from(c.count) * c.energy;
    }
    if input.count_mismatch() {
        log::warn!(
            "n_atoms = {} but constituent counts sum to {}",
            input.n_atoms.unwrap_or_default(),
            input.atom_count()
        );
    }
    Ok((input.e_system - reference) / input.normalization)
}

/// `E_total − (E_substrate + E_adsorbate)`; negative means adsorption is
/// favorable.
pub fn binding_energy(input: &BindingInput) -> Result<f64, EnergyError> {
    for (name, v) in [
        ("e_total", input.e_total),
        ("e_substrate", input.e_substrate),
        ("e_adsorbate", input.e_adsorbate),
    ] {
        if !v.is_finite() {
            return Err(EnergyError::NonFinite(name));
        }
    }
    Ok(input.e_total - (input.e_substrate + input.e_adsorbate))
}

/// One material system of an energy input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemInput {
    pub name: String,
    #[serde(default)]
    pub cohesive: Option<CohesiveInput>,
    #[serde(default)]
    pub binding: Option<BindingInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyInput {
    pub systems: Vec<SystemInput>,
}

impl EnergyInput {
    pub fn from_json<R: Read>(r: R) -> Result<Self, EnergyError> {
        serde_json::from_reader(r).map_err(|e| EnergyError::Input(e.to_string()))
    }

    /// CSV with header `system,e_total,e_substrate,e_adsorbate`; binding
    /// energies only.
    pub fn from_binding_csv<R: Read>(r: R) -> Result<Self, EnergyError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut systems = Vec::new();
        for row in reader.deserialize::<BindingRow>() {
            let row = row.map_err(|e| EnergyError::Input(e.to_string()))?;
            systems.push(SystemInput {
                name: row.system,
                cohesive: None,
                binding: Some(BindingInput {
                    e_total: row.e_total,
                    e_substrate: row.e_substrate,
                    e_adsorbate: row.e_adsorbate,
                }),
            });
        }
        if systems.is_empty() {
            return Err(EnergyError::Input("no systems".into()));
        }
        Ok(Self { systems })
    }
}

#[derive(Deserialize)]
struct BindingRow {
    system: String,
    e_total: f64,
    e_substrate: f64,
    e_adsorbate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEnergies {
    pub name: String,
    pub cohesive_ev: Option<f64>,
    pub binding_ev: Option<f64>,
    /// Atom count n from the constituents, echoed for bookkeeping.
    pub n_atoms: Option<u32>,
    /// Normalization count N.
    pub normalization: Option<f64>,
    pub count_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub systems: Vec<SystemEnergies>,
}

pub fn energy_report(input: &EnergyInput) -> Result<EnergyReport, EnergyError> {
    let systems = input
        .systems
        .iter()
        .map(|s| {
            Ok(SystemEnergies {
                name: s.name.clone(),
                cohesive_ev: s.cohesive.as_ref().map(cohesive_energy).transpose()?,
                binding_ev: s.binding.as_ref().map(binding_energy).transpose()?,
                n_atoms: s.cohesive.as_ref().map(|c| c.n_atoms.unwrap_or(c.atom_count())),
                normalization: s.cohesive.as_ref().map(|c| c.normalization),
                count_mismatch: s.cohesive.as_ref().is_some_and(CohesiveInput::count_mismatch),
            })
        })
        .collect::<Result<_, EnergyError>>()?;
    Ok(EnergyReport { systems })
}

impl EnergyReport {
    /// Plain-text table with one column per system, energies to two decimals.
    pub fn to_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut rows: Vec<(String, Vec<String>)> = vec![
            (
                "Properties".into(),
                self.systems.iter().map(|s| s.name.clone()).collect(),
            ),
            (
                "Cohesive/Formation Energy (eV)".into(),
                self.systems.iter().map(|s| fmt_opt(s.cohesive_ev)).collect(),
            ),
            (
                "CO2 Binding Energy (eV)".into(),
                self.systems.iter().map(|s| fmt_opt(s.binding_ev)).collect(),
            ),
        ];
        rows.push((
            "n / N".into(),
            self.systems
                .iter()
                .map(|s| match (s.n_atoms, s.normalization) {
                    (Some(n), Some(big_n)) => format!("{n} / {big_n}"),
                    _ => "-".into(),
                })
                .collect(),
        ));
        let first_w = rows.iter().map(|(h, _)| h.chars().count()).max().unwrap_or(0);
        let col_w: Vec<usize> = (0..self.systems.len())
            .map(|j| rows.iter().map(|(_, c)| c[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (head, cells) in &rows {
            let _ = write!(out, "{head:<first_w$}");
            for (cell, w) in cells.iter().zip(&col_w) {
                let _ = write!(out, " | {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}
