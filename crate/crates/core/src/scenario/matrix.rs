//! Attack-feasibility matrix over IO-capability combinations.
//!
//! Rows are the 15 unordered IO pairs crossed with OOB availability;
//! columns are attacker variants. Each cell runs N seeded scenarios with
//! honest users and reports the fraction that ended in `AttackSucceeded`.
//! OOB-available rows run with a mandatory-OOB policy, which is the
//! countermeasure configuration the matrix is meant to demonstrate: those
//! rows stay at zero under every attacker, including the downgrade.

use serde::Serialize;

use crate::attacker::AttackerConfig;
use crate::pairing::IoCapability;
use crate::scenario::{run_scenario, Outcome, ScenarioSpec, UserAgentPolicy};

/// Canned attacker configurations used as matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackerVariant {
    None,
    JamOnly,
    Full,
    Downgrade,
}

impl AttackerVariant {
    pub const ALL: [AttackerVariant; 4] = [
        AttackerVariant::None,
        AttackerVariant::JamOnly,
        AttackerVariant::Full,
        AttackerVariant::Downgrade,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackerVariant::None => "none",
            AttackerVariant::JamOnly => "jam-only",
            AttackerVariant::Full => "full",
            AttackerVariant::Downgrade => "downgrade",
        }
    }

    pub fn config(self) -> Option<AttackerConfig> {
        match self {
            AttackerVariant::None => None,
            AttackerVariant::JamOnly => Some(AttackerConfig::jam_only()),
            AttackerVariant::Full => Some(AttackerConfig::full()),
            AttackerVariant::Downgrade => Some(AttackerConfig::downgrade()),
        }
    }
}

impl std::str::FromStr for AttackerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AttackerVariant::None),
            "jam-only" => Ok(AttackerVariant::JamOnly),
            "full" => Ok(AttackerVariant::Full),
            "downgrade" => Ok(AttackerVariant::Downgrade),
            other => Err(format!("unknown attacker variant {other:?}")),
        }
    }
}

/// One matrix row: an unordered IO pair plus OOB availability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatrixRow {
    pub io_a: IoCapability,
    pub io_b: IoCapability,
    pub oob: bool,
}

impl MatrixRow {
    pub fn label(&self) -> String {
        format!("{:?}+{:?}", self.io_a, self.io_b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityMatrix {
    pub rows: Vec<MatrixRow>,
    pub columns: Vec<&'static str>,
    /// Attack success rates, `cells[row][column]`, each in [0, 1].
    pub cells: Vec<Vec<f64>>,
    pub seeds_per_cell: u32,
    pub base_seed: u64,
}

/// All 15 unordered IO pairs, no-OOB rows first.
pub fn matrix_rows() -> Vec<MatrixRow> {
    let mut rows = Vec::with_capacity(30);
    for oob in [false, true] {
        for (i, &io_a) in IoCapability::ALL.iter().enumerate() {
            for &io_b in &IoCapability::ALL[i..] {
                rows.push(MatrixRow { io_a, io_b, oob });
            }
        }
    }
    rows
}

/// The scenario a matrix cell runs: honest users, default policies, and
/// mandatory OOB whenever the row has OOB available.
pub fn cell_spec(row: &MatrixRow, variant: AttackerVariant, seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::honest(row.io_a, row.io_b, row.oob, seed);
    if row.oob {
        spec.device_a.config.policy.require_oob = true;
        spec.device_b.config.policy.require_oob = true;
    }
    spec.device_a.user_agent = UserAgentPolicy::HonestComparing;
    spec.device_b.user_agent = UserAgentPolicy::HonestPasskeyTransfer;
    spec.max_slots = 2_000;
    if let Some(cfg) = variant.config() {
        spec.attacker = Some(cfg);
    }
    spec
}

/// Computes success rates over `seeds_per_cell` seeded runs per cell.
/// Seeds derive as `base_seed + cell_index * seeds_per_cell + k`, so the
/// matrix is a pure function of its arguments.
pub fn feasibility_matrix(
    base_seed: u64,
    seeds_per_cell: u32,
    variants: &[AttackerVariant],
) -> FeasibilityMatrix {
    let rows = matrix_rows();
    let mut cells = Vec::with_capacity(rows.len());
    for (row_idx, row) in rows.iter().enumerate() {
        let mut row_cells = Vec::with_capacity(variants.len());
        for (col_idx, variant) in variants.iter().enumerate() {
            let cell_index = (row_idx * variants.len() + col_idx) as u64;
            let mut successes = 0u32;
            for k in 0..seeds_per_cell {
                let seed = base_seed + cell_index * u64::from(seeds_per_cell) + u64::from(k);
                let spec = cell_spec(row, *variant, seed);
                let result = run_scenario(&spec).expect("matrix specs are valid");
                if result.outcome == Outcome::AttackSucceeded {
                    successes += 1;
                }
            }
            row_cells.push(f64::from(successes) / f64::from(seeds_per_cell));
        }
        cells.push(row_cells);
    }
    FeasibilityMatrix {
        rows,
        columns: variants.iter().map(|v| v.name()).collect(),
        cells,
        seeds_per_cell,
        base_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_rows_in_canonical_order() {
        let rows = matrix_rows();
        assert_eq!(rows.len(), 30);
        assert!(!rows[0].oob && rows[15].oob);
        // unordered pairs: io_a is never "greater" than io_b in ALL order
        for row in &rows {
            let pos_a = IoCapability::ALL.iter().position(|&c| c == row.io_a);
            let pos_b = IoCapability::ALL.iter().position(|&c| c == row.io_b);
            assert!(pos_a <= pos_b);
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for variant in AttackerVariant::ALL {
            assert_eq!(variant.name().parse::<AttackerVariant>(), Ok(variant));
        }
    }
}
