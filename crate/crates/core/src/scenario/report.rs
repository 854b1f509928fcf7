//! Report rendering and emission.
//!
//! All formats have stable field ordering: rendering the same result or
//! matrix twice yields byte-identical output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::scenario::matrix::FeasibilityMatrix;
use crate::scenario::{ScenarioError, ScenarioResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// JSON document for a single run; field order is declaration order.
#[derive(Serialize)]
struct ResultDoc<'a> {
    outcome: &'static str,
    abort_reason: Option<&'static str>,
    link_keys_match: bool,
    transcript_length: usize,
    model: Option<String>,
    relay_verified: bool,
    attacker_keys_captured: usize,
    slots_used: u64,
    seed: u64,
    transcript: Vec<String>,
    intercept_log: &'a [crate::attacker::InterceptRecord],
}

pub fn render_result(result: &ScenarioResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let doc = ResultDoc {
                outcome: result.outcome.name(),
                abort_reason: result.abort_reason.map(|r| r.name()),
                link_keys_match: result.link_keys_match,
                transcript_length: result.transcript.len(),
                model: result.model.map(|m| m.to_string()),
                relay_verified: result.relay_verified,
                attacker_keys_captured: result.attacker_keys_captured,
                slots_used: result.slots_used,
                seed: result.seed,
                transcript: result.transcript.iter().map(|e| e.render()).collect(),
                intercept_log: &result.intercept_log,
            };
            let mut out = serde_json::to_string_pretty(&doc).expect("serializable");
            out.push('\n');
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("outcome,abort_reason,link_keys_match,transcript_length\n");
            out.push_str(&format!(
                "{},{},{},{}\n",
                result.outcome.name(),
                result.abort_reason.map(|r| r.name()).unwrap_or(""),
                result.link_keys_match,
                result.transcript.len()
            ));
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("outcome:        {}\n", result.outcome.name()));
            out.push_str(&format!(
                "abort reason:   {}\n",
                result.abort_reason.map(|r| r.name()).unwrap_or("-")
            ));
            out.push_str(&format!(
                "model:          {}\n",
                result
                    .model
                    .map(|m| m.to_string())
                    .unwrap_or_else(|| "-".into())
            ));
            out.push_str(&format!("link keys match: {}\n", result.link_keys_match));
            out.push_str(&format!("relay verified: {}\n", result.relay_verified));
            out.push_str(&format!(
                "keys captured:  {}\n",
                result.attacker_keys_captured
            ));
            out.push_str(&format!("slots used:     {}\n", result.slots_used));
            out.push_str(&format!("seed:           {}\n", result.seed));
            if !result.intercept_log.is_empty() {
                out.push_str("intercepted plaintext:\n");
                for record in &result.intercept_log {
                    out.push_str(&format!("  {}\n", record.export_line()));
                }
            }
            out.push_str("transcript:\n");
            out.push_str(&result.transcript_text());
            out
        }
    }
}

pub fn render_matrix(matrix: &FeasibilityMatrix, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("io_pair,oob,attacker,success_rate\n");
            for (row, cells) in matrix.rows.iter().zip(&matrix.cells) {
                for (column, rate) in matrix.columns.iter().zip(cells) {
                    out.push_str(&format!(
                        "{},{},{},{:.4}\n",
                        row.label(),
                        row.oob,
                        column,
                        rate
                    ));
                }
            }
            out
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(matrix).expect("serializable");
            out.push('\n');
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "attack success rates over {} seeds per cell (base seed {})\n\n",
                matrix.seeds_per_cell, matrix.base_seed
            ));
            out.push_str(&format!("{:<38}{:>6}", "io pair", "oob"));
            for column in &matrix.columns {
                out.push_str(&format!("{column:>12}"));
            }
            out.push('\n');
            for (row, cells) in matrix.rows.iter().zip(&matrix.cells) {
                out.push_str(&format!("{:<38}{:>6}", row.label(), row.oob));
                for rate in cells {
                    out.push_str(&format!("{rate:>12.3}"));
                }
                out.push('\n');
            }
            out
        }
    }
}

/// Writes `content` to the destination (stdout when `None`).
pub fn emit(content: &str, destination: Option<&Path>) -> Result<(), ScenarioError> {
    match destination {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            file.write_all(content.as_bytes())?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::IoCapability;
    use crate::scenario::matrix::{feasibility_matrix, AttackerVariant};
    use crate::scenario::{run_scenario, ScenarioSpec};

    #[test]
    fn json_result_has_contracted_keys() {
        let spec = ScenarioSpec::honest(
            IoCapability::DisplayYesNo,
            IoCapability::DisplayYesNo,
            false,
            3,
        );
        let result = run_scenario(&spec).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&render_result(&result, ReportFormat::Json)).unwrap();
        for key in [
            "outcome",
            "abort_reason",
            "link_keys_match",
            "transcript_length",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(json["outcome"], "secure_paired");
    }

    #[test]
    fn matrix_csv_header_is_contracted() {
        let matrix = feasibility_matrix(1, 1, &[AttackerVariant::None]);
        let csv = render_matrix(&matrix, ReportFormat::Csv);
        assert!(csv.starts_with("io_pair,oob,attacker,success_rate\n"));
        // 30 rows x 1 column + header
        assert_eq!(csv.lines().count(), 31);
    }

    #[test]
    fn unwritable_destination_is_io_failure() {
        let err = emit("x", Some(Path::new("/nonexistent-dir/report.txt"))).unwrap_err();
        assert!(matches!(err, ScenarioError::IoFailure(_)));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let spec = ScenarioSpec::honest(
            IoCapability::NoInputNoOutput,
            IoCapability::DisplayYesNo,
            false,
            9,
        );
        let r1 = render_result(&run_scenario(&spec).unwrap(), ReportFormat::Json);
        let r2 = render_result(&run_scenario(&spec).unwrap(), ReportFormat::Json);
        assert_eq!(r1, r2);
    }
}
