//! Feasibility matrices, cell derivation, and golden-file diffing.
//!
//! One cell vocabulary maps one-to-one onto the published legend: red bug,
//! orange bug, green shield (split by cause into TLS and FIXED), green ban,
//! and dash.

use serde::{Deserialize, Serialize};

use attacker_kit::{AttackOutcome, AttackResult, Gate, Reason, WitnessOutcome};
use device_emulator::Mode;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "FEASIBLE")]
    Feasible,
    #[serde(rename = "FEASIBLE_NO_BENEFIT")]
    FeasibleNoBenefit,
    #[serde(rename = "INFEASIBLE_TLS")]
    InfeasibleTls,
    #[serde(rename = "INFEASIBLE_BLUETOOTH")]
    InfeasibleBluetooth,
    #[serde(rename = "INFEASIBLE_FIXED")]
    InfeasibleFixed,
    #[serde(rename = "NOT_APPLICABLE")]
    NotApplicable,
}

impl Cell {
    /// Legend token used in Markdown reports.
    pub fn token(&self) -> &'static str {
        match self {
            Cell::Feasible => "BUG",
            Cell::FeasibleNoBenefit => "BUG-NO-BENEFIT",
            Cell::InfeasibleTls | Cell::InfeasibleFixed => "SHIELD",
            Cell::InfeasibleBluetooth => "BAN",
            Cell::NotApplicable => "DASH",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Cell::Feasible => "FEASIBLE",
            Cell::FeasibleNoBenefit => "FEASIBLE_NO_BENEFIT",
            Cell::InfeasibleTls => "INFEASIBLE_TLS",
            Cell::InfeasibleBluetooth => "INFEASIBLE_BLUETOOTH",
            Cell::InfeasibleFixed => "INFEASIBLE_FIXED",
            Cell::NotApplicable => "NOT_APPLICABLE",
        }
    }
}

/// Maps an attack outcome to a table cell. In fixed-firmware grids an attack
/// blocked by a transport gate that predates the fixes (TLS, Bluetooth)
/// compares as "not applicable", mirroring the published tables' dashes.
pub fn cell_for_outcome(firmware: Mode, outcome: &AttackOutcome) -> Cell {
    match outcome.result {
        AttackResult::Feasible => Cell::Feasible,
        AttackResult::FeasibleNoBenefit => Cell::FeasibleNoBenefit,
        AttackResult::Infeasible => match outcome.reason {
            Reason::TlsChannel => {
                if firmware == Mode::Fixed {
                    Cell::NotApplicable
                } else {
                    Cell::InfeasibleTls
                }
            }
            Reason::BluetoothConfig => {
                if firmware == Mode::Fixed {
                    Cell::NotApplicable
                } else {
                    Cell::InfeasibleBluetooth
                }
            }
            Reason::IdentityProof | Reason::TimestampCheck => Cell::InfeasibleFixed,
            Reason::AppRejectedResponse | Reason::Ok => Cell::InfeasibleFixed,
        },
    }
}

/// Maps a vulnerability witness to a table cell.
pub fn cell_for_witness(firmware: Mode, witness: &WitnessOutcome) -> Cell {
    if witness.observed {
        return Cell::Feasible;
    }
    match witness.gate {
        Some(Gate::Tls) => {
            if firmware == Mode::Fixed {
                Cell::NotApplicable
            } else {
                Cell::InfeasibleTls
            }
        }
        Some(Gate::Bluetooth) => {
            if firmware == Mode::Fixed {
                Cell::NotApplicable
            } else {
                Cell::InfeasibleBluetooth
            }
        }
        None => Cell::InfeasibleFixed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityMatrix {
    pub schema_version: u32,
    /// "scenario-feasibility" or "vulnerability-exposure".
    pub title: String,
    /// "vulnerable" or "fixed".
    pub firmware: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl FeasibilityMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<Cell> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.cols.iter().position(|x| x == col)?;
        self.cells.get(r)?.get(c).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable matrix")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| HarnessError::BadJson(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Markdown table rendering with the legend tokens.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("### {} ({} firmware)\n\n", self.title, self.firmware));
        out.push_str(&format!("| | {} |\n", self.cols.join(" | ")));
        out.push_str(&format!("|---|{}\n", "---|".repeat(self.cols.len())));
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            let tokens: Vec<&str> = cells.iter().map(Cell::token).collect();
            out.push_str(&format!("| {} | {} |\n", row, tokens.join(" | ")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffEntry {
    pub row: String,
    pub col: String,
    pub actual: Cell,
    pub golden: Cell,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatrixDiff {
    pub discrepancies: Vec<DiffEntry>,
}

impl MatrixDiff {
    pub fn is_empty(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

/// Per-cell comparison; empty diff iff the matrices agree everywhere.
pub fn diff_matrices(actual: &FeasibilityMatrix, golden: &FeasibilityMatrix) -> Result<MatrixDiff> {
    if actual.rows != golden.rows || actual.cols != golden.cols {
        return Err(HarnessError::AxisMismatch(format!(
            "actual {:?}x{:?} vs golden {:?}x{:?}",
            actual.rows, actual.cols, golden.rows, golden.cols
        )));
    }
    let mut diff = MatrixDiff::default();
    for (r, row) in actual.rows.iter().enumerate() {
        for (c, col) in actual.cols.iter().enumerate() {
            let a = actual.cells[r][c];
            let g = golden.cells[r][c];
            if a != g {
                diff.discrepancies.push(DiffEntry {
                    row: row.clone(),
                    col: col.clone(),
                    actual: a,
                    golden: g,
                });
            }
        }
    }
    Ok(diff)
}
