//! Shared pieces of the text and JSON reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};

pub fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::io(Path::new("<stdout>"), e))
}

pub fn fmt_r2(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

/// Reference scores keyed by law identifier, then by column label.
pub type Reference = BTreeMap<String, BTreeMap<String, f64>>;

pub fn load_reference(path: &Path) -> CliResult<Reference> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::validation(format!(
            "{}: reference must map law -> column -> score: {e}",
            path.display()
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub law: String,
    pub column: String,
    pub ours: Option<f64>,
    pub reference: f64,
    /// `ours - reference`.
    pub delta: Option<f64>,
}

/// One delta per reference entry whose column exists in `columns`.
pub fn deltas(reference: &Reference, columns: &[String], lookup: impl Fn(&str, usize) -> Option<Option<f64>>) -> Vec<Delta> {
    let mut out = Vec::new();
    for (law, cols) in reference {
        for (column, &value) in cols {
            let Some(index) = columns.iter().position(|c| c == column) else {
                continue;
            };
            let Some(ours) = lookup(law, index) else {
                continue;
            };
            out.push(Delta {
                law: law.clone(),
                column: column.clone(),
                ours,
                reference: value,
                delta: ours.map(|o| o - value),
            });
        }
    }
    out
}

pub fn render_deltas(deltas: &[Delta]) -> String {
    if deltas.is_empty() {
        return String::new();
    }
    let mut table = crate::table::TextTable::new(vec![
        "Law".into(),
        "Column".into(),
        "Ours".into(),
        "Reference".into(),
        "Delta".into(),
    ]);
    for d in deltas {
        table.push(vec![
            d.law.clone(),
            d.column.clone(),
            d.ours.map_or("n/a".into(), |v| format!("{v:.3}")),
            format!("{:.3}", d.reference),
            d.delta.map_or("n/a".into(), |v| format!("{v:+.3}")),
        ]);
    }
    format!("\nAgainst reference (not gated):\n{}", table.render())
}
