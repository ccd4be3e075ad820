//! `kgfed export`: one embedding table as CSV, `id,label,v0,v1,...`.
//!
//! Values are written in `{:.16e}` so that importing gives back the exact
//! floats.

use std::fmt::Write as _;
use std::path::Path;

use kgfed::embedding::{checkpoint, EmbeddingTable};
use kgfed::kg::Labels;

use crate::io::{read, write};
use crate::{CliError, Result};

pub fn export_csv(table: &EmbeddingTable, labels: Option<&Labels>) -> String {
    let mut out = String::from("id,label");
    for j in 0..table.width() {
        let _ = write!(out, ",v{j}");
    }
    out.push('\n');
    for i in 0..table.rows() {
        let label = labels.and_then(|l| l.name(i as u32)).unwrap_or("");
        let _ = write!(out, "{i},{}", quote(label));
        for v in table.row(i) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Reads the values of an exported table back, row by row. Labels are
/// skipped, so only the numeric columns after the first two fields count.
pub fn import_csv(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let width = header.split(',').count().checked_sub(2).ok_or("bad header")?;
    lines
        .enumerate()
        .map(|(i, line)| {
            let values: Vec<&str> = line.rsplitn(width + 1, ',').collect();
            if values.len() != width + 1 {
                return Err(format!("line {}: expected {width} values", i + 2));
            }
            values[..width]
                .iter()
                .rev()
                .map(|v| v.parse::<f64>().map_err(|_| format!("line {}: bad value `{v}`", i + 2)))
                .collect()
        })
        .collect()
}

pub fn run(path: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let (table, _) = checkpoint::read(path)?;
    let labels = match labels {
        Some(p) => Some(Labels::parse_dump(&read(p)?).map_err(|e| CliError::Input { path: p.to_owned(), reason: e.to_string() })?),
        None => None,
    };
    write(out, export_csv(&table, labels.as_ref()))?;
    println!("{} rows x {} columns -> {}", table.rows(), table.width(), out.display());
    Ok(())
}
