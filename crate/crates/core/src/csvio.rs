//! Minimal numeric CSV: a header line and rows of floats written with 17
//! significant digits so values round-trip exactly.

use crate::error::{Error, Result};

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_table(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format_value(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a table written by [`write_table`]. Errors carry 1-based line
/// numbers.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("csv table"))?;
    let header: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("line {}: bad number {:?}: {e}", i + 1, c.trim()))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected {} columns, found {}",
                i + 1,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
