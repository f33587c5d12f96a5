//! Merges communication-report CSVs into grouped medians for plotting.

use crate::stats::median;
use crate::CliError;
use dpagg_core::protocol::CommunicationReport;
use std::collections::BTreeMap;
use std::path::Path;

/// Columns that vary run to run; they are summarized by their median.
pub const TIMING_COLUMNS: [&str; 8] = [
    "client_ms",
    "server_ms",
    "server_reconstruct_ms",
    "setup_ms",
    "client_ms_p50",
    "client_ms_p90",
    "server_ms_p50",
    "server_ms_p90",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn read(path: &Path) -> Result<Table, CliError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| {
                r.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| csv_err(path, e))
            })
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::Io(format!("{}: {e}", path.display()))
    } else {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

/// `"missing [a, b]; unexpected [c]"` relative to `expected`.
pub fn column_diff(expected: &[String], got: &[String]) -> String {
    let missing: Vec<&str> = expected
        .iter()
        .filter(|c| !got.contains(c))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = got
        .iter()
        .filter(|c| !expected.contains(c))
        .map(String::as_str)
        .collect();
    if missing.is_empty() && extra.is_empty() {
        "same columns in a different order".to_string()
    } else {
        format!("missing {missing:?}; unexpected {extra:?}")
    }
}

/// Concatenates the inputs, insisting on one schema that includes every
/// communication-report column.
pub fn load_all(inputs: &[&Path]) -> Result<Table, CliError> {
    let mut merged: Option<Table> = None;
    for path in inputs {
        let t = Table::read(path)?;
        let required: Vec<String> = CommunicationReport::CSV_HEADER
            .iter()
            .map(|s| s.to_string())
            .collect();
        if required.iter().any(|c| !t.header.contains(c)) {
            return Err(CliError::Config(format!(
                "{}: not a report CSV: {}",
                path.display(),
                column_diff(&required, &t.header)
            )));
        }
        match merged.as_mut() {
            None => merged = Some(t),
            Some(m) if m.header == t.header => m.rows.extend(t.rows),
            Some(m) => {
                return Err(CliError::Config(format!(
                    "{}: schema differs from {}: {}",
                    path.display(),
                    inputs[0].display(),
                    column_diff(&m.header, &t.header)
                )))
            }
        }
    }
    merged.ok_or_else(|| CliError::Config("report needs at least one input".into()))
}

/// Groups rows on every non-timing column (dropping `rep`) and replaces
/// timing columns with their group median. Groups keep first-seen order; a
/// group of one row is copied verbatim.
pub fn group_medians(table: &Table) -> Result<Table, CliError> {
    let rep = table.column("rep");
    let timing: Vec<bool> = table
        .header
        .iter()
        .map(|h| TIMING_COLUMNS.contains(&h.as_str()))
        .collect();
    let keep: Vec<usize> = (0..table.header.len())
        .filter(|&i| Some(i) != rep)
        .collect();
    let mut order: Vec<Vec<String>> = Vec::new();
    let mut groups: BTreeMap<Vec<String>, Vec<&Vec<String>>> = BTreeMap::new();
    for row in &table.rows {
        if row.len() != table.header.len() {
            return Err(CliError::Config(format!(
                "row {row:?} has {} fields, header has {}",
                row.len(),
                table.header.len()
            )));
        }
        let key: Vec<String> = keep
            .iter()
            .filter(|&&i| !timing[i])
            .map(|&i| row[i].clone())
            .collect();
        let g = groups.entry(key.clone()).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(row);
    }
    let mut rows = Vec::with_capacity(order.len());
    for key in order {
        let members = &groups[&key];
        let row = keep
            .iter()
            .map(|&i| {
                if !timing[i] || members.len() == 1 {
                    return Ok(members[0][i].clone());
                }
                let vals = members
                    .iter()
                    .map(|r| r[i].parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("column {}: {e}", table.header[i])))?;
                Ok(format!("{:.3}", median(&vals)))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        rows.push(row);
    }
    Ok(Table {
        header: keep.iter().map(|&i| table.header[i].clone()).collect(),
        rows,
    })
}

/// Median expansion per (k, m), sorted by k then m.
pub fn expansion_curves(table: &Table) -> Result<Table, CliError> {
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| CliError::Config(format!("missing column {name}")))
    };
    let (ki, mi, ni, ei) = (col("k")?, col("m")?, col("n")?, col("expansion")?);
    let parse = |r: &Vec<String>, i: usize| -> Result<f64, CliError> {
        r[i].parse()
            .map_err(|e| CliError::Config(format!("column {}: {:?}: {e}", table.header[i], r[i])))
    };
    let mut by: BTreeMap<(u64, u64), (String, Vec<f64>)> = BTreeMap::new();
    for r in &table.rows {
        let e = by
            .entry((parse(r, ki)? as u64, parse(r, mi)? as u64))
            .or_insert_with(|| (r[ni].clone(), Vec::new()));
        e.1.push(parse(r, ei)?);
    }
    Ok(Table {
        header: ["k", "m", "n", "expansion"].map(String::from).to_vec(),
        rows: by
            .into_iter()
            .map(|((k, m), (n, e))| {
                vec![
                    k.to_string(),
                    m.to_string(),
                    n,
                    format!("{:.6}", median(&e)),
                ]
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[&str; 11]]) -> Table {
        Table {
            header: CommunicationReport::CSV_HEADER
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn single_row_passes_through() {
        let t = table(&[[
            "8", "64", "710", "31352833", "0", "900", "5000", "3.515625", "1.234567", "2.5", "ok",
        ]]);
        assert_eq!(group_medians(&t).unwrap(), t);
    }

    #[test]
    fn timing_columns_take_medians() {
        let t = table(&[
            [
                "8", "64", "710", "31352833", "0", "900", "5000", "3.5", "1.0", "7.0", "ok",
            ],
            [
                "8", "64", "710", "31352833", "0", "900", "5000", "3.5", "3.0", "5.0", "ok",
            ],
            [
                "8", "64", "710", "31352833", "0", "900", "5000", "3.5", "2.0", "6.0", "ok",
            ],
            [
                "8", "128", "710", "31352833", "0", "1156", "5000", "2.2", "2.0", "6.0", "ok",
            ],
        ]);
        let g = group_medians(&t).unwrap();
        assert_eq!(g.rows.len(), 2);
        assert_eq!(g.rows[0][8], "2.000");
        assert_eq!(g.rows[0][9], "6.000");
        let c = expansion_curves(&g).unwrap();
        assert_eq!(c.rows[0], vec!["8", "64", "710", "3.500000"]);
    }

    #[test]
    fn column_diff_names_columns() {
        let a: Vec<String> = ["k", "m", "x"].map(String::from).to_vec();
        let b: Vec<String> = ["k", "m", "y"].map(String::from).to_vec();
        assert_eq!(column_diff(&a, &b), "missing [\"x\"]; unexpected [\"y\"]");
    }
}
