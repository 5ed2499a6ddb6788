use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, Result};

pub const CONFIG_PREFIX: &str = "# config: ";

/// A result table with string cells; floats are rendered with their
/// shortest round-trip representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

fn write_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

/// Opens `path` and writes the config comment row.
pub fn create_with_config(path: &Path, config_json: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path).map_err(write_error(path))?);
    writeln!(w, "{CONFIG_PREFIX}{config_json}").map_err(write_error(path))?;
    Ok(w)
}

pub fn write_table(path: &Path, config_json: &str, table: &Table) -> Result<()> {
    let mut w = create_with_config(path, config_json)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(&table.header).map_err(|e| write_error(path)(e.into()))?;
        for row in &table.rows {
            csv.write_record(row).map_err(|e| write_error(path)(e.into()))?;
        }
        csv.flush().map_err(write_error(path))?;
    }
    w.flush().map_err(write_error(path))
}

/// Reads a table written by [`write_table`], returning the recorded config JSON.
pub fn read_table(path: &Path) -> Result<(String, Table)> {
    let read_error = |source| CliError::Read {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(read_error)?);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(read_error)?;
    let config = first
        .trim_end()
        .strip_prefix(CONFIG_PREFIX)
        .ok_or_else(|| CliError::config(format!("{} has no config row", path.display())))?
        .to_string();
    let mut csv = csv::Reader::from_reader(reader);
    let bad = |e: csv::Error| CliError::Core(e.into());
    let header = csv.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = csv
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()).map_err(bad))
        .collect::<Result<_>>()?;
    Ok((config, Table { header, rows }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), num(0.1 + 0.2)]);
        t.push(vec!["x,y".into(), num(-0.0)]);
        write_table(&path, r#"{"k":[5]}"#, &t).unwrap();
        let (config, back) = read_table(&path).unwrap();
        assert_eq!(config, r#"{"k":[5]}"#);
        assert_eq!(back, t);
        assert_eq!(back.rows[0][1].parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
