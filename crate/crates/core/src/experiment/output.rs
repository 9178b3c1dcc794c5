use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A CSV table. Cells are preformatted; floats use the shortest
/// representation that round-trips.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    /// CSV body: column line and rows.
    pub fn body(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Shorthand for turning a value into a table cell.
pub fn cell<T: ToString>(v: T) -> String {
    v.to_string()
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `# line` for every line of `header`, then the table body.
pub fn write_table(dir: &Path, header: &str, table: &Table) -> Result<PathBuf> {
    let mut bytes = Vec::new();
    for line in header.lines() {
        writeln!(bytes, "# {line}")?;
    }
    bytes.extend(table.body()?);
    let path = dir.join(format!("{}.csv", table.name));
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Splits a written CSV file into its header comment lines and body.
pub fn split_header(text: &str) -> (Vec<&str>, String) {
    let mut header = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix("# ") {
            Some(h) if body.is_empty() => header.push(h),
            _ => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    (header, body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec![cell(1), cell(0.1 + 0.2)]);
        let p = write_table(dir.path(), "run_id: x\nseed = 3", &t).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let (h, body) = split_header(&text);
        assert_eq!(h, vec!["run_id: x", "seed = 3"]);
        assert_eq!(body, "a,b\n1,0.30000000000000004\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
