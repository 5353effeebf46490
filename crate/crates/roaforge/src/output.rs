//! Run artifacts, collected in memory and written once at the end of a run.
//!
//! CSV dialect: comma separated, dot decimal, `\n` line endings, mandatory
//! header row. Floats use Rust's shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub const RESULT_FILE: &str = "result.json";
pub const LOG_FILE: &str = "run.log";

/// Header of the particle-count comparison table.
pub const COMPARE_HEADER: [&str; 4] = ["particles", "controller", "pct_cost_increase", "pct_roa_increase"];
pub const MASS_SWEEP_HEADER: [&str; 2] = ["mass_kg", "roa_cells"];
pub const GRID_SWEEP_HEADER: [&str; 3] = ["points_per_dim", "roa_cells", "seconds"];
pub const HISTORY_HEADER: [&str; 4] = ["iteration", "gbest_fitness", "cost_term", "roa_term"];

/// `time_s`, the state components, the inputs, `controller`.
pub fn simulate_header(state_names: &[&str], input_dim: usize) -> Vec<String> {
    let mut h = vec!["time_s".to_string()];
    h.extend(state_names.iter().map(|s| s.to_string()));
    h.extend(input_names(input_dim));
    h.push("controller".into());
    h
}

/// `controller` followed by the state components of each certified cell center.
pub fn roa_cells_header(state_names: &[&str]) -> Vec<String> {
    let mut h = vec!["controller".to_string()];
    h.extend(state_names.iter().map(|s| s.to_string()));
    h
}

pub fn input_names(input_dim: usize) -> Vec<String> {
    if input_dim == 1 {
        vec!["u".into()]
    } else {
        (0..input_dim).map(|i| format!("u{i}")).collect()
    }
}

/// In-memory CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let encode = |e: csv::Error| CliError::Encode {
            what: "csv",
            reason: e.to_string(),
        };
        w.write_record(&self.header).map_err(encode)?;
        for row in &self.rows {
            w.write_record(row).map_err(encode)?;
        }
        w.into_inner().map_err(|e| CliError::Encode {
            what: "csv",
            reason: e.to_string(),
        })
    }
}

/// Formats a float for CSV output.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Files of one run, in insertion order.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Artifacts::default()
    }

    pub fn add_bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_table(&mut self, name: impl Into<String>, table: &Table) -> CliResult<()> {
        self.add_bytes(name, table.to_bytes()?);
        Ok(())
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: &serde_json::Value) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Encode {
            what: "json",
            reason: e.to_string(),
        })?;
        bytes.push(b'\n');
        self.add_bytes(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into `dir`, each through a temporary name and a
    /// rename.
    pub fn write_all(&self, dir: &Path) -> CliResult<()> {
        let io = |path: PathBuf| move |source| CliError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.partial"));
            fs::write(&tmp, bytes).map_err(io(tmp.clone()))?;
            fs::rename(&tmp, &target).map_err(io(target.clone()))?;
        }
        Ok(())
    }
}

/// Seconds since the Unix epoch; the only wall-clock value in `result.json`.
pub fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_dialect() {
        let mut t = Table::new(&MASS_SWEEP_HEADER);
        t.push(vec![num(0.1), num(1234.0)]);
        t.push(vec![num(0.7), num(12.5)]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "mass_kg,roa_cells\n0.1,1234\n0.7,12.5\n");
    }

    #[test]
    fn header_only_table() {
        let t = Table::new(&GRID_SWEEP_HEADER);
        assert_eq!(t.to_bytes().unwrap(), b"points_per_dim,roa_cells,seconds\n");
    }

    #[test]
    fn simulate_header_layout() {
        assert_eq!(
            simulate_header(&["phi", "phi_dot"], 1),
            ["time_s", "phi", "phi_dot", "u", "controller"]
        );
    }
}
