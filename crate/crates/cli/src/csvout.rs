//! CSV tables with a provenance comment line.
//!
//! Layout: `# phamp <version> config-sha256=<hex> command=<name>`, a header row, data rows
//! and optional `# key=value` footer lines. Fields are comma separated, lines end in LF and
//! numbers use '.' as the decimal separator.

use std::path::Path;

use crate::error::CliError;

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    footer: Vec<String>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    /// Adds a `# key=value` line after the data.
    pub fn footer(&mut self, key: &str, value: &str) {
        self.footer.push(format!("# {key}={value}"));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self, config_sha256: &str, command: &str) -> Result<Vec<u8>, CliError> {
        let mut out = format!(
            "# phamp {} config-sha256={config_sha256} command={command}\n",
            env!("CARGO_PKG_VERSION")
        )
        .into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            let fail = |e: csv::Error| CliError::Numerical(format!("csv encoding: {e}"));
            w.write_record(&self.header).map_err(fail)?;
            for r in &self.rows {
                w.write_record(r).map_err(fail)?;
            }
            w.flush().map_err(|e| CliError::io("csv encoding", e))?;
        }
        for line in &self.footer {
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, config_sha256: &str, command: &str) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io("creating output directory", e))?;
        }
        let bytes = self.to_bytes(config_sha256, command)?;
        std::fs::write(path, bytes).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
    }
}
