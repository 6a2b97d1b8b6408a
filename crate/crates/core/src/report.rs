//! Tabular and file output: RFC-4180 CSV with full-precision floats,
//! and atomic file writes so partial output never lands under a final
//! name.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Quote a field per RFC 4180 when it contains a comma, quote, or line
/// break; embedded quotes double.
pub fn csv_field(raw: &str) -> String {
    if raw.contains(['"', ',', '\n', '\r']) {
        let mut out = String::with_capacity(raw.len() + 2);
        out.push('"');
        for c in raw.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
        out
    } else {
        raw.to_string()
    }
}

/// A rectangular table rendered to RFC-4180 CSV: CRLF record breaks,
/// '.' decimal separator, header row first.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Self { header: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    /// Append a row; panics when the width disagrees with the header,
    /// which is always a programming error in the caller.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for record in std::iter::once(&self.header).chain(&self.rows) {
            let mut first = true;
            for field in record {
                if !first {
                    out.push(',');
                }
                out.push_str(&csv_field(field));
                first = false;
            }
            out.push_str("\r\n");
        }
        out
    }
}

/// Write through a temporary sibling plus rename, so readers only ever
/// see complete files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, 1.0, -1.5, std::f64::consts::PI, 1e-300, 6.02e23, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(!s.contains(','));
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_field("line\nbreak"), "\"line\nbreak\"");
    }

    #[test]
    fn table_renders_crlf_records() {
        let mut t = Table::new(vec!["beta", "pressure"]);
        t.push(vec![format_float(0.0), format_float(2.0f64.ln())]);
        let csv = t.to_csv();
        assert!(csv.starts_with("beta,pressure\r\n"));
        assert_eq!(csv.matches("\r\n").count(), 2);
        assert!(csv.ends_with("\r\n"));
    }

    #[test]
    fn atomic_write_replaces_whole_files() {
        let dir = std::env::temp_dir().join(format!("report-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        let leftovers: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name() != "out.csv")
            .collect();
        assert!(leftovers.is_empty(), "temp files left behind");
        fs::remove_dir_all(&dir).unwrap();
    }
}
