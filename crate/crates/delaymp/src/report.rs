//! CSV and report emission.
//!
//! Every output file starts with `#`-prefixed provenance comment lines
//! (seed, grid, n_paths, version, wall clock), then a header row, then one
//! record per line. Numbers use `.` as the decimal separator via Rust's
//! default float formatting, which round-trips exactly — so for a fixed
//! seed the body below the comments is byte-identical across runs and
//! worker counts. The wall-clock line is the only nondeterministic content
//! and lives in the comment header.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;

/// Provenance recorded in every output header.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub seed: u64,
    pub grid: String,
    pub n_paths: usize,
}

impl Provenance {
    pub fn header_lines(&self) -> Vec<String> {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        vec![
            format!("# seed: {}", self.seed),
            format!("# grid: {}", self.grid),
            format!("# n_paths: {}", self.n_paths),
            format!("# version: {}", env!("CARGO_PKG_VERSION")),
            format!("# generated_at_unix: {wall}"),
        ]
    }
}

/// Shortest exact decimal representation of a float.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Writes a provenance header, a column header row, and the records.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in prov.header_lines() {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a plain-text report with the same provenance header.
pub fn write_report(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in prov.header_lines() {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{body}")?;
    out.flush()?;
    Ok(())
}

/// The non-comment lines of a file, for determinism comparisons that must
/// ignore the wall-clock header.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_body() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let prov = Provenance {
            seed: 42,
            grid: "T=1 delta=0.5 steps_per_delay=8".into(),
            n_paths: 100,
        };
        let rows = vec![vec![fmt(0.0), fmt(1.5)], vec![fmt(0.125), fmt(-2.25)]];
        write_csv(&path, &prov, &["t", "x"], &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# seed: 42\n"));
        assert!(text.contains("# n_paths: 100"));
        assert!(text.contains("# version:"));
        assert_eq!(csv_body(&text), "t,x\n0,1.5\n0.125,-2.25");
    }

    #[test]
    fn fmt_round_trips() {
        for x in [0.1, -3.25, 1e-17, f64::MAX, 2.0 / 3.0] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
            assert!(!fmt(x).contains(','));
        }
    }

    #[test]
    fn body_ignores_comments() {
        assert_eq!(csv_body("# a\nh\n1\n# b\n2"), "h\n1\n2");
    }
}
