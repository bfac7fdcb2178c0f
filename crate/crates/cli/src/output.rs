//! File formats: voltage tables, CSV series and JSON documents, each
//! carrying the configuration hash.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

/// CSV with a `# config_hash=` line, a header and preformatted rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(hash: &str, header: &[String]) -> Self {
        let mut text = format!("# config_hash={hash}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn comment(&mut self, line: &str) {
        let at = self.text.find('\n').map_or(0, |k| k + 1);
        self.text.insert_str(at, &format!("# {line}\n"));
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &self.text)
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// Voltage table: `electrode,voltage_mv`, one row per electrode, values
/// written with round-trip precision.
pub fn write_voltages(path: &Path, hash: &str, label: &str, v: &[f64]) -> Result<(), CliError> {
    let mut csv = Csv::new(hash, &["electrode".into(), "voltage_mv".into()]);
    csv.comment(&format!("configuration={label}"));
    for (k, x) in v.iter().enumerate() {
        csv.row(&[(k + 1).to_string(), format!("{x:?}")]);
    }
    csv.write(path)
}

pub fn read_voltages(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if fields != ["electrode", "voltage_mv"] {
                return Err(io_err(
                    path,
                    format!("expected header electrode,voltage_mv, got {line:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        let bad = |what: &str| io_err(path, format!("line {}: {what}", lineno + 1));
        if fields.len() != 2 {
            return Err(bad("expected two fields"));
        }
        let e: usize = fields[0].parse().map_err(|_| bad("bad electrode index"))?;
        let v: f64 = fields[1].parse().map_err(|_| bad("bad voltage"))?;
        rows.push((e, v));
    }
    if rows.is_empty() {
        return Err(io_err(path, "no voltages"));
    }
    for (k, (e, _)) in rows.iter().enumerate() {
        if *e != k + 1 {
            return Err(io_err(
                path,
                format!("electrodes must be numbered 1..n in order, found {e} at row {}", k + 1),
            ));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voltages_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let v = vec![345.71556352359346, -0.1, 1e-300, 0.0, -999.9999999999999];
        write_voltages(&path, "abc", "I", &v).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\n# configuration=I\nelectrode,voltage_mv\n"));
        assert_eq!(read_voltages(&path).unwrap(), v);
    }

    #[test]
    fn malformed_voltages() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        for bad in [
            "x,y\n1,2\n",
            "electrode,voltage_mv\n2,1\n",
            "electrode,voltage_mv\n1,abc\n",
            "electrode,voltage_mv\n",
        ] {
            fs::write(&path, bad).unwrap();
            assert!(read_voltages(&path).is_err(), "{bad:?}");
        }
    }
}
