//! CSV tables with a fixed column order and 17-significant-digit floats.

use std::collections::HashMap;
use std::path::Path;

use crate::error::CliError;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Column names for a phase-space point: `x0.., xi0..`.
pub fn point_columns(d: usize) -> Vec<String> {
    (0..d)
        .map(|k| format!("x{k}"))
        .chain((0..d).map(|k| format!("xi{k}")))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column_index(&self) -> HashMap<&str, usize> {
        self.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 2.0_f64.sqrt()] {
            let text = fmt_f64(v);
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
        }
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn point_column_order() {
        assert_eq!(point_columns(2), ["x0", "x1", "xi0", "xi1"]);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(vec!["a".into(), "status".into()]);
        t.push(vec![fmt_f64(0.25), "outside domain: x, y".into()]);
        t.write(&path).unwrap();
        assert_eq!(Table::read(&path).unwrap(), t);
    }
}
