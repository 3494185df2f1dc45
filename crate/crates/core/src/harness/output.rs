//! Time-series CSV and JSON summary writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{DiagnosticRecord, CSV_COLUMNS};
use crate::error::Result;

/// Shortest round-trip scientific notation; gaps become empty cells.
pub fn format_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_csv(path: &Path, records: &[DiagnosticRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.row().map(format_cell))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let rec = DiagnosticRecord {
            t: 0.5,
            mass: 1.25,
            energy: Some(-3.0e-7),
            ..Default::default()
        };
        write_csv(&path, &[rec]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "5e-1,1.25e0,-3e-7,,,,,,,,,,,,");
        assert!(lines.next().is_none());
    }

    proptest! {
        #[test]
        fn cells_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_cell(Some(x));
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
