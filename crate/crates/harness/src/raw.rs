//! Raw homodyne records: one row per quadrature sample.

use std::fs::File;
use std::path::Path;

use sqzadapt_core::protocol::{RecordedSample, Stage};

use crate::error::{HarnessError, Result};

/// File name used next to `report.csv`.
pub const RAW_FILE: &str = "raw_runs.csv";

/// Required header columns, in write order.
pub const RAW_COLUMNS: [&str; 3] = ["stage", "theta_rad", "x"];

/// Writes samples with full `f64` precision so replay is exact.
pub fn write_raw(path: &Path, samples: &[RecordedSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(RAW_COLUMNS)?;
    for s in samples {
        w.write_record([s.stage.as_str(), &s.theta.to_string(), &s.x.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Reads a raw record, checking the header, finiteness and that no rough
/// sample follows a fine one. Errors cite 1-based file lines.
pub fn ingest_recorded(path: &Path) -> Result<Vec<RecordedSample>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let fail = |line: u64, message: String| HarnessError::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(RAW_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(1, format!("missing column {name:?}")))?;
    }
    let mut out = Vec::new();
    let mut seen_fine = false;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let stage = match field(0) {
            "rough" => Stage::Rough,
            "fine" => Stage::Fine,
            other => return Err(fail(line, format!("unknown stage {other:?}"))),
        };
        if stage == Stage::Rough && seen_fine {
            return Err(fail(line, "rough sample after the fine stage began".into()));
        }
        seen_fine |= stage == Stage::Fine;
        let number = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| fail(line, format!("{} is not a number: {:?}", RAW_COLUMNS[i], field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail(line, format!("{} is not finite: {v}", RAW_COLUMNS[i])))
            }
        };
        out.push(RecordedSample {
            stage,
            theta: number(1)?,
            x: number(2)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    fn line_of(err: HarnessError) -> u64 {
        match err {
            HarnessError::Ingest { line, .. } => line,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn reports_offending_line() {
        let f = write("stage,theta_rad,x\nrough,0,0.1\nrough,0,NaN\n");
        assert_eq!(line_of(ingest_recorded(f.path()).unwrap_err()), 3);
        let f = write("stage,theta_rad,x\nfine,0,0.1\nrough,0,0.2\n");
        assert_eq!(line_of(ingest_recorded(f.path()).unwrap_err()), 3);
        let f = write("stage,theta_rad,x\nmid,0,0.1\n");
        assert_eq!(line_of(ingest_recorded(f.path()).unwrap_err()), 2);
        let f = write("stage,x\nrough,0.1\n");
        assert_eq!(line_of(ingest_recorded(f.path()).unwrap_err()), 1);
    }

    #[test]
    fn column_order_is_free() {
        let f = write("x,stage,theta_rad\n0.5,rough,0.25\n");
        let s = ingest_recorded(f.path()).unwrap();
        assert_eq!(s, vec![RecordedSample { stage: Stage::Rough, theta: 0.25, x: 0.5 }]);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            rough in proptest::collection::vec((-4.0f64..4.0, -3.0f64..3.0), 0..20),
            fine in proptest::collection::vec((-4.0f64..4.0, -3.0f64..3.0), 0..20),
        ) {
            let samples: Vec<RecordedSample> = rough
                .iter()
                .map(|&(theta, x)| RecordedSample { stage: Stage::Rough, theta, x })
                .chain(fine.iter().map(|&(theta, x)| RecordedSample { stage: Stage::Fine, theta, x }))
                .collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_raw(f.path(), &samples).unwrap();
            prop_assert_eq!(ingest_recorded(f.path()).unwrap(), samples);
        }
    }
}
