use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::run::{Row, RunRecord};

pub const HEADER: &str = "step,loss,eval_loss,lr,unclipped_frac,h_norm,grad_norm,grad_clip_triggered";

/// Seventeen significant digits: enough to round-trip any `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(64 + record.rows.len() * 160);
    out.push_str(HEADER);
    out.push('\n');
    for r in &record.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            float(r.loss),
            float(r.eval_loss),
            float(r.lr),
            float(r.unclipped_frac),
            float(r.h_norm),
            float(r.grad_norm),
            u8::from(r.grad_clip_triggered)
        )
        .expect("writing to a string");
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => {
            return Err(Error::Csv {
                line: 1,
                reason: "missing or unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let bad = |reason: String| Error::Csv {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", fields.len())));
        }
        let f = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| bad(format!("field {} is not a number: {:?}", k + 1, fields[k])))
        };
        rows.push(Row {
            step: fields[0]
                .parse()
                .map_err(|_| bad(format!("bad step {:?}", fields[0])))?,
            loss: f(1)?,
            eval_loss: f(2)?,
            lr: f(3)?,
            unclipped_frac: f(4)?,
            h_norm: f(5)?,
            grad_norm: f(6)?,
            grad_clip_triggered: match fields[7] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("flag must be 0 or 1, got {other:?}"))),
            },
        });
    }
    Ok(rows)
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    write_atomic(path, to_csv(record).as_bytes())
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::RunStatus;

    fn row(step: u64) -> Row {
        Row {
            step,
            loss: 1.0 / 3.0,
            eval_loss: f64::MIN_POSITIVE,
            lr: 1e-3 * step as f64,
            unclipped_frac: 0.25,
            h_norm: 12345.678901234567,
            grad_norm: 0.1 + 0.2,
            grad_clip_triggered: step.is_multiple_of(2),
        }
    }

    #[test]
    fn empty_record_is_header_only() {
        let r = RunRecord {
            rows: vec![],
            status: RunStatus::Completed,
        };
        assert_eq!(to_csv(&r), format!("{HEADER}\n"));
    }

    #[test]
    fn round_trip() {
        let r = RunRecord {
            rows: (1..=3).map(row).collect(),
            status: RunStatus::Completed,
        };
        let text = to_csv(&r);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_csv(&text).unwrap(), r.rows);
    }

    #[test]
    fn malformed_lines_located() {
        let text = format!("{HEADER}\n1,2,3\n");
        match parse_csv(&text).unwrap_err() {
            Error::Csv { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_write_and_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.csv");
        let r = RunRecord {
            rows: vec![row(1)],
            status: RunStatus::Completed,
        };
        emit_csv(&r, &p).unwrap();
        assert_eq!(read_csv(&p).unwrap(), r.rows);
        let err = emit_csv(&r, &dir.path().join("missing/run.csv")).unwrap_err();
        assert_eq!(err.kind(), "io");
        assert!(err.to_string().contains("missing"));
    }
}
