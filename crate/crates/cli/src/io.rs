//! Sample files: headerless or single-header CSV, one row per point.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use ifest::SampleSet;

use crate::error::{CliError, CliResult};

/// Lower and upper targets of `--rescale`.
pub const RESCALE_RANGE: (f64, f64) = (0.01, 0.99);

/// Reads a sample file. A first row with any non-numeric field is taken as a
/// header and skipped.
pub fn read_samples(path: &Path, rescale: bool) -> CliResult<SampleSet> {
    let file = File::open(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_samples(file, rescale).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_samples<R: Read>(input: R, rescale: bool) -> CliResult<SampleSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut data = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse::<f64>().ok()).collect();
        if r == 0 && parsed.iter().any(Option::is_none) {
            continue;
        }
        let row: Vec<f64> = parsed
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::usage(format!("row {}, column {}: not a finite number", r + 1, c + 1))
                })
            })
            .collect::<CliResult<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::usage(format!(
                    "row {} has {} columns, expected {w}",
                    r + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    let d = width.ok_or_else(|| CliError::usage("no data rows"))?;
    if rescale {
        rescale_columns(&mut data, d);
    }
    Ok(SampleSet::new(d, data)?)
}

/// Per-column min-max map onto [`RESCALE_RANGE`]; constant columns go to the
/// middle of the range.
pub fn rescale_columns(data: &mut [f64], d: usize) {
    let (lo_t, hi_t) = RESCALE_RANGE;
    for c in 0..d {
        let col = data.iter().skip(c).step_by(d);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        for v in data.iter_mut().skip(c).step_by(d) {
            *v = if hi > lo {
                lo_t + (hi_t - lo_t) * (*v - lo) / (hi - lo)
            } else {
                0.5 * (lo_t + hi_t)
            };
        }
    }
}

/// Writes one CSV row per point, shortest round-trip formatting.
pub fn write_samples<W: Write>(out: W, samples: &SampleSet) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    for row in samples.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `--out` file, or standard output.
pub fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::usage(format!("cannot write {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}
