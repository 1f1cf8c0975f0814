use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::probes::MetricDescriptor;
use crate::sampler::{Sample, SampleSink};

use super::{SessionMeta, Trace, TraceError, DELTA_COLUMN, TIME_COLUMN};

const META_PREFIX: &str = "# meta: ";
const COLUMN_PREFIX: &str = "# column: ";

/// Streams rows as they are sampled, flushing after each so an interrupted
/// session still leaves a readable prefix.
pub struct TraceWriter<W: Write> {
    out: csv::Writer<W>,
    width: usize,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, meta: &SessionMeta, schema: &[MetricDescriptor]) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), meta, schema, true)
    }
}

impl<W: Write> TraceWriter<W> {
    /// Writes the optional metadata block and the header row.
    pub fn new(mut out: W, meta: &SessionMeta, schema: &[MetricDescriptor], with_meta: bool) -> io::Result<Self> {
        if with_meta {
            writeln!(out, "{META_PREFIX}{}", serde_json::to_string(meta).map_err(io::Error::other)?)?;
            for m in schema {
                writeln!(out, "{COLUMN_PREFIX}{}", serde_json::to_string(m).map_err(io::Error::other)?)?;
            }
        }
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let header = [DELTA_COLUMN.to_string(), TIME_COLUMN.to_string()]
            .into_iter()
            .chain(schema.iter().map(MetricDescriptor::column_name));
        out.write_record(header).map_err(io::Error::other)?;
        out.flush()?;
        Ok(Self {
            out,
            width: schema.len(),
        })
    }

    pub fn write_sample(&mut self, sample: &Sample) -> io::Result<()> {
        if sample.values.len() != self.width {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("sample has {} values for {} columns", sample.values.len(), self.width),
            ));
        }
        let cells = [sample.delta_ms.to_string(), sample.time_ms.to_string()]
            .into_iter()
            .chain(sample.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        self.out.write_record(cells).map_err(io::Error::other)?;
        self.out.flush()
    }

    pub fn into_inner(self) -> io::Result<W> {
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

impl<W: Write> SampleSink for TraceWriter<W> {
    fn accept(&mut self, sample: &Sample) -> io::Result<()> {
        self.write_sample(sample)
    }
}

pub fn write_csv(trace: &Trace, path: &Path) -> io::Result<()> {
    let mut w = TraceWriter::create(path, &trace.meta, &trace.schema)?;
    for row in &trace.rows {
        w.write_sample(row)?;
    }
    w.into_inner()?.flush()
}

pub fn write_csv_string(trace: &Trace) -> String {
    let mut w = TraceWriter::new(Vec::new(), &trace.meta, &trace.schema, true).expect("writing to memory");
    for row in &trace.rows {
        w.write_sample(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("trace output is UTF-8")
}

pub fn read_csv(path: &Path) -> Result<Trace, TraceError> {
    read_csv_str(&std::fs::read_to_string(path)?)
}

fn malformed(line: u64, message: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses a trace. Errors name the 1-based line they occur on.
pub fn read_csv_str(text: &str) -> Result<Trace, TraceError> {
    let mut meta = SessionMeta::default();
    let mut declared = Vec::new();
    let mut offset = 0usize;
    let mut comment_lines = 0u64;
    for line in text.split_inclusive('\n') {
        if !line.starts_with('#') {
            break;
        }
        comment_lines += 1;
        offset += line.len();
        let body = line.trim_end();
        if let Some(json) = body.strip_prefix(META_PREFIX) {
            meta = serde_json::from_str(json).map_err(|e| malformed(comment_lines, format!("metadata: {e}")))?;
        } else if let Some(json) = body.strip_prefix(COLUMN_PREFIX) {
            let m: MetricDescriptor =
                serde_json::from_str(json).map_err(|e| malformed(comment_lines, format!("column metadata: {e}")))?;
            declared.push(m);
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(&text.as_bytes()[offset..]);
    let line_of = |pos: Option<&csv::Position>| pos.map(|p| p.line()).unwrap_or(0) + comment_lines;
    let header_line = comment_lines + 1;
    let header = reader.headers().map_err(|e| malformed(line_of(e.position()), e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != DELTA_COLUMN || &header[1] != TIME_COLUMN {
        return Err(malformed(header_line, "header must start with Delta,Time"));
    }
    let names: Vec<&str> = header.iter().skip(2).collect();
    let schema = if declared.is_empty() {
        names
            .iter()
            .map(|c| MetricDescriptor::from_column_name(c).map_err(|e| malformed(header_line, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let expected: Vec<String> = declared.iter().map(MetricDescriptor::column_name).collect();
        if expected != names {
            return Err(malformed(header_line, "header does not match the column metadata"));
        }
        declared
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = line_of(e.position());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("row has {len} fields, header has {expected_len}")
                }
                _ => e.to_string(),
            };
            malformed(line, message)
        })?;
        let line = line_of(record.position());
        let number = |s: &str, what: &str| -> Result<f64, TraceError> {
            s.parse::<f64>()
                .map_err(|_| malformed(line, format!("{what}: {s:?} is not a number")))
        };
        let delta_ms = number(&record[0], DELTA_COLUMN)?;
        let time_ms = record[1]
            .parse::<u64>()
            .map_err(|_| malformed(line, format!("Time: {:?} is not epoch milliseconds", &record[1])))?;
        let values = record
            .iter()
            .skip(2)
            .zip(&names)
            .map(|(cell, name)| if cell.is_empty() { Ok(None) } else { number(cell, name).map(Some) })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(prev) = rows.last().map(|r: &Sample| r.time_ms) {
            if time_ms <= prev {
                return Err(malformed(line, format!("Time {time_ms} does not increase (previous {prev})")));
            }
        }
        rows.push(Sample {
            delta_ms,
            time_ms,
            values,
        });
    }
    let trace = Trace { meta, schema, rows };
    trace.validate()?;
    Ok(trace)
}
