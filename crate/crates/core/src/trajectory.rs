//! Trajectory samples and their CSV / JSON serialization.
//!
//! CSV columns: `time, segment_index, hyp_id, sigma, lyapunov_E, margin, w_1..w_m`.
//! Floats are written with 17 significant digits so a write/read cycle is exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub segment_index: usize,
    /// Active hypothesis; `None` only for a run that stopped before any segment.
    pub hyp_id: Option<usize>,
    /// Edge of the active hypothesis at this sample.
    pub sigma: Option<f64>,
    pub lyapunov_e: f64,
    pub margin: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

const FIXED_COLUMNS: [&str; 6] = ["time", "segment_index", "hyp_id", "sigma", "lyapunov_E", "margin"];

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Data { line, message: format!("{name}: {e}") })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.w.len())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((1..=self.dim()).map(|k| format!("w_{k}")));
        writer.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut row = vec![
                fmt_f64(s.time),
                s.segment_index.to_string(),
                s.hyp_id.map(|h| h.to_string()).unwrap_or_default(),
                s.sigma.map(fmt_f64).unwrap_or_default(),
                fmt_f64(s.lyapunov_e),
                fmt_f64(s.margin),
            ];
            row.extend(s.w.iter().map(|&x| fmt_f64(x)));
            writer.write_record(&row).map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers().map_err(csv_err)?.clone();
        if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
            return Err(Error::Data { line: 1, message: "unexpected trajectory header".into() });
        }
        let m = header.len() - FIXED_COLUMNS.len();
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(csv_err)?;
            if record.len() != header.len() {
                return Err(Error::Data {
                    line,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let optional = |k: usize| -> Option<&str> { Some(record[k].trim()).filter(|s| !s.is_empty()) };
            let hyp_id = optional(2)
                .map(|s| s.parse::<usize>().map_err(|e| Error::Data { line, message: format!("hyp_id: {e}") }))
                .transpose()?;
            let sigma = optional(3).map(|s| parse_f64(s, line, "sigma")).transpose()?;
            let w = (0..m).map(|k| parse_f64(&record[6 + k], line, "w")).collect::<Result<Vec<_>>>()?;
            samples.push(TrajectorySample {
                time: parse_f64(&record[0], line, "time")?,
                segment_index: record[1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Data { line, message: format!("segment_index: {e}") })?,
                hyp_id,
                sigma,
                lyapunov_e: parse_f64(&record[4], line, "lyapunov_E")?,
                margin: parse_f64(&record[5], line, "margin")?,
                w,
            });
        }
        Ok(Self { samples })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data { line: e.line(), message: e.to_string() })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::Data { line, message: e.to_string() },
    }
}
