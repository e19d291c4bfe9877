//! CSV ingestion and the decision-stump hypothesis pool.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controls::PartitionHypothesis;
use crate::error::{Error, Result};
use crate::model::{TrainingSet, WeakHypothesis, WeightMeasure};

/// A parsed dataset: training set, feature names and optional initial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ts: TrainingSet,
    pub feature_names: Vec<String>,
    /// Normalized weights from the weights column, if one was requested.
    pub w0: Option<WeightMeasure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Header name of a nonnegative per-row weight column, excluded from features.
    pub weights_column: Option<String>,
}

/// Reads a CSV with a header row; the last column is the label.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<TrainingSet> {
    Ok(ingest_csv_with(path, &IngestOptions::default())?.ts)
}

pub fn ingest_csv_with(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, options)
}

/// Label column: `±1`, or `{0, 1}` with `0 → −1`. Mixing `−1` and `0` is rejected.
pub fn parse_csv<R: Read>(input: R, options: &IngestOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| Error::Data { line: 1, message: e.to_string() })?.clone();
    let label_col = header.len().checked_sub(1).ok_or_else(|| Error::Dataset("empty file".into()))?;
    let weight_col = match &options.weights_column {
        Some(name) => {
            let idx = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data { line: 1, message: format!("no column named {name:?}") })?;
            if idx == label_col {
                return Err(Error::Data { line: 1, message: "the weights column cannot be the label column".into() });
            }
            Some(idx)
        }
        None => None,
    };
    let feature_cols: Vec<usize> = (0..label_col).filter(|c| Some(*c) != weight_col).collect();
    let feature_names = feature_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut points = Vec::new();
    let mut raw_labels = Vec::new();
    let mut weights = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Data { line, message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::Data {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let number = |c: usize| -> Result<f64> {
            let field = &record[c];
            let x: f64 = field.parse().map_err(|_| Error::Data {
                line,
                message: format!("column {:?}: {field:?} is not a number", &header[c]),
            })?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Data { line, message: format!("column {:?}: non-finite value", &header[c]) })
            }
        };
        points.push(feature_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?);
        let label = &record[label_col];
        let y = match label.parse::<f64>() {
            Ok(1.0) => 1i8,
            Ok(-1.0) => -1,
            Ok(0.0) => 0,
            _ => {
                return Err(Error::Data { line, message: format!("label {label:?} is not in {{-1, +1}} or {{0, 1}}") })
            }
        };
        raw_labels.push((line, y));
        if let Some(c) = weight_col {
            let wv = number(c)?;
            if wv < 0.0 {
                return Err(Error::Data { line, message: format!("negative weight {wv}") });
            }
            weights.push(wv);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Dataset("dataset has no rows".into()));
    }
    let has_zero = raw_labels.iter().any(|(_, y)| *y == 0);
    if has_zero {
        if let Some((line, _)) = raw_labels.iter().find(|(_, y)| *y == -1) {
            return Err(Error::Data { line: *line, message: "label -1 mixed with 0/1 labels".into() });
        }
    }
    let labels = raw_labels.iter().map(|(_, y)| if *y == 0 { -1 } else { *y }).collect();
    let w0 = if weight_col.is_some() {
        Some(WeightMeasure::normalized(weights).map_err(|e| Error::Dataset(format!("weights column: {e}")))?)
    } else {
        None
    };
    let ts = TrainingSet::new(points, labels)?;
    log::info!("parsed dataset: m = {}, d = {}", ts.len(), ts.dim());
    Ok(Dataset { ts, feature_names, w0 })
}

/// Axis-aligned threshold classifier `polarity · sign(x_f − threshold)`, with `x_f = threshold` mapped to `−polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    /// `true` on the upper side of the threshold.
    pub fn side(&self, x: &[f64]) -> bool {
        x[self.feature] > self.threshold
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let s = if self.side(x) { 1.0 } else { -1.0 };
        s * f64::from(self.polarity)
    }
}

/// Stumps in pool order: for every feature and threshold, polarity `+1` then `−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StumpPool {
    pub stumps: Vec<Stump>,
    pub hypotheses: Vec<WeakHypothesis>,
}

impl StumpPool {
    pub fn len(&self) -> usize {
        self.stumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stumps.is_empty()
    }

    /// One two-leaf partition per threshold (leaf 1 is the upper side); the
    /// `j`-th partition is the split of stumps `2j` and `2j + 1`.
    pub fn partitions(&self, ts: &TrainingSet) -> Vec<PartitionHypothesis> {
        self.stumps
            .iter()
            .step_by(2)
            .map(|s| {
                let leaf_of = ts.points().iter().map(|x| usize::from(s.side(x))).collect();
                PartitionHypothesis::new(leaf_of, 2).expect("two leaves")
            })
            .collect()
    }
}

/// Deterministic stump pool over midpoints of consecutive distinct feature
/// values. With `resolution = Some(r)` each feature keeps at most `r`
/// thresholds, taken at evenly spaced quantiles of its candidate list.
pub fn build_stumps(ts: &TrainingSet, resolution: Option<usize>) -> Result<StumpPool> {
    if ts.dim() == 0 {
        return Err(Error::InvalidArgument("stumps need at least one feature".into()));
    }
    if resolution == Some(0) {
        return Err(Error::InvalidArgument("stump resolution must be at least 1".into()));
    }
    let mut stumps = Vec::new();
    for f in 0..ts.dim() {
        let mut values: Vec<f64> = ts.points().iter().map(|p| p[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        if values.len() < 2 {
            log::warn!("feature {f} is constant and contributes no stumps");
            continue;
        }
        let mut thresholds: Vec<f64> = values.windows(2).map(|v| 0.5 * (v[0] + v[1])).collect();
        if let Some(r) = resolution {
            if thresholds.len() > r {
                let n = thresholds.len();
                thresholds = (0..r).map(|k| thresholds[((2 * k + 1) * n) / (2 * r)]).collect();
                thresholds.dedup();
            }
        }
        for threshold in thresholds {
            for polarity in [1i8, -1] {
                stumps.push(Stump { feature: f, threshold, polarity });
            }
        }
    }
    let hypotheses = stumps
        .iter()
        .map(|s| WeakHypothesis::binary(ts.points().iter().map(|x| s.eval(x)).collect(), 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(StumpPool { stumps, hypotheses })
}
