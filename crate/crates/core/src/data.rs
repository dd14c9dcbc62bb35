//! Labeled datasets: CSV ingestion, seeded stratified splits and the
//! synthetic generators used for desk-scale experiments.
//!
//! CSV layout: a header row, one column per feature, the label in the last
//! column. Cells use `.` as decimal separator.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, LabelSpace};
use crate::ruleset::FeatureBounds;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    points: Vec<Vec<f64>>,
    labels: Vec<Label>,
    label_space: LabelSpace,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        points: Vec<Vec<f64>>,
        labels: Vec<Label>,
        label_space: LabelSpace,
    ) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        for (row, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if let Some(col) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite value in row {row}, column '{}'",
                    feature_names[col]
                )));
            }
        }
        Ok(Self {
            feature_names,
            points,
            labels,
            label_space,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    /// `[negatives, positives]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0, 0];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_space: self.label_space,
        }
    }

    /// Same points with new labels, e.g. the `{-1,+1}` critical-set labels.
    pub fn relabeled(&self, labels: Vec<Label>, label_space: LabelSpace) -> Result<Dataset> {
        Dataset::new(
            self.feature_names.clone(),
            self.points.clone(),
            labels,
            label_space,
        )
    }

    /// Per-feature minimum and maximum of the points.
    pub fn feature_bounds(&self) -> Result<FeatureBounds> {
        if self.is_empty() {
            return Err(Error::invalid("cannot compute bounds of an empty dataset"));
        }
        let dim = self.dim();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for p in &self.points {
            for i in 0..dim {
                lower[i] = lower[i].min(p[i]);
                upper[i] = upper[i].max(p[i]);
            }
        }
        FeatureBounds::new(lower, upper)
    }

    pub fn read_csv(path: impl AsRef<Path>, label_space: LabelSpace) -> Result<Dataset> {
        let file = File::open(path.as_ref())?;
        Self::from_csv_reader(file, label_space)
    }

    pub fn from_csv_reader(reader: impl Read, label_space: LabelSpace) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| csv_error(&e, 1))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        if header.len() < 2 {
            return Err(Error::Csv {
                line: 1,
                message: "need at least one feature column and a label column".into(),
            });
        }
        let dim = header.len() - 1;
        let feature_names = header[..dim].to_vec();
        let label_name = &header[dim];

        let mut points = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(&e, 0))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let mut point = Vec::with_capacity(dim);
            for (col, cell) in record.iter().take(dim).enumerate() {
                let value: f64 = cell.parse().map_err(|_| Error::Csv {
                    line,
                    message: format!(
                        "column '{}': cannot parse '{cell}' as a number",
                        header[col]
                    ),
                })?;
                if !value.is_finite() {
                    return Err(Error::Csv {
                        line,
                        message: format!("column '{}': non-finite value '{cell}'", header[col]),
                    });
                }
                point.push(value);
            }
            let raw = &record[dim];
            let label = parse_label(raw)
                .and_then(|v| label_space.decode(v).ok())
                .ok_or_else(|| Error::Csv {
                    line,
                    message: format!(
                        "column '{label_name}': label '{raw}' is not binary {label_space}"
                    ),
                })?;
            points.push(point);
            labels.push(label);
        }
        Dataset::new(feature_names, points, labels, label_space)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = File::create(path.as_ref())?;
        self.write_csv_to(&mut file)
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let map = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        let mut header = self.feature_names.clone();
        header.push("label".into());
        wtr.write_record(&header).map_err(map)?;
        for (p, l) in self.iter() {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(self.label_space.encode(l).to_string());
            wtr.write_record(&row).map_err(map)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_label(raw: &str) -> Option<i64> {
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = raw.parse().ok()?;
    (v.fract() == 0.0 && v.abs() <= 1.0).then_some(v as i64)
}

fn csv_error(err: &csv::Error, fallback_line: u64) -> Error {
    let line = err.position().map_or(fallback_line, |p| p.line());
    Error::Csv {
        line,
        message: err.to_string(),
    }
}

/// Train/calibration/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            calibration: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.calibration, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::invalid("split fractions must be positive"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

/// Seeded split that keeps each class's proportion in every part.
pub fn stratified_split(data: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in Label::BOTH {
        let mut idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64) * fractions.train).round() as usize;
        let n_calib = (((n as f64) * fractions.calibration).round() as usize).min(n - n_train);
        parts[0].extend_from_slice(&idx[..n_train]);
        parts[1].extend_from_slice(&idx[n_train..n_train + n_calib]);
        parts[2].extend_from_slice(&idx[n_train + n_calib..]);
    }
    for part in parts.iter_mut() {
        part.shuffle(&mut rng);
    }
    Ok(Split {
        train: data.select(&parts[0]),
        calibration: data.select(&parts[1]),
        test: data.select(&parts[2]),
    })
}

/// Two isotropic Gaussian blobs: class 0 centred at the origin, class +1 at
/// `separation` along every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobsConfig {
    pub n_samples: usize,
    pub dim: usize,
    pub separation: f64,
    pub std_dev: f64,
    pub seed: u64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            dim: 2,
            separation: 3.0,
            std_dev: 1.0,
            seed: 0,
        }
    }
}

pub fn two_blobs(config: &BlobsConfig) -> Result<Dataset> {
    if config.dim == 0 || config.n_samples < 2 {
        return Err(Error::invalid(
            "blobs need dim >= 1 and at least two samples",
        ));
    }
    let normal = Normal::new(0.0, config.std_dev)
        .map_err(|e| Error::invalid(format!("bad standard deviation: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = Vec::with_capacity(config.n_samples);
    let mut labels = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let label = if i % 2 == 0 {
            Label::Negative
        } else {
            Label::Positive
        };
        let centre = if label == Label::Positive {
            config.separation
        } else {
            0.0
        };
        points.push(
            (0..config.dim)
                .map(|_| centre + normal.sample(&mut rng))
                .collect(),
        );
        labels.push(label);
    }
    Dataset::new(
        default_names(config.dim),
        points,
        labels,
        LabelSpace::ZeroOne,
    )
}

/// Uniform points on `[-1, 1]^2` labelled `+1` in the first and third quadrants.
pub fn xor(n_samples: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x1: f64 = rng.random_range(-1.0..1.0);
        let x2: f64 = rng.random_range(-1.0..1.0);
        let label = if (x1 > 0.0) == (x2 > 0.0) {
            Label::Positive
        } else {
            Label::Negative
        };
        points.push(vec![x1, x2]);
        labels.push(label);
    }
    Dataset::new(default_names(2), points, labels, LabelSpace::ZeroOne)
}

pub fn default_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("X{i}")).collect()
}
