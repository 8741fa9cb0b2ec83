//! Dataset ingestion, normalization, splitting, and synthetic generation.
//!
//! Feature matrices are stored flat in row-major order. Classification
//! targets are dense class indices assigned by first appearance in file
//! order; the original labels are kept for reporting. Min-max normalization
//! maps every feature column (and regression targets) into [0, 1] and records
//! the (min, max) pairs it used so values can be de-normalized later.

use crate::backprop::Target;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tree::TaskKind;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Read;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets<S: Scalar> {
    Classes(Vec<usize>),
    Reals(Vec<S>),
}

impl<S: Scalar> Targets<S> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Reals(v) => v.len(),
        }
    }
}

/// Normalized feature matrix plus targets for one learning task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S: Scalar> {
    features: Vec<S>,
    rows: usize,
    cols: usize,
    targets: Targets<S>,
    task: TaskKind,
    pub feature_names: Option<Vec<String>>,
    /// Original class labels in dense-index order.
    pub class_names: Option<Vec<String>>,
    /// Per-feature (min, max) applied by the last normalization.
    pub feature_norm: Option<Vec<(S, S)>>,
    /// (min, max) applied to regression targets.
    pub target_norm: Option<(S, S)>,
}

impl<S: Scalar> Dataset<S> {
    pub fn from_parts(
        features: Vec<S>,
        cols: usize,
        targets: Targets<S>,
        task: TaskKind,
    ) -> Result<Self> {
        if cols == 0 || !features.len().is_multiple_of(cols) {
            return Err(Error::Data("feature matrix shape mismatch".into()));
        }
        let rows = features.len() / cols;
        if rows == 0 {
            return Err(Error::EmptyDataset);
        }
        if targets.len() != rows {
            return Err(Error::Dimension {
                expected: rows,
                got: targets.len(),
            });
        }
        Ok(Dataset {
            features,
            rows,
            cols,
            targets,
            task,
            feature_names: None,
            class_names: None,
            feature_norm: None,
            target_norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn target(&self, i: usize) -> Target<S> {
        match &self.targets {
            Targets::Classes(v) => Target::Class(v[i]),
            Targets::Reals(v) => Target::Real(v[i]),
        }
    }

    pub fn targets(&self) -> &Targets<S> {
        &self.targets
    }

    pub fn class_targets(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(v) => Some(v),
            Targets::Reals(_) => None,
        }
    }

    pub fn real_targets(&self) -> Option<&[S]> {
        match &self.targets {
            Targets::Reals(v) => Some(v),
            Targets::Classes(_) => None,
        }
    }

    /// New dataset holding the given rows (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Dataset<S> {
        let mut features = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Classes(v) => Targets::Classes(indices.iter().map(|&i| v[i]).collect()),
            Targets::Reals(v) => Targets::Reals(indices.iter().map(|&i| v[i]).collect()),
        };
        Dataset {
            features,
            rows: indices.len(),
            cols: self.cols,
            targets,
            task: self.task,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            feature_norm: self.feature_norm.clone(),
            target_norm: self.target_norm,
        }
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvTask {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub target_column: ColumnSelector,
    pub task: CsvTask,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            target_column: ColumnSelector::Last,
            task: CsvTask::Classification,
        }
    }
}

fn is_numeric(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

/// Loads a comma-separated file. A header row is detected when any feature
/// cell of the first row fails to parse as a number (a name-based target
/// selector requires one).
pub fn load_csv<S: Scalar>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset<S>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_csv(&text, schema)
}

pub fn parse_csv<S: Scalar>(text: &str, schema: &CsvSchema) -> Result<Dataset<S>> {
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    if lines.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let first_cells: Vec<&str> = lines[0].1.split(',').map(str::trim).collect();
    let cols = first_cells.len();
    if cols < 2 {
        return Err(Error::CsvParse {
            line: lines[0].0,
            message: "need at least one feature column and one target column".into(),
        });
    }

    // Resolve the target column; a provisional guess is enough to decide
    // which first-row cells must be numeric in the headerless case.
    let provisional_target = match &schema.target_column {
        ColumnSelector::Index(i) => Some(*i),
        ColumnSelector::Last => Some(cols - 1),
        ColumnSelector::Name(_) => None,
    };
    let has_header = match provisional_target {
        None => true,
        Some(t) => first_cells
            .iter()
            .enumerate()
            .any(|(i, c)| i != t && !is_numeric(c)),
    };

    let (header, body): (Option<Vec<String>>, &[(usize, &str)]) = if has_header {
        (
            Some(first_cells.iter().map(|s| s.to_string()).collect()),
            &lines[1..],
        )
    } else {
        (None, &lines[..])
    };
    if body.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let target_col = match &schema.target_column {
        ColumnSelector::Index(i) => {
            if *i >= cols {
                return Err(Error::Data(format!(
                    "unknown target column index {i} (file has {cols} columns)"
                )));
            }
            *i
        }
        ColumnSelector::Last => cols - 1,
        ColumnSelector::Name(name) => {
            let header = header.as_ref().expect("name selector implies a header");
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("unknown target column '{name}'")))?
        }
    };

    let mut features = Vec::with_capacity(body.len() * (cols - 1));
    let mut class_labels: Vec<String> = Vec::new();
    let mut class_indices: Vec<usize> = Vec::new();
    let mut reals: Vec<S> = Vec::new();

    for &(line_no, line) in body {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols {
            return Err(Error::CsvParse {
                line: line_no,
                message: format!("expected {cols} cells, found {}", cells.len()),
            });
        }
        for (i, cell) in cells.iter().enumerate() {
            if i == target_col {
                continue;
            }
            if cell.is_empty() {
                return Err(Error::CsvParse {
                    line: line_no,
                    message: format!("missing value in column {i}"),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::CsvParse {
                line: line_no,
                message: format!("non-numeric feature cell '{cell}' in column {i}"),
            })?;
            features.push(S::from_f64(v));
        }
        let tcell = cells[target_col];
        match schema.task {
            CsvTask::Classification => {
                let idx = match class_labels.iter().position(|l| l == tcell) {
                    Some(i) => i,
                    None => {
                        class_labels.push(tcell.to_string());
                        class_labels.len() - 1
                    }
                };
                class_indices.push(idx);
            }
            CsvTask::Regression => {
                let v: f64 = tcell.parse().map_err(|_| Error::CsvParse {
                    line: line_no,
                    message: format!("non-numeric regression target '{tcell}'"),
                })?;
                reals.push(S::from_f64(v));
            }
        }
    }

    let (targets, task, class_names) = match schema.task {
        CsvTask::Classification => {
            let classes = class_labels.len();
            if classes < 2 && body.len() > 1 {
                return Err(Error::Data(
                    "classification data contains a single class".into(),
                ));
            }
            (
                Targets::Classes(class_indices),
                TaskKind::Classification {
                    classes: classes.max(2),
                },
                Some(class_labels),
            )
        }
        CsvTask::Regression => (Targets::Reals(reals), TaskKind::Regression, None),
    };

    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| *i != target_col)
            .map(|(_, n)| n)
            .collect()
    });

    let mut ds = Dataset::from_parts(features, cols - 1, targets, task)?;
    ds.feature_names = feature_names;
    ds.class_names = class_names;
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

fn column_stats<S: Scalar>(data: &Dataset<S>) -> Vec<(S, S)> {
    let mut stats = vec![(S::infinity(), S::neg_infinity()); data.cols];
    for r in 0..data.rows {
        for (c, &v) in data.row(r).iter().enumerate() {
            if v < stats[c].0 {
                stats[c].0 = v;
            }
            if v > stats[c].1 {
                stats[c].1 = v;
            }
        }
    }
    stats
}

fn apply_stats<S: Scalar>(data: &mut Dataset<S>, stats: &[(S, S)], target_stats: Option<(S, S)>) {
    let cols = data.cols;
    for r in 0..data.rows {
        for (c, &(min, max)) in stats.iter().enumerate() {
            let v = &mut data.features[r * cols + c];
            *v = if max > min {
                (*v - min) / (max - min)
            } else {
                S::zero()
            };
        }
    }
    if let (Some((min, max)), Targets::Reals(vals)) = (target_stats, &mut data.targets) {
        for v in vals.iter_mut() {
            *v = if max > min {
                (*v - min) / (max - min)
            } else {
                S::zero()
            };
        }
    }
    data.feature_norm = Some(stats.to_vec());
    data.target_norm = target_stats;
}

fn target_stats<S: Scalar>(data: &Dataset<S>) -> Option<(S, S)> {
    data.real_targets().map(|vals| {
        let mut min = S::infinity();
        let mut max = S::neg_infinity();
        for &v in vals {
            if v < min {
                min = v;
            }
            if v > max {
                max = v;
            }
        }
        (min, max)
    })
}

/// Min-max normalization over the full dataset: every feature column is
/// mapped to [0, 1] by (x - min) / (max - min), constant columns map to 0,
/// and regression targets are normalized the same way.
pub fn minmax_normalize<S: Scalar>(mut data: Dataset<S>) -> Dataset<S> {
    let stats = column_stats(&data);
    let tstats = target_stats(&data);
    apply_stats(&mut data, &stats, tstats);
    data
}

/// Normalizes a train/test pair using statistics from the training rows only
/// (the methodologically strict alternative to [`minmax_normalize`]).
pub fn minmax_normalize_pair<S: Scalar>(
    mut train: Dataset<S>,
    mut test: Dataset<S>,
) -> (Dataset<S>, Dataset<S>) {
    let stats = column_stats(&train);
    let tstats = target_stats(&train);
    apply_stats(&mut train, &stats, tstats);
    apply_stats(&mut test, &stats, tstats);
    (train, test)
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded shuffle followed by an exact floor split: the training side gets
/// `floor(fraction * N)` rows and the test side the remainder.
pub fn shuffle_split<S: Scalar>(
    data: &Dataset<S>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::Config("train fraction must lie in (0, 1)".into()));
    }
    let mut perm: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng::seeded_rng(seed);
    perm.shuffle(&mut rng);
    let train_n = (train_fraction * data.len() as f64).floor() as usize;
    if train_n == 0 || train_n == data.len() {
        return Err(Error::Data(format!(
            "split of {} rows at {train_fraction} leaves an empty side",
            data.len()
        )));
    }
    Ok((data.subset(&perm[..train_n]), data.subset(&perm[train_n..])))
}

// ---------------------------------------------------------------------------
// IDX (big-endian binary)
// ---------------------------------------------------------------------------

pub const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
pub const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

/// Raw IDX payload: magic, dimension sizes, and the unsigned-byte data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

/// Parses IDX bytes (unsigned-byte element type only).
pub fn read_idx_bytes(bytes: &[u8]) -> Result<IdxFile> {
    if bytes.len() < 4 {
        return Err(Error::IdxFormat("file shorter than the magic number".into()));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if magic >> 16 != 0 || (magic >> 8) & 0xFF != 0x08 {
        return Err(Error::IdxFormat(format!(
            "unsupported magic 0x{magic:08x}: expected an unsigned-byte idx file"
        )));
    }
    let ndims = (magic & 0xFF) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::IdxFormat("truncated dimension header".into()));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    let expected: usize = dims.iter().map(|&d| d as usize).product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::IdxFormat(format!(
            "payload holds {} bytes, dimensions {:?} require {expected}",
            payload.len(),
            dims
        )));
    }
    Ok(IdxFile {
        magic,
        dims,
        data: payload.to_vec(),
    })
}

/// Serializes an [`IdxFile`] back to bytes; inverse of [`read_idx_bytes`].
pub fn write_idx(idx: &IdxFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * idx.dims.len() + idx.data.len());
    out.extend_from_slice(&idx.magic.to_be_bytes());
    for &d in &idx.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&idx.data);
    out
}

/// Reads an IDX file from disk, decompressing transparently when the file
/// starts with the gzip magic.
pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxFile> {
    let raw = std::fs::read(path.as_ref())?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut decoded)
            .map_err(|e| Error::IdxFormat(format!("gzip decode failed: {e}")))?;
        read_idx_bytes(&decoded)
    } else {
        read_idx_bytes(&raw)
    }
}

/// Loads an images/labels IDX pair into a classification dataset with pixel
/// values divided by 255.
pub fn load_idx<S: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<S>> {
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.magic != IDX_MAGIC_IMAGES {
        return Err(Error::IdxFormat(format!(
            "image magic 0x{:08x}, expected 0x{IDX_MAGIC_IMAGES:08x}",
            images.magic
        )));
    }
    if labels.magic != IDX_MAGIC_LABELS {
        return Err(Error::IdxFormat(format!(
            "label magic 0x{:08x}, expected 0x{IDX_MAGIC_LABELS:08x}",
            labels.magic
        )));
    }
    let count = images.dims[0] as usize;
    if labels.dims[0] as usize != count {
        return Err(Error::IdxFormat(format!(
            "image count {count} does not match label count {}",
            labels.dims[0]
        )));
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let dim: usize = images.dims[1..].iter().map(|&d| d as usize).product();
    let scale = S::from_f64(1.0 / 255.0);
    let features: Vec<S> = images
        .data
        .iter()
        .map(|&b| S::from_f64(b as f64) * scale)
        .collect();
    let classes = labels.data.iter().copied().max().unwrap() as usize + 1;
    let targets = Targets::Classes(labels.data.iter().map(|&b| b as usize).collect());
    Dataset::from_parts(
        features,
        dim,
        targets,
        TaskKind::Classification {
            classes: classes.max(2),
        },
    )
}

// ---------------------------------------------------------------------------
// Synthetic regression data
// ---------------------------------------------------------------------------

/// Noiseless Friedman #1 response at a 5-feature point.
pub fn friedman_value(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// Friedman #1 generator: five uniform [0, 1] features, unit Gaussian noise
/// on the response, targets min-max normalized to [0, 1].
pub fn generate_friedman<S: Scalar>(n: usize, seed: u64) -> Result<Dataset<S>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng::seeded_rng(seed);
    let mut features = Vec::with_capacity(n * 5);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
        let noise: f64 = StandardNormal.sample(&mut rng);
        raw.push(friedman_value(&x) + noise);
        features.extend(x.into_iter().map(S::from_f64));
    }
    let targets = Targets::Reals(raw.into_iter().map(S::from_f64).collect());
    let ds = Dataset::from_parts(features, 5, targets, TaskKind::Regression)?;
    Ok(minmax_normalize_targets_only(ds))
}

fn minmax_normalize_targets_only<S: Scalar>(mut data: Dataset<S>) -> Dataset<S> {
    let tstats = target_stats(&data);
    if let (Some((min, max)), Targets::Reals(vals)) = (tstats, &mut data.targets) {
        for v in vals.iter_mut() {
            *v = if max > min {
                (*v - min) / (max - min)
            } else {
                S::zero()
            };
        }
        data.target_norm = tstats;
    }
    data
}
