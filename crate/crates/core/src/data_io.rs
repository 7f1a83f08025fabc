//! Dataset loading, scaling, target encoding and mini-batch iteration.
//!
//! Samples are stored densely as columns of `x` (`d × N`). Class labels are
//! mapped to contiguous ids `0..L` in order of first appearance; the
//! original label strings are kept in `class_names`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::objectives::{TargetEncoding, Targets};

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vector,
    pub max: Vector,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::EmptyDataset(None));
        }
        let min = Vector::from_iterator(x.nrows(), x.row_iter().map(|r| r.min()));
        let max = Vector::from_iterator(x.nrows(), x.row_iter().map(|r| r.max()));
        Ok(MinMaxScaler { min, max })
    }

    /// Applies `(x − min)/(max − min)` per feature; constant features map to 0.
    /// Values are not clipped.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.min.len() {
            return Err(Error::dims(
                "scaler feature dimension",
                self.min.len(),
                x.nrows(),
            ));
        }
        let mut out = x.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            let span = self.max[r] - self.min[r];
            if span > 0.0 {
                row.apply(|v| *v = (*v - self.min[r]) / span);
            } else {
                row.fill(0.0);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d × N`, one sample per column.
    pub x: Matrix,
    pub targets: Targets,
    /// Class ids per sample; `None` for regression data.
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    /// Scaling fitted on the training split, once applied.
    pub scaler: Option<MinMaxScaler>,
}

impl Dataset {
    /// Classification dataset with one-hot targets.
    pub fn classification(x: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if x.ncols() != labels.len() {
            return Err(Error::dims("labels per sample", x.ncols(), labels.len()));
        }
        let targets = one_hot(&labels, class_names.len(), OneHotMode::Raw)?;
        Ok(Dataset {
            x,
            targets,
            labels: Some(labels),
            class_names,
            scaler: None,
        })
    }

    pub fn regression(x: Matrix, y: Matrix) -> Result<Self> {
        if x.ncols() != y.nrows() {
            return Err(Error::dims("targets per sample", x.ncols(), y.nrows()));
        }
        Ok(Dataset {
            x,
            targets: Targets::raw(y),
            labels: None,
            class_names: Vec::new(),
            scaler: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.x.nrows()
    }

    /// `Some(L)` for classification data.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.class_names.len())
    }

    /// Re-encodes classification targets. Regression data only accepts `Raw`.
    pub fn with_encoding(mut self, encoding: TargetEncoding) -> Result<Self> {
        match (&self.labels, encoding) {
            (Some(labels), TargetEncoding::OneHot) => {
                self.targets = one_hot(labels, self.class_names.len(), OneHotMode::Raw)?;
            }
            (Some(labels), TargetEncoding::OneHotUnitNorm) => {
                self.targets = one_hot(labels, self.class_names.len(), OneHotMode::UnitNorm)?;
            }
            (Some(_), TargetEncoding::Raw) => self.targets.encoding = TargetEncoding::Raw,
            (None, TargetEncoding::Raw) => {}
            (None, other) => {
                return Err(Error::InvalidConfig(format!(
                    "{other:?} encoding needs class labels"
                )))
            }
        }
        Ok(self)
    }

    /// Columns `idx` as a new batch. Unit-norm one-hot targets are rescaled
    /// with the class counts of the batch itself.
    pub fn subset(&self, idx: &[usize]) -> Result<Batch> {
        let x = self.x.select_columns(idx.iter());
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect::<Vec<_>>());
        let targets = match (&labels, self.targets.encoding) {
            (Some(l), TargetEncoding::OneHotUnitNorm) => {
                one_hot(l, self.class_names.len(), OneHotMode::UnitNorm)?
            }
            _ => Targets {
                y: self.targets.y.select_rows(idx.iter()),
                encoding: self.targets.encoding,
            },
        };
        Ok(Batch { x, targets, labels })
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.n_samples() {
            return Err(Error::InvalidConfig(format!(
                "split point {n} must be inside (0, {})",
                self.n_samples()
            )));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.n_samples()).collect();
        Ok((self.take(&head)?, self.take(&tail)?))
    }

    fn take(&self, idx: &[usize]) -> Result<Dataset> {
        let b = self.subset(idx)?;
        let targets = match self.targets.encoding {
            TargetEncoding::OneHotUnitNorm => b.targets,
            enc => Targets {
                y: self.targets.y.select_rows(idx.iter()),
                encoding: enc,
            },
        };
        Ok(Dataset {
            x: b.x,
            targets,
            labels: b.labels,
            class_names: self.class_names.clone(),
            scaler: self.scaler.clone(),
        })
    }
}

/// A mini-batch `(X′, Y′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub targets: Targets,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OneHotMode {
    Raw,
    /// Each column divided by the square root of its class count.
    UnitNorm,
}

/// Indicator matrix `N × L` for `labels`.
pub fn one_hot(labels: &[usize], classes: usize, mode: OneHotMode) -> Result<Targets> {
    let mut y = Matrix::zeros(labels.len(), classes);
    let mut counts = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        y[(i, l)] = 1.0;
        counts[l] += 1;
    }
    let encoding = match mode {
        OneHotMode::Raw => TargetEncoding::OneHot,
        OneHotMode::UnitNorm => {
            for (c, mut col) in y.column_iter_mut().enumerate() {
                if counts[c] > 0 {
                    col /= (counts[c] as f64).sqrt();
                }
            }
            TargetEncoding::OneHotUnitNorm
        }
    };
    Ok(Targets { y, encoding })
}

/// Fits a min-max scaler on `train` and applies it to every dataset.
pub fn minmax_scale(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    let scaler = MinMaxScaler::fit(&train.x)?;
    let apply = |d: &Dataset| -> Result<Dataset> {
        Ok(Dataset {
            x: scaler.transform(&d.x)?,
            scaler: Some(scaler.clone()),
            ..d.clone()
        })
    };
    let scaled = apply(train)?;
    let rest = others.iter().map(apply).collect::<Result<Vec<_>>>()?;
    Ok((scaled, rest))
}

/// Sample indices of the full batches for one epoch: a fresh uniform
/// permutation per `(seed, epoch)`, cut into `⌊N / batch_size⌋` chunks.
/// The remainder is dropped for this epoch.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::InvalidConfig(format!(
            "batch size {batch_size} must be in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    Ok(perm.chunks_exact(batch_size).map(|c| c.to_vec()).collect())
}

/// Iterator over the mini-batches of one epoch.
pub struct BatchIter<'a> {
    data: &'a Dataset,
    chunks: std::vec::IntoIter<Vec<usize>>,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.chunks.next().map(|idx| self.data.subset(&idx))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.chunks.size_hint()
    }
}

pub fn batch_iter(
    data: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<BatchIter<'_>> {
    let chunks = batch_indices(data.n_samples(), batch_size, seed, epoch)?;
    Ok(BatchIter {
        data,
        chunks: chunks.into_iter(),
    })
}

#[derive(Default)]
struct LabelMap {
    names: Vec<String>,
    ids: HashMap<String, usize>,
    frozen: bool,
}

impl LabelMap {
    fn from_names(names: &[String]) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        LabelMap {
            names: names.to_vec(),
            ids,
            frozen: true,
        }
    }

    fn id(&mut self, label: &str) -> Option<usize> {
        if let Some(&id) = self.ids.get(label) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = self.names.len();
        self.names.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        Some(id)
    }
}

/// Options shared by the text loaders.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Feature dimension; inferred from the largest index when `None`.
    pub n_features: Option<usize>,
    /// Fixed label vocabulary (e.g. the training split's `class_names`).
    pub class_names: Option<Vec<String>>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn normalize_label(raw: &str) -> String {
    // "+1" and "1" name the same class in LIBSVM files.
    match raw.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => raw.to_owned(),
    }
}

/// Reads LIBSVM sparse text (`label idx:val ...`, 1-based indices).
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    load_libsvm_with(path, &LoadOptions::default())
}

pub fn load_libsvm_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut map = opts
        .class_names
        .as_deref()
        .map(LabelMap::from_names)
        .unwrap_or_default();
    let mut max_index = 0usize;

    for (lineno, line) in open(path)?.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = normalize_label(tokens.next().unwrap_or_default());
        let id = map
            .id(&label)
            .ok_or_else(|| parse_err(path, lineno, format!("unknown label `{label}`")))?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| {
                parse_err(path, lineno, format!("expected index:value, got `{tok}`"))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(path, lineno, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_err(path, lineno, "non-finite feature value"));
            }
            if let Some(d) = opts.n_features {
                if idx > d {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("feature index {idx} exceeds dimension {d}"),
                    ));
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(id);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset(Some(path.to_path_buf())));
    }
    let d = opts.n_features.unwrap_or(max_index).max(1);
    let mut x = Matrix::zeros(d, rows.len());
    for (j, entries) in rows.iter().enumerate() {
        for &(i, v) in entries {
            x[(i, j)] = v;
        }
    }
    Dataset::classification(x, labels, map.names)
}

/// Writes LIBSVM text. Zero entries are omitted; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("LIBSVM output needs class labels".into()))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for (j, &l) in labels.iter().enumerate() {
        write!(w, "{}", data.class_names[l]).map_err(io)?;
        for (i, v) in data.x.column(j).iter().enumerate() {
            if *v != 0.0 {
                write!(w, " {}:{:?}", i + 1, v).map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads comma-separated dense rows; `label_column` holds the class label.
pub fn load_csv(path: impl AsRef<Path>, label_column: usize, has_header: bool) -> Result<Dataset> {
    load_csv_with(path, label_column, has_header, &LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    label_column: usize,
    has_header: bool,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut map = opts
        .class_names
        .as_deref()
        .map(LabelMap::from_names)
        .unwrap_or_default();
    let mut labels = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;

    for (lineno, line) in open(path)?.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if has_header && lineno == 1 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => {
                if label_column >= fields.len() {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!(
                            "label column {label_column} but only {} fields",
                            fields.len()
                        ),
                    ));
                }
                width = Some(fields.len());
            }
            Some(w) if w != fields.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {w} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        for (c, f) in fields.iter().enumerate() {
            if c == label_column {
                let label = normalize_label(f);
                let id = map
                    .id(&label)
                    .ok_or_else(|| parse_err(path, lineno, format!("unknown label `{label}`")))?;
                labels.push(id);
            } else {
                let v: f64 = f
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad value `{f}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(path, lineno, "non-finite value"));
                }
                values.push(v);
            }
        }
    }

    let Some(width) = width else {
        return Err(Error::EmptyDataset(Some(path.to_path_buf())));
    };
    let d = width - 1;
    if let Some(expected) = opts.n_features {
        if expected != d {
            return Err(Error::dims("CSV feature count", expected, d));
        }
    }
    let x = Matrix::from_column_slice(d, labels.len(), &values);
    Dataset::classification(x, labels, map.names)
}

/// Gaussian class blobs for desk-scale experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub dim: usize,
    pub classes: usize,
    pub samples: usize,
    /// Standard deviation of the class centers; samples have unit noise.
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            dim: 2,
            classes: 2,
            samples: 1000,
            separation: 2.0,
            seed: 0,
        }
    }
}

/// Draws `samples` points with uniformly random classes around
/// `classes` centers. Centers depend only on `(seed, dim, classes, separation)`.
pub fn synthetic_blobs(cfg: &BlobConfig) -> Result<Dataset> {
    if cfg.dim == 0 || cfg.classes == 0 || cfg.samples == 0 {
        return Err(Error::InvalidConfig(
            "blob dim, classes and samples must be positive".into(),
        ));
    }
    if !(cfg.separation.is_finite() && cfg.separation >= 0.0) {
        return Err(Error::InvalidConfig(
            "blob separation must be finite and >= 0".into(),
        ));
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut center_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = Matrix::from_fn(cfg.dim, cfg.classes, |_, _| {
        cfg.separation * unit.sample(&mut center_rng)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut x = Matrix::zeros(cfg.dim, cfg.samples);
    let mut labels = Vec::with_capacity(cfg.samples);
    for j in 0..cfg.samples {
        let c = j % cfg.classes;
        labels.push(c);
        for i in 0..cfg.dim {
            x[(i, j)] = centers[(i, c)] + unit.sample(&mut rng);
        }
    }
    // Interleaved classes, then shuffled so any prefix is a random split.
    let mut perm: Vec<usize> = (0..cfg.samples).collect();
    perm.shuffle(&mut rng);
    let x = x.select_columns(perm.iter());
    let labels = perm.iter().map(|&p| labels[p]).collect();
    let names = (0..cfg.classes).map(|c| c.to_string()).collect();
    Dataset::classification(x, labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn libsvm_sparse_semantics() {
        let f = write_tmp("1 1:0.5 3:2.0\n");
        let d = load_libsvm(f.path()).unwrap();
        assert_eq!(d.n_features(), 3);
        assert_eq!(d.x.column(0).as_slice(), &[0.5, 0.0, 2.0]);
        assert_eq!(d.labels, Some(vec![0]));
        assert_eq!(d.class_names, vec!["1".to_string()]);
    }

    #[test]
    fn libsvm_labels_in_first_appearance_order() {
        let f = write_tmp("+1 1:1\n-1 2:1\n1 1:2\n# comment\n\n3 2:5\n");
        let d = load_libsvm(f.path()).unwrap();
        assert_eq!(d.labels, Some(vec![0, 1, 0, 2]));
        assert_eq!(d.class_names, vec!["1", "-1", "3"]);
        assert_eq!(d.n_classes(), Some(3));
    }

    #[test]
    fn libsvm_errors_carry_line_numbers() {
        let f = write_tmp("1 1:0.5\n2 x:1\n");
        match load_libsvm(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("1 0:1\n");
        assert!(matches!(
            load_libsvm(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
        let empty = write_tmp("");
        assert!(matches!(
            load_libsvm(empty.path()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn libsvm_fixed_vocabulary() {
        let f = write_tmp("b 1:1\na 1:2\n");
        let opts = LoadOptions {
            n_features: Some(2),
            class_names: Some(vec!["a".into(), "b".into()]),
        };
        let d = load_libsvm_with(f.path(), &opts).unwrap();
        assert_eq!(d.labels, Some(vec![1, 0]));
        assert_eq!(d.n_features(), 2);
        let bad = write_tmp("c 1:1\n");
        assert!(load_libsvm_with(bad.path(), &opts).is_err());
    }

    #[test]
    fn csv_loader() {
        let f = write_tmp("a,b,label\n1.0,2.0,x\n3.0,4.0,y\n");
        let d = load_csv(f.path(), 2, true).unwrap();
        assert_eq!(d.x, Matrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(d.labels, Some(vec![0, 1]));
        let ragged = write_tmp("1,2,3\n1,2\n");
        assert!(matches!(
            load_csv(ragged.path(), 0, false),
            Err(Error::Parse { line: 2, .. })
        ));
        let empty = write_tmp("h1,h2\n");
        assert!(matches!(
            load_csv(empty.path(), 0, true),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_libsvm("/definitely/not/here.svm").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.svm"));
    }

    #[test]
    fn scaling_examples() {
        let x = Matrix::from_row_slice(2, 3, &[2.0, 4.0, 3.0, 5.0, 5.0, 5.0]);
        let train =
            Dataset::classification(x, vec![0, 1, 0], vec!["a".into(), "b".into()]).unwrap();
        let test_x = Matrix::from_row_slice(2, 1, &[6.0, 1.0]);
        let test = Dataset::classification(test_x, vec![1], vec!["a".into(), "b".into()]).unwrap();
        let (s, rest) = minmax_scale(&train, &[test]).unwrap();
        assert_eq!(
            s.x.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.5]
        );
        assert_eq!(
            s.x.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 0.0]
        );
        // fitted on train only, test not clipped
        assert_eq!(rest[0].x[(0, 0)], 2.0);
        assert_eq!(rest[0].x[(1, 0)], 0.0);
    }

    #[test]
    fn one_hot_modes() {
        let t = one_hot(&[0, 1], 2, OneHotMode::Raw).unwrap();
        assert_eq!(t.y, Matrix::identity(2, 2));
        let t = one_hot(&[0, 0], 2, OneHotMode::UnitNorm).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(t.y, Matrix::from_row_slice(2, 2, &[s, 0.0, s, 0.0]));
        let t = one_hot(&[2, 0, 1, 1], 3, OneHotMode::Raw).unwrap();
        assert!(t.y.row_iter().all(|r| r.sum() == 1.0));
        assert!(matches!(
            one_hot(&[3], 3, OneHotMode::Raw),
            Err(Error::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn batches_follow_floor_rule() {
        let b = batch_indices(10, 10, 1, 0).unwrap();
        assert_eq!(b.len(), 1);
        let mut all = b[0].clone();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let b = batch_indices(25, 10, 1, 0).unwrap();
        assert_eq!(b.len(), 2);
        let seen: HashSet<usize> = b.iter().flatten().copied().collect();
        assert_eq!(seen.len(), 20);
        assert!(batch_indices(5, 6, 0, 0).is_err());
    }

    #[test]
    fn batches_cover_everything_over_epochs() {
        let mut seen = HashSet::new();
        for epoch in 0..20 {
            for b in batch_indices(103, 10, 7, epoch).unwrap() {
                seen.extend(b);
            }
        }
        assert_eq!(seen.len(), 103);
        assert_ne!(
            batch_indices(50, 10, 7, 0).unwrap(),
            batch_indices(50, 10, 7, 1).unwrap()
        );
        assert_eq!(
            batch_indices(50, 10, 7, 3).unwrap(),
            batch_indices(50, 10, 7, 3).unwrap()
        );
    }

    #[test]
    fn unit_norm_batches_rescale_per_batch() {
        let data = synthetic_blobs(&BlobConfig {
            samples: 40,
            classes: 3,
            ..Default::default()
        })
        .unwrap()
        .with_encoding(TargetEncoding::OneHotUnitNorm)
        .unwrap();
        for batch in batch_iter(&data, 7, 3, 0).unwrap() {
            let batch = batch.unwrap();
            for col in batch.targets.y.column_iter() {
                let n = col.norm();
                assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let cfg = BlobConfig {
            dim: 3,
            classes: 4,
            samples: 100,
            separation: 1.0,
            seed: 5,
        };
        let a = synthetic_blobs(&cfg).unwrap();
        assert_eq!(a, synthetic_blobs(&cfg).unwrap());
        assert_eq!(a.n_classes(), Some(4));
        let (tr, te) = a.split_at(60).unwrap();
        assert_eq!((tr.n_samples(), te.n_samples()), (60, 40));
    }
}
