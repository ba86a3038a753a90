//! Datasets in column-per-sample layout, readers for IDX and CSV files,
//! stratified splitting and train-split centering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Real matrix with one column per sample (`p` features by `n` samples).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyDataset(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(DataMatrix { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn select_columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.values.select_columns(idx)
    }

    /// Per-feature mean over the given columns.
    pub fn column_mean(&self, idx: &[usize]) -> DVector<f64> {
        let mut mean = DVector::zeros(self.p());
        for &j in idx {
            mean += self.values.column(j);
        }
        if !idx.is_empty() {
            mean /= idx.len() as f64;
        }
        mean
    }
}

/// Data matrix with one integer class label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::Consistency(format!(
                "{} labels for {} samples",
                labels.len(),
                data.n()
            )));
        }
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            if l >= n_classes {
                return Err(Error::Consistency(format!("label {l} outside [0, {n_classes})")));
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Consistency(format!("class {c} has no samples")));
        }
        Ok(LabeledDataset {
            data,
            labels,
            n_classes,
        })
    }

    /// Build from arbitrary integer labels, remapping them to `[0, C)` in
    /// ascending order of the raw value.
    pub fn from_raw_labels(data: DataMatrix, raw: &[i64]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &r in raw {
            map.insert(r, 0usize);
        }
        for (i, v) in map.values_mut().enumerate() {
            *v = i;
        }
        let labels = raw.iter().map(|r| map[r]).collect();
        Self::new(data, labels, map.len())
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Columns and labels restricted to `idx`. Classes absent from the
    /// subset are kept in `n_classes` so label indices stay stable.
    pub fn subset(&self, idx: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        (
            self.data.select_columns(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Disjoint train/val/test column indices.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parse an IDX image file into a `rows*cols` by `count` matrix in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let magic = read_u32_be(bytes, 0, "image file")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "image file")? as usize;
    let rows = read_u32_be(bytes, 8, "image file")? as usize;
    let cols = read_u32_be(bytes, 12, "image file")? as usize;
    let p = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * p {
        return Err(Error::Format(format!(
            "image payload is {} bytes, header implies {}",
            body.len(),
            count * p
        )));
    }
    // pixels are row-major per image, which is exactly one column here
    Ok(DMatrix::from_iterator(p, count, body.iter().map(|&b| b as f64 / 255.0)))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, "label file")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "label file")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!(
            "label payload is {} bytes, header says {count}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Load an (images, labels) IDX file pair.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_idx_pairs(&[(images.as_ref(), labels.as_ref())])
}

/// Load and concatenate several IDX file pairs (e.g. the train and test
/// halves of MNIST), in order.
pub fn load_idx_pairs(pairs: &[(&Path, &Path)]) -> Result<LabeledDataset> {
    let mut blocks = Vec::with_capacity(pairs.len());
    let mut raw = Vec::new();
    for (img, lbl) in pairs {
        let x = parse_idx_images(&read_file(img)?)?;
        let y = parse_idx_labels(&read_file(lbl)?)?;
        if x.ncols() != y.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels ({} / {})",
                x.ncols(),
                y.len(),
                img.display(),
                lbl.display()
            )));
        }
        if let Some(prev) = blocks.first().map(|b: &DMatrix<f64>| b.nrows()) {
            if prev != x.nrows() {
                return Err(Error::Consistency(format!(
                    "image size {} differs from earlier file ({prev})",
                    x.nrows()
                )));
            }
        }
        raw.extend(y.into_iter().map(i64::from));
        blocks.push(x);
    }
    let p = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let n: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut values = DMatrix::zeros(p, n);
    let mut at = 0;
    for b in &blocks {
        values.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    LabeledDataset::from_raw_labels(DataMatrix::new(values)?, &raw)
}

/// Load a numeric CSV with a header row. Rows are samples. When
/// `label_column` is given, that column holds integer class labels and the
/// rest are features; otherwise every sample gets class 0.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("label column {name:?} not found in CSV header")))?,
        ),
        None => None,
    };
    let p = headers.len() - usize::from(label_idx.is_some());
    if p == 0 {
        return Err(Error::Config("CSV has no feature columns".into()));
    }

    let mut feats = Vec::new();
    let mut raw = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // row numbers are 1-based data rows (the header is row 0)
        let row = row + 1;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: rec.len(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (col, cell) in rec.iter().enumerate() {
            if Some(col) == label_idx {
                let v: i64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: col,
                    message: format!("label {cell:?} is not an integer"),
                })?;
                raw.push(v);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: col,
                    message: format!("{cell:?} is not a number"),
                })?;
                feats.push(v);
            }
        }
    }
    let n = feats.len() / p;
    if n == 0 {
        return Err(Error::EmptyDataset("CSV has a header but no data rows".into()));
    }
    if label_idx.is_none() {
        raw = vec![0; n];
    }
    let values = DMatrix::from_vec(p, n, feats);
    LabeledDataset::from_raw_labels(DataMatrix::new(values)?, &raw)
}

/// Largest-remainder allocation of `total` items across `fractions`.
fn allocate(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).filter(|&i| fractions[i] > 0.0).collect();
    // stable: ties go to the earlier split
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class shuffled train/val/test assignment.
pub fn stratified_split(ds: &LabeledDataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(format!(
            "split fractions must be non-negative, got {f:?}"
        )));
    }
    if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split fractions must sum to 1, got {f:?}")));
    }
    if f[0] <= 0.0 {
        return Err(Error::Validation("train fraction must be positive".into()));
    }
    let nonzero = f.iter().filter(|v| **v > 0.0).count();

    let mut by_class = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut split = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.len() < nonzero {
            return Err(Error::Stratification(format!(
                "class {c} has {} samples, fewer than the {nonzero} non-empty splits",
                members.len()
            )));
        }
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        members.shuffle(&mut rng);
        let [a, b, _] = allocate(members.len(), &f);
        split.train.extend_from_slice(&members[..a]);
        split.val.extend_from_slice(&members[a..a + b]);
        split.test.extend_from_slice(&members[a + b..]);
    }
    Ok(split)
}

/// Subtract the train-split feature mean from every column.
pub fn center(ds: &LabeledDataset, split: &SplitIndices) -> Result<(LabeledDataset, DVector<f64>)> {
    if split.train.is_empty() {
        return Err(Error::Validation("train split is empty".into()));
    }
    let mean = ds.data.column_mean(&split.train);
    let mut values = ds.data.values().clone();
    for mut col in values.column_iter_mut() {
        col -= &mean;
    }
    Ok((
        LabeledDataset {
            data: DataMatrix::new(values)?,
            labels: ds.labels.clone(),
            n_classes: ds.n_classes,
        },
        mean,
    ))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn split_proportions_hold(
            sizes in prop::collection::vec(10usize..1000, 2..30),
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = sizes
                .iter()
                .enumerate()
                .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
                .collect();
            let n = labels.len();
            let ds = LabeledDataset::new(
                DataMatrix::new(DMatrix::zeros(1, n)).unwrap(),
                labels.clone(),
                sizes.len(),
            ).unwrap();
            let f = (0.7, 0.1, 0.2);
            let s = stratified_split(&ds, f, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (part, frac) in [(&s.train, f.0), (&s.val, f.1), (&s.test, f.2)] {
                let mut per = vec![0usize; sizes.len()];
                for &i in part.iter() {
                    per[labels[i]] += 1;
                }
                for (c, &k) in sizes.iter().enumerate() {
                    prop_assert!((per[c] as f64 - frac * k as f64).abs() <= 1.0);
                }
            }
        }

        #[test]
        fn center_is_idempotent(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let x = crate::rng::gaussian_matrix(4, 12, &mut rng) * 3.0;
            let ds = LabeledDataset::new(DataMatrix::new(x).unwrap(), vec![0; 12], 1).unwrap();
            let split = SplitIndices { train: (0..8).collect(), val: vec![8, 9], test: vec![10, 11] };
            let (once, _) = center(&ds, &split).unwrap();
            let (twice, _) = center(&once, &split).unwrap();
            prop_assert!((once.data.values() - twice.data.values()).amax() <= 1e-12);
        }
    }
}
