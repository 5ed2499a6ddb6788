//! Labeled binary datasets: CSV ingestion, stratified splits, synthetic
//! imbalanced tasks and symmetric label-flip noise.
//!
//! Label 1 is always the minority (positive) class.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, STREAM_NOISE, STREAM_SPLIT, STREAM_TOY};

/// Dense row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, n_features: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        if n_features == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                got: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::LabelDomain {
                row: labels.iter().position(|&y| y == bad).unwrap_or(0) + 1,
                value: bad.to_string(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Self {
            features,
            n_features,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: rows.len(),
            });
        }
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::new(flat, d, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Row indices of the minority set P.
    pub fn minority_indices(&self) -> Vec<usize> {
        self.class_indices(1)
    }

    /// Row indices of the majority set N.
    pub fn majority_indices(&self) -> Vec<usize> {
        self.class_indices(0)
    }

    pub fn class_indices(&self, label: u8) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn n_minority(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_majority(&self) -> usize {
        self.n_rows() - self.n_minority()
    }

    /// |N| / |P|; infinite when there is no minority row.
    pub fn imbalance_ratio(&self) -> f64 {
        self.n_majority() as f64 / self.n_minority() as f64
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.n_minority() == 0 {
            return Err(Error::EmptyClass { label: 1 });
        }
        if self.n_majority() == 0 {
            return Err(Error::EmptyClass { label: 0 });
        }
        Ok(())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            n_features: self.n_features,
            labels,
        }
    }

    /// Same features with a replacement label vector.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.features.clone(), self.n_features, labels)
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// A bare integer selects by position, anything else by header name.
    pub fn parse(s: &str) -> Self {
        s.parse()
            .map(LabelColumn::Index)
            .unwrap_or_else(|_| LabelColumn::Name(s.to_string()))
    }
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column)
}

/// Parses comma-separated UTF-8 with a mandatory header row.
pub fn read_csv<R: Read>(reader: R, label_column: &LabelColumn) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::EmptyInput);
    }
    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < header.len() => *i,
        LabelColumn::Index(i) => return Err(Error::MissingLabelColumn(i.to_string())),
        LabelColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?,
    };
    if header.len() < 2 {
        return Err(Error::invalid("CSV needs at least one feature column"));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = match cell.parse() {
                Ok(v) if f64::is_finite(v) => v,
                _ => {
                    return Err(Error::NonNumeric {
                        row,
                        column: header[c].clone(),
                        value: cell.to_string(),
                    })
                }
            };
            if c == label_idx {
                labels.push(match value {
                    v if v == 0.0 => 0,
                    v if v == 1.0 => 1,
                    _ => {
                        return Err(Error::LabelDomain {
                            row,
                            value: cell.to_string(),
                        })
                    }
                });
            } else {
                features.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ds = LabeledDataset::new(features, header.len() - 1, labels)?;
    if ds.n_minority() == 0 {
        return Err(Error::SingleClass(0));
    }
    if ds.n_majority() == 0 {
        return Err(Error::SingleClass(1));
    }
    Ok(ds)
}

/// Writes `x0..x{d-1},label` columns; floats use the shortest exact representation.
pub fn write_csv<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ds.n_features()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    wtr.write_record(&header)?;
    for (row, &y) in ds.rows().zip(ds.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(ds, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            valid_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, valid: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train_fraction: train,
            valid_fraction: valid,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::invalid("split fractions must be positive"));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// Per-class (train, valid, test) counts: validation and test sizes are
    /// floored, train takes the remainder.
    pub fn class_counts(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
        let part = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let valid = part(self.valid_fraction);
        let test = part(self.test_fraction);
        (n.saturating_sub(valid + test), valid, test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
}

/// Row-index form of [`stratified_split`]; each index list is ascending.
pub fn stratified_split_indices(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    let mut rng = seeding::derived_rng(spec.seed, STREAM_SPLIT, 0);
    let mut out: [Vec<usize>; 3] = Default::default();
    for label in [0u8, 1] {
        let mut idx = ds.class_indices(label);
        let n = idx.len();
        let (tr, va, te) = spec.class_counts(n);
        if n < 3 || tr == 0 || va == 0 || te == 0 {
            return Err(Error::ClassTooSmall { label, count: n });
        }
        idx.shuffle(&mut rng);
        out[0].extend_from_slice(&idx[..tr]);
        out[1].extend_from_slice(&idx[tr..tr + va]);
        out[2].extend_from_slice(&idx[tr + va..]);
    }
    for part in &mut out {
        part.sort_unstable();
    }
    Ok(out)
}

/// Splits each class independently so every split keeps the input's class ratio.
pub fn stratified_split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<Split> {
    let [tr, va, te] = stratified_split_indices(ds, spec)?;
    Ok(Split {
        train: ds.subset(&tr),
        valid: ds.subset(&va),
        test: ds.subset(&te),
    })
}

/// Synthetic two-class task: majority rows on a noisy upper half-circle
/// ("∩" arc), minority rows in a Gaussian blob beneath its apex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_majority: usize,
    pub n_minority: usize,
    /// 0 keeps the blob at the arc's center; 1 puts it on the arc.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_majority: 2000,
            n_minority: 200,
            overlap: 0.5,
            seed: 0,
        }
    }
}

pub const ARC_RADIUS: f64 = 1.0;
pub const ARC_NOISE: f64 = 0.1;
pub const BLOB_STD: f64 = 0.2;
/// Noise draws are rejected beyond this many standard deviations, so at
/// overlap 0 the blob (radius <= 0.5) and the arc (radius >= 0.75) never touch.
pub const NOISE_TRUNCATION: f64 = 2.5;

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_minority < 2 || self.n_majority < self.n_minority {
            return Err(Error::invalid(
                "toy task needs n_majority >= n_minority >= 2",
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::invalid("overlap must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Blob center; its distance to the arc is `ARC_RADIUS * (1 - overlap)`.
    pub fn blob_center(&self) -> [f64; 2] {
        [0.0, ARC_RADIUS * self.overlap]
    }
}

pub fn make_toy(spec: &ToySpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = seeding::derived_rng(spec.seed, STREAM_TOY, 0);
    let n = spec.n_majority + spec.n_minority;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..spec.n_majority {
        let theta = rng.random::<f64>() * PI;
        let z = loop {
            let z: f64 = StandardNormal.sample(&mut rng);
            if z.abs() <= NOISE_TRUNCATION {
                break z;
            }
        };
        let r = ARC_RADIUS + ARC_NOISE * z;
        features.push(r * theta.cos());
        features.push(r * theta.sin());
        labels.push(0);
    }
    let [cx, cy] = spec.blob_center();
    for _ in 0..spec.n_minority {
        let (zx, zy) = loop {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            if zx.hypot(zy) <= NOISE_TRUNCATION {
                break (zx, zy);
            }
        };
        features.push(cx + BLOB_STD * zx);
        features.push(cy + BLOB_STD * zy);
        labels.push(1);
    }
    LabeledDataset::new(features, 2, labels)
}

/// Number of labels flipped in each direction for a given ratio.
pub fn flip_count(n_minority: usize, ratio: f64) -> usize {
    (n_minority as f64 * ratio).round() as usize
}

/// Flips `round(|P| * ratio)` minority labels to 0 and as many majority
/// labels to 1, so class sizes are unchanged.
pub fn inject_flip_noise(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid("noise ratio must lie in [0, 1)"));
    }
    let pos = ds.minority_indices();
    let neg = ds.majority_indices();
    let ceil = (pos.len() as f64 * ratio).ceil() as usize;
    let limit = pos.len().min(neg.len()).saturating_sub(1);
    if pos.is_empty() || neg.is_empty() || ceil > limit {
        return Err(Error::invalid(format!(
            "noise ratio {ratio} would flip {ceil} labels but at most {limit} are allowed"
        )));
    }
    let m = flip_count(pos.len(), ratio);
    let mut rng = seeding::derived_rng(seed, STREAM_NOISE, 0);
    let mut labels = ds.labels().to_vec();
    for i in index::sample(&mut rng, pos.len(), m) {
        labels[pos[i]] = 0;
    }
    for i in index::sample(&mut rng, neg.len(), m) {
        labels[neg[i]] = 1;
    }
    ds.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<LabeledDataset> {
        read_csv(text.as_bytes(), &LabelColumn::default())
    }

    #[test]
    fn csv_counts_classes() {
        let ds = read("a,b,label\n1,2,0\n3,4,0\n5,6,1\n7,8,0\n").unwrap();
        assert_eq!(ds.n_majority(), 3);
        assert_eq!(ds.n_minority(), 1);
        assert_eq!(ds.row(2), &[5.0, 6.0]);
        assert_eq!(ds.labels(), &[0, 0, 1, 0]);
    }

    #[test]
    fn csv_label_by_index() {
        let ds = read_csv("y,a\n1,0.5\n0,1.5\n".as_bytes(), &LabelColumn::Index(0)).unwrap();
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.row(1), &[1.5]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read("a,label\n1,2\n2,0\n"),
            Err(Error::LabelDomain { row: 1, .. })
        ));
        assert!(matches!(read(""), Err(Error::EmptyInput)));
        assert!(matches!(read("a,label\n"), Err(Error::EmptyInput)));
        assert!(matches!(
            read("a,label\nfoo,1\n2,0\n"),
            Err(Error::NonNumeric { row: 1, .. })
        ));
        assert!(matches!(read("a,label\n1,1\n2,1\n"), Err(Error::SingleClass(1))));
        assert!(matches!(
            read("a,b\n1,1\n2,0\n"),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(
            read("a,label\n1,1\n2\n"),
            Err(Error::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &LabelColumn::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn split_exact_fractions() {
        let mut labels = vec![0u8; 100];
        labels.extend(vec![1u8; 10]);
        let ds = LabeledDataset::new((0..110).map(f64::from).collect(), 1, labels).unwrap();
        let s = stratified_split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.n_majority(), s.train.n_minority()), (60, 6));
        assert_eq!((s.valid.n_majority(), s.valid.n_minority()), (20, 2));
        assert_eq!((s.test.n_majority(), s.test.n_minority()), (20, 2));
    }

    #[test]
    fn split_rejects_tiny_class() {
        let mut labels = vec![0u8; 5];
        labels.extend([1, 1]);
        let ds = LabeledDataset::new((0..7).map(f64::from).collect(), 1, labels).unwrap();
        assert!(matches!(
            stratified_split(&ds, &SplitSpec::default()),
            Err(Error::ClassTooSmall { label: 1, count: 2 })
        ));
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::new(0.5, 0.5, 0.0, 0).is_err());
        assert!(SplitSpec::new(0.6, 0.2, 0.3, 0).is_err());
        assert!(SplitSpec::new(0.6, 0.2, 0.2, 0).is_ok());
    }

    #[test]
    fn toy_counts_and_determinism() {
        let spec = ToySpec {
            overlap: 0.0,
            ..ToySpec::default()
        };
        let a = make_toy(&spec).unwrap();
        assert_eq!(a.n_majority(), 2000);
        assert_eq!(a.n_minority(), 200);
        assert_eq!(a.imbalance_ratio(), 10.0);
        assert_eq!(a.n_features(), 2);
        let b = make_toy(&spec).unwrap();
        assert!(a
            .features()
            .iter()
            .zip(b.features())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, make_toy(&ToySpec { seed: 1, ..spec }).unwrap());
    }

    #[test]
    fn toy_rejects_bad_spec() {
        let bad = ToySpec {
            overlap: 1.5,
            ..ToySpec::default()
        };
        assert!(make_toy(&bad).is_err());
        let bad = ToySpec {
            n_majority: 10,
            n_minority: 20,
            ..ToySpec::default()
        };
        assert!(make_toy(&bad).is_err());
    }

    #[test]
    fn noise_identity_and_counts() {
        let ds = make_toy(&ToySpec::default()).unwrap();
        assert_eq!(inject_flip_noise(&ds, 0.0, 3).unwrap(), ds);
        let noisy = inject_flip_noise(&ds, 0.25, 3).unwrap();
        assert_eq!(noisy.n_minority(), 200);
        assert_eq!(noisy.n_majority(), 2000);
        let flipped_down = (0..ds.n_rows())
            .filter(|&i| ds.label(i) == 1 && noisy.label(i) == 0)
            .count();
        let flipped_up = (0..ds.n_rows())
            .filter(|&i| ds.label(i) == 0 && noisy.label(i) == 1)
            .count();
        assert_eq!((flipped_down, flipped_up), (50, 50));
    }

    #[test]
    fn noise_rejects_vanishing_class() {
        let ds = LabeledDataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 0, 1, 1]).unwrap();
        assert!(inject_flip_noise(&ds, 0.9, 0).is_err());
        assert!(inject_flip_noise(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = make_toy(&ToySpec {
            n_majority: 30,
            n_minority: 5,
            overlap: 0.4,
            seed: 9,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        assert_eq!(read(std::str::from_utf8(&buf).unwrap()).unwrap(), ds);
    }
}
