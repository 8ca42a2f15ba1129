//! Tabular datasets and CSV ingestion.
//!
//! A [`Dataset`] is an N x d feature matrix with integer class labels. CSV
//! files carry one header row with the feature names plus a `label` column
//! (any position); all other columns are parsed as decimal reals in order.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feature matrix with class labels; the unit of training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>, // row-major, num_samples x num_features
    labels: Vec<usize>,
    feature_names: Vec<String>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    /// Build a dataset, validating that all features are finite, labels are
    /// in `[0, num_classes)`, and shapes agree.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        num_classes: usize,
    ) -> Result<Self> {
        let num_features = feature_names.len();
        if num_features == 0 {
            return Err(Error::invalid_argument("dataset needs at least 1 feature"));
        }
        if num_classes == 0 {
            return Err(Error::invalid_argument("dataset needs at least 1 class"));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::ShapeMismatch {
                what: "dataset features",
                expected: labels.len() * num_features,
                actual: features.len(),
            });
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "dataset feature at flat index {bad}"
            )));
        }
        for &label in &labels {
            if label >= num_classes {
                return Err(Error::InvalidLabel { label, num_classes });
            }
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            num_features,
            num_classes,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Iterate over `(features, label)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        (0..self.num_samples()).map(move |i| (self.sample(i), self.label(i)))
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            labels.push(self.label(i));
        }
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            num_features: self.num_features,
            num_classes: self.num_classes,
        }
    }

    /// Per-feature column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.num_features];
        for i in 0..self.num_samples() {
            for (m, v) in means.iter_mut().zip(self.sample(i)) {
                *m += v;
            }
        }
        let n = self.num_samples().max(1) as f64;
        for m in &mut means {
            *m /= n;
        }
        means
    }

    /// Read a dataset from CSV. The header must contain a `label` column;
    /// every other column is a feature, kept in file order.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let label_col = headers
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::invalid_argument("csv header has no `label` column"))?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_col)
            .map(|(_, h)| h.to_string())
            .collect();
        if feature_names.is_empty() {
            return Err(Error::invalid_argument("csv has no feature columns"));
        }

        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::invalid_argument(format!(
                    "csv row {} has {} fields, header has {}",
                    row_idx + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (col, field) in record.iter().enumerate() {
                if col == label_col {
                    labels.push(parse_label(field, row_idx)?);
                } else {
                    let value: f64 = field.trim().parse().map_err(|_| {
                        Error::invalid_argument(format!(
                            "csv row {}, column `{}`: `{}` is not a real number",
                            row_idx + 1,
                            headers.get(col).unwrap_or(""),
                            field
                        ))
                    })?;
                    features.push(value);
                }
            }
        }

        let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
        Dataset::new(features, labels, feature_names, num_classes)
    }

    /// Write the dataset as CSV: feature columns (file order) plus `label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<&str> = self.feature_names.iter().map(|s| s.as_str()).collect();
        header.push("label");
        writer.write_record(&header)?;
        for (row, label) in self.rows() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(label.to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn parse_label(field: &str, row_idx: usize) -> Result<usize> {
    let trimmed = field.trim();
    if let Ok(v) = trimmed.parse::<usize>() {
        return Ok(v);
    }
    // tolerate labels written as reals with zero fraction, e.g. "3.0"
    if let Ok(v) = trimmed.parse::<f64>() {
        if v.fract() == 0.0 && v >= 0.0 {
            return Ok(v as usize);
        }
    }
    Err(Error::invalid_argument(format!(
        "csv row {}: label `{}` is not a non-negative integer",
        row_idx + 1,
        field
    )))
}

/// Deterministic train / held-out split: returns `(train, heldout)` index
/// lists. `fraction` is the held-out share, rounded down, but at least one
/// sample is held out whenever `fraction > 0` and `n > 1`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!((0.0..1.0).contains(&fraction), "fraction must be in [0, 1)");
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut heldout_len = (n as f64 * fraction).floor() as usize;
    if fraction > 0.0 && heldout_len == 0 && n > 1 {
        heldout_len = 1;
    }
    let heldout = indices.split_off(n - heldout_len);
    (indices, heldout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0, 1, 0],
            vec!["a".into(), "b".into()],
            2,
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_finite_features() {
        let err = Dataset::new(
            vec![1.0, f64::NAN],
            vec![0],
            vec!["a".into(), "b".into()],
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = Dataset::new(vec![1.0], vec![3], vec!["a".into()], 2).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidLabel {
                label: 3,
                num_classes: 2
            }
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = Dataset::new(
            vec![0.1, -2.5e-7, 1.0 / 3.0, 16.0],
            vec![1, 0],
            vec!["f0".into(), "f1".into()],
            2,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.write_csv(&path).unwrap();
        let back = Dataset::from_csv(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_label_column_may_be_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        std::fs::write(&path, "x,label,y\n1.5,1,2.5\n0.5,0,-1.0\n").unwrap();
        let ds = Dataset::from_csv(&path).unwrap();
        assert_eq!(ds.feature_names(), &["x".to_string(), "y".to_string()]);
        assert_eq!(ds.sample(0), &[1.5, 2.5]);
        assert_eq!(ds.label(0), 1);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn csv_without_label_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
    }

    #[test]
    fn csv_rejects_non_numeric_feature() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        std::fs::write(&path, "x,label\nfoo,0\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
    }

    #[test]
    fn subset_preserves_order() {
        let ds = toy();
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.sample(0), &[5.0, 6.0]);
        assert_eq!(sub.sample(1), &[1.0, 2.0]);
        assert_eq!(sub.labels(), &[0, 0]);
    }

    #[test]
    fn column_means_match_hand_average() {
        let ds = toy();
        assert_eq!(ds.column_means(), vec![3.0, 4.0]);
    }

    #[test]
    fn holdout_split_is_deterministic_and_disjoint() {
        let (tr1, ho1) = holdout_split(100, 0.1, 9);
        let (tr2, ho2) = holdout_split(100, 0.1, 9);
        assert_eq!(tr1, tr2);
        assert_eq!(ho1, ho2);
        assert_eq!(ho1.len(), 10);
        assert_eq!(tr1.len(), 90);
        let mut all: Vec<usize> = tr1.iter().chain(&ho1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
