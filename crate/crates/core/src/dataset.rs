//! Transaction datasets: CSV ingestion, min-max scaling, stratified holdout
//! splits and minority oversampling.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeded_rng;

pub const DEFAULT_LABEL_COLUMN: &str = "Class";

/// Feature matrix with binary labels (1 = fraud, 0 = genuine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidData(format!("label {bad} is not binary")));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            let cols = features.cols().max(1);
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Dataset with generated feature names `x0, x1, ...`.
    pub fn from_parts(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Self::new(features, labels, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// `[genuine, fraud]` counts.
    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.labels)
    }

    pub fn fraud_count(&self) -> usize {
        self.class_counts()[1]
    }

    /// Rows gathered by index (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Keep only the given feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_cols(cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    pub(crate) fn with_features(&self, features: Matrix) -> Dataset {
        Dataset {
            features,
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            [0, 0] => Err(Error::EmptyDataset),
            [0, _] => Err(Error::SingleClass(1)),
            [_, 0] => Err(Error::SingleClass(0)),
            _ => Ok(()),
        }
    }
}

pub fn class_counts(labels: &[u8]) -> [usize; 2] {
    let fraud = labels.iter().filter(|&&l| l == 1).count();
    [labels.len() - fraud, fraud]
}

/// Load a comma-delimited file with a header row. Every column other than
/// `label_column` becomes a numeric feature.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    load_csv_excluding(path, label_column, &[])
}

/// Like [`load_csv`], dropping the named columns (e.g. a timestamp).
pub fn load_csv_excluding(
    path: impl AsRef<Path>,
    label_column: &str,
    exclude: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_hits: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.as_str() == label_column)
        .map(|(i, _)| i)
        .collect();
    let label_idx = match label_hits.as_slice() {
        [i] => *i,
        [] => {
            return Err(Error::Parse {
                path: shown,
                message: format!("label column '{label_column}' not found in header"),
            })
        }
        _ => {
            return Err(Error::Parse {
                path: shown,
                message: format!("label column '{label_column}' appears {} times", label_hits.len()),
            })
        }
    };
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::Parse {
                path: shown,
                message: format!("duplicated column '{h}'"),
            });
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && !exclude.iter().any(|e| e == &headers[i]))
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let row = r + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Cell {
                path: shown,
                row,
                column: String::new(),
                message: format!("{} fields, expected {}", record.len(), headers.len()),
            });
        }
        let label = match &record[label_idx] {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::Cell {
                    path: shown,
                    row,
                    column: headers[label_idx].clone(),
                    message: format!("label '{other}' is not 0 or 1"),
                })
            }
        };
        labels.push(label);
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                path: shown.clone(),
                row,
                column: headers[c].clone(),
                message: format!("'{cell}' is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    path: shown,
                    row,
                    column: headers[c].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            data.push(v);
        }
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let features = Matrix::from_vec(labels.len(), names.len(), data)?;
    Dataset::new(features, labels, names)
}

/// Write a dataset back out as CSV with the label in the last column.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for (i, row) in data.features.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(data.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Per-feature training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(train: &Dataset) -> Result<ScalerParams> {
    fit_scaler_matrix(train.features())
}

pub fn fit_scaler_matrix(x: &Matrix) -> Result<ScalerParams> {
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut min = x.row(0).to_vec();
    let mut max = min.clone();
    for row in x.iter_rows().skip(1) {
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)` clipped to `[0, 1]`; constant columns map to 0.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.check_cols(self.dim())?;
        let mut out = Matrix::zeros(x.rows(), self.dim());
        for i in 0..x.rows() {
            let src = x.row(i);
            let dst = out.row_mut(i);
            for j in 0..src.len() {
                let span = self.max[j] - self.min[j];
                dst[j] = if span > 0.0 {
                    ((src[j] - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

pub fn apply_scaler(params: &ScalerParams, data: &Dataset) -> Result<Dataset> {
    if data.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: data.dim(),
        });
    }
    Ok(data.with_features(params.transform(data.features())?))
}

/// Oversample the minority class with replacement until both classes have
/// the same count. Original rows keep their positions; copies are appended.
pub fn rebalance(train: &Dataset, seed: u64) -> Result<Dataset> {
    train.require_both_classes()?;
    let [n0, n1] = train.class_counts();
    if n0 == n1 {
        return Ok(train.clone());
    }
    let minority = if n0 < n1 { 0 } else { 1 };
    let pool: Vec<usize> = (0..train.len())
        .filter(|&i| train.labels[i] == minority)
        .collect();
    let needed = n0.max(n1) - n0.min(n1);
    let mut rng = seeded_rng(seed);
    let mut indices: Vec<usize> = (0..train.len()).collect();
    indices.extend((0..needed).map(|_| pool[rng.gen_range(0..pool.len())]));
    Ok(train.subset(&indices))
}

/// Disjoint train/test index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn apply(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.subset(&self.train_indices), data.subset(&self.test_indices))
    }
}

/// Stratified random split: each class contributes `round(n_c * fraction)`
/// objects to the test side.
pub fn split_holdout(data: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..2u8 {
        let mut members: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        let n_c = members.len();
        let take = (n_c as f64 * test_fraction).round() as usize;
        if (n_c as f64) * test_fraction < 1.0 || take >= n_c {
            return Err(Error::ClassTooSmall {
                class,
                count: n_c,
                parts: format!("a test fraction of {test_fraction}"),
            });
        }
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        train_indices: train,
        test_indices: test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(rows: &[&[f64]], labels: &[u8]) -> Dataset {
        Dataset::from_parts(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    fn counts_dataset(n0: usize, n1: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n0 + n1).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        Dataset::from_parts(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_file() {
        let f = write_tmp("a,b,Class\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n");
        let d = load_csv(f.path(), "Class").unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.labels(), &[0, 1, 0, 1]);
        assert_eq!(d.features().row(2), &[5.0, 6.0]);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn load_reports_locations() {
        let f = write_tmp("a,Class\n1,0\nx,1\n");
        let err = load_csv(f.path(), "Class").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("'a'"), "{err}");

        let f = write_tmp("a,Class\n1,0\n2,2\n");
        let err = load_csv(f.path(), "Class").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("Class"), "{err}");

        let f = write_tmp("a,b\n1,0\n");
        assert!(load_csv(f.path(), "Class").is_err());

        let f = write_tmp("a,Class,Class\n1,0,0\n");
        assert!(load_csv(f.path(), "Class").is_err());

        assert!(matches!(
            load_csv("/definitely/not/here.csv", "Class"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_excluding_time() {
        let f = write_tmp("Time,v1,Class\n0,1.5,0\n1,2.5,1\n");
        let d = load_csv_excluding(f.path(), "Class", &["Time".into()]).unwrap();
        assert_eq!(d.feature_names(), &["v1".to_string()]);
    }

    #[test]
    fn scaler_examples() {
        let d = ds(&[&[2.0, 5.0], &[4.0, 5.0], &[6.0, 5.0]], &[0, 1, 0]);
        let p = fit_scaler(&d).unwrap();
        assert_eq!(p.min, vec![2.0, 5.0]);
        assert_eq!(p.max, vec![6.0, 5.0]);
        let s = apply_scaler(&p, &d).unwrap();
        assert_eq!(s.features().column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(s.features().column(1), vec![0.0, 0.0, 0.0]);

        let two = ds(&[&[0.0, 10.0], &[1.0, 20.0]], &[0, 1]);
        let p2 = fit_scaler(&two).unwrap();
        assert_eq!((p2.min.clone(), p2.max.clone()), (vec![0.0, 10.0], vec![1.0, 20.0]));

        // 8 against a (2, 6) range: (8-2)/4 = 1.5, clipped to 1
        let val = ds(&[&[8.0, 5.0], &[0.0, 5.0]], &[0, 0]);
        let sv = apply_scaler(&p, &val).unwrap();
        assert_eq!(sv.features().column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn scaler_errors() {
        let empty = Dataset::from_parts(Matrix::empty(2), vec![]).unwrap();
        assert!(matches!(fit_scaler(&empty), Err(Error::EmptyDataset)));
        let d = ds(&[&[1.0, 2.0]], &[0]);
        let p = fit_scaler(&d).unwrap();
        let other = ds(&[&[1.0]], &[0]);
        assert!(matches!(
            apply_scaler(&p, &other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rebalance_counts() {
        let d = counts_dataset(95, 5);
        assert_eq!(rebalance(&d, 1).unwrap().class_counts(), [95, 95]);
        let even = counts_dataset(10, 10);
        assert_eq!(rebalance(&even, 1).unwrap(), even);
        assert!(matches!(
            rebalance(&counts_dataset(4, 0), 1),
            Err(Error::SingleClass(0))
        ));
    }

    #[test]
    fn rebalance_adds_copies_of_minority() {
        let d = counts_dataset(7, 3);
        let r = rebalance(&d, 99).unwrap();
        assert_eq!(r.len(), 14);
        // the first 10 rows are the originals
        assert_eq!(r.subset(&(0..10).collect::<Vec<_>>()), d);
        let fraud_values: Vec<f64> = (7..10).map(|i| i as f64).collect();
        for i in 10..14 {
            assert_eq!(r.labels()[i], 1);
            assert!(fraud_values.contains(&r.features().get(i, 0)));
        }
        assert_eq!(rebalance(&d, 99).unwrap(), r);
    }

    #[test]
    fn holdout_examples() {
        let d = counts_dataset(5, 5);
        let s = split_holdout(&d, 0.2, 3).unwrap();
        let (_, test) = s.apply(&d);
        assert_eq!(test.class_counts(), [1, 1]);

        let d = counts_dataset(90, 10);
        let s = split_holdout(&d, 0.3, 11).unwrap();
        let (train, test) = s.apply(&d);
        assert_eq!(test.class_counts(), [27, 3]);
        assert_eq!(train.class_counts(), [63, 7]);

        assert!(split_holdout(&d, 0.0, 1).is_err());
        assert!(split_holdout(&d, 1.0, 1).is_err());
        assert!(matches!(
            split_holdout(&counts_dataset(90, 2), 0.3, 1),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }
}
