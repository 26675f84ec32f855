//! Labeled tabular traffic data: CSV loading, cleaning, label encoding,
//! feature scaling, and train/test splitting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_rng, tags};
use crate::{Error, Result};

/// Rectangular numeric feature matrix with encoded integer labels.
///
/// Immutable after construction; cleaning and scaling return new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Validates shapes, label ranges and feature-name uniqueness.
    ///
    /// Feature values may be non-finite here; [`clean`] removes them.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name) {
                return Err(Error::InvalidArgument(format!("duplicate feature name '{name}'")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class row counts, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// New dataset restricted to the given feature columns, in the given order.
    pub fn select_features(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(1), indices),
            labels: self.labels.clone(),
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Appends rows of another dataset with the same schema.
    pub fn append(&self, other: &Dataset) -> Result<Dataset> {
        if other.feature_names != self.feature_names || other.class_names != self.class_names {
            return Err(Error::ShapeMismatch(
                "appended dataset has a different schema".into(),
            ));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Writes the dataset as CSV: feature columns plus one label column
    /// holding class names. Floats use the shortest round-trip form, so a
    /// write/read cycle is exact.
    pub fn write_csv<W: Write>(&self, writer: W, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(|s| s.as_str()).collect();
        header.push(label_column);
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for (row, &label) in self.features.outer_iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(self.class_names[label].clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), label_column)
    }
}

/// Parsed CSV with the label column still in raw string form.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    pub raw_labels: Vec<String>,
}

impl RawTable {
    /// Encodes the raw labels and assembles a [`Dataset`].
    pub fn into_dataset(self) -> Result<(Dataset, LabelEncoder)> {
        let (labels, encoder) = encode_labels(&self.raw_labels)?;
        let dataset = Dataset::new(
            self.features,
            labels,
            self.feature_names,
            encoder.class_names().to_vec(),
        )?;
        Ok((dataset, encoder))
    }

    /// Assembles a [`Dataset`] using a previously fitted encoder, so the
    /// class universe stays stable even if this table misses some classes.
    pub fn into_dataset_with(self, encoder: &LabelEncoder) -> Result<Dataset> {
        let labels = self
            .raw_labels
            .iter()
            .map(|raw| {
                encoder
                    .encode(raw)
                    .ok_or_else(|| Error::UnknownClass(raw.clone()))
            })
            .collect::<Result<Vec<usize>>>()?;
        Dataset::new(
            self.features,
            labels,
            self.feature_names,
            encoder.class_names().to_vec(),
        )
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        // Empty cell: missing value.
        return Some(f64::NAN);
    }
    // f64 parsing already accepts "NaN", "inf", "Infinity", "-inf" etc.
    // case-insensitively, which covers the recognized missing/infinite tokens.
    trimmed.parse::<f64>().ok()
}

/// Loads an RFC-4180-style CSV with a mandatory header row.
///
/// Non-label columns are parsed as 64-bit reals; empty cells become NaN and
/// infinity tokens become signed infinities, both removable by [`clean`]. Any
/// other non-numeric cell is a parse error carrying its row and column.
pub fn load_csv(path: &Path, label_column: &str) -> Result<RawTable> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let file = std::fs::File::open(path)?;
    load_csv_from_reader(std::io::BufReader::new(file), label_column)
}

/// As [`load_csv`], reading from any source.
pub fn load_csv_from_reader<R: Read>(reader: R, label_column: &str) -> Result<RawTable> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = csv_reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_index = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownLabelColumn {
            column: label_column.to_string(),
            available: headers.clone(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_index)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (row_index, record) in csv_reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::ShapeMismatch(format!(
                "data row {} has {} fields, header has {}",
                row_index + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_index {
                raw_labels.push(cell.to_string());
            } else {
                match parse_cell(cell) {
                    Some(v) => values.push(v),
                    None => {
                        return Err(Error::ParseCell {
                            row: row_index + 1,
                            column: headers[col].clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            }
        }
    }
    let rows = raw_labels.len();
    let cols = feature_names.len();
    let features = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(RawTable {
        features,
        feature_names,
        raw_labels,
    })
}

/// Bijective category-string to integer map; integers are assigned in
/// lexicographic order of the category strings, starting at zero, so the
/// encoding is independent of row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoder {
    schema_version: u32,
    classes: Vec<String>,
}

impl LabelEncoder {
    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn encode(&self, category: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(category)).ok()
    }

    pub fn decode(&self, label: usize) -> Option<&str> {
        self.classes.get(label).map(|s| s.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Encodes raw label strings to contiguous integers starting at zero.
pub fn encode_labels(raw: &[String]) -> Result<(Vec<usize>, LabelEncoder)> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty label column".into()));
    }
    let mut classes: Vec<String> = raw.to_vec();
    classes.sort();
    classes.dedup();
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels = raw.iter().map(|l| index[l.as_str()]).collect();
    Ok((
        labels,
        LabelEncoder {
            schema_version: 1,
            classes,
        },
    ))
}

/// Missing-value handling policy for [`clean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanPolicy {
    /// Remove rows containing missing or infinite values.
    Drop,
    /// Replace missing and infinite values with the column mean over finite
    /// entries.
    ImputeMean,
}

/// What [`clean`] did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_dropped_missing: usize,
    pub rows_dropped_infinite: usize,
    pub rows_dropped_outlier: usize,
    pub columns_imputed: Vec<String>,
}

/// Removes or imputes missing (NaN) and infinite feature values, then
/// optionally drops outlier rows.
///
/// A row counts as missing if it contains any NaN, otherwise as infinite if
/// it contains any infinity. Outlier removal is a single pass: after the
/// values are finite, a row is dropped when any feature's population z-score
/// exceeds `outlier_zscore` in absolute value (constant columns never flag).
pub fn clean(
    dataset: &Dataset,
    policy: CleanPolicy,
    outlier_zscore: Option<f64>,
) -> Result<(Dataset, CleanReport)> {
    if let Some(t) = outlier_zscore {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "outlier_zscore must be > 0, got {t}"
            )));
        }
    }
    let mut report = CleanReport::default();
    let (rows, cols) = (dataset.rows(), dataset.feature_count());

    let mut kept: Vec<usize> = Vec::with_capacity(rows);
    let mut features;
    match policy {
        CleanPolicy::Drop => {
            for (i, row) in dataset.features.outer_iter().enumerate() {
                if row.iter().any(|v| v.is_nan()) {
                    report.rows_dropped_missing += 1;
                } else if row.iter().any(|v| v.is_infinite()) {
                    report.rows_dropped_infinite += 1;
                } else {
                    kept.push(i);
                }
            }
            features = dataset.features.select(Axis(0), &kept);
        }
        CleanPolicy::ImputeMean => {
            kept.extend(0..rows);
            features = dataset.features.clone();
            for c in 0..cols {
                let column = features.column(c);
                let mut sum = 0.0;
                let mut finite = 0usize;
                let mut needs_imputation = false;
                for &v in column.iter() {
                    if v.is_finite() {
                        sum += v;
                        finite += 1;
                    } else {
                        needs_imputation = true;
                    }
                }
                if !needs_imputation {
                    continue;
                }
                if finite == 0 {
                    return Err(Error::EmptyColumnImpute {
                        column: dataset.feature_names[c].clone(),
                    });
                }
                let mean = sum / finite as f64;
                for v in features.column_mut(c).iter_mut() {
                    if !v.is_finite() {
                        *v = mean;
                    }
                }
                report.columns_imputed.push(dataset.feature_names[c].clone());
            }
        }
    }

    let mut labels: Vec<usize> = kept.iter().map(|&i| dataset.labels[i]).collect();

    if let Some(threshold) = outlier_zscore {
        let n = features.nrows();
        if n > 0 {
            let means = features.mean_axis(Axis(0)).unwrap();
            let mut stds = Array1::zeros(cols);
            for c in 0..cols {
                let col = features.column(c);
                let var = col.iter().map(|v| (v - means[c]).powi(2)).sum::<f64>() / n as f64;
                stds[c] = var.sqrt();
            }
            let mut keep_after: Vec<usize> = Vec::with_capacity(n);
            for (i, row) in features.outer_iter().enumerate() {
                let is_outlier = row.iter().enumerate().any(|(c, &v)| {
                    stds[c] > 0.0 && ((v - means[c]) / stds[c]).abs() > threshold
                });
                if is_outlier {
                    report.rows_dropped_outlier += 1;
                } else {
                    keep_after.push(i);
                }
            }
            if keep_after.len() != n {
                features = features.select(Axis(0), &keep_after);
                labels = keep_after.iter().map(|&i| labels[i]).collect();
            }
        }
    }

    let cleaned = Dataset::new(
        features,
        labels,
        dataset.feature_names.clone(),
        dataset.class_names.clone(),
    )?;
    Ok((cleaned, report))
}

/// Feature scaling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMethod {
    /// Per column: subtract the mean, divide by the population standard
    /// deviation (constant columns use a standard deviation of 1).
    Standardize,
    /// Per row: divide by the Euclidean norm. Not invertible.
    L2Normalize,
    /// Per column: affine map onto [-1, 1].
    MinmaxSymmetric,
}

/// Fitted scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerModel {
    schema_version: u32,
    pub method: ScalerMethod,
    pub per_feature_mean: Vec<f64>,
    pub per_feature_std: Vec<f64>,
    pub per_feature_min: Vec<f64>,
    pub per_feature_max: Vec<f64>,
}

impl ScalerModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn transform_features(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let d = self.expected_width();
        if let Some(d) = d {
            if features.ncols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "scaler fitted on {} features, input has {}",
                    d,
                    features.ncols()
                )));
            }
        }
        let mut out = features.clone();
        match self.method {
            ScalerMethod::Standardize => {
                for c in 0..out.ncols() {
                    let mean = self.per_feature_mean[c];
                    let std = self.per_feature_std[c];
                    out.column_mut(c).mapv_inplace(|v| (v - mean) / std);
                }
            }
            ScalerMethod::L2Normalize => {
                for mut row in out.rows_mut() {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.mapv_inplace(|v| v / norm);
                    }
                }
            }
            ScalerMethod::MinmaxSymmetric => {
                for c in 0..out.ncols() {
                    let min = self.per_feature_min[c];
                    let max = self.per_feature_max[c];
                    let range = max - min;
                    if range > 0.0 {
                        out.column_mut(c).mapv_inplace(|v| 2.0 * (v - min) / range - 1.0);
                    } else {
                        out.column_mut(c).fill(0.0);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn inverse_transform_features(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = features.clone();
        match self.method {
            ScalerMethod::Standardize => {
                for c in 0..out.ncols() {
                    let mean = self.per_feature_mean[c];
                    let std = self.per_feature_std[c];
                    out.column_mut(c).mapv_inplace(|v| v * std + mean);
                }
            }
            ScalerMethod::L2Normalize => return Err(Error::UnsupportedInverse),
            ScalerMethod::MinmaxSymmetric => {
                for c in 0..out.ncols() {
                    let min = self.per_feature_min[c];
                    let max = self.per_feature_max[c];
                    out.column_mut(c)
                        .mapv_inplace(|v| (v + 1.0) / 2.0 * (max - min) + min);
                }
            }
        }
        Ok(out)
    }

    fn expected_width(&self) -> Option<usize> {
        match self.method {
            ScalerMethod::Standardize => Some(self.per_feature_mean.len()),
            ScalerMethod::L2Normalize => None,
            ScalerMethod::MinmaxSymmetric => Some(self.per_feature_min.len()),
        }
    }
}

/// Fits a scaler on a dataset's features.
pub fn fit_scaler(dataset: &Dataset, method: ScalerMethod) -> Result<ScalerModel> {
    if dataset.rows() == 0 {
        return Err(Error::InvalidArgument("cannot fit a scaler on an empty dataset".into()));
    }
    if dataset.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scaler input contains NaN or infinity; clean first".into()));
    }
    let n = dataset.rows() as f64;
    let mut model = ScalerModel {
        schema_version: 1,
        method,
        per_feature_mean: Vec::new(),
        per_feature_std: Vec::new(),
        per_feature_min: Vec::new(),
        per_feature_max: Vec::new(),
    };
    match method {
        ScalerMethod::Standardize => {
            for c in 0..dataset.feature_count() {
                let col = dataset.features.column(c);
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                model.per_feature_mean.push(mean);
                model.per_feature_std.push(if std > 0.0 { std } else { 1.0 });
            }
        }
        ScalerMethod::L2Normalize => {}
        ScalerMethod::MinmaxSymmetric => {
            for c in 0..dataset.feature_count() {
                let col = dataset.features.column(c);
                let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                model.per_feature_min.push(min);
                model.per_feature_max.push(max);
            }
        }
    }
    Ok(model)
}

/// Applies a fitted scaler, returning a new dataset.
pub fn transform(scaler: &ScalerModel, dataset: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        features: scaler.transform_features(&dataset.features)?,
        labels: dataset.labels.clone(),
        feature_names: dataset.feature_names.clone(),
        class_names: dataset.class_names.clone(),
    })
}

/// Exactly inverts `standardize` and `minmax_symmetric`; errors for
/// `l2_normalize`.
pub fn inverse_transform(scaler: &ScalerModel, dataset: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        features: scaler.inverse_transform_features(&dataset.features)?,
        labels: dataset.labels.clone(),
        feature_names: dataset.feature_names.clone(),
        class_names: dataset.class_names.clone(),
    })
}

/// Train/test split configuration. Defaults to the 6:1 global shuffled split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitOptions {
    pub train_parts: u32,
    pub test_parts: u32,
    pub seed: u64,
    /// Split each class in the 6:1 ratio separately instead of globally.
    pub stratified: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_parts: 6,
            test_parts: 1,
            seed: 42,
            stratified: false,
        }
    }
}

fn shuffle(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

fn train_size(n: usize, train_parts: u32, test_parts: u32) -> usize {
    ((n as u128 * train_parts as u128) / (train_parts + test_parts) as u128) as usize
}

/// Splits rows into train and test sets by seeded uniform shuffle followed by
/// a prefix split; the train set holds `floor(n * train/(train+test))` rows.
pub fn split_train_test(dataset: &Dataset, options: &SplitOptions) -> Result<(Dataset, Dataset)> {
    if dataset.rows() == 0 {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if options.train_parts == 0 || options.test_parts == 0 {
        return Err(Error::InvalidArgument("split parts must be positive".into()));
    }
    let mut rng = derive_rng(options.seed, &[tags::SPLIT]);
    let (train_idx, test_idx) = if options.stratified {
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for class in 0..dataset.class_count() {
            let mut class_rows: Vec<usize> = (0..dataset.rows())
                .filter(|&i| dataset.labels[i] == class)
                .collect();
            shuffle(&mut class_rows, &mut rng);
            let k = train_size(class_rows.len(), options.train_parts, options.test_parts);
            train_idx.extend_from_slice(&class_rows[..k]);
            test_idx.extend_from_slice(&class_rows[k..]);
        }
        (train_idx, test_idx)
    } else {
        let mut indices: Vec<usize> = (0..dataset.rows()).collect();
        shuffle(&mut indices, &mut rng);
        let k = train_size(dataset.rows(), options.train_parts, options.test_parts);
        let test_idx = indices.split_off(k);
        (indices, test_idx)
    };
    Ok((dataset.select_rows(&train_idx), dataset.select_rows(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn simple_dataset(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Dataset {
        let d = features.ncols();
        Dataset::new(
            features,
            labels,
            (0..d).map(|i| format!("f{i}")).collect(),
            (0..classes).map(|i| format!("c{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_csv_basic() {
        let csv = "a,b,label\n1,2,x\n3,4,y\n5,6,x\n";
        let table = load_csv_from_reader(csv.as_bytes(), "label").unwrap();
        assert_eq!(table.features, array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(table.raw_labels, vec!["x", "y", "x"]);
        assert_eq!(table.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn load_csv_infinity_token() {
        let csv = "a,label\nInfinity,x\n1,y\n";
        let table = load_csv_from_reader(csv.as_bytes(), "label").unwrap();
        assert!(table.features[[0, 0]].is_infinite());
        let (dataset, _) = table.into_dataset().unwrap();
        let (cleaned, report) = clean(&dataset, CleanPolicy::Drop, None).unwrap();
        assert_eq!(cleaned.rows(), 1);
        assert_eq!(report.rows_dropped_infinite, 1);
    }

    #[test]
    fn load_csv_missing_tokens() {
        let csv = "a,label\n,x\nNaN,x\nnan,x\n-inf,x\n2.5,y\n";
        let table = load_csv_from_reader(csv.as_bytes(), "label").unwrap();
        assert!(table.features[[0, 0]].is_nan());
        assert!(table.features[[1, 0]].is_nan());
        assert!(table.features[[2, 0]].is_nan());
        assert!(table.features[[3, 0]].is_infinite() && table.features[[3, 0]] < 0.0);
        assert_eq!(table.features[[4, 0]], 2.5);
    }

    #[test]
    fn load_csv_parse_error_has_location() {
        let csv = "a,b,label\n1,2,x\n1,zzz,y\n";
        let err = load_csv_from_reader(csv.as_bytes(), "label").unwrap_err();
        match err {
            Error::ParseCell { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(value, "zzz");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_csv_unknown_label_column() {
        let csv = "a,b\n1,2\n";
        let err = load_csv_from_reader(csv.as_bytes(), "label").unwrap_err();
        assert!(matches!(err, Error::UnknownLabelColumn { .. }));
    }

    #[test]
    fn load_csv_wide_table_shape() {
        // 43 columns with one label column leaves 42 features.
        let mut header: Vec<String> = (0..42).map(|i| format!("f{i}")).collect();
        header.push("attack_cat".into());
        let mut csv = header.join(",") + "\n";
        let mut row: Vec<String> = (0..42).map(|i| format!("{i}")).collect();
        row.push("Normal".into());
        csv += &(row.join(",") + "\n");
        let table = load_csv_from_reader(csv.as_bytes(), "attack_cat").unwrap();
        assert_eq!(table.features.ncols(), 42);
    }

    #[test]
    fn clean_drop_missing_row() {
        let ds = simple_dataset(array![[1.0, 2.0], [f64::NAN, 4.0]], vec![0, 0], 1);
        let (cleaned, report) = clean(&ds, CleanPolicy::Drop, None).unwrap();
        assert_eq!(cleaned.features, array![[1.0, 2.0]]);
        assert_eq!(report.rows_dropped_missing, 1);
        assert_eq!(report.rows_dropped_infinite, 0);
    }

    #[test]
    fn clean_impute_mean() {
        let ds = simple_dataset(array![[1.0], [3.0], [f64::NAN]], vec![0, 0, 0], 1);
        let (cleaned, report) = clean(&ds, CleanPolicy::ImputeMean, None).unwrap();
        assert_eq!(cleaned.features, array![[1.0], [3.0], [2.0]]);
        assert_eq!(report.columns_imputed, vec!["f0"]);
        assert_eq!(cleaned.rows(), 3);
    }

    #[test]
    fn clean_impute_fully_missing_column_errors() {
        let ds = simple_dataset(array![[f64::NAN], [f64::NAN]], vec![0, 0], 1);
        assert!(matches!(
            clean(&ds, CleanPolicy::ImputeMean, None),
            Err(Error::EmptyColumnImpute { .. })
        ));
    }

    // Hand oracle for the z-score pass: z = (x - mean) / population std over
    // the full column. For [0,0,0,100]: mean 25, std sqrt(1875) ~ 43.30, so
    // z(100) ~ 1.7320508 and z(0) ~ -0.5773503. A threshold of 2 keeps every
    // row; thresholds below 1.732 drop exactly the 100 row.
    #[test]
    fn clean_outlier_zscore_against_hand_oracle() {
        let ds = simple_dataset(array![[0.0], [0.0], [0.0], [100.0]], vec![0, 0, 0, 0], 1);
        let z_100 = (100.0 - 25.0) / (1875.0f64).sqrt();
        assert_abs_diff_eq!(z_100, 1.732_050_807_568_877_2, epsilon = 1e-12);

        let (cleaned, report) = clean(&ds, CleanPolicy::Drop, Some(1.7)).unwrap();
        assert_eq!(cleaned.features, array![[0.0], [0.0], [0.0]]);
        assert_eq!(report.rows_dropped_outlier, 1);

        // At threshold 2 the z-score rule keeps all rows.
        let (kept, report) = clean(&ds, CleanPolicy::Drop, Some(2.0)).unwrap();
        assert_eq!(kept.rows(), 4);
        assert_eq!(report.rows_dropped_outlier, 0);
    }

    #[test]
    fn clean_drop_counts_partition_rows() {
        let ds = simple_dataset(
            array![[1.0, 1.0], [f64::NAN, f64::INFINITY], [f64::INFINITY, 0.0], [2.0, 2.0]],
            vec![0, 0, 0, 0],
            1,
        );
        let (cleaned, report) = clean(&ds, CleanPolicy::Drop, None).unwrap();
        // A row with both NaN and infinity counts as missing.
        assert_eq!(report.rows_dropped_missing, 1);
        assert_eq!(report.rows_dropped_infinite, 1);
        assert_eq!(
            report.rows_dropped_missing + report.rows_dropped_infinite + report.rows_dropped_outlier,
            ds.rows() - cleaned.rows()
        );
    }

    #[test]
    fn encode_labels_lexicographic() {
        let raw: Vec<String> = ["BENIGN", "Bot", "BENIGN"].iter().map(|s| s.to_string()).collect();
        let (labels, encoder) = encode_labels(&raw).unwrap();
        assert_eq!(labels, vec![0, 1, 0]);
        assert_eq!(encoder.encode("BENIGN"), Some(0));
        assert_eq!(encoder.encode("Bot"), Some(1));
    }

    #[test]
    fn encode_labels_single_category() {
        let raw = vec!["x".to_string()];
        let (labels, encoder) = encode_labels(&raw).unwrap();
        assert_eq!(labels, vec![0]);
        assert_eq!(encoder.class_names(), ["x"]);
    }

    #[test]
    fn encode_labels_sorted_categories() {
        let raw: Vec<String> = ["Worms", "Analysis", "Backdoor"].iter().map(|s| s.to_string()).collect();
        let (_, encoder) = encode_labels(&raw).unwrap();
        assert_eq!(encoder.encode("Analysis"), Some(0));
        assert_eq!(encoder.encode("Backdoor"), Some(1));
        assert_eq!(encoder.encode("Worms"), Some(2));
    }

    #[test]
    fn standardize_closed_form() {
        let ds = simple_dataset(array![[1.0], [2.0], [3.0]], vec![0, 0, 0], 1);
        let scaler = fit_scaler(&ds, ScalerMethod::Standardize).unwrap();
        let out = transform(&scaler, &ds).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(out.features[[0, 0]], -expected, epsilon = 1e-12);
        assert_abs_diff_eq!(out.features[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.features[[2, 0]], expected, epsilon = 1e-12);
    }

    #[test]
    fn l2_normalize_row() {
        let ds = simple_dataset(array![[3.0, 4.0]], vec![0], 1);
        let scaler = fit_scaler(&ds, ScalerMethod::L2Normalize).unwrap();
        let out = transform(&scaler, &ds).unwrap();
        assert_abs_diff_eq!(out.features[[0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.features[[0, 1]], 0.8, epsilon = 1e-12);
        assert!(matches!(inverse_transform(&scaler, &out), Err(Error::UnsupportedInverse)));
    }

    #[test]
    fn minmax_symmetric_affine() {
        let ds = simple_dataset(array![[0.0], [5.0], [10.0]], vec![0, 0, 0], 1);
        let scaler = fit_scaler(&ds, ScalerMethod::MinmaxSymmetric).unwrap();
        let out = transform(&scaler, &ds).unwrap();
        assert_eq!(out.features, array![[-1.0], [0.0], [1.0]]);
    }

    #[test]
    fn constant_column_standardize_is_mean_shift() {
        let ds = simple_dataset(array![[5.0], [5.0]], vec![0, 0], 1);
        let scaler = fit_scaler(&ds, ScalerMethod::Standardize).unwrap();
        let out = transform(&scaler, &ds).unwrap();
        assert_eq!(out.features, array![[0.0], [0.0]]);
        let back = inverse_transform(&scaler, &out).unwrap();
        assert_eq!(back.features, ds.features);
    }

    #[test]
    fn split_exact_ratio() {
        let ds = simple_dataset(Array2::zeros((7, 1)), vec![0; 7], 1);
        let (train, test) = split_train_test(&ds, &SplitOptions::default()).unwrap();
        assert_eq!(train.rows(), 6);
        assert_eq!(test.rows(), 1);
    }

    #[test]
    fn split_benchmark_totals() {
        for (total, expected_train, expected_test) in
            [(257_673, 220_862, 36_811), (286_552, 245_616, 40_936)]
        {
            assert_eq!(train_size(total, 6, 1), expected_train);
            assert_eq!(total - train_size(total, 6, 1), expected_test);
        }
    }

    #[test]
    fn split_stratified_per_class() {
        let mut labels = vec![0usize; 70];
        labels.extend(vec![1usize; 7]);
        let n = labels.len();
        let ds = simple_dataset(Array2::zeros((n, 1)), labels, 2);
        let options = SplitOptions {
            stratified: true,
            ..SplitOptions::default()
        };
        let (train, test) = split_train_test(&ds, &options).unwrap();
        let train_counts = train.class_counts();
        let test_counts = test.class_counts();
        assert_eq!(train_counts, vec![60, 6]);
        assert_eq!(test_counts, vec![10, 1]);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = simple_dataset(array![[1.5, -2.25], [0.1, 3.0]], vec![1, 0], 2);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, "label").unwrap();
        let table = load_csv_from_reader(buf.as_slice(), "label").unwrap();
        let (back, _) = table.into_dataset().unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    proptest! {
        #[test]
        fn scaler_round_trip(rows in 1usize..20, cols in 1usize..6, seed in 0u64..500) {
            let mut rng = crate::rng::derive_rng(seed, &[99]);
            let features = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-100.0..100.0));
            let ds = simple_dataset(features, vec![0; rows], 1);
            for method in [ScalerMethod::Standardize, ScalerMethod::MinmaxSymmetric] {
                let scaler = fit_scaler(&ds, method).unwrap();
                let out = transform(&scaler, &ds).unwrap();
                let back = inverse_transform(&scaler, &out).unwrap();
                for (a, b) in back.features.iter().zip(ds.features.iter()) {
                    let tol = 1e-9 * b.abs().max(1.0);
                    prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
                }
            }
        }

        #[test]
        fn split_is_a_partition(n in 1usize..200, seed in 0u64..500) {
            let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
            let ds = simple_dataset(features, vec![0; n], 1);
            let options = SplitOptions { seed, ..SplitOptions::default() };
            let (train, test) = split_train_test(&ds, &options).unwrap();
            prop_assert_eq!(train.rows(), n * 6 / 7);
            prop_assert_eq!(train.rows() + test.rows(), n);
            let mut ids: Vec<i64> = train.features.column(0).iter()
                .chain(test.features.column(0).iter())
                .map(|&v| v as i64)
                .collect();
            ids.sort_unstable();
            let expected: Vec<i64> = (0..n as i64).collect();
            prop_assert_eq!(ids, expected);
        }

        #[test]
        fn label_encoding_ignores_row_order(perm_seed in 0u64..500) {
            let mut raw: Vec<String> = ["pear", "apple", "fig", "apple", "date", "fig"]
                .iter().map(|s| s.to_string()).collect();
            let (_, before) = encode_labels(&raw).unwrap();
            let mut rng = crate::rng::derive_rng(perm_seed, &[98]);
            for i in (1..raw.len()).rev() {
                let j = rng.random_range(0..=i);
                raw.swap(i, j);
            }
            let (_, after) = encode_labels(&raw).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn clean_is_idempotent(rows in 1usize..30, seed in 0u64..500) {
            let mut rng = crate::rng::derive_rng(seed, &[97]);
            let features = Array2::from_shape_fn((rows, 2), |_| {
                match rng.random_range(0..10) {
                    0 => f64::NAN,
                    1 => f64::INFINITY,
                    _ => rng.random_range(-5.0..5.0),
                }
            });
            let ds = simple_dataset(features, vec![0; rows], 1);
            for policy in [CleanPolicy::Drop, CleanPolicy::ImputeMean] {
                let first = clean(&ds, policy, None);
                let Ok((once, _)) = first else { continue };
                let (twice, report) = clean(&once, policy, None).unwrap();
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(report.rows_dropped_missing, 0);
                prop_assert_eq!(report.rows_dropped_infinite, 0);
                prop_assert!(report.columns_imputed.is_empty());
            }
        }
    }
}
