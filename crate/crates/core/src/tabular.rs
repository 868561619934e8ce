//! Symptom-assessment feature tables: loading, correlation, pruning and z-scoring.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of severity categories (stages IV and V are merged into 4).
pub const NUM_STAGES: usize = 5;

/// Default absolute-correlation threshold for pruning.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.5;

/// Severity category in `0..=4`; 4 is the merged IV&V stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StageLabel(u8);

impl StageLabel {
    pub fn new(value: u8) -> Result<Self> {
        if usize::from(value) < NUM_STAGES {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("stage {value} outside [0, 4]")))
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        u8::try_from(index)
            .map_err(|_| Error::InvalidArgument(format!("stage {index} outside [0, 4]")))
            .and_then(Self::new)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = StageLabel> {
        (0..NUM_STAGES as u8).map(StageLabel)
    }
}

impl TryFrom<u8> for StageLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StageLabel> for u8 {
    fn from(s: StageLabel) -> u8 {
        s.0
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-patient symptom features with stage labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    patient_ids: Vec<String>,
    stages: Vec<StageLabel>,
    feature_names: Vec<String>,
    /// Row-major, `patients × features`.
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn new(
        patient_ids: Vec<String>,
        stages: Vec<StageLabel>,
        feature_names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if patient_ids.len() != stages.len() {
            return Err(Error::LengthMismatch {
                left: patient_ids.len(),
                right: stages.len(),
            });
        }
        if values.len() != patient_ids.len() * feature_names.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows × {} features",
                values.len(),
                patient_ids.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &patient_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicatePatient(id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateFeature(name.clone()));
            }
        }
        let n_cols = feature_names.len();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_cols + 1,
                column: feature_names[pos % n_cols].clone(),
            });
        }
        Ok(Self {
            patient_ids,
            stages,
            feature_names,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn stages(&self) -> &[StageLabel] {
        &self.stages
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.values[i * self.n_features() + j]).collect()
    }

    pub fn row_index(&self, patient_id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == patient_id)
    }

    /// New table with only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let n = self.n_features();
        if let Some(&bad) = columns.iter().find(|&&c| c >= n) {
            return Err(Error::InvalidArgument(format!("column {bad} out of range")));
        }
        let names = columns.iter().map(|&c| self.feature_names[c].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows() * columns.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Self::new(self.patient_ids.clone(), self.stages.clone(), names, values)
    }

    /// New table with only the named columns, in the given order.
    pub fn select_named(&self, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| Error::MissingColumn(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_columns(&cols)
    }

    /// New table with only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        let ids = rows.iter().map(|&r| self.patient_ids[r].clone()).collect();
        let stages = rows.iter().map(|&r| self.stages[r]).collect();
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self::new(ids, stages, self.feature_names.clone(), values)
    }

    fn with_values(&self, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(self.patient_ids.clone(), self.stages.clone(), names, values)
    }
}

/// Reads the feature CSV: header `patient_id,stage,<features...>`.
pub fn load_feature_table(path: &Path) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_csv(&text)
}

pub fn parse_feature_csv(text: &str) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let id_col = headers
        .iter()
        .position(|h| h == "patient_id")
        .ok_or_else(|| Error::MissingColumn("patient_id".into()))?;
    let stage_col = headers
        .iter()
        .position(|h| h == "stage")
        .ok_or_else(|| Error::MissingColumn("stage".into()))?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != id_col && c != stage_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut ids = Vec::new();
    let mut stages = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        ids.push(record[id_col].trim().to_string());
        let raw_stage = record[stage_col].trim();
        let stage: i64 = raw_stage.parse().map_err(|_| Error::ParseCell {
            row,
            column: "stage".into(),
            value: raw_stage.to_string(),
        })?;
        let stage = u8::try_from(stage)
            .ok()
            .and_then(|s| StageLabel::new(s).ok())
            .ok_or_else(|| Error::StageRange {
                row,
                value: raw_stage.to_string(),
            })?;
        stages.push(stage);
        for &c in &feature_cols {
            let cell = record[c].trim();
            let v: f64 = cell.parse().map_err(|_| Error::ParseCell {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: headers[c].clone(),
                });
            }
            values.push(v);
        }
    }
    FeatureTable::new(ids, stages, feature_names, values)
}

/// Renders the table in the feature CSV format (LF line endings).
pub fn feature_csv_string(table: &FeatureTable) -> String {
    let mut out = String::from("patient_id,stage");
    for name in table.feature_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..table.n_rows() {
        out.push_str(&table.patient_ids()[i]);
        out.push(',');
        out.push_str(&table.stages()[i].to_string());
        for v in table.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    std::fs::write(path, feature_csv_string(table)).map_err(|e| Error::io(path, e))
}

/// Pearson correlation with a flag for degenerate (zero-variance) input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation<T> {
    pub r: T,
    /// Set when either input has zero variance; `r` is then 0.
    pub constant_input: bool,
}

/// Pearson's r between `x` and `y`.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(Correlation {
            r: T::zero(),
            constant_input: true,
        });
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(Correlation {
        r: r.max(-T::one()).min(T::one()),
        constant_input: false,
    })
}

/// Symmetric feature-by-feature Pearson matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    values: Vec<f64>,
    /// `constant[j]` marks zero-variance features; their row/column is 0.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub fn correlation_matrix(table: &FeatureTable) -> Result<CorrelationMatrix> {
    if table.n_rows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: table.n_rows(),
        });
    }
    let n = table.n_features();
    let columns: Vec<Vec<f64>> = (0..n).map(|j| table.column(j)).collect();
    let mut values = vec![0.0; n * n];
    let mut constant = vec![false; n];
    for j in 0..n {
        let self_corr = pearson(&columns[j], &columns[j])?;
        constant[j] = self_corr.constant_input;
        values[j * n + j] = if constant[j] { 0.0 } else { 1.0 };
    }
    for i in 0..n {
        for j in i + 1..n {
            let r = pearson(&columns[i], &columns[j])?.r;
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        n,
        values,
        constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub dropped: String,
    pub kept: String,
    pub correlation: f64,
}

/// Outcome of correlation pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    pub threshold: f64,
}

/// Greedy keep-first pruning: scanning columns left to right, a feature is
/// dropped when `|r| > threshold` against some earlier feature that was kept.
/// The first such kept feature is recorded as the reason.
pub fn prune_correlated(table: &FeatureTable, threshold: f64) -> Result<(FeatureTable, PruneReport)> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prune threshold must be > 0, got {threshold}"
        )));
    }
    let corr = correlation_matrix(table)?;
    let names = table.feature_names();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..table.n_features() {
        match kept.iter().find(|&&k| corr.get(j, k).abs() > threshold) {
            Some(&k) => dropped.push(DroppedFeature {
                dropped: names[j].clone(),
                kept: names[k].clone(),
                correlation: corr.get(j, k),
            }),
            None => kept.push(j),
        }
    }
    let pruned = table.select_columns(&kept)?;
    let report = PruneReport {
        kept: pruned.feature_names().to_vec(),
        dropped,
        threshold,
    };
    Ok((pruned, report))
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub means: Vec<f64>,
    /// Sample (n−1) standard deviations.
    pub stddevs: Vec<f64>,
    pub constant_flags: Vec<bool>,
}

impl NormStats {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn fit(table: &FeatureTable) -> Result<Self> {
        if table.n_rows() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: table.n_rows(),
            });
        }
        let n = table.n_rows() as f64;
        let mut means = Vec::with_capacity(table.n_features());
        let mut stddevs = Vec::with_capacity(table.n_features());
        for j in 0..table.n_features() {
            let col = table.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            means.push(mean);
            stddevs.push((ss / (n - 1.0)).sqrt());
        }
        let constant_flags = stddevs.iter().map(|&s| s == 0.0).collect();
        Ok(Self {
            means,
            stddevs,
            constant_flags,
        })
    }

    /// Normalises one feature vector; constant features map to 0.
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: self.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant_flags[j] {
                    0.0
                } else {
                    (v - self.means[j]) / self.stddevs[j]
                }
            })
            .collect())
    }
}

/// Z-scores the table. Without `stats`, fits them on this table first; with
/// `stats`, applies them unchanged (the held-out path).
pub fn zscore_fit_apply(
    table: &FeatureTable,
    stats: Option<&NormStats>,
) -> Result<(FeatureTable, NormStats)> {
    let stats = match stats {
        Some(s) => {
            if s.len() != table.n_features() {
                return Err(Error::Shape(format!(
                    "norm stats cover {} features, table has {}",
                    s.len(),
                    table.n_features()
                )));
            }
            s.clone()
        }
        None => NormStats::fit(table)?,
    };
    let mut values = Vec::with_capacity(table.values().len());
    for i in 0..table.n_rows() {
        values.extend(stats.apply_row(table.row(i))?);
    }
    let out = table.with_values(table.feature_names().to_vec(), values)?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(cols: &[Vec<f64>]) -> FeatureTable {
        let rows = cols[0].len();
        let ids = (0..rows).map(|i| format!("p{i}")).collect();
        let stages = vec![StageLabel::new(0).unwrap(); rows];
        let names = (0..cols.len()).map(|j| format!("f{}", j + 1)).collect();
        let values = (0..rows).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        FeatureTable::new(ids, stages, names, values).unwrap()
    }

    #[test]
    fn minimal_csv() {
        let t = parse_feature_csv("patient_id,stage,f0\np1,0,1.5").unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.n_features(), 1);
        assert_eq!(t.row(0), &[1.5]);
    }

    #[test]
    fn stage_out_of_range_names_row() {
        let err = parse_feature_csv("patient_id,stage,f0\np1,0,1\np2,7,2\n").unwrap_err();
        assert!(matches!(err, Error::StageRange { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let csv = "patient_id,stage,f0,f1,f2\na,0,1,2,3\nb,1,1,2,3\nc,2,1,2,abc\n";
        let err = parse_feature_csv(csv).unwrap_err();
        assert!(err.to_string().contains("row 3, column f2"), "{err}");
    }

    #[test]
    fn missing_stage_and_duplicate_ids() {
        assert!(matches!(
            parse_feature_csv("patient_id,f0\np1,1\n").unwrap_err(),
            Error::MissingColumn(c) if c == "stage"
        ));
        assert!(matches!(
            parse_feature_csv("patient_id,stage,f0\np1,0,1\np1,1,2\n").unwrap_err(),
            Error::DuplicatePatient(_)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = parse_feature_csv("patient_id,stage,a,b\nx,3,0.1,-2e-7\ny,4,1,2\n").unwrap();
        assert_eq!(parse_feature_csv(&feature_csv_string(&t)).unwrap(), t);
    }

    #[test]
    fn pearson_examples() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().r, 1.0);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r, -1.0);
        // cov sum 4, variance sums 5 and 5
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().r,
            0.8,
            epsilon = 1e-15
        );
        let f32r = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().r;
        assert!((f32r - 0.8).abs() < 1e-6);
    }

    #[test]
    fn pearson_errors_and_constant() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
        assert!(matches!(
            pearson(&[1.0], &[1.0]).unwrap_err(),
            Error::TooFewSamples { .. }
        ));
        let c = pearson(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(c.constant_input);
        assert_eq!(c.r, 0.0);
    }

    #[test]
    fn correlation_matrix_examples() {
        let same = table(&[vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0]]);
        let m = correlation_matrix(&same).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m.get(i, j), 1.0, epsilon = 1e-12);
            }
        }
        let neg = table(&[vec![1.0, 2.0, 4.0], vec![-1.0, -2.0, -4.0]]);
        assert_abs_diff_eq!(correlation_matrix(&neg).unwrap().get(0, 1), -1.0, epsilon = 1e-12);
        let short = table(&[vec![1.0]]);
        assert!(correlation_matrix(&short).is_err());
    }

    #[test]
    fn prune_doubled_column() {
        let f1 = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let f2: Vec<f64> = f1.iter().map(|v| 2.0 * v).collect();
        let f3 = vec![1.0, -1.0, 0.0, 1.0, -1.0];
        let t = table(&[f1, f2, f3]);
        let (pruned, report) = prune_correlated(&t, 0.5).unwrap();
        assert_eq!(report.kept, vec!["f1", "f3"]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].dropped, "f2");
        assert_eq!(report.dropped[0].kept, "f1");
        assert_abs_diff_eq!(report.dropped[0].correlation, 1.0, epsilon = 1e-12);
        assert_eq!(pruned.feature_names(), &["f1", "f3"]);
    }

    #[test]
    fn prune_single_feature_unchanged() {
        let t = table(&[vec![1.0, 2.0, 3.0]]);
        let (pruned, report) = prune_correlated(&t, 0.5).unwrap();
        assert_eq!(pruned, t);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn prune_threshold_is_strict() {
        // r = 0.5 exactly: sxy 1, sxx 2, syy 2
        let t = table(&[vec![1.0, -1.0, 0.0, 0.0], vec![1.0, 0.0, -1.0, 0.0]]);
        let r = correlation_matrix(&t).unwrap().get(0, 1);
        assert_eq!(r, 0.5);
        let (_, report) = prune_correlated(&t, 0.5).unwrap();
        assert!(report.dropped.is_empty());
        assert!(prune_correlated(&t, 0.0).is_err());
    }

    #[test]
    fn zscore_examples() {
        let t = table(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]);
        let (z, stats) = zscore_fit_apply(&t, None).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(stats.means[0], 2.0);
        assert_eq!(stats.stddevs[0], 1.0);
        assert_eq!(z.column(1), vec![0.0, 0.0, 0.0]);
        assert!(stats.constant_flags[1]);
        assert!(!stats.constant_flags[0]);

        let (twice, _) = zscore_fit_apply(&z, Some(&stats)).unwrap();
        assert_ne!(twice, z);
        let (again, _) = zscore_fit_apply(&t, Some(&stats)).unwrap();
        assert_eq!(again, z);

        let narrow = table(&[vec![1.0, 2.0, 3.0]]);
        assert!(zscore_fit_apply(&narrow, Some(&stats)).is_err());
    }
}
