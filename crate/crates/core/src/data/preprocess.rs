use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

use super::{parse_number, ColumnKind, DatasetSchema, FeatureMatrix, RawTable, SplitSet, Task};

/// Fitted statistics for one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub kind: ColumnKind,
    /// Position in the raw table.
    pub source: usize,
    pub mean: f64,
    pub std: f64,
    /// Observed categories; category `tokens[k]` maps to token `k + 1`.
    #[serde(default)]
    pub tokens: Vec<String>,
}

impl ColumnTransform {
    /// Raw code before standardization, `None` when the cell is missing or
    /// (for numeric columns) unparseable. Unseen categories get token 0.
    fn code(&self, cell: &str) -> Option<f64> {
        match self.kind {
            ColumnKind::Numeric => parse_number(cell),
            _ => Some(match self.tokens.binary_search_by(|t| t.as_str().cmp(cell.trim())) {
                Ok(k) => (k + 1) as f64,
                Err(_) => 0.0,
            }),
        }
    }
}

/// Tokenization and standardization fitted on the training split. Missing
/// cells map to 0, the shared baseline value of the transformed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnTransform>,
    pub label_index: usize,
    pub task: Task,
    pub classes: Vec<String>,
    pub missing_markers: Vec<String>,
    /// Issues met while fitting (constant columns and the like).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Preprocessor {
    pub fn fit(raw: &RawTable, schema: &DatasetSchema, train_rows: &[usize]) -> Result<Self> {
        if train_rows.is_empty() {
            return Err(Error::Empty("cannot fit preprocessing on an empty training split".into()));
        }
        let mut warnings = Vec::new();
        let mut columns = Vec::new();
        for k in schema.feature_columns() {
            let col = &schema.columns[k];
            let present: Vec<&str> = train_rows
                .iter()
                .map(|&r| raw.rows[r][k].as_str())
                .filter(|c| !schema.is_missing(c))
                .collect();
            let mut t = ColumnTransform {
                name: col.name.clone(),
                kind: col.kind,
                source: k,
                mean: 0.0,
                std: 1.0,
                tokens: Vec::new(),
            };
            if col.kind == ColumnKind::Categorical {
                let mut tokens: Vec<String> = present.iter().map(|c| c.trim().to_string()).collect();
                tokens.sort();
                tokens.dedup();
                t.tokens = tokens;
            }
            let codes: Vec<f64> = present.iter().filter_map(|c| t.code(c)).collect();
            if !codes.is_empty() {
                t.mean = math::mean(&codes);
                t.std = math::std_dev(&codes);
            }
            if !(t.std > 1e-12) {
                let msg = format!("column `{}` is constant on the training split; std clamped to 1", t.name);
                log::warn!("{msg}");
                warnings.push(msg);
                t.std = 1.0;
            }
            columns.push(t);
        }
        Ok(Self {
            columns,
            label_index: schema.label_index,
            task: schema.task,
            classes: schema.classes.clone(),
            missing_markers: schema.missing_markers.clone(),
            warnings,
        })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    fn is_missing(&self, cell: &str) -> bool {
        let t = cell.trim();
        self.missing_markers.iter().any(|m| m == t)
    }

    /// Transformed feature values of one raw row.
    pub fn transform_features(&self, row: &[String]) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| {
                let cell = row
                    .get(c.source)
                    .ok_or_else(|| Error::shape(format!("row has {} cells, column `{}` is #{}", row.len(), c.name, c.source + 1)))?;
                Ok(if self.is_missing(cell) {
                    0.0
                } else {
                    c.code(cell).map_or(0.0, |v| (v - c.mean) / c.std)
                })
            })
            .collect()
    }

    /// Encoded label: class index or raw regression target.
    pub fn encode_label(&self, cell: &str) -> Result<f64> {
        let cell = cell.trim();
        match self.task {
            Task::Regression => parse_number(cell).ok_or_else(|| Error::invalid(format!("label `{cell}` is not numeric"))),
            _ => self
                .classes
                .iter()
                .position(|c| c == cell)
                .map(|k| k as f64)
                .ok_or_else(|| Error::invalid(format!("label `{cell}` is not one of {:?}", self.classes))),
        }
    }

    pub fn transform(&self, raw: &RawTable, rows: &[usize]) -> Result<FeatureMatrix> {
        let n = self.n_features();
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            let row = &raw.rows[r];
            values.extend(self.transform_features(row)?);
            let cell = row
                .get(self.label_index)
                .ok_or_else(|| Error::shape(format!("data row {} lacks the label cell", r + 1)))?;
            labels.push(self.encode_label(cell)?);
        }
        FeatureMatrix::new(n, values, labels)?.with_feature_names(self.feature_names())
    }

    /// Undoes standardization: numeric columns return raw values,
    /// categorical columns their token codes.
    pub fn inverse(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n_features() {
            return Err(Error::shape(format!("{} values for {} features", values.len(), self.n_features())));
        }
        Ok(self.columns.iter().zip(values).map(|(c, v)| v * c.std + c.mean).collect())
    }
}

/// The three transformed splits plus the fitted preprocessor.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub train: FeatureMatrix,
    pub valid: FeatureMatrix,
    pub test: FeatureMatrix,
    pub preprocessor: Preprocessor,
}

/// Fits on the training rows and transforms all three splits.
pub fn fit_transform(raw: &RawTable, schema: &DatasetSchema, splits: &SplitSet) -> Result<Transformed> {
    let preprocessor = Preprocessor::fit(raw, schema, &splits.train)?;
    Ok(Transformed {
        train: preprocessor.transform(raw, &splits.train)?,
        valid: preprocessor.transform(raw, &splits.valid)?,
        test: preprocessor.transform(raw, &splits.test)?,
        preprocessor,
    })
}
