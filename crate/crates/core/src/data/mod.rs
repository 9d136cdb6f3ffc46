//! Tabular datasets: raw string tables, schemas, fitted preprocessing and
//! train/validation/test splits.

mod preprocess;
mod split;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::Link;
use crate::tensor::Tensor;

pub use preprocess::{fit_transform, ColumnTransform, Preprocessor, Transformed};
pub use split::{make_splits, SplitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Task {
    Binary,
    Multiclass { classes: usize },
    Regression,
}

impl Task {
    /// Width of the attribution matrix: one logit for binary tasks.
    pub fn n_outputs(self) -> usize {
        match self {
            Task::Binary | Task::Regression => 1,
            Task::Multiclass { classes } => classes,
        }
    }

    pub fn default_link(self) -> Link {
        match self {
            Task::Binary => Link::Sigmoid,
            Task::Multiclass { .. } => Link::Softmax,
            Task::Regression => Link::Identity,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }

    pub fn classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass { classes } => classes,
            Task::Regression => 0,
        }
    }
}

/// Dense model-ready table: `values` is `rows x n_features` row-major and
/// `labels` holds class indices (as floats) or regression targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<f64>,
    feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, values: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("a feature matrix needs at least one feature"));
        }
        if values.len() != labels.len() * n_features {
            return Err(Error::shape(format!(
                "{} values do not form {} rows of {n_features} features",
                values.len(),
                labels.len()
            )));
        }
        Ok(Self {
            n_features,
            values,
            labels,
            feature_names: (0..n_features).map(|i| format!("x{i}")).collect(),
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::shape(format!("{} names for {} features", names.len(), self.n_features)));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn class(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Rows `indices` in the given order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            n_features: self.n_features,
            values,
            labels,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn head(&self, rows: usize) -> Self {
        let idx: Vec<usize> = (0..rows.min(self.rows())).collect();
        self.select(&idx)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows(), self.n_features, self.values.clone()).expect("consistent dims")
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; classes];
        for &l in &self.labels {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
        counts
    }
}

/// Cells as read from a delimited file, before any typing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

pub fn default_missing_markers() -> Vec<String> {
    ["", "?", "NA", "N/A", "NaN", "nan", "null", "NULL"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Hints supplied by the user (typically from a dataset manifest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaHints {
    pub label: String,
    #[serde(default)]
    pub task: Option<TaskHint>,
    #[serde(default)]
    pub kinds: BTreeMap<String, ColumnKind>,
    #[serde(default = "default_missing_markers")]
    pub missing_markers: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
}

impl SchemaHints {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            task: None,
            kinds: BTreeMap::new(),
            missing_markers: default_missing_markers(),
            drop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskHint {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    /// Every column of the raw table, in file order.
    pub columns: Vec<ColumnSchema>,
    pub label_index: usize,
    pub task: Task,
    /// Class names in index order (empty for regression).
    pub classes: Vec<String>,
    pub missing_markers: Vec<String>,
    /// Columns excluded from the features.
    pub dropped: Vec<String>,
}

impl DatasetSchema {
    pub fn is_missing(&self, cell: &str) -> bool {
        let t = cell.trim();
        self.missing_markers.iter().any(|m| m == t)
    }

    /// Indices of feature columns in the raw table.
    pub fn feature_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(k, c)| *k != self.label_index && c.kind != ColumnKind::Label && !self.dropped.contains(&c.name))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn n_features(&self) -> usize {
        self.feature_columns().len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_columns().into_iter().map(|k| self.columns[k].name.clone()).collect()
    }
}

/// Parses a cell as a finite number.
pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Share of non-missing cells needed to type a column as numeric.
pub const NUMERIC_SHARE: f64 = 0.99;

/// Types every column from hints or content and resolves the task.
pub fn infer_schema(raw: &RawTable, hints: &SchemaHints) -> Result<DatasetSchema> {
    if raw.headers.is_empty() {
        return Err(Error::Empty("table has no columns".into()));
    }
    if raw.rows.is_empty() {
        return Err(Error::Empty("table has no data rows".into()));
    }
    let label_index = raw
        .column_index(&hints.label)
        .ok_or_else(|| Error::invalid(format!("label column `{}` not found in header {:?}", hints.label, raw.headers)))?;
    for name in hints.kinds.keys().chain(&hints.drop) {
        if raw.column_index(name).is_none() {
            return Err(Error::invalid(format!("hint refers to unknown column `{name}`")));
        }
    }
    let missing = |c: &str| hints.missing_markers.iter().any(|m| m == c.trim());
    let numeric_share = |k: usize| {
        let present: Vec<&str> = raw.rows.iter().map(|r| r[k].as_str()).filter(|c| !missing(c)).collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().filter(|c| parse_number(c).is_some()).count() as f64 / present.len() as f64
    };

    let mut columns = Vec::with_capacity(raw.headers.len());
    for (k, name) in raw.headers.iter().enumerate() {
        let kind = if k == label_index {
            ColumnKind::Label
        } else if let Some(&kind) = hints.kinds.get(name) {
            if kind == ColumnKind::Label {
                return Err(Error::invalid(format!("column `{name}` hinted as a second label")));
            }
            kind
        } else if numeric_share(k) >= NUMERIC_SHARE {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        };
        columns.push(ColumnSchema {
            name: name.clone(),
            kind,
        });
    }

    let mut labels = BTreeSet::new();
    for (r, row) in raw.rows.iter().enumerate() {
        let cell = row[label_index].trim();
        if missing(cell) {
            return Err(Error::invalid(format!("data row {} has a missing label", r + 1)));
        }
        labels.insert(cell.to_string());
    }
    let all_numeric = labels.iter().all(|l| parse_number(l).is_some());
    let integral = all_numeric && labels.iter().all(|l| parse_number(l).is_some_and(|v| v == libm::round(v)));
    let regression = match hints.task {
        Some(TaskHint::Regression) => true,
        Some(TaskHint::Classification) => false,
        None => all_numeric && (!integral || labels.len() > 20),
    };
    if regression && !all_numeric {
        return Err(Error::invalid("regression label column contains non-numeric values"));
    }
    let (task, classes) = if regression {
        (Task::Regression, Vec::new())
    } else {
        let mut classes: Vec<String> = labels.into_iter().collect();
        if all_numeric {
            classes.sort_by(|a, b| parse_number(a).partial_cmp(&parse_number(b)).expect("finite labels"));
        }
        let task = match classes.len() {
            0 | 1 => return Err(Error::invalid("classification needs at least two label values")),
            2 => Task::Binary,
            c => Task::Multiclass { classes: c },
        };
        (task, classes)
    };
    let schema = DatasetSchema {
        columns,
        label_index,
        task,
        classes,
        missing_markers: hints.missing_markers.clone(),
        dropped: hints.drop.clone(),
    };
    if schema.n_features() == 0 {
        return Err(Error::invalid("no feature columns left besides the label"));
    }
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn table(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn column_kinds_are_inferred() {
        let raw = table(&["a", "b", "y"], &[&["1.5", "red", "0"], &["2", "blue", "1"], &["?", "red", "1"]]);
        let s = infer_schema(&raw, &SchemaHints::new("y")).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Numeric);
        assert_eq!(s.columns[1].kind, ColumnKind::Categorical);
        assert_eq!(s.task, Task::Binary);
        assert_eq!(s.classes, vec!["0", "1"]);
    }

    #[test]
    fn hints_override_content() {
        let raw = table(&["a", "y"], &[&["1", "x"], &["2", "y"], &["3", "z"]]);
        let mut h = SchemaHints::new("y");
        h.kinds.insert("a".into(), ColumnKind::Categorical);
        let s = infer_schema(&raw, &h).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(s.task, Task::Multiclass { classes: 3 });
    }

    #[test]
    fn regression_is_inferred_from_real_labels() {
        let raw = table(&["a", "y"], &[&["1", "0.5"], &["2", "1.25"]]);
        assert_eq!(infer_schema(&raw, &SchemaHints::new("y")).unwrap().task, Task::Regression);
    }

    #[test]
    fn missing_label_column_is_an_error() {
        let raw = table(&["a", "b"], &[&["1", "2"]]);
        assert!(infer_schema(&raw, &SchemaHints::new("y")).is_err());
    }

    #[test]
    fn numeric_classes_sort_numerically() {
        let raw = table(&["a", "y"], &[&["1", "10"], &["2", "9"], &["3", "2"]]);
        let s = infer_schema(&raw, &SchemaHints::new("y")).unwrap();
        assert_eq!(s.classes, vec!["2", "9", "10"]);
    }
}
