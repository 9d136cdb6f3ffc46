//! Dataset manifests: where a table lives, how to read it and how to split it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use selfshap_core::data::{fit_transform, make_splits, DatasetSchema, RawTable, SchemaHints, SplitSet, Task, Transformed};

use crate::error::{Error, Result};
use crate::table::load_csv;

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_stratify() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Table location; relative paths resolve against the manifest's directory.
    pub csv: PathBuf,
    pub hints: SchemaHints,
    /// Train, validation and test shares.
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    /// Keep class proportions in every split (classification only).
    #[serde(default = "default_stratify")]
    pub stratify: bool,
}

/// A table loaded, split and transformed as its manifest prescribes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub raw: RawTable,
    pub schema: DatasetSchema,
    pub splits: SplitSet,
    pub data: Transformed,
}

impl Dataset {
    pub fn task(&self) -> Task {
        self.schema.task
    }
}

impl DatasetManifest {
    pub fn new(csv: impl Into<PathBuf>, label: &str) -> Self {
        Self {
            csv: csv.into(),
            hints: SchemaHints::new(label),
            fractions: default_fractions(),
            seed: 0,
            stratify: default_stratify(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if manifest.csv.is_relative() {
            if let Some(dir) = path.parent() {
                manifest.csv = dir.join(&manifest.csv);
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads the table and fits preprocessing on the training split.
    pub fn prepare(&self) -> Result<Dataset> {
        let (raw, schema) = load_csv(&self.csv, &self.hints)?;
        let strata: Option<Vec<usize>> = (self.stratify && schema.task.is_classification()).then(|| {
            raw.rows
                .iter()
                .map(|row| {
                    let cell = row[schema.label_index].trim();
                    schema.classes.iter().position(|c| c == cell).unwrap_or(0)
                })
                .collect()
        });
        let splits = make_splits(raw.rows.len(), self.fractions, self.seed, strata.as_deref())?;
        let data = fit_transform(&raw, &schema, &splits)?;
        Ok(Dataset {
            raw,
            schema,
            splits,
            data,
        })
    }
}
