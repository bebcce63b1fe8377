//! Dataset representation, ingestion, preprocessing, and the synthetic
//! mission-benchmark generator.

mod benchmark;
mod csv_io;
mod normalize;
mod pca;
mod smote;
mod split;

pub use benchmark::{generate_benchmark, BenchScenario, BenchmarkSpec};
pub use csv_io::{load_csv, save_csv};
pub use normalize::{normalize_apply, normalize_fit_apply, NormalizationState};
pub use pca::{pca_fit, pca_project, PcaProjection};
pub use smote::smote_balance;
pub use split::{stratified_time_split, SplitDataset};

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major feature matrix with one integer class label per row.
///
/// Rows may optionally carry a source-entity id (patient, device, ...) used
/// by the stratified time split, and a mission tag used when several
/// missions share one file.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset<F: Scalar> {
    features: Array2<F>,
    labels: Vec<u32>,
    feature_names: Option<Vec<String>>,
    entities: Option<Vec<u32>>,
    missions: Option<Vec<u32>>,
}

impl<F: Scalar> TabularDataset<F> {
    /// Builds a dataset, validating the type invariants: finite features and
    /// matching column lengths.
    pub fn new(features: Array2<F>, labels: Vec<u32>) -> Result<Self> {
        Self::with_metadata(features, labels, None, None, None)
    }

    pub fn with_metadata(
        features: Array2<F>,
        labels: Vec<u32>,
        feature_names: Option<Vec<String>>,
        entities: Option<Vec<u32>>,
        missions: Option<Vec<u32>>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::invalid_input(format!(
                "label count {} does not match row count {}",
                labels.len(),
                features.nrows()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("features contain NaN or infinite values"));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(Error::invalid_input("feature name count does not match columns"));
            }
        }
        if let Some(e) = &entities {
            if e.len() != features.nrows() {
                return Err(Error::invalid_input("entity column length mismatch"));
            }
        }
        if let Some(m) = &missions {
            if m.len() != features.nrows() {
                return Err(Error::invalid_input("mission column length mismatch"));
            }
        }
        Ok(Self { features, labels, feature_names, entities, missions })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn features(&self) -> &Array2<F> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn entities(&self) -> Option<&[u32]> {
        self.entities.as_deref()
    }

    pub fn missions(&self) -> Option<&[u32]> {
        self.missions.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, F> {
        self.features.row(i)
    }

    /// Distinct labels present, ascending.
    pub fn class_set(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }

    /// Row indices per class, ascending by class id, stable by row order.
    pub fn class_indices(&self) -> Vec<(u32, Vec<usize>)> {
        let mut out: Vec<(u32, Vec<usize>)> = Vec::new();
        for class in self.class_set() {
            let rows = self
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            out.push((class, rows));
        }
        out
    }

    /// New dataset containing the given rows in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::invalid_input(format!("row index {i} out of range")));
            }
        }
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let entities = self
            .entities
            .as_ref()
            .map(|e| indices.iter().map(|&i| e[i]).collect());
        let missions = self
            .missions
            .as_ref()
            .map(|m| indices.iter().map(|&i| m[i]).collect());
        Self::with_metadata(features, labels, self.feature_names.clone(), entities, missions)
    }

    /// Replaces the feature matrix, keeping labels and metadata. Used by the
    /// preprocessing stages (normalization, PCA) that transform features
    /// row for row.
    pub fn with_features(&self, features: Array2<F>) -> Result<Self> {
        if features.nrows() != self.n_rows() {
            return Err(Error::invalid_input("row count changed by feature transform"));
        }
        let names = if features.ncols() == self.n_features() {
            self.feature_names.clone()
        } else {
            None
        };
        Self::with_metadata(
            features,
            self.labels.clone(),
            names,
            self.entities.clone(),
            self.missions.clone(),
        )
    }
}

/// Which continual-learning transition a mission exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioRole {
    /// Same task and classes, new input distribution.
    DomainShift,
    /// Same task, previously unseen class ids.
    NewClasses,
    /// A brand new task with its own label space.
    NewTask,
}

/// Identity of one unit of sequential learning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub mission_id: u32,
    pub task_id: u32,
    pub class_ids: BTreeSet<u32>,
    pub scenario_role: ScenarioRole,
}

impl MissionSpec {
    pub fn new(
        mission_id: u32,
        task_id: u32,
        class_ids: BTreeSet<u32>,
        scenario_role: ScenarioRole,
    ) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::invalid_input("mission must declare at least one class"));
        }
        Ok(Self { mission_id, task_id, class_ids, scenario_role })
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }
}
