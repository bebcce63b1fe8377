//! Synthetic mission-benchmark generator. Stands in for the private clinical
//! datasets: per-class Gaussian clusters on coordinate axes, with
//! scenario-specific structure across missions.
//!
//! * `domain`: classes sit on a lattice along axis 0 (class c at
//!   `c * mean_gap * sigma`), so a translation by `shift * sigma` along the
//!   lattice moves every class toward its neighbor's old position without
//!   changing within-mission separation. Each later mission also lifts the
//!   data by the same amount along a per-mission auxiliary axis, which keeps
//!   the domains jointly separable while a naively fine-tuned model misreads
//!   old data.
//! * `class`: mission 1 carries classes `0..classes`; each later mission
//!   introduces `new_classes` fresh ids on fresh axes.
//! * `task`: each mission is a new task with its own 0-based label space.
//!   Tasks reuse the same cluster positions with a rotated class
//!   assignment, so a shared trunk must be kept honest by replay.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::split::{stratified_time_split, SplitDataset, DEFAULT_SPLIT};
use super::{MissionSpec, ScenarioRole, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchScenario {
    Domain,
    Class,
    Task,
}

/// Declarative description of a synthetic benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub scenario: BenchScenario,
    /// Feature dimensionality D.
    pub dims: usize,
    /// Classes in mission 1 (and per task in the task scenario).
    pub classes: usize,
    /// Rows generated per class per mission.
    pub instances_per_class: usize,
    /// Distance of each class mean from the origin, in units of `sigma`.
    pub mean_gap: f64,
    /// Domain scenario only: per-mission translation magnitude in `sigma`.
    pub shift: f64,
    pub seed: u64,
    /// Number of sequential missions.
    #[serde(default = "default_missions")]
    pub missions: usize,
    /// Class scenario only: unseen class ids introduced per later mission.
    #[serde(default = "default_new_classes")]
    pub new_classes: usize,
    /// Source entities each class's rows are spread over.
    #[serde(default = "default_entities")]
    pub entities_per_class: usize,
    /// Within-class standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_missions() -> usize {
    2
}
fn default_new_classes() -> usize {
    2
}
fn default_entities() -> usize {
    4
}
fn default_sigma() -> f64 {
    1.0
}

impl BenchmarkSpec {
    fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.classes == 0 || self.instances_per_class == 0 {
            return Err(Error::invalid_input(
                "benchmark spec is degenerate: dims, classes, and instances_per_class must be > 0",
            ));
        }
        if self.missions == 0 {
            return Err(Error::invalid_input("at least one mission is required"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid_input("sigma must be positive"));
        }
        if self.mean_gap < 0.0 || self.shift < 0.0 {
            return Err(Error::invalid_input("mean_gap and shift must be non-negative"));
        }
        if self.entities_per_class == 0 {
            return Err(Error::invalid_input("entities_per_class must be > 0"));
        }
        if self.instances_per_class / self.entities_per_class < 3 {
            return Err(Error::invalid_input(
                "each entity needs at least 3 rows; lower entities_per_class or raise instances_per_class",
            ));
        }
        let axes_needed = match self.scenario {
            BenchScenario::Domain => self.missions.max(1),
            BenchScenario::Class => {
                if self.missions > 1 && self.new_classes == 0 {
                    return Err(Error::invalid_input(
                        "class scenario with several missions needs new_classes > 0",
                    ));
                }
                self.classes + self.new_classes * self.missions.saturating_sub(1)
            }
            BenchScenario::Task => self.classes,
        };
        if axes_needed > self.dims {
            return Err(Error::invalid_input(format!(
                "spec needs {axes_needed} axes but dims is {}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// Class layout of one mission: (global class id, mean vector).
fn mission_class_means(spec: &BenchmarkSpec, mission: usize) -> Vec<(u32, Vec<f64>)> {
    let gap = spec.mean_gap * spec.sigma;
    let axis_mean = |axis: usize| {
        let mut m = vec![0.0; spec.dims];
        m[axis] = gap;
        m
    };
    match spec.scenario {
        BenchScenario::Domain => (0..spec.classes)
            .map(|c| {
                let mut mean = vec![0.0; spec.dims];
                let step = spec.shift * spec.sigma * mission as f64;
                mean[0] = gap * c as f64 + step;
                if mission > 0 && spec.shift > 0.0 {
                    mean[mission] += step;
                }
                (c as u32, mean)
            })
            .collect(),
        BenchScenario::Class => {
            if mission == 0 {
                (0..spec.classes).map(|c| (c as u32, axis_mean(c))).collect()
            } else {
                let first = spec.classes + (mission - 1) * spec.new_classes;
                (0..spec.new_classes)
                    .map(|i| ((first + i) as u32, axis_mean(first + i)))
                    .collect()
            }
        }
        BenchScenario::Task => (0..spec.classes)
            .map(|c| (c as u32, axis_mean((c + mission) % spec.classes)))
            .collect(),
    }
}

/// Generates the benchmark: one `(MissionSpec, SplitDataset)` per mission,
/// deterministic for a given `(spec, seed)` pair.
pub fn generate_benchmark<F: Scalar>(
    spec: &BenchmarkSpec,
    seed: u64,
) -> Result<Vec<(MissionSpec, SplitDataset<F>)>> {
    spec.validate()?;
    let feature_names: Vec<String> = (0..spec.dims).map(|j| format!("f{j}")).collect();

    let mut out = Vec::with_capacity(spec.missions);
    for mission in 0..spec.missions {
        let means = mission_class_means(spec, mission);
        let class_ids: BTreeSet<u32> = means.iter().map(|(c, _)| *c).collect();
        let role = match spec.scenario {
            BenchScenario::Domain => ScenarioRole::DomainShift,
            BenchScenario::Class => ScenarioRole::NewClasses,
            BenchScenario::Task => ScenarioRole::NewTask,
        };
        let task_id = match spec.scenario {
            BenchScenario::Task => mission as u32,
            _ => 0,
        };
        let mission_spec = MissionSpec::new((mission + 1) as u32, task_id, class_ids, role)?;

        let rows = means.len() * spec.instances_per_class;
        let mut features = Array2::<F>::zeros((rows, spec.dims));
        let mut labels = Vec::with_capacity(rows);
        let mut entities = Vec::with_capacity(rows);
        let mut rng = stream(seed, 1000 + mission as u64);
        let sigma = F::cast(spec.sigma);

        let mut row = 0usize;
        for (class_pos, (class_id, mean)) in means.iter().enumerate() {
            let base = spec.instances_per_class / spec.entities_per_class;
            let extra = spec.instances_per_class % spec.entities_per_class;
            for entity in 0..spec.entities_per_class {
                let count = base + usize::from(entity < extra);
                let entity_id = (class_pos * spec.entities_per_class + entity) as u32;
                for _ in 0..count {
                    for j in 0..spec.dims {
                        features[[row, j]] =
                            F::cast(mean[j]) + sigma * F::standard_normal(&mut rng);
                    }
                    labels.push(*class_id);
                    entities.push(entity_id);
                    row += 1;
                }
            }
        }

        let dataset = TabularDataset::with_metadata(
            features,
            labels,
            Some(feature_names.clone()),
            Some(entities),
            Some(vec![(mission + 1) as u32; rows]),
        )?;
        let splits = stratified_time_split(&dataset, DEFAULT_SPLIT)?;
        out.push((mission_spec, splits));
    }
    Ok(out)
}
