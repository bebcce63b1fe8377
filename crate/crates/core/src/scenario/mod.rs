//! Scenario runners: execute a mission sequence under one strategy, fill the
//! accuracy matrix, and assemble the experiment report.

mod metrics;
mod report;

pub use metrics::{
    binary_f1, compute_avg_f1, compute_bwt, evaluate, AccuracyMatrix, Confusion, EvalOutcome,
};
pub use report::{mean_report, ExperimentReport, MissionKs, CSV_HEADER};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{
    normalize_apply, normalize_fit_apply, pca_fit, pca_project, smote_balance, BenchScenario,
    MissionSpec, ScenarioRole, SplitDataset, TabularDataset,
};
use crate::error::{Error, Result};
use crate::nn::{
    train_mission, CurrentMission, MultiHeadMlp, NoReplay, TaskId, TrainConfig,
};
use crate::replay::{
    build_gmm_source, build_kde_source, build_sdg_source, preserve_data, preserved_buffer_bytes,
    BalancedBatcher, PreservationConfig, ReplaySource, ReplaySourceKind,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// The three mission-transition settings share the benchmark enum.
pub type ScenarioKind = BenchScenario;

/// Which continual-learning strategy drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    /// Train on mission 1 only; later missions only evaluate.
    Baseline,
    /// Train each mission with no replay at all.
    NaiveFineTune,
    /// Replay loss-percentile preserved exemplars.
    DoctorDp,
    /// Generative replay pinned to the Gaussian mixture.
    DoctorSdgGmm,
    /// Generative replay pinned to the KDE.
    DoctorSdgKde,
    /// Generative replay with KS arbitration between the two.
    DoctorSdgAuto,
    /// Keep every mission's full training data and replay it (the upper
    /// bound that ignores storage limits).
    JointTraining,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Baseline,
        StrategyId::NaiveFineTune,
        StrategyId::DoctorDp,
        StrategyId::DoctorSdgGmm,
        StrategyId::DoctorSdgKde,
        StrategyId::DoctorSdgAuto,
        StrategyId::JointTraining,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyId::Baseline => "baseline",
            StrategyId::NaiveFineTune => "naive_fine_tune",
            StrategyId::DoctorDp => "doctor_dp",
            StrategyId::DoctorSdgGmm => "doctor_sdg_gmm",
            StrategyId::DoctorSdgKde => "doctor_sdg_kde",
            StrategyId::DoctorSdgAuto => "doctor_sdg_auto",
            StrategyId::JointTraining => "joint_training",
        }
    }
}

impl std::fmt::Display for StrategyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Density-model hyperparameters for the SDG strategies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdgConfig {
    pub c_max: usize,
    pub h_max: f64,
    /// Per-epoch synthetic budget as a fraction of each source mission's
    /// real training size.
    pub synthetic_fraction: f64,
}

impl Default for SdgConfig {
    fn default() -> Self {
        Self { c_max: 50, h_max: 0.5, synthetic_fraction: 1.0 }
    }
}

impl SdgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_max == 0 {
            return Err(Error::invalid_input("c_max must be at least 1"));
        }
        if self.h_max < 0.05 {
            return Err(Error::invalid_input("h_max must be at least 0.05"));
        }
        if !(self.synthetic_fraction > 0.0 && self.synthetic_fraction <= 1.0) {
            return Err(Error::invalid_input("synthetic_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Everything a run needs besides data, strategy, and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Hidden trunk widths; the input width comes from the data.
    pub hidden_layers: Vec<usize>,
    pub preservation: PreservationConfig,
    pub sdg: SdgConfig,
    /// Project features onto this many principal axes before training.
    pub pca_components: Option<usize>,
    /// Global id of the healthy class within every task (binarized F1).
    pub healthy_class: u32,
    pub smote_neighbors: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden_layers: vec![256, 128, 128],
            preservation: PreservationConfig::default(),
            sdg: SdgConfig::default(),
            pca_components: None,
            healthy_class: 0,
            smote_neighbors: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.preservation.validate()?;
        self.sdg.validate()?;
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::invalid_input("hidden_layers must be non-empty and positive"));
        }
        if self.smote_neighbors == 0 {
            return Err(Error::invalid_input("smote_neighbors must be at least 1"));
        }
        Ok(())
    }
}

/// One mission's identity and its split data.
#[derive(Debug, Clone)]
pub struct MissionData<F: Scalar> {
    pub spec: MissionSpec,
    pub splits: SplitDataset<F>,
}

/// Final model plus the metrics report of one (strategy, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutcome<F: Scalar> {
    pub report: ExperimentReport,
    pub model: MultiHeadMlp<F>,
}

/// Seed-stream tags for the independent random decisions inside a run.
mod tags {
    pub const MODEL_INIT: u64 = 0x11;
    pub const SMOTE: u64 = 0x0100;
    pub const TRAIN: u64 = 0x0200;
    pub const SDG: u64 = 0x0300;
    pub const BATCHER: u64 = 0x0400;
}

/// Global-to-local class bookkeeping per task; heads only ever see local
/// indices (position in arrival order).
#[derive(Debug, Default, Clone)]
struct TaskState {
    arrival: Vec<u32>,
}

impl TaskState {
    fn local(&self, global: u32) -> Option<u32> {
        self.arrival.iter().position(|&g| g == global).map(|p| p as u32)
    }

    fn extend(&mut self, classes: impl IntoIterator<Item = u32>) -> usize {
        let mut added = 0;
        for c in classes {
            if !self.arrival.contains(&c) {
                self.arrival.push(c);
                added += 1;
            }
        }
        added
    }
}

fn validate_scenario<F: Scalar>(
    scenario: ScenarioKind,
    missions: &[MissionData<F>],
) -> Result<()> {
    if missions.is_empty() {
        return Err(Error::invalid_input("a scenario needs at least one mission"));
    }
    let first = &missions[0].spec;
    for m in &missions[1..] {
        let spec = &m.spec;
        match scenario {
            BenchScenario::Domain => {
                if spec.task_id != first.task_id || spec.class_ids != first.class_ids {
                    return Err(Error::invalid_input(
                        "domain-incremental missions must share task and class set",
                    ));
                }
                if spec.scenario_role != ScenarioRole::DomainShift {
                    return Err(Error::invalid_input("mission role does not match the scenario"));
                }
            }
            BenchScenario::Class => {
                if spec.task_id != first.task_id {
                    return Err(Error::invalid_input(
                        "class-incremental missions must share one task",
                    ));
                }
                if spec.scenario_role != ScenarioRole::NewClasses {
                    return Err(Error::invalid_input("mission role does not match the scenario"));
                }
                if !spec.class_ids.is_disjoint(&first.class_ids) {
                    return Err(Error::invalid_input(
                        "class-incremental missions must introduce unseen classes",
                    ));
                }
            }
            BenchScenario::Task => {
                if spec.task_id == first.task_id {
                    return Err(Error::invalid_input(
                        "task-incremental missions need fresh task ids",
                    ));
                }
                if spec.scenario_role != ScenarioRole::NewTask {
                    return Err(Error::invalid_input("mission role does not match the scenario"));
                }
            }
        }
    }
    Ok(())
}

/// Preprocessing shared by every strategy: min-max normalization fitted on
/// mission 1's training split (later missions keep their shift signal by
/// landing out of [0, 1]), optional PCA fitted the same way, then SMOTE on
/// each training split.
fn preprocess<F: Scalar>(
    missions: &[MissionData<F>],
    cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<MissionData<F>>> {
    let (_, norm) = normalize_fit_apply(&missions[0].splits.train)?;
    let pca = match cfg.pca_components {
        Some(k) => {
            let first_train = normalize_apply(&norm, &missions[0].splits.train)?;
            Some(pca_fit(&first_train, k)?)
        }
        None => None,
    };
    missions
        .iter()
        .map(|m| {
            let apply = |d: &TabularDataset<F>| -> Result<TabularDataset<F>> {
                let n = normalize_apply(&norm, d)?;
                match &pca {
                    Some(p) => pca_project(p, &n),
                    None => Ok(n),
                }
            };
            let train = apply(&m.splits.train)?;
            let validation = apply(&m.splits.validation)?;
            let test = apply(&m.splits.test)?;
            let train = smote_balance(
                &train,
                cfg.smote_neighbors,
                derive_seed(seed, tags::SMOTE + m.spec.mission_id as u64),
            )?;
            Ok(MissionData {
                spec: m.spec.clone(),
                splits: SplitDataset {
                    train,
                    validation,
                    test,
                    split_fractions: m.splits.split_fractions,
                },
            })
        })
        .collect()
}

fn local_labels(spec: &MissionSpec, state: &TaskState, labels: &[u32]) -> Result<Vec<u32>> {
    labels
        .iter()
        .map(|&g| {
            state.local(g).ok_or_else(|| {
                Error::invalid_input(format!(
                    "label {g} of mission {} is not in task {}'s class list",
                    spec.mission_id, spec.task_id
                ))
            })
        })
        .collect()
}

/// Runs one mission sequence under one strategy with one seed.
pub fn run_scenario<F: Scalar>(
    scenario: ScenarioKind,
    missions: &[MissionData<F>],
    strategy: StrategyId,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunOutcome<F>> {
    cfg.validate()?;
    validate_scenario(scenario, missions)?;
    let started = Instant::now();
    let missions = preprocess(missions, cfg, seed)?;
    let q = missions.len();

    let input_width = missions[0].splits.train.n_features();
    let mut trunk_dims = vec![input_width];
    trunk_dims.extend(&cfg.hidden_layers);
    let mut model = MultiHeadMlp::<F>::new(&trunk_dims, derive_seed(seed, tags::MODEL_INIT))?;

    let mut tasks: BTreeMap<TaskId, TaskState> = BTreeMap::new();
    let mut sources: Vec<ReplaySource<F>> = Vec::new();
    let mut matrix = AccuracyMatrix::new(q);
    let mut final_confusions: Vec<Option<Confusion>> = vec![None; q];
    let mut ks_stats: Vec<MissionKs> = Vec::new();

    for (n, mission) in missions.iter().enumerate() {
        let spec = &mission.spec;
        let task = spec.task_id;
        let trains_this_mission = n == 0 || strategy != StrategyId::Baseline;

        // Class bookkeeping and model expansion. The baseline still tracks
        // arrival order (for evaluation) but never grows the model.
        let state = tasks.entry(task).or_default();
        let new_classes = state.extend(spec.class_ids.iter().copied());
        let head_exists = model.heads().contains_key(&task);
        if trains_this_mission {
            if !head_exists {
                model.add_head(task, state.arrival.len())?;
            } else if new_classes > 0 && n > 0 {
                model.add_output_neurons(task, new_classes)?;
            }
        }
        let state = tasks.get(&task).expect("inserted above");

        if trains_this_mission {
            let train = &mission.splits.train;
            let labels = local_labels(spec, state, train.labels())?;
            let current = CurrentMission {
                mission_id: spec.mission_id,
                task_id: task,
                features: train.features(),
                labels: &labels,
            };
            let train_cfg = TrainConfig {
                seed: derive_seed(seed, tags::TRAIN + n as u64),
                ..cfg.train.clone()
            };
            let ledger = match strategy {
                StrategyId::Baseline | StrategyId::NaiveFineTune => {
                    train_mission(&mut model, &current, &mut NoReplay, &train_cfg)?
                }
                _ => {
                    let mut batcher = BalancedBatcher::new(
                        &sources,
                        cfg.sdg.synthetic_fraction,
                        derive_seed(seed, tags::BATCHER + n as u64),
                    )?;
                    train_mission(&mut model, &current, &mut batcher, &train_cfg)?
                }
            };
            log::info!(
                "seed {seed} {strategy}: trained mission {} ({} rows, {} epochs)",
                spec.mission_id,
                train.n_rows(),
                train_cfg.epochs
            );

            // Build this mission's replay source for the strategies that
            // keep one.
            let sdg_seed = derive_seed(seed, tags::SDG + n as u64);
            match strategy {
                StrategyId::DoctorDp => {
                    let classes: Vec<u32> = {
                        let mut c: Vec<u32> = labels.clone();
                        c.sort_unstable();
                        c.dedup();
                        c
                    };
                    let (rows, kept) = preserve_data(
                        &ledger,
                        train.features(),
                        &labels,
                        cfg.preservation.percentile,
                        &classes,
                    )?;
                    sources.push(ReplaySource {
                        mission_id: spec.mission_id,
                        task_id: task,
                        kind: ReplaySourceKind::Preserved { rows, labels: kept },
                    });
                }
                StrategyId::JointTraining => {
                    sources.push(ReplaySource {
                        mission_id: spec.mission_id,
                        task_id: task,
                        kind: ReplaySourceKind::Preserved {
                            rows: train.features().clone(),
                            labels: labels.clone(),
                        },
                    });
                }
                StrategyId::DoctorSdgGmm | StrategyId::DoctorSdgKde | StrategyId::DoctorSdgAuto => {
                    let val = &mission.splits.validation;
                    if val.is_empty() {
                        return Err(Error::invalid_input(format!(
                            "mission {} has an empty validation split; SDG model selection needs one",
                            spec.mission_id
                        )));
                    }
                    let snapshot = Arc::new(model.clone());
                    let (source, arbitration) = match strategy {
                        StrategyId::DoctorSdgGmm => build_gmm_source(
                            spec.mission_id,
                            task,
                            train.features(),
                            val.features(),
                            cfg.sdg.c_max,
                            snapshot,
                            sdg_seed,
                        )?,
                        StrategyId::DoctorSdgKde => build_kde_source(
                            spec.mission_id,
                            task,
                            train.features(),
                            val.features(),
                            cfg.sdg.h_max,
                            snapshot,
                            sdg_seed,
                        )?,
                        _ => build_sdg_source(
                            spec.mission_id,
                            task,
                            train.features(),
                            val.features(),
                            cfg.sdg.c_max,
                            cfg.sdg.h_max,
                            snapshot,
                            sdg_seed,
                        )?,
                    };
                    log::info!(
                        "seed {seed} {strategy}: mission {} density winner {} (ks {:.4})",
                        spec.mission_id,
                        arbitration.winner,
                        arbitration.winning_statistic
                    );
                    ks_stats.push(MissionKs {
                        mission_id: spec.mission_id,
                        arbitration,
                    });
                    sources.push(source);
                }
                StrategyId::Baseline | StrategyId::NaiveFineTune => {}
            }
        }

        // Evaluate every learned mission whose head exists.
        for (m, earlier) in missions.iter().take(n + 1).enumerate() {
            let espec = &earlier.spec;
            if !model.heads().contains_key(&espec.task_id) {
                continue;
            }
            let estate = &tasks[&espec.task_id];
            let locals = local_labels(espec, estate, earlier.splits.test.labels())?;
            let test_local =
                TabularDataset::new(earlier.splits.test.features().clone(), locals)?;
            let outcome = evaluate(&model, espec.task_id, &test_local, 0)?;
            matrix.set(m, n, outcome.accuracy)?;
            if n == q - 1 {
                final_confusions[m] = Some(outcome.confusion);
            }
        }
    }

    // Metrics from the final state.
    let per_mission_accuracy = matrix.final_column(q);
    let acc_avg = matrix.acc_avg(q).ok_or_else(|| {
        Error::invalid_state("no mission could be evaluated; accuracy average is undefined")
    })?;
    let bwt = if q >= 2 { compute_bwt(&matrix, q).ok() } else { None };

    let mut confusions = Vec::new();
    let mut healthy = Vec::new();
    for (m, confusion) in final_confusions.iter().enumerate() {
        if let Some(c) = confusion {
            let spec = &missions[m].spec;
            let healthy_local = tasks[&spec.task_id]
                .local(cfg.healthy_class)
                .unwrap_or(u32::MAX);
            confusions.push(c.clone());
            healthy.push(healthy_local);
        }
    }
    let f1_avg = compute_avg_f1(&confusions, &healthy)?;

    let buffer_bytes: u64 = sources.iter().map(preserved_buffer_bytes).sum();
    let ks_statistic = if ks_stats.is_empty() {
        None
    } else {
        Some(
            ks_stats.iter().map(|k| k.arbitration.winning_statistic).sum::<f64>()
                / ks_stats.len() as f64,
        )
    };

    let report = ExperimentReport {
        scenario,
        strategy,
        seeds: vec![seed],
        per_mission_accuracy,
        acc_avg,
        f1_avg,
        bwt,
        ks_statistic,
        ks_details: ks_stats,
        buffer_bytes,
        accuracy_matrix: matrix,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, model })
}

/// One trunk pass, every head's argmax and probabilities: the multi-disease
/// view of a single preprocessed row.
pub fn multi_disease_inference<F: Scalar>(
    model: &MultiHeadMlp<F>,
    row: ArrayView1<'_, F>,
) -> Result<BTreeMap<TaskId, (u32, Array1<F>)>> {
    let all = model.forward_all_heads(row)?;
    Ok(all
        .into_iter()
        .map(|(task, probs)| {
            let mut best = 0usize;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            (task, (best as u32, probs))
        })
        .collect())
}

/// Convenience used by tests and the CLI: generate, split, and wrap a
/// benchmark into mission data.
pub fn benchmark_missions<F: Scalar>(
    spec: &crate::data::BenchmarkSpec,
    seed: u64,
) -> Result<Vec<MissionData<F>>> {
    Ok(crate::data::generate_benchmark(spec, seed)?
        .into_iter()
        .map(|(spec, splits)| MissionData { spec, splits })
        .collect())
}

// Re-exported so scenario callers see one coherent surface.
pub use crate::data::BenchmarkSpec;
