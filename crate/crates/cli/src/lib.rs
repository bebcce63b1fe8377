//! Command implementations behind the `replaycl` binary. They live in a
//! library so integration tests can drive them in-process.

pub mod config;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replaycl::data::{load_csv, save_csv, BenchmarkSpec, MissionSpec, ScenarioRole};
use replaycl::data::{SplitDataset, TabularDataset};
use replaycl::nn::{load_checkpoint, save_checkpoint};
use replaycl::scenario::{
    mean_report, multi_disease_inference, run_scenario, ExperimentReport, MissionData, RunOutcome,
    ScenarioKind, StrategyId, CSV_HEADER,
};

pub use config::ExperimentConfig;

/// Exit codes are a stable contract: 0 success, 2 usage/config error,
/// 3 runtime/numerical error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Errors raised while interpreting configuration are usage errors.
    pub fn from_config(e: replaycl::Error) -> Self {
        CliError::Usage(e.to_string())
    }

    /// Errors raised mid-run are runtime errors.
    pub fn from_run(e: replaycl::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMission {
    mission_id: u32,
    task_id: u32,
    scenario_role: ScenarioRole,
    class_ids: Vec<u32>,
    train: String,
    validation: String,
    test: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    scenario: ScenarioKind,
    seed: u64,
    missions: Vec<ManifestMission>,
}

/// `generate`: write per-mission split CSVs plus a manifest.
pub fn cmd_generate(spec_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(spec_path).map_err(|e| {
        CliError::usage(format!("cannot read benchmark spec '{}': {e}", spec_path.display()))
    })?;
    let spec: BenchmarkSpec = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::usage(format!("invalid benchmark spec: {e}")))?;
    let missions =
        replaycl::data::generate_benchmark::<f64>(&spec, spec.seed).map_err(CliError::from_config)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create '{}': {e}", out_dir.display())))?;
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        scenario: spec.scenario,
        seed: spec.seed,
        missions: Vec::new(),
    };
    for (mission_spec, splits) in &missions {
        let stem = format!("mission{}", mission_spec.mission_id);
        let files = [
            (&splits.train, format!("{stem}_train.csv")),
            (&splits.validation, format!("{stem}_validation.csv")),
            (&splits.test, format!("{stem}_test.csv")),
        ];
        for (data, name) in &files {
            save_csv(*data, out_dir.join(name)).map_err(CliError::from_run)?;
        }
        manifest.missions.push(ManifestMission {
            mission_id: mission_spec.mission_id,
            task_id: mission_spec.task_id,
            scenario_role: mission_spec.scenario_role,
            class_ids: mission_spec.class_ids.iter().copied().collect(),
            train: files[0].1.clone(),
            validation: files[1].1.clone(),
            test: files[2].1.clone(),
        });
    }
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    std::fs::write(out_dir.join("manifest.json"), json)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    log::info!("wrote {} missions under {}", manifest.missions.len(), out_dir.display());
    Ok(())
}

fn load_manifest_missions(path: &Path) -> Result<Vec<MissionData<f64>>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::usage(format!("cannot read data manifest '{}': {e}", path.display()))
    })?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::usage(format!("invalid manifest: {e}")))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::usage(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .missions
        .iter()
        .map(|m| {
            let read = |name: &str| -> Result<TabularDataset<f64>, CliError> {
                load_csv(dir.join(name)).map_err(CliError::from_config)
            };
            let spec = MissionSpec::new(
                m.mission_id,
                m.task_id,
                m.class_ids.iter().copied().collect::<BTreeSet<u32>>(),
                m.scenario_role,
            )
            .map_err(CliError::from_config)?;
            Ok(MissionData {
                spec,
                splits: SplitDataset {
                    train: read(&m.train)?,
                    validation: read(&m.validation)?,
                    test: read(&m.test)?,
                    split_fractions: (0.70, 0.10, 0.20),
                },
            })
        })
        .collect()
}

fn resolve_missions(
    cfg: &ExperimentConfig,
    config_dir: &Path,
) -> Result<Vec<MissionData<f64>>, CliError> {
    match (&cfg.benchmark, &cfg.data_manifest) {
        (Some(spec), None) => replaycl::scenario::benchmark_missions(spec, spec.seed)
            .map_err(CliError::from_config),
        (None, Some(manifest)) => {
            let path =
                if manifest.is_absolute() { manifest.clone() } else { config_dir.join(manifest) };
            load_manifest_missions(&path)
        }
        _ => unreachable!("validated at load time"),
    }
}

/// Result of `run` (also returned to in-process callers).
#[derive(Debug)]
pub struct RunSummary {
    pub reports: Vec<ExperimentReport>,
    pub means: Vec<ExperimentReport>,
    pub failures: Vec<FailedRun>,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedRun {
    pub strategy: StrategyId,
    pub seed: u64,
    pub error: String,
}

/// `run`: execute every (strategy, seed) pair, write reports.csv /
/// reports.json / per-run checkpoints. Any failed run flips the exit code to
/// 3; completed reports are still written, flagged in `failed`.
pub fn cmd_run(
    config_path: &Path,
    out_override: Option<&Path>,
    jobs: Option<usize>,
    seed_override: Option<u64>,
) -> Result<RunSummary, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let config_dir = config_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| {
            cfg.output_dir
                .as_ref()
                .map(|d| if d.is_absolute() { d.clone() } else { config_dir.join(d) })
        })
        .ok_or_else(|| CliError::usage("no output directory: set 'output_dir' or pass --out"))?;
    let seeds = match seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let missions = resolve_missions(&cfg, &config_dir)?;
    let run_cfg = cfg.run_config();

    let pairs: Vec<(StrategyId, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();

    let jobs = jobs.unwrap_or(1).clamp(1, pairs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let outcomes: Vec<(StrategyId, u64, Result<RunOutcome<f64>, replaycl::Error>)> =
        pool.install(|| {
            use rayon::prelude::*;
            pairs
                .par_iter()
                .map(|&(strategy, seed)| {
                    (strategy, seed, run_scenario(cfg.scenario, &missions, strategy, &run_cfg, seed))
                })
                .collect()
        });

    std::fs::create_dir_all(out_dir.join("checkpoints"))
        .map_err(|e| CliError::runtime(format!("cannot create '{}': {e}", out_dir.display())))?;

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (strategy, seed, outcome) in outcomes {
        match outcome {
            Ok(run) => {
                csv.push_str(&run.report.csv_row(&seed.to_string()));
                csv.push('\n');
                let ck = out_dir.join("checkpoints").join(format!("{strategy}_{seed}.json"));
                save_checkpoint(&run.model, &ck).map_err(CliError::from_run)?;
                reports.push(run.report);
            }
            Err(e) => {
                log::error!("run {strategy} seed {seed} failed: {e}");
                failures.push(FailedRun { strategy, seed, error: e.to_string() });
            }
        }
    }

    let mut means = Vec::new();
    for &strategy in &cfg.strategies {
        let group: Vec<ExperimentReport> =
            reports.iter().filter(|r| r.strategy == strategy).cloned().collect();
        if !group.is_empty() {
            means.push(mean_report(&group).map_err(CliError::from_run)?);
        }
    }

    let csv_path = out_dir.join("reports.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| CliError::runtime(e.to_string()))?;
    let json = serde_json::json!({
        "version": 1,
        "scenario": cfg.scenario,
        "runs": reports,
        "means": means,
        "failed": failures,
    });
    std::fs::write(
        out_dir.join("reports.json"),
        serde_json::to_string_pretty(&json).map_err(|e| CliError::runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    print_summary(&means, &failures);
    Ok(RunSummary { reports, means, failures, csv_path })
}

fn print_summary(means: &[ExperimentReport], failures: &[FailedRun]) {
    println!("strategy            acc_avg  f1_avg   bwt      buffer_mb");
    for m in means {
        println!(
            "{:<19} {:<8.4} {:<8.4} {:<8} {:.4}",
            m.strategy.to_string(),
            m.acc_avg,
            m.f1_avg,
            m.bwt.map(|b| format!("{b:+.4}")).unwrap_or_else(|| "-".into()),
            m.buffer_bytes as f64 / 1e6,
        );
    }
    for f in failures {
        println!("FAILED: {} seed {} — {}", f.strategy, f.seed, f.error);
    }
}

/// Which hyperparameter an ablation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKnob {
    Percentile,
    SyntheticFraction,
}

impl SweepKnob {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "percentile" => Ok(SweepKnob::Percentile),
            "synthetic_fraction" => Ok(SweepKnob::SyntheticFraction),
            other => Err(CliError::usage(format!(
                "unknown sweep '{other}' (expected 'percentile' or 'synthetic_fraction')"
            ))),
        }
    }
}

/// `ablation`: one report group per sweep value, emitted as one tidy CSV.
pub fn cmd_ablation(
    config_path: &Path,
    knob: SweepKnob,
    values: &[f64],
    out_override: Option<&Path>,
    jobs: Option<usize>,
) -> Result<PathBuf, CliError> {
    if values.is_empty() {
        return Err(CliError::usage("the sweep needs at least one value"));
    }
    let cfg = ExperimentConfig::load(config_path)?;
    let config_dir = config_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| {
            cfg.output_dir
                .as_ref()
                .map(|d| if d.is_absolute() { d.clone() } else { config_dir.join(d) })
        })
        .ok_or_else(|| CliError::usage("no output directory: set 'output_dir' or pass --out"))?;
    let missions = resolve_missions(&cfg, &config_dir)?;

    // Validate the whole grid before any training.
    let mut sweep_cfgs = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.run_config();
        match knob {
            SweepKnob::Percentile => run_cfg.preservation.percentile = value,
            SweepKnob::SyntheticFraction => run_cfg.sdg.synthetic_fraction = value,
        }
        run_cfg.validate().map_err(CliError::from_config)?;
        sweep_cfgs.push((value, run_cfg));
    }

    let pairs: Vec<(usize, StrategyId, u64)> = sweep_cfgs
        .iter()
        .enumerate()
        .flat_map(|(vi, _)| {
            cfg.strategies
                .iter()
                .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
                .map(move |(s, seed)| (vi, s, seed))
        })
        .collect();
    let jobs = jobs.unwrap_or(1).clamp(1, pairs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let outcomes: Vec<(usize, StrategyId, u64, Result<RunOutcome<f64>, replaycl::Error>)> =
        pool.install(|| {
            use rayon::prelude::*;
            pairs
                .par_iter()
                .map(|&(vi, strategy, seed)| {
                    let (_, run_cfg) = &sweep_cfgs[vi];
                    (vi, strategy, seed, run_scenario(cfg.scenario, &missions, strategy, run_cfg, seed))
                })
                .collect()
        });

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create '{}': {e}", out_dir.display())))?;
    let knob_name = match knob {
        SweepKnob::Percentile => "percentile",
        SweepKnob::SyntheticFraction => "synthetic_fraction",
    };
    let mut csv = format!("sweep,value,{CSV_HEADER}\n");
    let mut any_failure = None;
    for (vi, strategy, seed, outcome) in outcomes {
        match outcome {
            Ok(run) => {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    knob_name,
                    sweep_cfgs[vi].0,
                    run.report.csv_row(&seed.to_string())
                ));
            }
            Err(e) => {
                log::error!("sweep value {} {strategy} seed {seed} failed: {e}", sweep_cfgs[vi].0);
                any_failure = Some(e.to_string());
            }
        }
    }
    let path = out_dir.join(format!("ablation_{knob_name}.csv"));
    std::fs::write(&path, csv).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("wrote {} ({} sweep values)", path.display(), values.len());
    match any_failure {
        Some(e) => Err(CliError::runtime(format!("one or more sweep runs failed: {e}"))),
        None => Ok(path),
    }
}

/// `infer`: per-row multi-head predictions for a feature CSV. Label, entity,
/// and mission columns are accepted and ignored.
pub fn cmd_infer(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), CliError> {
    let model = load_checkpoint::<f64>(checkpoint).map_err(CliError::from_config)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)
        .map_err(|e| CliError::usage(format!("cannot read '{}': {e}", input.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("unreadable header: {e}")))?
        .clone();
    let feature_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, name)| !matches!(*name, "label" | "entity" | "mission"))
        .map(|(i, _)| i)
        .collect();
    if feature_cols.len() != model.input_width() {
        return Err(CliError::usage(format!(
            "input has {} feature columns but the model expects {}",
            feature_cols.len(),
            model.input_width()
        )));
    }

    let tasks: Vec<u32> = model.heads().keys().copied().collect();
    let mut out = String::new();
    let header: Vec<String> = tasks
        .iter()
        .flat_map(|t| [format!("task{t}_pred"), format!("task{t}_prob")])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');

    for (row_no, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::usage(format!("unreadable row {row_no}: {e}")))?;
        let mut row = ndarray::Array1::<f64>::zeros(feature_cols.len());
        for (j, &col) in feature_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            row[j] = cell.trim().parse().map_err(|_| {
                CliError::usage(format!("non-numeric cell '{cell}' at row {row_no}"))
            })?;
        }
        let predictions =
            multi_disease_inference(&model, row.view()).map_err(CliError::from_run)?;
        let cells: Vec<String> = tasks
            .iter()
            .flat_map(|t| {
                let (class, probs) = &predictions[t];
                [class.to_string(), probs[*class as usize].to_string()]
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(output, out).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}
