use serde::{Deserialize, Serialize};

use crate::config::{CliConfig, DataSourceKind};
use crate::data::{self, assemble_setting, Dataset, ExperimentSplit, MinMaxScaler, Role, SplitManifest};
use crate::error::{Error, Result};
use crate::eval::auroc::{auroc, ScoredSet};
use crate::eval::report::{AurocColumn, EvalReport, ModelRow, RunFailure};
use crate::exec::Execution;
use crate::models::ModelKind;
use crate::training::{train, TrainedModel};

/// Known- and unknown-anomaly AUROC of one model on one test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAuroc {
    pub known: Option<f64>,
    pub unknown: Option<f64>,
}

/// AUROC of normals against each anomaly role, from per-point scores aligned
/// with `test`. A role absent from `test` yields `None`.
pub fn auroc_by_role(scores: &[f64], test: &Dataset) -> Result<SplitAuroc> {
    if scores.len() != test.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} test points",
            scores.len(),
            test.len()
        )));
    }
    let against = |role: Role| -> Result<Option<f64>> {
        if test.count_role(role) == 0 || test.count_role(Role::Normal) == 0 {
            return Ok(None);
        }
        let mut set = ScoredSet::default();
        for (p, &s) in test.points().iter().zip(scores) {
            if p.role == Role::Normal || p.role == role {
                set.push(s, p.role == role);
            }
        }
        auroc(&set).map(Some)
    };
    Ok(SplitAuroc {
        known: against(Role::KnownAnomaly)?,
        unknown: against(Role::UnknownAnomaly)?,
    })
}

pub fn evaluate_split(model: &TrainedModel, test: &Dataset, exec: Execution) -> Result<SplitAuroc> {
    auroc_by_role(&model.score(test, exec)?, test)
}

#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub result: std::result::Result<(TrainedModel, SplitAuroc), String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub prepared: PreparedRun,
    pub manifest: SplitManifest,
    pub models: Vec<ModelOutcome>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub runs: Vec<RunOutcome>,
}

/// Name shown in report headers.
pub fn dataset_name(cfg: &CliConfig) -> String {
    match (cfg.data.source, &cfg.data.path) {
        (DataSourceKind::Csv, Some(path)) => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        _ => "2D-Toy".to_string(),
    }
}

/// Loads the configured CSV file; toy data is drawn per run instead.
pub fn load_source(cfg: &CliConfig) -> Result<Option<Dataset>> {
    match (cfg.data.source, &cfg.data.path) {
        (DataSourceKind::Csv, Some(path)) => data::load_csv(path).map(Some),
        (DataSourceKind::Csv, None) => Err(Error::Config("data.path: required when data.source is csv".into())),
        (DataSourceKind::Toy, _) => Ok(None),
    }
}

/// Data, split and optional scaler of the run seeded with `seed`.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub seed: u64,
    /// The full dataset the split was drawn from, unscaled.
    pub data: Dataset,
    /// Train/test parts, scaled when scaling is on.
    pub split: ExperimentSplit,
    pub scaler: Option<MinMaxScaler>,
}

pub fn prepare_run(cfg: &CliConfig, loaded: Option<&Dataset>, seed: u64) -> Result<PreparedRun> {
    let data = match loaded {
        Some(d) => d.clone(),
        None => data::gen_toy(&cfg.data.toy, seed)?,
    };
    let split = assemble_setting(&data, &cfg.experiment.split_params(), seed)?;
    let (split, scaler) = if cfg.data.scaling() {
        let (scaled, scaler) = split.scaled()?;
        (scaled, Some(scaler))
    } else {
        (split, None)
    };
    Ok(PreparedRun { seed, data, split, scaler })
}

/// Runs every configured model for `experiment.runs` repetitions and
/// aggregates the AUROCs.
///
/// Run `r` uses seed `base_seed + r` for data generation, the train/test
/// split and model initialization. (run, model) jobs are independent and
/// dispatched through `exec`; results are collected in a fixed order, so the
/// report does not depend on the execution mode. A failed training job is
/// recorded in the report and leaves the other jobs untouched. Problems with
/// the data or the split abort the whole experiment.
pub fn run_experiment(cfg: &CliConfig, exec: Execution) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let cfg = cfg.clone().resolved();
    let loaded = load_source(&cfg)?;
    let params = cfg.experiment.split_params();
    let runs = cfg.experiment.runs;
    let kinds = cfg.model.kinds.clone();

    let prepared = exec.map_range(runs, |r| {
        prepare_run(&cfg, loaded.as_ref(), cfg.experiment.base_seed.wrapping_add(r as u64))
    });
    let prepared: Vec<PreparedRun> = prepared.into_iter().collect::<Result<_>>()?;

    let jobs = exec.map_range(runs * kinds.len(), |job| {
        let (r, k) = (job / kinds.len(), job % kinds.len());
        let run = &prepared[r];
        let kind = kinds[k];
        log::info!("run {r}: training {kind}");
        let result = train(&run.split.train, &cfg.train_config(kind, run.seed))
            .and_then(|model| {
                let aurocs = evaluate_split(&model, &run.split.test, exec)?;
                Ok((model, aurocs))
            })
            .map_err(|e| e.to_string());
        if let Err(msg) = &result {
            log::warn!("run {r}: {kind} failed: {msg}");
        }
        ModelOutcome { kind, result }
    });

    let mut jobs = jobs.into_iter();
    let mut outcomes = Vec::with_capacity(runs);
    for (r, prepared) in prepared.into_iter().enumerate() {
        let models: Vec<ModelOutcome> = jobs.by_ref().take(kinds.len()).collect();
        outcomes.push(RunOutcome {
            run: r,
            manifest: prepared.split.manifest(prepared.seed),
            prepared,
            models,
        });
    }

    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        let (mut known, mut unknown) = (Vec::with_capacity(runs), Vec::with_capacity(runs));
        for run in &outcomes {
            match &run.models[k].result {
                Ok((_, a)) => {
                    known.push(a.known);
                    unknown.push(a.unknown);
                }
                Err(message) => {
                    known.push(None);
                    unknown.push(None);
                    failures.push(RunFailure { run: run.run, kind, message: message.clone() });
                }
            }
        }
        rows.push(ModelRow {
            kind,
            known: AurocColumn::from_runs(known),
            unknown: AurocColumn::from_runs(unknown),
        });
    }
    failures.sort_by_key(|f| (f.run, kinds.iter().position(|&k| k == f.kind)));

    let report = EvalReport::new(
        dataset_name(&cfg),
        params.setting,
        params.known_cap,
        runs,
        cfg.experiment.base_seed,
        rows,
        failures,
    )?;
    Ok(ExperimentOutcome { report, runs: outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledPoint;

    fn test_set() -> Dataset {
        let pts = vec![
            LabeledPoint::new(vec![0.0], Role::Normal),
            LabeledPoint::new(vec![0.1], Role::Normal),
            LabeledPoint::new(vec![0.2], Role::KnownAnomaly),
            LabeledPoint::new(vec![0.3], Role::UnknownAnomaly),
        ];
        Dataset::new(1, pts, "t").unwrap()
    }

    #[test]
    fn roles_are_scored_separately() {
        let a = auroc_by_role(&[0.1, 0.2, 0.9, 0.8], &test_set()).unwrap();
        assert_eq!(a, SplitAuroc { known: Some(1.0), unknown: Some(1.0) });
        let a = auroc_by_role(&[0.1, 0.2, 0.15, 0.0], &test_set()).unwrap();
        assert_eq!(a, SplitAuroc { known: Some(0.5), unknown: Some(0.0) });
    }

    #[test]
    fn missing_role_is_absent() {
        let only_known = test_set().filter(|p| p.role != Role::UnknownAnomaly);
        let a = auroc_by_role(&[0.1, 0.2, 0.9], &only_known).unwrap();
        assert_eq!(a.unknown, None);
        assert_eq!(a.known, Some(1.0));
        assert!(auroc_by_role(&[0.1], &only_known).is_err());
    }

    fn small_config() -> CliConfig {
        let mut cfg = CliConfig::default();
        cfg.data.toy.n_normal = 200;
        cfg.data.toy.n_known = 200;
        cfg.data.toy.n_unknown = 50;
        cfg.model.kinds = vec![ModelKind::AbcAe, ModelKind::Dnn];
        cfg.train.max_epochs = 3;
        cfg.experiment.runs = 2;
        cfg
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let cfg = small_config();
        let a = run_experiment(&cfg, Execution::Sequential).unwrap();
        let b = run_experiment(&cfg, Execution::default()).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        assert_eq!(a.report.rows.len(), 2);
        assert!(a.report.failures.is_empty());
        assert_eq!(a.runs[1].prepared.seed, 1);
        assert_ne!(a.runs[0].manifest, a.runs[1].manifest);
    }

    #[test]
    fn failures_are_recorded_per_job() {
        let mut cfg = small_config();
        cfg.model.kinds = vec![ModelKind::AbcAe];
        cfg.train.adam.learning_rate = 1e200;
        let out = run_experiment(&cfg, Execution::Sequential).unwrap();
        assert_eq!(out.report.failures.len(), 2);
        assert!(out.report.all_failed());
        assert_eq!(out.report.rows[0].known.mean, None);
    }

    #[test]
    fn split_problems_abort() {
        let mut cfg = small_config();
        cfg.experiment.setting = crate::data::Setting::Three;
        cfg.experiment.known_cap = Some(1_000_000);
        assert!(run_experiment(&cfg, Execution::Sequential).unwrap_err().is_config());
    }
}
