//! End-to-end checks on a reduced toy problem: one run of ABC, AE and DNN.

use std::sync::OnceLock;

use abc_detect::config::CliConfig;
use abc_detect::data::{Role, UNKNOWN_CENTER};
use abc_detect::eval::{heatmap, run_experiment, BoundingBox, ExperimentOutcome, GridSpec};
use abc_detect::exec::Execution;
use abc_detect::models::{Detector, ModelKind};
use abc_detect::training::TrainedModel;

fn outcome() -> &'static ExperimentOutcome {
    static OUT: OnceLock<ExperimentOutcome> = OnceLock::new();
    OUT.get_or_init(|| {
        let mut cfg = CliConfig::default();
        cfg.data.toy.n_normal = 6_000;
        cfg.data.toy.n_known = 6_000;
        cfg.data.toy.n_unknown = 1_000;
        cfg.model.kinds = vec![ModelKind::AbcAe, ModelKind::Ae, ModelKind::Dnn];
        cfg.train.max_epochs = 80;
        cfg.experiment.runs = 1;
        run_experiment(&cfg, Execution::default()).unwrap()
    })
}

fn model(kind: ModelKind) -> &'static TrainedModel {
    let run = &outcome().runs[0];
    let m = run.models.iter().find(|m| m.kind == kind).unwrap();
    &m.result.as_ref().unwrap().0
}

fn mean(kind: ModelKind, known: bool) -> f64 {
    let row = outcome().report.row(kind).unwrap();
    if known { row.known.mean } else { row.unknown.mean }.unwrap()
}

#[test]
fn table_ordering_on_toy() {
    assert!(outcome().report.failures.is_empty());
    let abc_unknown = mean(ModelKind::AbcAe, false);
    assert!(abc_unknown >= mean(ModelKind::Dnn, false));
    assert!(mean(ModelKind::Dnn, true) >= mean(ModelKind::Ae, true));
    assert!(mean(ModelKind::Dnn, false) <= 0.1);
}

#[test]
fn abc_flags_few_training_normals() {
    let run = &outcome().runs[0];
    let normals = run.prepared.split.train.filter(|p| p.role == Role::Normal);
    let scores = model(ModelKind::AbcAe).score(&normals, Execution::Sequential).unwrap();
    let flagged = scores.iter().filter(|&&s| s > 0.5).count();
    assert!(flagged * 2 < scores.len(), "{flagged} of {} flagged", scores.len());
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn abc_heatmap_is_hot_at_the_unknown_blob() {
    let m = model(ModelKind::AbcAe);
    let detector = Detector { kind: m.kind, params: m.params.clone(), distance: m.config.objective.distance, scaler: None };
    let run = &outcome().runs[0];
    let grid = GridSpec::new(BoundingBox::around(&run.prepared.data, 0.2).unwrap(), 120, 120).unwrap();
    let map = heatmap(&detector, grid, Execution::default()).unwrap();

    let (mut disc, mut n_disc) = (0.0, 0);
    for j in 0..map.ny {
        for i in 0..map.nx {
            let (dx, dy) = (map.x(i) - UNKNOWN_CENTER[0], map.y(j) - UNKNOWN_CENTER[1]);
            if dx * dx + dy * dy <= 0.3 * 0.3 {
                disc += map.value(i, j);
                n_disc += 1;
            }
        }
    }
    assert!(n_disc > 0);
    let normals = run.prepared.data.filter(|p| p.role == Role::Normal);
    let moon = detector.score(&normals, Execution::default()).unwrap();
    let moon_mean = moon.iter().sum::<f64>() / moon.len() as f64;
    assert!(disc / n_disc as f64 > moon_mean);
}

#[test]
fn ae_log_improves_on_its_first_epoch() {
    let m = model(ModelKind::Ae);
    let curve = m.log.normal_recon();
    let best = m.best_epoch.unwrap();
    assert!(curve[best - 1] < curve[0]);
}

#[test]
fn saved_model_scores_like_the_trained_one() {
    let m = model(ModelKind::AbcAe);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.to_saved().save(&path).unwrap();
    let loaded = Detector::load(&path).unwrap();
    let test = &outcome().runs[0].prepared.split.test;
    assert_eq!(
        loaded.score(test, Execution::Sequential).unwrap(),
        m.score(test, Execution::Parallel).unwrap()
    );
}
