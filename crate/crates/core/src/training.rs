//! Minibatch Adam training with a stratified validation hold-out, early
//! stopping and per-epoch logging.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledPoint};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{
    self, model_loss_and_grads, model_loss_total, reconstruction_errors, Architecture, ModelKind,
    ModelParams, ObjectiveConfig, SavedModel,
};
use crate::nn::{AdamConfig, AdamState, BatchMatrix};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub architecture: Architecture,
    pub objective: ObjectiveConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::AbcAe,
            architecture: Architecture::toy(),
            objective: ObjectiveConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 100,
            max_epochs: 300,
            validation_fraction: 0.2,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.architecture.latent == 0 || self.architecture.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        self.adam.validate()?;
        self.objective.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub normal_recon: Option<f64>,
    pub anomaly_recon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn normal_recon(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.normal_recon).collect()
    }

    pub fn anomaly_recon(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.anomaly_recon).collect()
    }

    /// `epoch,train_loss,val_loss,normal_recon,anomaly_recon`; absent values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_loss", "normal_recon", "anomaly_recon"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                opt_field(r.normal_recon),
                opt_field(r.anomaly_recon),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<log output>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub best_epoch: Option<usize>,
}

impl TrainedModel {
    pub fn score(&self, data: &Dataset, exec: Execution) -> Result<Vec<f64>> {
        models::score_dataset(self.kind, &self.params, self.config.objective.distance, data, exec)
    }

    pub fn to_saved(&self) -> SavedModel {
        SavedModel::new(self.kind, self.config.objective, &self.params)
    }
}

/// Stratified random hold-out: each label class contributes
/// `round(fraction * n_class)` points (at least one, never all) to the
/// validation part. Falls back to an unstratified split when a present class
/// has fewer than two points. Both parts keep the input order.
pub fn split_validation(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::Config(
            "need at least two points to hold out validation data".into(),
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Holdout);
    let classes: Vec<Vec<usize>> = [1u8, 0]
        .iter()
        .map(|&y| {
            dataset
                .points()
                .iter()
                .enumerate()
                .filter(|(_, p)| p.y == y)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect();
    let take = |n: usize| ((n as f64 * fraction).round() as usize).clamp(1, n - 1);

    let mut val: Vec<usize> = Vec::new();
    if classes.iter().all(|c| c.len() >= 2) {
        for mut class in classes {
            class.shuffle(&mut rng);
            let n = take(class.len());
            val.extend_from_slice(&class[..n]);
        }
    } else {
        log::warn!(
            "a label class has fewer than 2 points; using an unstratified validation split"
        );
        let mut all: Vec<usize> = (0..dataset.len()).collect();
        all.shuffle(&mut rng);
        let n = take(all.len());
        val.extend_from_slice(&all[..n]);
    }
    val.sort_unstable();
    let mut in_val = vec![false; dataset.len()];
    for &i in &val {
        in_val[i] = true;
    }
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_val[i]).collect();
    Ok((
        dataset.subset(&train, format!("{}[fit]", dataset.provenance())),
        dataset.subset(&val, format!("{}[val]", dataset.provenance())),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub normal_recon: Option<f64>,
    pub anomaly_recon: Option<f64>,
}

/// Mean clean reconstruction error over the `y = 1` and `y = 0` points of
/// `data`. A class with no points yields `None`.
pub fn evaluate_epoch_metrics(params: &ModelParams, kind: ModelKind, distance: models::DistanceKind, data: &Dataset) -> Result<EpochMetrics> {
    if !kind.is_reconstruction() {
        return Err(Error::Config(format!("{kind} has no reconstruction error")));
    }
    let ae = params.as_autoencoder()?;
    let (mut sums, mut counts) = ([0.0f64; 2], [0usize; 2]);
    for chunk in data.points().chunks(models::SCORE_CHUNK) {
        let xs = BatchMatrix::from_samples(data.dim(), chunk.iter().map(|p| p.features.as_slice()))?;
        for (p, e) in chunk.iter().zip(reconstruction_errors(ae, xs, distance)?) {
            sums[p.y as usize] += e;
            counts[p.y as usize] += 1;
        }
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    Ok(EpochMetrics {
        normal_recon: mean(1),
        anomaly_recon: mean(0),
    })
}

/// Trains one model on `dataset`.
///
/// A stratified `validation_fraction` of the data is held out. AE and DAE
/// only see points labeled normal. Each epoch shuffles the remaining points,
/// takes one Adam step per minibatch (the last one may be short), then
/// records the validation loss and the clean reconstruction errors of the
/// training part. Training stops after `patience` epochs without a new best
/// validation loss, and the best parameters are returned.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let kind = config.kind;
    let (fit_part, val_part) = split_validation(dataset, config.validation_fraction, config.seed)?;
    let keep = |p: &LabeledPoint| kind.uses_labels() || p.y == 1;
    let fit: Vec<&LabeledPoint> = fit_part.points().iter().filter(|p| keep(p)).collect();
    let val: Vec<&LabeledPoint> = val_part.points().iter().filter(|p| keep(p)).collect();
    if fit.is_empty() {
        return Err(Error::Config(format!(
            "no usable training points for {kind} after the validation split"
        )));
    }
    if val.is_empty() {
        return Err(Error::Config(format!("no usable validation points for {kind}")));
    }

    let mut params = ModelParams::init(kind, dataset.dim(), &config.architecture, config.seed)?;
    let mut adam = AdamState::new(config.adam, &params);
    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut noise_rng = rng::stream(config.seed, Stream::Noise);
    let objective = &config.objective;

    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledPoint> = idx.iter().map(|&i| fit[i]).collect();
            let (loss, grads) = model_loss_and_grads(kind, &params, &batch, objective, &mut noise_rng)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "{kind}: non-finite training loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            adam.step(&mut params, &grads).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!(
                    "{kind}: epoch {epoch}, batch {}: {msg}",
                    b + 1
                )),
                other => other,
            })?;
            epoch_total += loss * batch.len() as f64;
        }
        let train_loss = epoch_total / fit.len() as f64;

        // Denoising kinds see the same validation noise every epoch.
        let mut val_rng = rng::stream(config.seed, Stream::Validation);
        let val_loss = model_loss_total(kind, &params, &val, objective, &mut val_rng)? / val.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "{kind}: non-finite validation loss at epoch {epoch}"
            )));
        }

        let metrics = if kind.is_reconstruction() {
            evaluate_epoch_metrics(&params, kind, objective.distance, &fit_part)?
        } else {
            EpochMetrics {
                normal_recon: None,
                anomaly_recon: None,
            }
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            normal_recon: metrics.normal_recon,
            anomaly_recon: metrics.anomaly_recon,
        });

        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, Some(epoch)),
        None => (params, None),
    };
    Ok(TrainedModel {
        kind,
        params,
        config: config.clone(),
        log,
        best_epoch,
    })
}
