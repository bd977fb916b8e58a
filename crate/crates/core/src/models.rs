//! Reconstruction-based anomaly objectives (AE, DAE, LRC, ABC) and the
//! supervised classifier baseline.
//!
//! Every model emits anomaly scores oriented "higher = more anomalous":
//! ABC scores are `p(y = 0 | x) = 1 - exp(-L)`, AE/DAE/LRC scores are the raw
//! reconstruction error `L`, and the classifier scores are `1 - sigmoid(logit)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledPoint, MinMaxScaler};
use crate::exec::Execution;
use crate::error::{Error, Result};
use crate::nn::serialize::{AutoencoderDoc, NetworkDoc, FORMAT_VERSION};
use crate::nn::{
    self, backward, forward_batch, init_network_with, predict_batch, Activation, AutoencoderGrads,
    AutoencoderParams, BatchMatrix, NetworkGrads, NetworkParams, ParamSet,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceKind {
    /// `sum_d (x_d - x̂_d)^2`
    #[default]
    #[serde(rename = "squared-l2")]
    SquaredL2,
    #[serde(rename = "l2")]
    L2,
}

impl DistanceKind {
    pub fn eval(self, x: &[f64], reconstruction: &[f64]) -> f64 {
        let s: f64 = x
            .iter()
            .zip(reconstruction)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match self {
            DistanceKind::SquaredL2 => s,
            DistanceKind::L2 => s.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaeNoiseConfig {
    /// Standard deviation of the isotropic Gaussian added to encoder inputs.
    pub noise_std: f64,
}

impl Default for DaeNoiseConfig {
    fn default() -> Self {
        Self { noise_std: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossClampConfig {
    /// Floor applied to `L` inside the anomaly term `-ln(1 - exp(-L))`.
    pub min_reconstruction_error: f64,
}

impl Default for LossClampConfig {
    fn default() -> Self {
        Self {
            min_reconstruction_error: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "abc-ae")]
    AbcAe,
    #[serde(rename = "abc-dae")]
    AbcDae,
    #[serde(rename = "lrc")]
    Lrc,
    #[serde(rename = "dnn")]
    Dnn,
    #[serde(rename = "ae")]
    Ae,
    #[serde(rename = "dae")]
    Dae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::AbcAe,
        ModelKind::AbcDae,
        ModelKind::Lrc,
        ModelKind::Dnn,
        ModelKind::Ae,
        ModelKind::Dae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::AbcAe => "abc-ae",
            ModelKind::AbcDae => "abc-dae",
            ModelKind::Lrc => "lrc",
            ModelKind::Dnn => "dnn",
            ModelKind::Ae => "ae",
            ModelKind::Dae => "dae",
        }
    }

    /// Column title used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::AbcAe => "ABC(AE)",
            ModelKind::AbcDae => "ABC(DAE)",
            ModelKind::Lrc => "LRC",
            ModelKind::Dnn => "DNN",
            ModelKind::Ae => "AE",
            ModelKind::Dae => "DAE",
        }
    }

    /// AE and DAE train on normal points only and ignore labels.
    pub fn uses_labels(self) -> bool {
        !matches!(self, ModelKind::Ae | ModelKind::Dae)
    }

    pub fn is_reconstruction(self) -> bool {
        self != ModelKind::Dnn
    }

    pub fn is_denoising(self) -> bool {
        matches!(self, ModelKind::Dae | ModelKind::AbcDae)
    }

    /// Scores are calibrated probabilities with a 0.5 decision threshold.
    pub fn has_threshold(self) -> bool {
        matches!(self, ModelKind::AbcAe | ModelKind::AbcDae | ModelKind::Dnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Loss-shaping options shared by every model kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub distance: DistanceKind,
    pub noise: DaeNoiseConfig,
    pub clamp: LossClampConfig,
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise.noise_std >= 0.0 && self.noise.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise.noise_std
            )));
        }
        if self.clamp.min_reconstruction_error.is_nan() || self.clamp.min_reconstruction_error <= 0.0 {
            return Err(Error::Config(
                "min_reconstruction_error must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Hidden widths and code size. The classifier reuses `hidden` and ends in
/// a single logit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub latent: usize,
}

impl Architecture {
    pub fn toy() -> Self {
        Self {
            hidden: vec![10, 10],
            latent: 1,
        }
    }

    pub fn wide() -> Self {
        Self {
            hidden: vec![300, 100],
            latent: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Autoencoder(AutoencoderParams),
    Classifier(NetworkParams),
}

impl ModelParams {
    pub fn init(kind: ModelKind, data_dim: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Init);
        if kind.is_reconstruction() {
            Ok(ModelParams::Autoencoder(AutoencoderParams::init(
                data_dim,
                &arch.hidden,
                arch.latent,
                &mut rng,
            )?))
        } else {
            let mut sizes = vec![data_dim];
            sizes.extend_from_slice(&arch.hidden);
            sizes.push(1);
            let mut acts = vec![Activation::Tanh; sizes.len() - 2];
            acts.push(Activation::Identity);
            Ok(ModelParams::Classifier(init_network_with(&sizes, &acts, &mut rng)?))
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Autoencoder(ae) => ae.data_dim(),
            ModelParams::Classifier(n) => n.input_dim(),
        }
    }

    pub fn matches(&self, kind: ModelKind) -> bool {
        matches!(
            (self, kind.is_reconstruction()),
            (ModelParams::Autoencoder(_), true) | (ModelParams::Classifier(_), false)
        )
    }

    pub fn as_autoencoder(&self) -> Result<&AutoencoderParams> {
        match self {
            ModelParams::Autoencoder(ae) => Ok(ae),
            ModelParams::Classifier(_) => {
                Err(Error::Config("model is a classifier, not an autoencoder".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelGrads {
    Autoencoder(AutoencoderGrads),
    Classifier(NetworkGrads),
}

impl ParamSet for ModelParams {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        match self {
            ModelParams::Autoencoder(p) => p.named_slices(),
            ModelParams::Classifier(p) => p.named_slices(),
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Autoencoder(p) => p.slices_mut(),
            ModelParams::Classifier(p) => p.slices_mut(),
        }
    }
}

impl ParamSet for ModelGrads {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        match self {
            ModelGrads::Autoencoder(g) => g.named_slices(),
            ModelGrads::Classifier(g) => g.named_slices(),
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelGrads::Autoencoder(g) => g.slices_mut(),
            ModelGrads::Classifier(g) => g.slices_mut(),
        }
    }
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        Err(Error::Input(format!("label must be 0 or 1, got {y}")))
    } else {
        Ok(())
    }
}

fn check_dim(ae: &AutoencoderParams, x: &[f64]) -> Result<()> {
    if x.len() != ae.data_dim() {
        return Err(Error::Shape(format!(
            "point has dimension {}, model expects {}",
            x.len(),
            ae.data_dim()
        )));
    }
    Ok(())
}

pub fn reconstruction_error(ae: &AutoencoderParams, x: &[f64], distance: DistanceKind) -> Result<f64> {
    check_dim(ae, x)?;
    Ok(distance.eval(x, &ae.reconstruct(x)?))
}

/// Reconstruction error of `x` from a noise-perturbed copy of `x`.
pub fn dae_reconstruction_error<R: Rng + ?Sized>(
    ae: &AutoencoderParams,
    x: &[f64],
    noise: &DaeNoiseConfig,
    distance: DistanceKind,
    rng: &mut R,
) -> Result<f64> {
    check_dim(ae, x)?;
    let noisy = perturb(x, noise.noise_std, rng)?;
    Ok(distance.eval(x, &ae.reconstruct(&noisy)?))
}

fn perturb<R: Rng + ?Sized>(x: &[f64], std: f64, rng: &mut R) -> Result<Vec<f64>> {
    if std == 0.0 {
        return Ok(x.to_vec());
    }
    let n = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    Ok(x.iter().map(|v| v + n.sample(rng)).collect())
}

/// `p(y = 1 | x) = exp(-L)`
pub fn eta_from_error(l: f64) -> f64 {
    (-l).exp()
}

/// `p(y = 0 | x) = 1 - exp(-L)`; always `1 - eta_from_error(l)`.
pub fn abc_score_from_error(l: f64) -> f64 {
    1.0 - eta_from_error(l)
}

pub fn eta(ae: &AutoencoderParams, x: &[f64], distance: DistanceKind) -> Result<f64> {
    Ok(eta_from_error(reconstruction_error(ae, x, distance)?))
}

pub fn abc_anomaly_score(ae: &AutoencoderParams, x: &[f64], distance: DistanceKind) -> Result<f64> {
    Ok(abc_score_from_error(reconstruction_error(ae, x, distance)?))
}

/// Negative Bernoulli log-likelihood with `eta = exp(-L)`:
/// `y L - (1 - y) ln(1 - exp(-max(L, clamp)))`.
pub fn abc_loss_from_error(l: f64, y: u8, clamp: &LossClampConfig) -> Result<f64> {
    check_label(y)?;
    Ok(if y == 1 {
        l
    } else {
        let lc = l.max(clamp.min_reconstruction_error);
        -log1mexp(lc)
    })
}

/// `ln(1 - exp(-l))` for `l > 0`, accurate at both ends.
fn log1mexp(l: f64) -> f64 {
    if l < std::f64::consts::LN_2 {
        (-(-l).exp_m1()).ln()
    } else {
        (-(-l).exp()).ln_1p()
    }
}

/// `d loss / d L` of [`abc_loss_from_error`]. Zero below the clamp.
pub fn abc_loss_slope(l: f64, y: u8, clamp: &LossClampConfig) -> f64 {
    if y == 1 {
        1.0
    } else if l < clamp.min_reconstruction_error {
        0.0
    } else {
        -1.0 / l.exp_m1()
    }
}

pub fn abc_loss(
    ae: &AutoencoderParams,
    x: &[f64],
    y: u8,
    distance: DistanceKind,
    clamp: &LossClampConfig,
) -> Result<f64> {
    check_label(y)?;
    abc_loss_from_error(reconstruction_error(ae, x, distance)?, y, clamp)
}

/// `+L` for normals, `-L` for anomalies.
pub fn lrc_loss_from_error(l: f64, y: u8) -> Result<f64> {
    check_label(y)?;
    Ok(if y == 1 { l } else { -l })
}

pub fn lrc_loss(ae: &AutoencoderParams, x: &[f64], y: u8, distance: DistanceKind) -> Result<f64> {
    check_label(y)?;
    lrc_loss_from_error(reconstruction_error(ae, x, distance)?, y)
}

/// Sigmoid cross-entropy with target `y` (1 = normal), in the overflow-free
/// form `max(l, 0) - l y + ln(1 + exp(-|l|))`.
pub fn dnn_loss_from_logit(logit: f64, y: u8) -> Result<f64> {
    check_label(y)?;
    Ok(logit.max(0.0) - logit * f64::from(y) + (-logit.abs()).exp().ln_1p())
}

/// `1 - sigmoid(logit)`
pub fn dnn_score_from_logit(logit: f64) -> f64 {
    nn::sigmoid(-logit)
}

fn logit(classifier: &NetworkParams, x: &[f64]) -> Result<f64> {
    if classifier.output_dim() != 1 {
        return Err(Error::Config(format!(
            "classifier must emit one logit, emits {}",
            classifier.output_dim()
        )));
    }
    Ok(nn::forward(classifier, x)?.output().get(0, 0))
}

pub fn dnn_loss(classifier: &NetworkParams, x: &[f64], y: u8) -> Result<f64> {
    check_label(y)?;
    dnn_loss_from_logit(logit(classifier, x)?, y)
}

pub fn dnn_score(classifier: &NetworkParams, x: &[f64]) -> Result<f64> {
    Ok(dnn_score_from_logit(logit(classifier, x)?))
}

/// Per-point loss and its slope with respect to `L`, for reconstruction kinds.
fn reconstruction_objective(
    kind: ModelKind,
    l: f64,
    y: u8,
    clamp: &LossClampConfig,
) -> Result<(f64, f64)> {
    match kind {
        ModelKind::Ae | ModelKind::Dae => Ok((l, 1.0)),
        ModelKind::Lrc => {
            let loss = lrc_loss_from_error(l, y)?;
            Ok((loss, if y == 1 { 1.0 } else { -1.0 }))
        }
        ModelKind::AbcAe | ModelKind::AbcDae => {
            Ok((abc_loss_from_error(l, y, clamp)?, abc_loss_slope(l, y, clamp)))
        }
        ModelKind::Dnn => unreachable!("classifier has no reconstruction objective"),
    }
}

fn pack(points: &[&LabeledPoint], dim: usize) -> Result<BatchMatrix> {
    BatchMatrix::from_samples(dim, points.iter().map(|p| p.features.as_slice()))
}

/// Draws encoder-input noise for a batch, sample by sample.
fn noisy_copy<R: Rng + ?Sized>(x: &BatchMatrix, std: f64, rng: &mut R) -> Result<BatchMatrix> {
    let mut out = x.clone();
    if std > 0.0 {
        let n = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        for b in 0..x.batch() {
            for d in 0..x.dim() {
                out.set(d, b, x.get(d, b) + n.sample(rng));
            }
        }
    }
    Ok(out)
}

/// Mean loss over `batch` and its gradient. `rng` supplies the encoder-input
/// noise of denoising kinds and is untouched otherwise.
pub fn model_loss_and_grads<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    batch: &[&LabeledPoint],
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<(f64, ModelGrads)> {
    let inv_k = 1.0 / batch.len().max(1) as f64;
    evaluate(kind, params, batch, config, rng, true)
        .map(|(total, g)| (total * inv_k, g.expect("grads requested")))
}

/// Mean loss only.
pub fn model_loss<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    batch: &[&LabeledPoint],
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<f64> {
    let inv_k = 1.0 / batch.len().max(1) as f64;
    evaluate(kind, params, batch, config, rng, false).map(|(total, _)| total * inv_k)
}

/// Summed loss over `points`, evaluated in fixed-size chunks.
pub fn model_loss_total<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    points: &[&LabeledPoint],
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in points.chunks(SCORE_CHUNK) {
        total += evaluate_sum(kind, params, chunk, config, rng)?;
    }
    Ok(total)
}

pub(crate) const SCORE_CHUNK: usize = 1024;

fn evaluate_sum<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    batch: &[&LabeledPoint],
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<f64> {
    evaluate(kind, params, batch, config, rng, false).map(|(total, _)| total)
}

/// Summed (not averaged) loss, and the gradient of the mean loss.
fn evaluate<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    batch: &[&LabeledPoint],
    config: &ObjectiveConfig,
    rng: &mut R,
    with_grads: bool,
) -> Result<(f64, Option<ModelGrads>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if !params.matches(kind) {
        return Err(Error::Config(format!("parameters do not fit model kind {kind}")));
    }
    let k = batch.len();
    let inv_k = 1.0 / k as f64;
    let dim = params.input_dim();
    let x = pack(batch, dim)?;

    match params {
        ModelParams::Autoencoder(ae) => {
            let enc_in = if kind.is_denoising() {
                noisy_copy(&x, config.noise.noise_std, rng)?
            } else {
                x.clone()
            };
            let enc = forward_batch(ae.encoder(), enc_in)?;
            let dec = forward_batch(ae.decoder(), enc.output().clone())?;
            let recon = dec.output();

            let mut total = 0.0;
            let mut out_grad = BatchMatrix::zeros(dim, k);
            for (b, p) in batch.iter().enumerate() {
                let y = if kind.uses_labels() { p.y } else { 1 };
                let mut s = 0.0;
                for d in 0..dim {
                    let diff = recon.get(d, b) - x.get(d, b);
                    s += diff * diff;
                }
                let l = match config.distance {
                    DistanceKind::SquaredL2 => s,
                    DistanceKind::L2 => s.sqrt(),
                };
                let (loss, slope) = reconstruction_objective(kind, l, y, &config.clamp)?;
                total += loss;
                if with_grads {
                    let scale = slope * inv_k;
                    for d in 0..dim {
                        let diff = recon.get(d, b) - x.get(d, b);
                        let dl = match config.distance {
                            DistanceKind::SquaredL2 => 2.0 * diff,
                            DistanceKind::L2 if l > 0.0 => diff / l,
                            DistanceKind::L2 => 0.0,
                        };
                        out_grad.set(d, b, scale * dl);
                    }
                }
            }
            if !with_grads {
                return Ok((total, None));
            }
            let (dec_grads, dz) = backward(ae.decoder(), &dec, &out_grad)?;
            let (enc_grads, _) = backward(ae.encoder(), &enc, &dz)?;
            Ok((
                total,
                Some(ModelGrads::Autoencoder(AutoencoderGrads {
                    encoder: enc_grads,
                    decoder: dec_grads,
                })),
            ))
        }
        ModelParams::Classifier(net) => {
            if net.output_dim() != 1 {
                return Err(Error::Config("classifier must emit one logit".into()));
            }
            let trace = forward_batch(net, x)?;
            let logits = trace.output();
            let mut total = 0.0;
            let mut out_grad = BatchMatrix::zeros(1, k);
            for (b, p) in batch.iter().enumerate() {
                let l = logits.get(0, b);
                total += dnn_loss_from_logit(l, p.y)?;
                out_grad.set(0, b, (nn::sigmoid(l) - f64::from(p.y)) * inv_k);
            }
            if !with_grads {
                return Ok((total, None));
            }
            let (g, _) = backward(net, &trace, &out_grad)?;
            Ok((total, Some(ModelGrads::Classifier(g))))
        }
    }
}

/// Clean (noise-free) reconstruction errors for a batch of points.
pub fn reconstruction_errors(
    ae: &AutoencoderParams,
    xs: BatchMatrix,
    distance: DistanceKind,
) -> Result<Vec<f64>> {
    let recon = ae.reconstruct_batch(xs.clone())?;
    Ok((0..xs.batch())
        .map(|b| {
            let s: f64 = (0..xs.dim())
                .map(|d| {
                    let diff = recon.get(d, b) - xs.get(d, b);
                    diff * diff
                })
                .sum();
            match distance {
                DistanceKind::SquaredL2 => s,
                DistanceKind::L2 => s.sqrt(),
            }
        })
        .collect())
}

/// Anomaly scores (higher = more anomalous) for a batch. Denoising kinds are
/// scored on clean inputs.
pub fn score_batch(
    kind: ModelKind,
    params: &ModelParams,
    xs: BatchMatrix,
    distance: DistanceKind,
) -> Result<Vec<f64>> {
    if !params.matches(kind) {
        return Err(Error::Config(format!("parameters do not fit model kind {kind}")));
    }
    if xs.dim() != params.input_dim() {
        return Err(Error::Shape(format!(
            "data has dimension {}, model expects {}",
            xs.dim(),
            params.input_dim()
        )));
    }
    match params {
        ModelParams::Autoencoder(ae) => {
            let errs = reconstruction_errors(ae, xs, distance)?;
            Ok(match kind {
                ModelKind::AbcAe | ModelKind::AbcDae => {
                    errs.into_iter().map(abc_score_from_error).collect()
                }
                _ => errs,
            })
        }
        ModelParams::Classifier(net) => {
            let logits = predict_batch(net, xs)?;
            Ok(logits.row(0).iter().map(|&l| dnn_score_from_logit(l)).collect())
        }
    }
}

/// Scores every point of `data`, in order. Chunks are independent, so
/// `exec` only changes the wall-clock time.
pub fn score_dataset(
    kind: ModelKind,
    params: &ModelParams,
    distance: DistanceKind,
    data: &Dataset,
    exec: Execution,
) -> Result<Vec<f64>> {
    let chunks: Vec<&[LabeledPoint]> = data.points().chunks(SCORE_CHUNK).collect();
    let scored = exec.map(&chunks, |chunk| {
        let xs = BatchMatrix::from_samples(data.dim(), chunk.iter().map(|p| p.features.as_slice()))?;
        score_batch(kind, params, xs, distance)
    });
    let mut out = Vec::with_capacity(data.len());
    for s in scored {
        out.extend(s?);
    }
    Ok(out)
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub objective: ObjectiveConfig,
    pub params: ParamsDoc,
    /// Input scaling fitted at training time; applied before scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<MinMaxScaler>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamsDoc {
    Autoencoder(AutoencoderDoc),
    Classifier(NetworkDoc),
}

impl SavedModel {
    pub fn new(kind: ModelKind, objective: ObjectiveConfig, params: &ModelParams) -> Self {
        let params = match params {
            ModelParams::Autoencoder(ae) => ParamsDoc::Autoencoder(ae.into()),
            ModelParams::Classifier(n) => ParamsDoc::Classifier(n.into()),
        };
        Self {
            format_version: FORMAT_VERSION,
            kind,
            objective,
            params,
            scaler: None,
        }
    }

    pub fn with_scaler(mut self, scaler: Option<MinMaxScaler>) -> Self {
        self.scaler = scaler;
        self
    }

    pub fn into_params(self) -> Result<ModelParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let params = match self.params {
            ParamsDoc::Autoencoder(doc) => ModelParams::Autoencoder(doc.try_into()?),
            ParamsDoc::Classifier(doc) => ModelParams::Classifier(doc.try_into()?),
        };
        if !params.matches(self.kind) {
            return Err(Error::Config(format!(
                "stored parameters do not fit model kind {}",
                self.kind
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A model ready to score raw inputs: parameters plus the input scaling
/// they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub distance: DistanceKind,
    pub scaler: Option<MinMaxScaler>,
}

impl Detector {
    pub fn from_saved(saved: SavedModel) -> Result<Self> {
        let (kind, distance, scaler) = (saved.kind, saved.objective.distance, saved.scaler.clone());
        let params = saved.into_params()?;
        if let Some(s) = &scaler {
            if s.min.len() != params.input_dim() || s.max.len() != params.input_dim() {
                return Err(Error::Config(format!(
                    "stored scaler has {} dimensions, model expects {}",
                    s.min.len(),
                    params.input_dim()
                )));
            }
        }
        Ok(Self { kind, params, distance, scaler })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_saved(SavedModel::load(path)?)
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::Input(format!(
                "data has dimension {dim}, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Scores a batch of raw (unscaled) points.
    pub fn score_batch(&self, mut xs: BatchMatrix) -> Result<Vec<f64>> {
        self.check_dim(xs.dim())?;
        if let Some(s) = &self.scaler {
            for d in 0..xs.dim() {
                for v in xs.row_mut(d) {
                    *v = s.transform(*v, d);
                }
            }
        }
        score_batch(self.kind, &self.params, xs, self.distance)
    }

    /// Scores every point of a raw dataset, in order.
    pub fn score(&self, data: &Dataset, exec: Execution) -> Result<Vec<f64>> {
        self.check_dim(data.dim())?;
        match &self.scaler {
            Some(s) => score_dataset(self.kind, &self.params, self.distance, &s.apply(data)?, exec),
            None => score_dataset(self.kind, &self.params, self.distance, data, exec),
        }
    }
}
