//! Labeled datasets: the 2D toy generator, CSV ingestion, min-max scaling
//! and assembly of the three experimental settings.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Normal,
    KnownAnomaly,
    UnknownAnomaly,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Normal => "normal",
            Role::KnownAnomaly => "known_anomaly",
            Role::UnknownAnomaly => "unknown_anomaly",
        }
    }

    /// Label implied by the role: 1 for normal, 0 for either anomaly kind.
    pub fn label(self) -> u8 {
        u8::from(self == Role::Normal)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(Role::Normal),
            "known_anomaly" => Ok(Role::KnownAnomaly),
            "unknown_anomaly" => Ok(Role::UnknownAnomaly),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// A feature vector with its training label (`y`, 1 = normal) and its
/// ground-truth role. The two only disagree for contaminants injected into
/// the normal training data.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub y: u8,
    pub role: Role,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, role: Role) -> Self {
        Self {
            features,
            y: role.label(),
            role,
        }
    }

    pub fn is_anomaly(&self) -> bool {
        self.role != Role::Normal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<LabeledPoint>,
    dim: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(dim: usize, points: Vec<LabeledPoint>, provenance: impl Into<String>) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::Shape(format!(
                    "point {k} has {} features, dataset dimension is {dim}",
                    p.features.len()
                )));
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("point {k} has a non-finite feature")));
            }
            if p.y > 1 {
                return Err(Error::Input(format!("point {k} has label {}", p.y)));
            }
        }
        Ok(Self {
            points,
            dim,
            provenance: provenance.into(),
        })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.points.iter().filter(|p| p.role == role).count()
    }

    pub fn count_label(&self, y: u8) -> usize {
        self.points.iter().filter(|p| p.y == y).count()
    }

    /// New dataset of the points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Dataset {
        Dataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            dim: self.dim,
            provenance: provenance.into(),
        }
    }

    pub fn filter<F: Fn(&LabeledPoint) -> bool>(&self, keep: F) -> Dataset {
        Dataset {
            points: self.points.iter().filter(|p| keep(p)).cloned().collect(),
            dim: self.dim,
            provenance: self.provenance.clone(),
        }
    }

    /// Axis-aligned bounding box, `(min, max)` per dimension.
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        let first = self.points.first()?;
        let mut b: Vec<(f64, f64)> = first.features.iter().map(|&v| (v, v)).collect();
        for p in &self.points[1..] {
            for (bd, &v) in b.iter_mut().zip(&p.features) {
                bd.0 = bd.0.min(v);
                bd.1 = bd.1.max(v);
            }
        }
        Some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub n_normal: usize,
    pub n_known: usize,
    pub n_unknown: usize,
    /// Gaussian jitter on the two moons.
    pub noise_std: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_normal: 10_000,
            n_known: 10_000,
            n_unknown: 10_000,
            noise_std: MOON_NOISE_STD,
        }
    }
}

/// Default jitter. At this overlap the class separability matches the toy
/// AUROCs reported for the supervised and unsupervised baselines.
pub const MOON_NOISE_STD: f64 = 0.3;
pub const UNKNOWN_CENTER: [f64; 2] = [-3.0, 3.0];
pub const UNKNOWN_STD: f64 = 0.3;

/// Two interleaving half-circles plus a remote Gaussian blob.
///
/// Normals lie on the upper unit half-circle `(cos t, sin t)`, known
/// anomalies on the lower one `(1 - cos t, 0.5 - sin t)`, `t ~ U[0, pi)`, both
/// with isotropic jitter `noise_std`. Unknown anomalies are drawn from
/// `N((-3, 3), 0.3^2 I)`. Points are ordered normals, known, unknown.
pub fn gen_toy(config: &ToyConfig, seed: u64) -> Result<Dataset> {
    if !(config.noise_std >= 0.0 && config.noise_std.is_finite()) {
        return Err(Error::Config(format!("noise_std {} is invalid", config.noise_std)));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let jitter = Normal::new(0.0, config.noise_std).expect("validated std");
    let blob = Normal::new(0.0, UNKNOWN_STD).expect("constant std");
    let mut points = Vec::with_capacity(config.n_normal + config.n_known + config.n_unknown);

    for _ in 0..config.n_normal {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let x = t.cos() + jitter.sample(&mut rng);
        let y = t.sin() + jitter.sample(&mut rng);
        points.push(LabeledPoint::new(vec![x, y], Role::Normal));
    }
    for _ in 0..config.n_known {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let x = 1.0 - t.cos() + jitter.sample(&mut rng);
        let y = 0.5 - t.sin() + jitter.sample(&mut rng);
        points.push(LabeledPoint::new(vec![x, y], Role::KnownAnomaly));
    }
    for _ in 0..config.n_unknown {
        let x = UNKNOWN_CENTER[0] + blob.sample(&mut rng);
        let y = UNKNOWN_CENTER[1] + blob.sample(&mut rng);
        points.push(LabeledPoint::new(vec![x, y], Role::UnknownAnomaly));
    }
    Dataset::new(2, points, format!("toy(seed={seed})"))
}

fn feature_header(dim: usize) -> Vec<String> {
    (0..dim).map(|d| format!("f{d}")).collect()
}

/// Writes `f0,...,f{D-1},role` CSV with shortest round-trip floats.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = feature_header(dataset.dim());
    header.push("role".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(dataset.dim() + 1);
    for p in dataset.points() {
        row.clear();
        row.extend(p.features.iter().map(|v| v.to_string()));
        row.push(p.role.as_str().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, true)
}

/// Like [`load_csv`] but the `role` column is optional; rows without one
/// are treated as normal. Used for scoring unlabeled data.
pub fn load_features_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, false)
}

pub fn read_csv<R: Read>(input: R, path: &Path, require_role: bool) -> Result<Dataset> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(1, "missing header row".into())),
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_role = names.last() == Some(&"role");
    if require_role && !has_role {
        return Err(parse_err(1, "last header column must be `role`".into()));
    }
    let dim = names.len() - usize::from(has_role);
    if dim == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }
    let expected = feature_header(dim);
    if names[..dim] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(parse_err(
            1,
            format!("feature columns must be named f0..f{}", dim - 1),
        ));
    }

    let mut points = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let mut features = Vec::with_capacity(dim);
        for (d, field) in rec.iter().take(dim).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("f{d}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("f{d}: non-finite value `{field}`")));
            }
            features.push(v);
        }
        let role = if has_role {
            rec[dim].trim().parse().map_err(|e| parse_err(line, e))?
        } else {
            Role::Normal
        };
        points.push(LabeledPoint::new(features, role));
    }
    Dataset::new(dim, points, path.display().to_string())
}

/// Per-dimension affine map of the fit set's range onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let bounds = train
            .bounds()
            .ok_or_else(|| Error::Config("cannot fit a scaler on an empty dataset".into()))?;
        Ok(Self {
            min: bounds.iter().map(|b| b.0).collect(),
            max: bounds.iter().map(|b| b.1).collect(),
        })
    }

    /// Values outside the fit range map outside `[0, 1]`; constant
    /// dimensions map to 0.
    pub fn transform(&self, v: f64, d: usize) -> f64 {
        let span = self.max[d] - self.min[d];
        if span > 0.0 {
            (v - self.min[d]) / span
        } else {
            0.0
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.min.len() {
            return Err(Error::Shape(format!(
                "scaler fit on {} dims applied to {}",
                self.min.len(),
                data.dim()
            )));
        }
        let points = data
            .points()
            .iter()
            .map(|p| LabeledPoint {
                features: p
                    .features
                    .iter()
                    .enumerate()
                    .map(|(d, &v)| self.transform(v, d))
                    .collect(),
                ..p.clone()
            })
            .collect();
        Ok(Dataset {
            points,
            dim: data.dim(),
            provenance: data.provenance().to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setting {
    /// Normals and known anomalies for training; unknowns only at test time.
    One,
    /// Setting 1 plus unknown anomalies hidden among the training normals.
    Two,
    /// Setting 1 with the training known anomalies subsampled.
    Three,
}

impl TryFrom<u8> for Setting {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Setting::One),
            2 => Ok(Setting::Two),
            3 => Ok(Setting::Three),
            _ => Err(format!("setting must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Setting> for u8 {
    fn from(s: Setting) -> u8 {
        match s {
            Setting::One => 1,
            Setting::Two => 2,
            Setting::Three => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettingParams {
    pub setting: Setting,
    /// Share of normals and of known anomalies that go to training.
    pub train_fraction: f64,
    /// Unknown anomalies injected into training as normals (setting 2).
    pub contaminants: usize,
    /// Training known anomalies kept (setting 3).
    pub known_cap: Option<usize>,
}

impl Default for SettingParams {
    fn default() -> Self {
        Self {
            setting: Setting::One,
            train_fraction: 0.5,
            contaminants: 100,
            known_cap: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub params: SettingParams,
    /// Source indices of `train` / `test`, aligned with their points.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Audit record of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub setting: Setting,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub contaminant_indices: Vec<usize>,
}

impl ExperimentSplit {
    pub fn manifest(&self, seed: u64) -> SplitManifest {
        SplitManifest {
            setting: self.params.setting,
            seed,
            train_indices: self.train_indices.clone(),
            test_indices: self.test_indices.clone(),
            contaminant_indices: self
                .train_indices
                .iter()
                .zip(self.train.points())
                .filter(|(_, p)| p.role == Role::UnknownAnomaly)
                .map(|(&i, _)| i)
                .collect(),
        }
    }

    /// Fits min-max scaling on the training part and applies it to both parts.
    pub fn scaled(&self) -> Result<(ExperimentSplit, MinMaxScaler)> {
        let scaler = MinMaxScaler::fit(&self.train)?;
        Ok((
            ExperimentSplit {
                train: scaler.apply(&self.train)?,
                test: scaler.apply(&self.test)?,
                ..self.clone()
            },
            scaler,
        ))
    }
}

pub fn assemble_setting(dataset: &Dataset, params: &SettingParams, seed: u64) -> Result<ExperimentSplit> {
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            params.train_fraction
        )));
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let by_role = |role: Role| -> Vec<usize> {
        dataset
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.role == role)
            .map(|(i, _)| i)
            .collect()
    };
    let mut normals = by_role(Role::Normal);
    let mut known = by_role(Role::KnownAnomaly);
    let mut unknown = by_role(Role::UnknownAnomaly);
    if normals.len() < 2 {
        return Err(Error::Config("need at least two normal points".into()));
    }
    normals.shuffle(&mut rng);
    known.shuffle(&mut rng);
    unknown.shuffle(&mut rng);

    let cut = |n: usize| ((n as f64) * params.train_fraction).round() as usize;
    let n_normal_train = cut(normals.len()).clamp(1, normals.len() - 1);
    let n_known_train = cut(known.len());

    let mut train: Vec<usize> = normals[..n_normal_train].to_vec();
    let mut test: Vec<usize> = normals[n_normal_train..].to_vec();
    let (known_train, known_test) = known.split_at(n_known_train);
    test.extend_from_slice(known_test);

    let mut contaminants: Vec<usize> = Vec::new();
    match params.setting {
        Setting::One => {
            train.extend_from_slice(known_train);
            test.extend_from_slice(&unknown);
        }
        Setting::Two => {
            if params.contaminants > unknown.len() {
                return Err(Error::Config(format!(
                    "{} contaminants requested, only {} unknown anomalies available",
                    params.contaminants,
                    unknown.len()
                )));
            }
            train.extend_from_slice(known_train);
            contaminants = unknown[..params.contaminants].to_vec();
            train.extend_from_slice(&contaminants);
            test.extend_from_slice(&unknown[params.contaminants..]);
        }
        Setting::Three => {
            let cap = params
                .known_cap
                .ok_or_else(|| Error::Config("setting 3 requires known_cap".into()))?;
            if cap > known_train.len() {
                return Err(Error::Config(format!(
                    "known_cap {cap} exceeds the {} known anomalies available for training",
                    known_train.len()
                )));
            }
            train.extend_from_slice(&known_train[..cap]);
            test.extend_from_slice(&unknown);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    contaminants.sort_unstable();

    let mut train_set = dataset.subset(&train, format!("{}[train]", dataset.provenance()));
    for (pos, idx) in train.iter().enumerate() {
        if contaminants.binary_search(idx).is_ok() {
            train_set.points[pos].y = 1;
        }
    }
    let test_set = dataset.subset(&test, format!("{}[test]", dataset.provenance()));
    Ok(ExperimentSplit {
        train: train_set,
        test: test_set,
        params: *params,
        train_indices: train,
        test_indices: test,
    })
}
