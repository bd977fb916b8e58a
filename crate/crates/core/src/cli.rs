//! `abc-detect` subcommands.
//!
//! Settings come from an optional JSON config (see [`CliConfig`]); flags
//! override it. The output directory is taken from `--output-dir`, then
//! `ABC_OUTPUT_DIR`, then `output.dir`. Exit codes: 0 success, 1 usage or
//! configuration error, 2 runtime or numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, DataSourceKind};
use crate::data::{self, Role, Setting, ToyConfig};
use crate::error::{Error, Result};
use crate::eval::heatmap::{DEFAULT_MARGIN, DEFAULT_RESOLUTION};
use crate::eval::{self, BoundingBox, GridSpec, RunOutcome};
use crate::exec::Execution;
use crate::models::{Detector, ModelKind};
use crate::training::train;

pub const OUTPUT_DIR_ENV: &str = "ABC_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "abc-detect", version, about = "Autoencoding binary classifier anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the two-moons toy dataset as CSV.
    GenToy(GenToyArgs),
    /// Train one model and save its parameters and training log.
    Train(TrainArgs),
    /// Score a CSV file with a saved model.
    Score(ScoreArgs),
    /// Repeat the experiment over all configured models and write the report.
    Bench(BenchArgs),
    /// Evaluate a saved 2-d model on a regular grid.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = ToyConfig::default().n_normal)]
    pub n_normal: usize,
    #[arg(long, default_value_t = ToyConfig::default().n_known)]
    pub n_known: usize,
    #[arg(long, default_value_t = ToyConfig::default().n_unknown)]
    pub n_unknown: usize,
    #[arg(long, default_value_t = ToyConfig::default().noise_std)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file [default: <output dir>/toy.csv].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Flags shared by `train` and `bench`; each overrides the config file.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file; missing fields take their defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Labeled dataset CSV; switches the data source from toy to csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub setting: Option<u8>,
    #[arg(long)]
    pub contaminants: Option<usize>,
    #[arg(long)]
    pub known_cap: Option<usize>,
    /// Base seed; run r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Model to train [default: first of model.kinds].
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ModelKind>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Setting 3 sweep over comma-separated known-anomaly counts.
    #[arg(long, value_delimiter = ',')]
    pub known_caps: Option<Vec<usize>>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    /// Skip the heatmap CSVs.
    #[arg(long)]
    pub no_heatmaps: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// CSV with columns f0..f{D-1} and an optional role column.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output file [default: <output dir>/scores.csv].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Dataset whose bounding box (plus 20% per side) sets the grid extent
    /// [default: a toy dataset drawn with seed 0].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Explicit extent as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bbox: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub nx: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub ny: usize,
    /// Output file [default: <output dir>/heatmap.csv].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        1
    } else {
        2
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenToy(a) => gen_toy(a),
        Command::Train(a) => train_cmd(a),
        Command::Score(a) => score(a),
        Command::Bench(a) => bench(a),
        Command::Heatmap(a) => heatmap(a),
    }
}

fn env_output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn default_output(explicit: Option<PathBuf>, file: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        env_output_dir()
            .unwrap_or_else(|| crate::config::OutputSection::default().dir)
            .join(file)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn gen_toy(a: GenToyArgs) -> Result<()> {
    let cfg = ToyConfig {
        n_normal: a.n_normal,
        n_known: a.n_known,
        n_unknown: a.n_unknown,
        noise_std: a.noise_std,
    };
    let dataset = data::gen_toy(&cfg, a.seed)?;
    let path = default_output(a.output, "toy.csv");
    create_parent(&path)?;
    data::save_csv(&dataset, &path)?;
    println!(
        "wrote {}: {} normal, {} known_anomaly, {} unknown_anomaly",
        path.display(),
        dataset.count_role(Role::Normal),
        dataset.count_role(Role::KnownAnomaly),
        dataset.count_role(Role::UnknownAnomaly)
    );
    Ok(())
}

/// Config file, then flags, then the output-directory precedence.
fn effective_config(c: &ConfigArgs) -> Result<CliConfig> {
    let mut cfg = match &c.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    if let Some(path) = &c.data {
        cfg.data.source = DataSourceKind::Csv;
        cfg.data.path = Some(path.clone());
    }
    if let Some(s) = c.setting {
        cfg.experiment.setting = Setting::try_from(s).map_err(Error::Config)?;
    }
    if let Some(n) = c.contaminants {
        cfg.experiment.contaminants = n;
    }
    if let Some(n) = c.known_cap {
        cfg.experiment.known_cap = Some(n);
    }
    if let Some(s) = c.seed {
        cfg.experiment.base_seed = s;
    }
    if let Some(n) = c.max_epochs {
        cfg.train.max_epochs = n;
    }
    if let Some(n) = c.batch_size {
        cfg.train.batch_size = n;
    }
    if let Some(dir) = c.output_dir.clone().or_else(env_output_dir) {
        cfg.output.dir = dir;
    }
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = effective_config(&a.common)?;
    if let Some(kind) = a.kind {
        cfg.model.kinds = vec![kind];
    }
    cfg.validate()?;
    let cfg = cfg.resolved();
    let kind = cfg.model.kinds[0];
    let seed = cfg.experiment.base_seed;

    let loaded = eval::load_source(&cfg)?;
    let run = eval::prepare_run(&cfg, loaded.as_ref(), seed)?;
    let model = train(&run.split.train, &cfg.train_config(kind, seed))?;
    let aurocs = eval::evaluate_split(&model, &run.split.test, Execution::default())?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    write_text(&dir.join("config.json"), &cfg.to_json()?)?;
    model.to_saved().with_scaler(run.scaler.clone()).save(&dir.join("model.json"))?;
    model.log.save_csv(&dir.join("train_log.csv"))?;
    write_json(&dir.join("split.json"), &run.split.manifest(seed))?;

    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: {} epochs, best epoch {}, test AUROC known {} unknown {}",
        kind.display_name(),
        model.log.len(),
        model.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        fmt(aurocs.known),
        fmt(aurocs.unknown)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let detector = Detector::load(&a.model)?;
    let input = data::load_features_csv(&a.input)?;
    let scores = detector.score(&input, Execution::default())?;
    let path = default_output(a.output, "scores.csv");
    create_parent(&path)?;
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let flagged = detector.kind.has_threshold();
    if flagged {
        w.write_record(["index", "score", "flag"])?;
    } else {
        w.write_record(["index", "score"])?;
    }
    for (i, s) in scores.iter().enumerate() {
        if flagged {
            w.write_record([i.to_string(), s.to_string(), (*s > 0.5).to_string()])?;
        } else {
            w.write_record([i.to_string(), s.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("wrote {} scores to {}", scores.len(), path.display());
    Ok(())
}

fn configure_workers(workers: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        // A pool set up earlier in the process (tests) is kept.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("worker pool already initialised; ignoring workers = {n}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = effective_config(&a.common)?;
    if let Some(kinds) = a.kinds {
        cfg.model.kinds = kinds;
    }
    if let Some(n) = a.runs {
        cfg.experiment.runs = n;
    }
    if let Some(caps) = a.known_caps {
        cfg.experiment.known_caps = Some(caps);
        cfg.experiment.setting = Setting::Three;
    }
    if let Some(n) = a.workers {
        cfg.experiment.workers = Some(n);
    }
    cfg.validate()?;
    let cfg = cfg.resolved();
    let exec = if a.sequential { Execution::Sequential } else { Execution::default() };
    configure_workers(cfg.experiment.workers)?;

    let root = cfg.output.dir.clone();
    create_dir(&root)?;
    write_text(&root.join("config.json"), &cfg.to_json()?)?;

    let sweep: Vec<(Option<usize>, PathBuf)> = match (&cfg.experiment.known_caps, cfg.experiment.setting) {
        (Some(caps), Setting::Three) => caps.iter().map(|&c| (Some(c), root.join(format!("known_{c}")))).collect(),
        (Some(_), _) => {
            return Err(Error::Config("experiment.known_caps: only valid with setting 3".into()))
        }
        (None, _) => vec![(cfg.experiment.known_cap, root.clone())],
    };

    let mut any_success = false;
    for (cap, dir) in sweep {
        let mut run_cfg = cfg.clone();
        run_cfg.experiment.known_cap = cap;
        run_cfg.experiment.known_caps = None;
        let outcome = eval::run_experiment(&run_cfg, exec)?;
        create_dir(&dir)?;
        write_text(&dir.join("report.json"), &outcome.report.to_json()?)?;
        let table = outcome.report.to_table();
        write_text(&dir.join("table.txt"), &table)?;
        write_run_artifacts(&run_cfg, &outcome.runs, &dir, !a.no_heatmaps, exec)?;
        print!("{table}");
        any_success |= !outcome.report.all_failed();
    }
    if !any_success {
        return Err(Error::Numerical("every training run failed".into()));
    }
    println!("wrote {}", root.display());
    Ok(())
}

/// Loss curves, split manifests and models of every run; heatmaps from the
/// first run that trained each model.
fn write_run_artifacts(
    cfg: &CliConfig,
    runs: &[RunOutcome],
    dir: &Path,
    heatmaps: bool,
    exec: Execution,
) -> Result<()> {
    for run in runs {
        write_json(&dir.join(format!("split_run{}.json", run.run)), &run.manifest)?;
        for m in &run.models {
            if let Ok((model, _)) = &m.result {
                let stem = format!("{}_run{}", m.kind.as_str(), run.run);
                model.log.save_csv(&dir.join(format!("loss_{stem}.csv")))?;
                model
                    .to_saved()
                    .with_scaler(run.prepared.scaler.clone())
                    .save(&dir.join(format!("model_{stem}.json")))?;
            }
        }
    }
    let Some(first) = runs.first() else { return Ok(()) };
    if !heatmaps || first.prepared.data.dim() != 2 {
        return Ok(());
    }
    let grid = GridSpec::new(
        BoundingBox::around(&first.prepared.data, DEFAULT_MARGIN)?,
        DEFAULT_RESOLUTION,
        DEFAULT_RESOLUTION,
    )?;
    for (k, kind) in cfg.model.kinds.iter().enumerate() {
        let Some(run) = runs.iter().find(|r| r.models[k].result.is_ok()) else { continue };
        let Ok((model, _)) = &run.models[k].result else { continue };
        let detector = Detector {
            kind: *kind,
            params: model.params.clone(),
            distance: model.config.objective.distance,
            scaler: run.prepared.scaler.clone(),
        };
        eval::heatmap(&detector, grid, exec)?.save_csv(&dir.join(format!("heatmap_{}.csv", kind.as_str())))?;
    }
    Ok(())
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    let detector = Detector::load(&a.model)?;
    let bbox = match (a.bbox.as_deref(), &a.data) {
        (Some(&[xmin, xmax, ymin, ymax]), _) => BoundingBox::new(xmin, xmax, ymin, ymax)?,
        (Some(b), _) => return Err(Error::Config(format!("--bbox needs 4 values, got {}", b.len()))),
        (None, Some(path)) => BoundingBox::around(&data::load_features_csv(path)?, DEFAULT_MARGIN)?,
        (None, None) => BoundingBox::around(&data::gen_toy(&ToyConfig::default(), 0)?, DEFAULT_MARGIN)?,
    };
    let grid = eval::heatmap(&detector, GridSpec::new(bbox, a.nx, a.ny)?, Execution::default())?;
    let path = default_output(a.output, "heatmap.csv");
    create_parent(&path)?;
    grid.save_csv(&path)?;
    println!("wrote {} cells to {}", grid.values.len(), path.display());
    Ok(())
}
