//! Command-line pipeline: synth → track → windows → train → eval, plus
//! phenotype extraction and inference timing. Every artifact records the
//! SHA-256 of the files it was built from; consumers refuse changed inputs
//! unless `--force` is given.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{make_windows, plan_folds, FoldPlan, Split, Task, WindowConfig, WindowSample};
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, Variant};
use crate::phenotype::{self, PhenotypeConfig, PhenotypeResult};
use crate::provenance::{sha256_file, InputRef};
use crate::synth::{generate_synthetic_scene, SynthSpecFile};
use crate::tracking::TrackSet;
use crate::train::{self, EvalReport, TrainConfig, TrainLog};
use crate::types::{read_annotations, read_pose_stream, write_annotations, write_pose_stream, BehaviorCategory, StreamMeta};

#[derive(Debug, Parser)]
#[command(
    name = "behavior-attn",
    version,
    about = "Detect target behaviors in multi-person pose streams with person/time/joint attention",
    long_about = "Staged pipeline over 2D pose streams: synth → track → windows → train → eval, \
                  plus phenotype and bench. Defaults follow the reference clinical setting: 4 s \
                  windows at 30 fps, 3-minute prediction horizon, 5 folds, Adam lr 1e-3, batch 16, \
                  50 timing runs."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Accept inputs whose content hash no longer matches the recorded one.
    #[arg(long, global = true)]
    pub force: bool,
    /// Folds trained concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic pose streams, annotations and actor maps.
    Synth(SynthArgs),
    /// Link per-frame detections into tracks.
    Track(TrackArgs),
    /// Cut labeled windows and plan cross-validation folds.
    Windows(WindowsArgs),
    /// Train one model per fold.
    Train(TrainArgs),
    /// Evaluate trained folds on their test windows.
    Eval(EvalArgs),
    /// Cluster attended-person features into a representative phenotype.
    Phenotype(PhenotypeArgs),
    /// Time batched inference.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene or dataset spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Pose stream (JSON lines).
    #[arg(long)]
    pub stream: PathBuf,
    /// Track file [default: stream path with `.tracks.jsonl`].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum per-joint mean distance (px) for continuing a track
    /// [default: half the frame diagonal].
    #[arg(long)]
    pub gate: Option<f64>,
    /// Frame rate [default: from the `.meta.json` sidecar, else 30].
    #[arg(long)]
    pub fps: Option<f64>,
    /// Actor map linking detection ids to annotation subjects
    /// [default: `.actors.json` sidecar when present].
    #[arg(long)]
    pub actors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowsArgs {
    #[arg(long = "tracks", required = true, num_args = 1..)]
    pub tracks: Vec<PathBuf>,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// detect: label the last frame; predict: label the frame one horizon later [default: detect].
    #[arg(long)]
    pub task: Option<Task>,
    /// [default: 4]
    #[arg(long)]
    pub window_seconds: Option<f64>,
    /// [default: 30]
    #[arg(long)]
    pub stride_frames: Option<u64>,
    /// [default: 180]
    #[arg(long)]
    pub horizon_seconds: Option<f64>,
    /// [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    /// 64/128/256/256 backbone with 1024/256 heads.
    Full,
    /// 8-channel layers for CPU-scale runs.
    Compact,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub windows: PathBuf,
    /// Output directory for checkpoints and the run manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// tcn | p-att | pt-att | ptj-att [default: p-att]
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, value_enum)]
    pub model: Option<ModelPreset>,
    /// Replan folds with this count instead of the window manifest's plan.
    #[arg(long)]
    pub folds: Option<usize>,
    /// [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 16]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 5].
    #[arg(long)]
    pub patience: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Window manifest [default: the one recorded by `train`].
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Report path [default: <checkpoints>/eval_report.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Probability at or above which a window is positive [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also report a bootstrap interval with this many resamples.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Add inference timing of fold 0 with this many runs.
    #[arg(long)]
    pub bench_runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PhenotypeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub category: BehaviorCategory,
    /// [default: 5]
    #[arg(long)]
    pub k: Option<usize>,
    /// Minimum predicted probability of a window to be clustered [default: 0.8].
    #[arg(long)]
    pub floor: Option<f64>,
    /// Output directory [default: next to the checkpoint].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report silhouette widths for k = 2..=10.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Window manifest; each video is one clip.
    #[arg(long)]
    pub windows: PathBuf,
    /// [default: 50]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Use at most this many clips.
    #[arg(long)]
    pub clips: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings from `--config` merged with command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub window: WindowConfig,
    pub folds: usize,
    pub variant: Variant,
    pub model_preset: ModelPreset,
    /// Explicit layer sizes; replaces the preset when set.
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub threshold: f64,
    pub bootstrap_resamples: Option<usize>,
    pub phenotype: PhenotypeConfig,
    pub bench_runs: usize,
    pub bench_warmups: usize,
    pub jobs: usize,
    pub gate: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            window: WindowConfig::default(),
            folds: 5,
            variant: Variant::PAtt,
            model_preset: ModelPreset::Full,
            model: None,
            train: TrainConfig::default(),
            threshold: 0.5,
            bootstrap_resamples: None,
            phenotype: PhenotypeConfig::default(),
            bench_runs: 50,
            bench_warmups: train::BENCH_WARMUPS,
            jobs: 1,
            gate: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the global flags and copies the seed into every section.
    fn resolve_globals(&mut self, cli: &Cli) {
        if let Some(s) = cli.seed {
            self.seed = s;
        }
        if let Some(j) = cli.jobs {
            self.jobs = j;
        }
        self.train.seed = self.seed;
        self.phenotype.seed = self.seed;
    }

    pub fn model_config(&self, frames: usize) -> ModelConfig {
        let mut cfg = match &self.model {
            Some(m) => m.clone(),
            None => match self.model_preset {
                ModelPreset::Full => ModelConfig::full(self.variant, frames),
                ModelPreset::Compact => ModelConfig::compact(self.variant, frames),
            },
        };
        cfg.variant = self.variant;
        cfg.frames = frames;
        cfg
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `dir/a.poses.jsonl` → `dir/a` + `suffix`.
fn sibling(stream: &Path, suffix: &str) -> PathBuf {
    let name = stream.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".poses.jsonl")
        .or_else(|| name.strip_suffix(".jsonl"))
        .unwrap_or(&name);
    stream.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: InputRef,
    pub seed_override: Option<u64>,
    pub videos: Vec<String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn cmd_synth(args: &SynthArgs, seed: Option<u64>) -> Result<SynthManifest> {
    let mut spec = SynthSpecFile::read(&args.spec)?;
    if let Some(s) = seed {
        spec.reseed(s);
    }
    create_dir(&args.out)?;
    let mut episodes = Vec::new();
    let mut outputs = BTreeMap::new();
    let mut videos = Vec::new();
    for scene_spec in spec.scene_specs()? {
        let scene = generate_synthetic_scene(&scene_spec)?;
        let id = &scene_spec.video_id;
        let files = [
            (format!("{id}.poses.jsonl"), None),
            (format!("{id}.meta.json"), Some(serde_json::to_value(StreamMeta { video_id: id.clone(), fps: scene_spec.fps }).unwrap())),
            (format!("{id}.actors.json"), Some(serde_json::to_value(&scene.actors).unwrap())),
        ];
        for (name, json) in files {
            let path = args.out.join(&name);
            match json {
                None => write_pose_stream(&path, &scene.frames)?,
                Some(v) => write_json(&path, &v)?,
            }
            outputs.insert(name, sha256_file(&path)?);
        }
        episodes.extend(scene.episodes);
        videos.push(id.clone());
    }
    let ann = args.out.join("annotations.csv");
    write_annotations(&ann, &episodes)?;
    outputs.insert("annotations.csv".into(), sha256_file(&ann)?);
    let manifest = SynthManifest {
        spec: InputRef::relative_to(&args.spec, &args.out)?,
        seed_override: seed,
        videos,
        outputs,
    };
    write_json(&args.out.join("synth_manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn cmd_track(args: &TrackArgs, rc: &RunConfig) -> Result<TrackSet> {
    let frames = read_pose_stream(&args.stream)?;
    let out = args.out.clone().unwrap_or_else(|| sibling(&args.stream, ".tracks.jsonl"));
    let base = parent_dir(&out);
    let mut inputs = vec![InputRef::relative_to(&args.stream, &base)?];
    let meta_path = sibling(&args.stream, ".meta.json");
    let meta = if meta_path.exists() {
        inputs.push(InputRef::relative_to(&meta_path, &base)?);
        Some(StreamMeta::read(&meta_path)?)
    } else {
        None
    };
    let video_id = meta.as_ref().map(|m| m.video_id.clone()).unwrap_or_else(|| {
        let s = sibling(&args.stream, "");
        s.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let fps = args.fps.or(meta.map(|m| m.fps)).unwrap_or(crate::types::DEFAULT_FPS);
    if !(fps > 0.0) {
        return Err(Error::Config(format!("fps must be positive, got {fps}")));
    }
    let gate = args.gate.or(rc.gate);
    if matches!(gate, Some(g) if !(g > 0.0)) {
        return Err(Error::Config("gate must be positive".into()));
    }
    let mut set = TrackSet::build(video_id, fps, &frames, gate);
    let actors_path = args.actors.clone().or_else(|| {
        let p = sibling(&args.stream, ".actors.json");
        p.exists().then_some(p)
    });
    if let Some(p) = actors_path {
        let map: crate::synth::ActorMap = read_json(&p)?;
        set.assign_subjects(&map.lookup());
        inputs.push(InputRef::relative_to(&p, &base)?);
    }
    set.inputs = inputs;
    set.write(&out)?;
    Ok(set)
}

pub const WINDOWS_FORMAT: &str = "behavior-attn-windows";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub video_id: String,
    pub end_frame: u64,
    pub label: bool,
    pub categories: Vec<BehaviorCategory>,
    pub track_ids: Vec<u32>,
    pub actor_track_id: Option<u32>,
    /// Split role in each fold.
    pub folds: Vec<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowManifest {
    pub format: String,
    pub version: u32,
    pub config: WindowConfig,
    pub fold_count: usize,
    pub fold_seed: u64,
    pub fold_plan_hash: String,
    pub block_count: usize,
    /// Blocks are shuffled once and rotated by one fold's share per fold.
    pub fold_scheme: String,
    pub tracks: Vec<InputRef>,
    pub annotations: InputRef,
    pub dropped_empty: usize,
    pub dropped_horizon: usize,
    pub windows: Vec<WindowRecord>,
}

/// A window manifest with its windows rebuilt from the recorded tracks.
#[derive(Debug, Clone)]
pub struct LoadedWindows {
    pub path: PathBuf,
    pub manifest: WindowManifest,
    pub windows: Vec<WindowSample>,
    pub tracks: Vec<TrackSet>,
    pub plan: FoldPlan,
}

pub fn cmd_windows(args: &WindowsArgs, rc: &RunConfig, force: bool) -> Result<WindowManifest> {
    let mut cfg = rc.window.clone();
    if let Some(t) = args.task {
        cfg.task = t;
    }
    if let Some(v) = args.window_seconds {
        cfg.window_seconds = v;
    }
    if let Some(v) = args.stride_frames {
        cfg.stride_frames = v;
    }
    if let Some(v) = args.horizon_seconds {
        cfg.horizon_seconds = v;
    }
    let fold_count = args.folds.unwrap_or(rc.folds);
    let base = parent_dir(&args.out);
    let mut sets = Vec::new();
    let mut track_refs = Vec::new();
    for p in &args.tracks {
        let set = TrackSet::read(p)?;
        let dir = parent_dir(p);
        for i in &set.inputs {
            i.verify_in(&dir, force)?;
        }
        track_refs.push(InputRef::relative_to(p, &base)?);
        sets.push(set);
    }
    let episodes = read_annotations(&args.annotations)?;
    let ws = make_windows(&sets, &episodes, &cfg)?;
    let plan = plan_folds(&ws.windows, fold_count, rc.seed)?;
    let manifest = WindowManifest {
        format: WINDOWS_FORMAT.into(),
        version: 1,
        config: cfg,
        fold_count,
        fold_seed: rc.seed,
        fold_plan_hash: plan.hash(),
        block_count: plan.block_count,
        fold_scheme: "rotating_blocks".into(),
        tracks: track_refs,
        annotations: InputRef::relative_to(&args.annotations, &base)?,
        dropped_empty: ws.dropped_empty,
        dropped_horizon: ws.dropped_horizon,
        windows: ws
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| WindowRecord {
                video_id: w.video_id.clone(),
                end_frame: w.end_frame,
                label: w.label,
                categories: w.categories.iter().copied().collect(),
                track_ids: w.track_ids.clone(),
                actor_track_id: w.actor_track_id,
                folds: plan.roles.iter().map(|r| r[i]).collect(),
            })
            .collect(),
    };
    write_json(&args.out, &manifest)?;
    Ok(manifest)
}

/// Reads a window manifest, verifies its inputs and rebuilds the windows.
pub fn load_windows(path: &Path, force: bool) -> Result<LoadedWindows> {
    let manifest: WindowManifest = read_json(path)?;
    if manifest.format != WINDOWS_FORMAT {
        return Err(Error::Format(format!("{}: not a window manifest", path.display())));
    }
    let base = parent_dir(path);
    manifest.annotations.verify_in(&base, force)?;
    let mut tracks = Vec::new();
    for r in &manifest.tracks {
        r.verify_in(&base, force)?;
        tracks.push(TrackSet::read(&r.resolve(&base))?);
    }
    let episodes = read_annotations(&manifest.annotations.resolve(&base))?;
    let windows = make_windows(&tracks, &episodes, &manifest.config)?.windows;
    let matches = windows.len() == manifest.windows.len()
        && windows.iter().zip(&manifest.windows).all(|(w, r)| {
            w.video_id == r.video_id && w.end_frame == r.end_frame && w.label == r.label && w.track_ids == r.track_ids
        });
    if !matches {
        return Err(Error::Format(format!(
            "{}: windows rebuilt from the track files differ from the manifest",
            path.display()
        )));
    }
    let plan = FoldPlan {
        fold_count: manifest.fold_count,
        seed: manifest.fold_seed,
        roles: (0..manifest.fold_count)
            .map(|f| manifest.windows.iter().map(|r| r.folds[f]).collect())
            .collect(),
        block_count: manifest.block_count,
    };
    if plan.hash() != manifest.fold_plan_hash {
        return Err(Error::Format(format!("{}: fold plan hash mismatch", path.display())));
    }
    Ok(LoadedWindows {
        path: path.to_path_buf(),
        manifest,
        windows,
        tracks,
        plan,
    })
}

pub const TRAIN_MANIFEST: &str = "train_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedFold {
    pub fold: usize,
    pub seed: u64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub checkpoint: InputRef,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub config: RunConfig,
    pub model: ModelConfig,
    pub windows: InputRef,
    /// `"windows_manifest"` or `"replanned"`.
    pub fold_plan_source: String,
    pub fold_count: usize,
    pub fold_seed: u64,
    pub fold_plan_hash: String,
    pub folds: Vec<TrainedFold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub variant: Variant,
    pub config: ModelConfig,
    pub seed: u64,
    pub parameter_count: usize,
    pub activation: String,
    pub loss: String,
    pub init: String,
    pub training_manifest_sha256: String,
}

fn fold_plan_for(loaded: &LoadedWindows, fold_count: usize, seed: u64) -> Result<(FoldPlan, &'static str)> {
    if fold_count == loaded.plan.fold_count && seed == loaded.plan.seed {
        Ok((loaded.plan.clone(), "windows_manifest"))
    } else {
        Ok((plan_folds(&loaded.windows, fold_count, seed)?, "replanned"))
    }
}

pub fn cmd_train(args: &TrainArgs, rc: &mut RunConfig, force: bool, seed_given: bool) -> Result<TrainManifest> {
    if let Some(v) = args.variant {
        rc.variant = v;
    }
    if let Some(m) = args.model {
        rc.model_preset = m;
    }
    if let Some(v) = args.lr {
        rc.train.lr = v;
    }
    if let Some(v) = args.batch {
        rc.train.batch_size = v;
    }
    if let Some(v) = args.patience {
        rc.train.patience = v;
    }
    if let Some(v) = args.max_epochs {
        rc.train.max_epochs = v;
    }
    rc.train.validate()?;
    let loaded = load_windows(&args.windows, force)?;
    rc.window = loaded.manifest.config.clone();
    let fold_count = args.folds.unwrap_or(loaded.plan.fold_count);
    let fold_seed = if seed_given { rc.seed } else { loaded.plan.seed };
    let (plan, source) = fold_plan_for(&loaded, fold_count, fold_seed)?;
    rc.folds = plan.fold_count;
    let frames = loaded
        .windows
        .first()
        .ok_or_else(|| Error::Config("window manifest has no windows".into()))?
        .frames;
    let mcfg = rc.model_config(frames);
    mcfg.validate()?;

    let outcomes = {
        let mut out = Vec::new();
        let folds: Vec<usize> = (0..plan.fold_count).collect();
        for group in folds.chunks(rc.jobs.max(1)) {
            let results: Vec<Result<_>> = std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|&f| {
                        let (w, p, m, t) = (&loaded.windows, &plan, &mcfg, &rc.train);
                        s.spawn(move || train::train_fold(w, p, f, m, &train::fold_train_config(t, f)).map(|r| (f, r)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        out
    };

    create_dir(&args.out)?;
    let mut folds = Vec::new();
    let mut params_by_fold = Vec::new();
    for (f, (params, log)) in outcomes {
        let ckpt = args.out.join(format!("fold{f}.ckpt.json"));
        model::save_checkpoint(&ckpt, &mcfg, &params)?;
        folds.push(TrainedFold {
            fold: f,
            seed: train::fold_train_config(&rc.train, f).seed,
            train_windows: plan.indices(f, Split::Train).len(),
            val_windows: plan.indices(f, Split::Val).len(),
            test_windows: plan.indices(f, Split::Test).len(),
            checkpoint: InputRef::relative_to(&ckpt, &args.out)?,
            log,
        });
        params_by_fold.push(params);
    }
    let manifest = TrainManifest {
        config: rc.clone(),
        model: mcfg.clone(),
        windows: InputRef::relative_to(&args.windows, &args.out)?,
        fold_plan_source: source.into(),
        fold_count: plan.fold_count,
        fold_seed: plan.seed,
        fold_plan_hash: plan.hash(),
        folds,
    };
    let mpath = args.out.join(TRAIN_MANIFEST);
    write_json(&mpath, &manifest)?;
    let mhash = sha256_file(&mpath)?;
    for (fold, params) in manifest.folds.iter().zip(&params_by_fold) {
        let card = ModelCard {
            variant: mcfg.variant,
            config: mcfg.clone(),
            seed: fold.seed,
            parameter_count: params.param_count(),
            activation: "relu".into(),
            loss: "bce_with_logits".into(),
            init: "he_uniform".into(),
            training_manifest_sha256: mhash.clone(),
        };
        write_json(&args.out.join(format!("fold{}.card.json", fold.fold)), &card)?;
    }
    Ok(manifest)
}

/// Loads `train_manifest.json`; a missing manifest or checkpoint is a
/// not-found error naming the file.
pub fn load_train_run(dir: &Path, force: bool) -> Result<(TrainManifest, Vec<crate::model::ModelParams>)> {
    let mpath = dir.join(TRAIN_MANIFEST);
    if !mpath.exists() {
        return Err(Error::io(
            &mpath,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no trained checkpoints (run `train` first)"),
        ));
    }
    let manifest: TrainManifest = read_json(&mpath)?;
    let mut params = Vec::new();
    for f in &manifest.folds {
        let path = f.checkpoint.resolve(dir);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint missing"),
            ));
        }
        f.checkpoint.verify_in(dir, force)?;
        let (cfg, p) = model::load_checkpoint(&path)?;
        if cfg != manifest.model {
            return Err(Error::Format(format!("{}: config differs from the run manifest", path.display())));
        }
        params.push(p);
    }
    Ok((manifest, params))
}

fn clips_by_video(windows: &[WindowSample], limit: Option<usize>) -> Vec<Vec<WindowSample>> {
    let mut by: BTreeMap<&str, Vec<WindowSample>> = BTreeMap::new();
    for w in windows {
        by.entry(&w.video_id).or_default().push(w.clone());
    }
    let mut clips: Vec<_> = by.into_values().collect();
    if let Some(n) = limit {
        clips.truncate(n);
    }
    clips
}

pub fn cmd_eval(args: &EvalArgs, rc: &RunConfig, force: bool) -> Result<(EvalReport, String)> {
    let (manifest, params) = load_train_run(&args.checkpoints, force)?;
    let wpath = match &args.windows {
        Some(p) => p.clone(),
        None => {
            manifest.windows.verify_in(&args.checkpoints, force)?;
            manifest.windows.resolve(&args.checkpoints)
        }
    };
    let loaded = load_windows(&wpath, force)?;
    let (plan, _) = fold_plan_for(&loaded, manifest.fold_count, manifest.fold_seed)?;
    if plan.hash() != manifest.fold_plan_hash {
        return Err(Error::Format("fold plan of these windows differs from the trained run".into()));
    }
    let threshold = args.threshold.unwrap_or(rc.threshold);
    let mut outcomes = Vec::new();
    for (fold, p) in manifest.folds.iter().zip(params) {
        let test: Vec<&WindowSample> = plan.indices(fold.fold, Split::Test).into_iter().map(|i| &loaded.windows[i]).collect();
        let (metrics, predictions) = train::evaluate(&p, &manifest.model, &test, threshold, fold.fold)?;
        outcomes.push(train::FoldOutcome {
            fold: fold.fold,
            params: p,
            log: fold.log.clone(),
            metrics,
            predictions,
        });
    }
    let boot = args.bootstrap.or(rc.bootstrap_resamples).map(|n| (n, rc.seed));
    let mut report = train::build_report(manifest.model.variant, &loaded.windows, &plan, &outcomes, threshold, boot)?;
    if let Some(runs) = args.bench_runs {
        let test: Vec<WindowSample> = plan
            .indices(0, Split::Test)
            .into_iter()
            .map(|i| loaded.windows[i].clone())
            .collect();
        let clips = clips_by_video(&test, None);
        report.runtime_stats = Some(train::benchmark_inference(
            &outcomes[0].params,
            &manifest.model,
            &clips,
            runs,
            rc.bench_warmups,
        )?);
    }
    let out = args.out.clone().unwrap_or_else(|| args.checkpoints.join("eval_report.json"));
    write_json(&out, &report)?;
    let table = train::results_table(std::slice::from_ref(&report));
    Ok((report, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeOutput {
    #[serde(flatten)]
    pub result: PhenotypeResult,
    pub checkpoint: InputRef,
    pub windows: InputRef,
    pub silhouette: Option<Vec<(usize, f64)>>,
    pub svg: String,
}

pub fn cmd_phenotype(args: &PhenotypeArgs, rc: &RunConfig, force: bool) -> Result<PhenotypeOutput> {
    let mut pc = rc.phenotype.clone();
    if let Some(k) = args.k {
        pc.k = k;
    }
    if let Some(f) = args.floor {
        pc.floor = f;
    }
    let (mcfg, params) = model::load_checkpoint(&args.checkpoint)?;
    let loaded = load_windows(&args.windows, force)?;
    let result = phenotype::extract_phenotype(&params, &mcfg, &loaded.windows, &loaded.tracks, args.category, &pc)?;
    let silhouette = if args.sweep {
        let feats = phenotype::collect_attended_features(&params, &mcfg, &loaded.windows, args.category, pc.floor)?;
        let points: Vec<Vec<f64>> = feats.into_iter().map(|f| f.feature).collect();
        Some(phenotype::silhouette_sweep(&points, 2..=10, pc.seed, pc.max_iters, pc.metric)?)
    } else {
        None
    };
    let out = args.out.clone().unwrap_or_else(|| parent_dir(&args.checkpoint));
    create_dir(&out)?;
    let name = format!("phenotype_{}", args.category);
    let svg_path = out.join(format!("{name}.svg"));
    phenotype::write_svg(&svg_path, &result, &loaded.tracks)?;
    let output = PhenotypeOutput {
        result,
        checkpoint: InputRef::relative_to(&args.checkpoint, &out)?,
        windows: InputRef::relative_to(&args.windows, &out)?,
        silhouette,
        svg: format!("{name}.svg"),
    };
    write_json(&out.join(format!("{name}.json")), &output)?;
    Ok(output)
}

pub fn cmd_bench(args: &BenchArgs, rc: &RunConfig, force: bool) -> Result<train::RuntimeStats> {
    let (mcfg, params) = model::load_checkpoint(&args.checkpoint)?;
    let loaded = load_windows(&args.windows, force)?;
    let clips = clips_by_video(&loaded.windows, args.clips);
    let stats = train::benchmark_inference(&params, &mcfg, &clips, args.runs.unwrap_or(rc.bench_runs), rc.bench_warmups)?;
    if let Some(out) = &args.out {
        write_json(out, &stats)?;
    }
    Ok(stats)
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let mut rc = RunConfig::load(cli.config.as_deref())?;
    rc.resolve_globals(cli);
    match &cli.command {
        Command::Synth(a) => {
            let m = cmd_synth(a, cli.seed)?;
            println!("synth: {} videos → {}", m.videos.len(), a.out.display());
        }
        Command::Track(a) => {
            let set = cmd_track(a, &rc)?;
            println!("track: {} tracks for {}", set.tracks.len(), set.video_id);
        }
        Command::Windows(a) => {
            let m = cmd_windows(a, &rc, cli.force)?;
            let pos = m.windows.iter().filter(|w| w.label).count();
            println!(
                "windows: {} ({} positive), {} blocks, {} folds",
                m.windows.len(),
                pos,
                m.block_count,
                m.fold_count
            );
        }
        Command::Train(a) => {
            let m = cmd_train(a, &mut rc, cli.force, cli.seed.is_some())?;
            for f in &m.folds {
                println!(
                    "fold {}: best epoch {} of {}, val loss {:.4}",
                    f.fold,
                    f.log.best_epoch,
                    f.log.epochs.len(),
                    f.log.best_val_loss
                );
            }
        }
        Command::Eval(a) => {
            let (_, table) = cmd_eval(a, &rc, cli.force)?;
            print!("{table}");
        }
        Command::Phenotype(a) => {
            let o = cmd_phenotype(a, &rc, cli.force)?;
            let r = &o.result.representative;
            println!(
                "phenotype {}: {}@{} track {} ({} windows clustered)",
                o.result.category, r.window.video_id, r.window.end_frame, r.track_id, o.result.qualifying_windows
            );
        }
        Command::Bench(a) => {
            let s = cmd_bench(a, &rc, cli.force)?;
            println!("{}", serde_json::to_string(&s).expect("stats serialize"));
        }
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "not_found",
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::Format(_) => "format",
        Error::Config(_) => "config",
        Error::Shape(_) => "shape",
        Error::NumericFault(_) => "numeric_fault",
        Error::StaleInput { .. } => "stale_input",
        Error::Invalid(_) => "invalid",
    }
}

/// One-line JSON error record for stderr.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({
        "error": error_kind(e),
        "code": e.exit_code(),
        "message": e.to_string().replace('\n', " "),
    })
    .to_string()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = Error::Config(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprintln!("{}", error_line(&err));
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

