//! Subcommand definitions and their implementations.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use heartgen_core::baselines::{copy_frame0, load_pca, pca_fit, save_pca, DEFAULT_COMPONENTS};
use heartgen_core::datakit::{
    load_dataset, make_dataset, read_sequence_dir, save_dataset, write_sequence_dir, ConditionProfile,
    ConditionSampler, Dataset, Gender, PhantomParams, Split, SplitFractions, SubjectRecord,
};
use heartgen_core::engine::{
    complete_sequence, condition_sweep, dataset_trajectories, export_latent_trajectories, generate_sequences,
    generated_trajectories, train_with, write_history_jsonl, write_latent_csv, CompletionMode, Projector,
    SweepFactor, TrainConfig,
};
use heartgen_core::metrics::{evaluate_completion, evaluate_generation, phenotypes, write_report, PhenotypeRecord};
use heartgen_core::model::{load_checkpoint, save_checkpoint, ModelCheckpoint, ModelConfig};

use crate::api::SweepResponse;

/// A problem with the command line that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "heartgen", version, about = "Conditional generation of 4-D cardiac anatomy")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    MakePhantoms(MakePhantomsArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Complete a cycle from its first frame.
    Complete(CompleteArgs),
    /// Generate cycles from conditions alone.
    Generate(GenerateArgs),
    /// Evaluate completion or generation on the test split.
    Evaluate(EvaluateArgs),
    /// Vary one condition with everything else fixed.
    Sweep(SweepArgs),
    /// Export latent trajectories as CSV.
    ExportLatents(ExportArgs),
    /// Serve the model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Model checkpoint.
    #[arg(long, env = "HEARTGEN_CHECKPOINT")]
    pub checkpoint: PathBuf,
}

impl CheckpointArg {
    fn load(&self) -> Result<ModelCheckpoint> {
        load_checkpoint(&self.checkpoint).with_context(|| format!("loading {}", self.checkpoint.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConditionArgs {
    #[arg(long)]
    pub age: Option<u32>,
    #[arg(long)]
    pub gender: Option<Gender>,
    /// Weight in kg.
    #[arg(long)]
    pub weight: Option<f64>,
    /// Height in cm.
    #[arg(long)]
    pub height: Option<f64>,
    /// Systolic blood pressure in mmHg.
    #[arg(long)]
    pub sbp: Option<f64>,
}

impl ConditionArgs {
    /// Fills unset fields from `fallback`; every field is required without one.
    fn resolve(&self, fallback: Option<&ConditionProfile>) -> Result<ConditionProfile> {
        let missing = |name: &str| usage(format!("--{name} is required"));
        let pick = |v: Option<f64>, f: Option<f64>, name: &str| v.or(f).ok_or_else(|| missing(name));
        let p = ConditionProfile {
            age_years: self.age.or(fallback.map(|f| f.age_years)).ok_or_else(|| missing("age"))?,
            gender: self.gender.or(fallback.map(|f| f.gender)).ok_or_else(|| missing("gender"))?,
            weight_kg: pick(self.weight, fallback.map(|f| f.weight_kg), "weight")?,
            height_cm: pick(self.height, fallback.map(|f| f.height_cm), "height")?,
            sbp_mmhg: pick(self.sbp, fallback.map(|f| f.sbp_mmhg), "sbp")?,
        };
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated sizes, e.g. 32,32,16".to_string())
}

fn parse_spacing(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated spacings in mm".to_string())
}

#[derive(Debug, Args)]
pub struct MakePhantomsArgs {
    #[arg(short = 'n', long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid size as X,Y,Z.
    #[arg(long, value_parser = parse_dims, default_value = "32,32,16")]
    pub dims: [usize; 3],
    /// Voxel spacing in mm as X,Y,Z.
    #[arg(long, value_parser = parse_spacing, default_value = "5,5,8")]
    pub spacing: [f64; 3],
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Output dataset directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the checkpoint.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many seconds of training (checked between epochs).
    #[arg(long)]
    pub max_seconds: Option<f64>,
    /// Use the tiny test architecture.
    #[arg(long)]
    pub miniature: bool,
    /// Per-epoch history; defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    /// Sequence directory; only frame 0 is read.
    #[arg(long)]
    pub input: PathBuf,
    /// Overrides for the conditions stored with the input.
    #[command(flatten)]
    pub conditions: ConditionArgs,
    #[arg(long, default_value = "posterior_mean")]
    pub mode: CompletionMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    #[command(flatten)]
    pub conditions: ConditionArgs,
    #[arg(short = 'n', long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Completion,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Model,
    Pca,
    Copy,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Dataset directory; the test split is evaluated.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "model")]
    pub method: Method,
    /// Required for the model method.
    #[arg(long, env = "HEARTGEN_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// PCA model file; fitted on the train split when absent.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub pca_components: usize,
    /// Samples per subject for generation.
    #[arg(short = 'n', long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value = "posterior_mean")]
    pub mode: CompletionMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    #[command(flatten)]
    pub base: ConditionArgs,
    #[arg(long)]
    pub factor: SweepFactor,
    /// Comma-separated factor values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(short = 'n', long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw fresh latents for every value instead of reusing them.
    #[arg(long)]
    pub unpaired: bool,
    /// Also write every generated sequence.
    #[arg(long)]
    pub save_samples: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    /// Dataset directory; exports posterior-mean trajectories of a split.
    #[arg(long, conflicts_with = "generate")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Export this many generated samples for the given conditions instead.
    #[arg(long)]
    pub generate: Option<usize>,
    #[command(flatten)]
    pub conditions: ConditionArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "pca2d")]
    pub projector: Projector,
    /// Output CSV file.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load(dir: &Path) -> Result<Dataset> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakePhantoms(a) => make_phantoms(a),
        Command::Train(a) => train(a),
        Command::Complete(a) => complete(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportLatents(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn make_phantoms(a: MakePhantomsArgs) -> Result<()> {
    let params = PhantomParams {
        dims: a.dims,
        spacing_mm: a.spacing,
        t_frames: a.frames,
        ..PhantomParams::default()
    };
    let data = make_dataset(&params, a.n, &ConditionSampler::default(), a.seed, SplitFractions::default())?;
    save_dataset(&data, &a.out)?;
    write_json(&a.out.join("phantom_params.json"), &params)?;
    println!("{} subjects written to {} (checksum {})", data.len(), a.out.display(), data.checksum());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load(&a.data)?;
    let first = data.records.first().context("dataset is empty")?;
    let base = if a.miniature { ModelConfig::miniature() } else { ModelConfig::default() };
    let model = ModelConfig {
        grid_dims: first.sequence.dims(),
        t_frames: first.sequence.t_frames(),
        beta: a.beta,
        ..base
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        patience: a.patience,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        model,
        ..TrainConfig::default()
    };
    let budget = a.max_seconds;
    let (ckpt, history) = train_with(&data, &cfg, &mut |e, _| {
        println!(
            "epoch {:>4}  train {:.5}  val {:.5}  kl {:.3}{}",
            e.epoch,
            e.train.total,
            e.val.total,
            e.train.kl,
            if e.improved { "  *" } else { "" }
        );
        budget.is_none_or(|b| e.wall_time_s < b)
    })?;
    save_checkpoint(&ckpt, &a.out)?;
    let hist_path = a.history.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".history.jsonl");
        PathBuf::from(s)
    });
    write_history_jsonl(&history, &hist_path)?;
    println!(
        "best epoch {} (val {:.5}); checkpoint {} ({})",
        history.best_epoch,
        history.best().val.total,
        a.out.display(),
        ckpt.hash()?
    );
    Ok(())
}

fn complete(a: CompleteArgs) -> Result<()> {
    let ckpt = a.checkpoint.load()?;
    let (seq, stored) = read_sequence_dir(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let profile = a.conditions.resolve(stored.as_ref())?;
    let out = complete_sequence(&ckpt, seq.frame(0), &profile, a.mode, a.seed)?;
    write_sequence_dir(&a.out, &out, Some(&profile))?;
    write_json(&a.out.join("phenotypes.json"), &phenotypes(&out).ok())?;
    println!("completed {} frames into {}", out.t_frames(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SampleSummary {
    sample: String,
    phenotypes: Option<PhenotypeRecord>,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let profile = a.conditions.resolve(None)?;
    if a.n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let ckpt = a.checkpoint.load()?;
    let seqs = generate_sequences(&ckpt, &profile, a.n, a.seed)?;
    let mut summary = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let name = format!("sample_{i:03}");
        write_sequence_dir(&a.out.join(&name), s, Some(&profile))?;
        summary.push(SampleSummary {
            sample: name,
            phenotypes: phenotypes(s).ok(),
        });
    }
    write_json(&a.out.join("phenotypes.json"), &summary)?;
    println!("{} sequences written to {}", seqs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = load(&a.data)?;
    let test: Vec<&SubjectRecord> = data.split(Split::Test).collect();
    let ckpt = match a.method {
        Method::Model => {
            let path = a.checkpoint.as_ref().ok_or_else(|| usage("--checkpoint is required for the model method"))?;
            Some(load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?)
        }
        _ => None,
    };
    let (report, rows) = match (a.task, a.method) {
        (Task::Completion, Method::Model) => {
            let ckpt = ckpt.as_ref().expect("loaded above");
            let f = |r: &SubjectRecord| complete_sequence(ckpt, r.sequence.frame(0), &r.profile, a.mode, a.seed);
            evaluate_completion(&f, &test)?
        }
        (Task::Completion, Method::Copy) => {
            let f = |r: &SubjectRecord| copy_frame0(r.sequence.frame(0), r.sequence.t_frames(), r.sequence.frame_period_s());
            evaluate_completion(&f, &test)?
        }
        (Task::Completion, Method::Pca) => {
            let model = match &a.pca {
                Some(p) => load_pca(p)?,
                None => {
                    let train: Vec<&SubjectRecord> = data.split(Split::Train).collect();
                    let m = pca_fit(&train, a.pca_components.min(train.len()))?;
                    save_pca(&m, &a.out.join("pca.model"))?;
                    m
                }
            };
            let f = |r: &SubjectRecord| model.complete(r.sequence.frame(0));
            evaluate_completion(&f, &test)?
        }
        (Task::Generation, Method::Model) => {
            let ckpt = ckpt.as_ref().expect("loaded above");
            let g = |r: &SubjectRecord, n: usize, seed: u64| generate_sequences(ckpt, &r.profile, n, seed);
            evaluate_generation(&g, &test, a.n, a.seed)?
        }
        (Task::Generation, _) => return Err(usage("generation can only be evaluated for the model method")),
    };
    write_report(&report, &rows, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let base = a.base.resolve(None)?;
    let ckpt = a.checkpoint.load()?;
    let res = condition_sweep(&ckpt, &base, a.factor, &a.values, a.n, a.seed, !a.unpaired)?;
    write_json(&a.out.join("sweep.json"), &SweepResponse::from_result(&res, None))?;
    if a.save_samples {
        for (j, e) in res.entries.iter().enumerate() {
            for (i, s) in e.sequences.iter().enumerate() {
                write_sequence_dir(&a.out.join(format!("value_{j:02}/sample_{i:03}")), s, Some(&e.profile))?;
            }
        }
    }
    for e in &res.entries {
        println!(
            "{:>8}  lvedv {:.1} ± {:.1} mL  lvm {:.1} ± {:.1} g",
            e.value, e.mean.lvedv_ml, e.ci95.lvedv_ml, e.mean.lvm_g, e.ci95.lvm_g
        );
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let split = Split::ALL
        .into_iter()
        .find(|s| s.name() == a.split)
        .ok_or_else(|| usage(format!("unknown split {:?} (train, val, test)", a.split)))?;
    let profile = match (&a.data, a.generate) {
        (Some(_), None) => None,
        (None, Some(_)) => Some(a.conditions.resolve(None)?),
        _ => return Err(usage("pass either --data or --generate")),
    };
    let ckpt = a.checkpoint.load()?;
    let traj = match (&a.data, profile) {
        (Some(dir), _) => {
            let data = load(dir)?;
            let recs: Vec<&SubjectRecord> = data.split(split).collect();
            dataset_trajectories(&ckpt, &recs)?
        }
        (None, Some(p)) => generated_trajectories(&ckpt, &p, a.generate.unwrap_or(0), a.seed)?,
        (None, None) => unreachable!("checked above"),
    };
    let table = export_latent_trajectories(&traj, a.projector)?;
    write_latent_csv(&table, &a.out)?;
    println!("{} rows written to {}", table.rows.len(), a.out.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let ckpt = a.checkpoint.load()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::server::serve(ckpt, a.bind))?;
    Ok(())
}
