use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tprrnn::analysis::{self, AnalysisError};
use tprrnn::data::augment::{self, AugmentSpec};
use tprrnn::data::{self, synth, DataError, Split};
use tprrnn::model::{grad_check_model, ModelError};
use tprrnn::trainer::{self, Checkpoint, CheckpointError, TrainConfig, TrainError, DATA_ENV};
use tprrnn::{AblationConfig, ModelDims, TprRnn};

#[derive(Parser)]
#[command(name = "tprrnn", version, about = "Train and inspect a tensor-product-state recurrent QA model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the best checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Compare tape gradients with finite differences on a small model.
    Gradcheck(GradcheckArgs),
    /// Write the systematic-generalisation train/test cells.
    Augment(AugmentArgs),
    /// Similarity matrix and clustering of one learned representation.
    Analyze(AnalyzeArgs),
    /// Generate bAbI-format task files.
    Generate(GenerateArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModeArgs {
    /// Single task id (1..=20).
    #[arg(long)]
    task: Option<u8>,
    #[arg(long)]
    all_tasks: bool,
    #[arg(long)]
    systematic: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Memory operations: w, wm, wb or wmb.
    #[arg(long, default_value = "wmb")]
    ablation: AblationConfig,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    patience: Option<u32>,
    #[arg(long)]
    entity: Option<usize>,
    #[arg(long)]
    relation: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    symbol: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    /// Task to evaluate; defaults to every task found in the data directory.
    #[arg(long)]
    task: Option<u8>,
    #[arg(long, default_value = "test", value_parser = ["train", "valid", "test"])]
    split: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value = "wmb")]
    ablation: AblationConfig,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    /// Defaults to `<data>/systematic`, where `train --systematic` looks.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long)]
    task: u8,
    /// e1, e2, r1, r2, r3, q_n, q_r1, q_r2 or q_r3.
    #[arg(long, default_value = "e1")]
    rep: String,
    /// Number of clusters to report.
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated task ids.
    #[arg(long, value_delimiter = ',', default_values_t = synth::SUPPORTED_TASKS)]
    tasks: Vec<u8>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 9000)]
    train: usize,
    #[arg(long, default_value_t = 1000)]
    valid: usize,
    #[arg(long, default_value_t = 1000)]
    test: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("gradient check failed: relative error {err:e} exceeds {tol:e}")]
    GradCheck { err: f64, tol: f64 },
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Train(e.into())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Train(e.into())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Train(e.into())
    }
}

impl CliError {
    fn category(&self) -> (&'static str, u8) {
        let cat = match self {
            CliError::Train(e) => e.category(),
            CliError::Analysis(AnalysisError::Io { .. }) => "io",
            CliError::Analysis(AnalysisError::UnknownRep(_)) => "config",
            CliError::Analysis(_) => "model",
            CliError::GradCheck { .. } => "gradcheck",
        };
        let code = match cat {
            "data" => 3,
            "config" => 4,
            "numeric" => 5,
            "checkpoint" => 6,
            "io" => 7,
            "model" => 8,
            _ => 9,
        };
        (cat, code)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (cat, code) = e.category();
            eprintln!("error[{cat}]: {e}");
            ExitCode::from(code)
        }
    }
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match (a.mode.task, a.mode.all_tasks, a.mode.systematic) {
        (Some(t), _, _) => TrainConfig::single_task(t, &a.data),
        (_, true, _) => TrainConfig::all_tasks(&a.data),
        _ => TrainConfig::systematic(&a.data),
    };
    cfg.seed = a.seed;
    cfg.augment.seed = a.seed;
    cfg.ablation = a.ablation;
    if let Some(x) = a.batch {
        cfg.batch_size = x;
    }
    if let Some(x) = a.lr {
        cfg.optimizer.lr = x;
    }
    if let Some(x) = a.beta1 {
        cfg.optimizer.beta1 = x;
    }
    if let Some(x) = a.beta2 {
        cfg.optimizer.beta2 = x;
    }
    if let Some(x) = a.max_steps {
        cfg.max_steps = x;
    }
    if let Some(x) = a.eval_every {
        cfg.eval_every = x;
    }
    if let Some(x) = a.patience {
        cfg.patience = x;
    }
    if let Some(x) = a.entity {
        cfg.entity = x;
    }
    if let Some(x) = a.relation {
        cfg.relation = x;
    }
    if a.hidden.is_some() {
        cfg.hidden = a.hidden;
    }
    if a.symbol.is_some() {
        cfg.symbol = a.symbol;
    }

    let data = trainer::Dataset::load(&cfg)?;
    eprintln!(
        "train={} valid={} test={} vocab={} k={}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        data.vocab.len(),
        data.k
    );
    let outcome = trainer::train(&cfg, &data, &mut |r| {
        eprintln!(
            "step {:>7}  train {:.4}  val {:.4}  val_err {:6.2}%  lr {:.5}",
            r.step, r.train_loss, r.val_loss, r.val_error, r.lr
        );
    })?;
    trainer::write_run(&a.out, &outcome, &data.vocab, &cfg)?;
    println!("{}", outcome.metrics.summary());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "valid" => Split::Valid,
        _ => Split::Test,
    };
    let tasks = match a.task {
        Some(t) => vec![t],
        None => trainer::available_tasks(&a.data)?,
    };
    let mut samples = Vec::new();
    for t in tasks {
        let s = data::load_task(&a.data, t)?;
        samples.extend(match split {
            Split::Train => s.train,
            Split::Valid => s.valid,
            Split::Test => s.test,
        });
    }
    let r = trainer::evaluate_text(&ckpt, &samples)?;
    for (task, err) in r.per_task_error() {
        println!("task {task:>2}: {err:.2}%");
    }
    println!(
        "{} error={:.2}% loss={:.6} n={} failures(>5%)={}",
        split.name(),
        r.error_pct(),
        r.mean_loss(),
        r.n,
        r.failures(5.0)
    );
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let dims = ModelDims {
        vocab: 8,
        symbol: 8,
        hidden: 6,
        entity: 4,
        relation: 3,
        max_sentence_len: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let model = TprRnn::new(dims, a.ablation, &mut rng);
    let story = vec![vec![1, 2, 3], vec![4, 2, 5, 6], vec![7, 3]];
    let err = grad_check_model(&model, &story, &[3, 1, 7], 5, a.eps)?;
    println!("full model ({} parameters): max relative error {err:e}", model.params.num_scalars());
    if err < a.tolerance {
        Ok(())
    } else {
        Err(CliError::GradCheck { err, tol: a.tolerance })
    }
}

fn augment_cmd(a: AugmentArgs) -> Result<(), CliError> {
    let spec = AugmentSpec {
        pairs_per_cell: a.pairs,
        seed: a.seed,
        ..AugmentSpec::default()
    };
    let mut train = std::collections::BTreeMap::new();
    let mut test = std::collections::BTreeMap::new();
    for &t in &spec.task_pool {
        let s = data::load_task(&a.data, t)?;
        train.insert(t, s.train);
        test.insert(t, s.test);
    }
    let aug = augment::augment_systematic(&train, &test, &spec)?;
    let out = a.out.unwrap_or_else(|| a.data.join("systematic"));
    augment::write_augmented(&out, &aug)?;
    for (entity, tasks) in &aug.train_tasks {
        println!("{entity}: trains on {tasks:?}");
    }
    println!(
        "{} test cells, {} train cells, written to {}",
        aug.test.len(),
        aug.train.len(),
        out.display()
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let role = analysis::parse_role(&a.rep)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let model = ckpt.model()?;
    let valid = data::load_task(&a.data, a.task)?.valid;
    let result = analysis::analyze(&model, &ckpt.vocab, &valid, role)?;
    result.export(&a.out)?;
    let labels = result.dendrogram.cut(a.clusters);
    let (intra, inter) = analysis::cluster_separation(&result.sim, &labels);
    println!(
        "{} unique sentences; {} clusters sizes {:?}; intra {intra:.3} inter {inter:.3}",
        result.reps.sentences.len(),
        a.clusters,
        analysis::cluster_sizes(&labels)
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let sizes = synth::SplitSizes {
        train: a.train,
        valid: a.valid,
        test: a.test,
    };
    synth::write_dataset(&a.out, &a.tasks, sizes, a.seed)?;
    println!("wrote tasks {:?} to {}", a.tasks, a.out.display());
    Ok(())
}
