//! Run presets, the training loop with periodic validation and early
//! stopping, evaluation, and run artifacts.

pub mod checkpoint;
pub mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::augment::{self, AugmentSpec};
use crate::data::{self, Batch, Batcher, DataError, Sample, TextSample};
use crate::encoder::Vocabulary;
use crate::model::{AblationConfig, ModelDims, ModelError, ModelParams, TprRnn};
use crate::optimizer::{nan_policy, NadamConfig, NanAction, Nadam, OptimError, Schedule};

pub use checkpoint::{Checkpoint, CheckpointConfig, CheckpointError};
pub use metrics::{CellAccuracy, EvalRecord, EvalResult, RunMetrics};

/// Environment variable that overrides the data directory.
pub const DATA_ENV: &str = "TPRRNN_BABI_DIR";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss or gradient at step {step} after warm-up")]
    NonFinite { step: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    /// Short failure category, used for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            TrainError::Data(_) => "data",
            TrainError::Model(_) => "model",
            TrainError::Optim(_) | TrainError::NonFinite { .. } => "numeric",
            TrainError::Checkpoint(_) => "checkpoint",
            TrainError::Config(_) => "config",
            TrainError::Io { .. } => "io",
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleTask(u8),
    AllTasks,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// `None` means equal to the vocabulary size.
    pub symbol: Option<usize>,
    /// `None` means equal to the vocabulary size.
    pub hidden: Option<usize>,
    pub entity: usize,
    pub relation: usize,
    pub optimizer: NadamConfig,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    /// Evaluations without improvement before stopping.
    pub patience: u32,
    pub seed: u64,
    pub ablation: AblationConfig,
    pub data_dir: PathBuf,
    pub augment: AugmentSpec,
    /// Reinitialisations allowed during warm-up before giving up.
    pub max_reinits: u32,
}

impl TrainConfig {
    pub fn single_task(task: u8, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::SingleTask(task),
            symbol: None,
            hidden: None,
            entity: 15,
            relation: 10,
            optimizer: NadamConfig::SINGLE_TASK,
            batch_size: 128,
            max_steps: 100_000,
            eval_every: 1000,
            patience: 20,
            seed: 0,
            ablation: AblationConfig::FULL,
            data_dir: data_dir.into(),
            augment: AugmentSpec::default(),
            max_reinits: 10,
        }
    }

    pub fn all_tasks(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::AllTasks,
            hidden: Some(90),
            entity: 40,
            relation: 20,
            optimizer: NadamConfig::ALL_TASKS,
            batch_size: 32,
            max_steps: 250_000,
            ..Self::single_task(1, data_dir)
        }
    }

    pub fn systematic(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Systematic,
            ..Self::all_tasks(data_dir)
        }
    }

    pub fn model_dims(&self, vocab: usize, k: usize) -> ModelDims {
        ModelDims {
            vocab,
            symbol: self.symbol.unwrap_or(vocab),
            hidden: self.hidden.unwrap_or(vocab),
            entity: self.entity,
            relation: self.relation,
            max_sentence_len: k,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval cadence must be positive");
        }
        if self.entity == 0 || self.relation == 0 || self.hidden == Some(0) || self.symbol == Some(0) {
            return bad("dimensions must be positive");
        }
        if !(self.optimizer.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Augmented test samples of one (entity, task) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCell {
    pub entity: String,
    pub task: u8,
    pub trained: bool,
    pub samples: Vec<Sample>,
}

/// Encoded splits sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub k: usize,
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
    pub cells: Vec<TestCell>,
}

/// Raw text splits before encoding.
#[derive(Debug, Clone, Default)]
pub struct TextSplits {
    pub train: Vec<TextSample>,
    pub valid: Vec<TextSample>,
    pub test: Vec<TextSample>,
    /// (entity, task, trained, samples)
    pub cells: Vec<(String, u8, bool, Vec<TextSample>)>,
}

/// Tasks in `1..=20` for which `dir` has train and test files.
pub fn available_tasks(dir: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for t in 1..=20 {
        if data::find_split_file(dir, t, data::Split::Train)?.is_some()
            && data::find_split_file(dir, t, data::Split::Test)?.is_some()
        {
            out.push(t);
        }
    }
    Ok(out)
}

impl TextSplits {
    pub fn load(config: &TrainConfig) -> Result<Self> {
        let dir = &config.data_dir;
        let mut out = TextSplits::default();
        let add = |out: &mut TextSplits, task| -> Result<()> {
            let s = data::load_task(dir, task)?;
            out.train.extend(s.train);
            out.valid.extend(s.valid);
            out.test.extend(s.test);
            Ok(())
        };
        match config.mode {
            Mode::SingleTask(t) => add(&mut out, t)?,
            Mode::AllTasks => {
                let tasks = available_tasks(dir)?;
                if tasks.is_empty() {
                    return Err(TrainError::Config(format!("no task files in {}", dir.display())));
                }
                for t in tasks {
                    add(&mut out, t)?;
                }
            }
            Mode::Systematic => {
                let spec = &config.augment;
                let mut train_base = BTreeMap::new();
                let mut test_base = BTreeMap::new();
                for &t in &spec.task_pool {
                    let s = data::load_task(dir, t)?;
                    out.train.extend(s.train.iter().cloned());
                    out.valid.extend(s.valid);
                    out.test.extend(s.test.iter().cloned());
                    train_base.insert(t, s.train);
                    test_base.insert(t, s.test);
                }
                let aug_dir = dir.join("systematic");
                let aug = if aug_dir.join("train_tasks.json").exists() {
                    augment::read_augmented(&aug_dir, spec)?
                } else {
                    augment::augment_systematic(&train_base, &test_base, spec)?
                };
                out.train.extend(aug.train_samples().cloned());
                for c in aug.test {
                    let trained = aug.train.iter().any(|t| t.entity == c.entity && t.task == c.task);
                    out.cells.push((c.entity, c.task, trained, c.samples));
                }
            }
        }
        Ok(out)
    }

    /// Builds the vocabulary over every split and encodes them.
    pub fn encode(&self) -> Result<Dataset> {
        let all = self
            .train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .chain(self.cells.iter().flat_map(|c| &c.3));
        let (vocab, k) = data::build_vocab(all);
        let enc = |s: &[TextSample]| data::encode_samples(&vocab, s);
        let cells = self
            .cells
            .iter()
            .map(|(entity, task, trained, s)| {
                Ok(TestCell {
                    entity: entity.clone(),
                    task: *task,
                    trained: *trained,
                    samples: enc(s)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            train: enc(&self.train)?,
            valid: enc(&self.valid)?,
            test: enc(&self.test)?,
            cells,
            vocab,
            k,
        })
    }
}

impl Dataset {
    pub fn load(config: &TrainConfig) -> Result<Self> {
        TextSplits::load(config)?.encode()
    }
}

/// Mean loss and mean gradient over a batch. Samples are processed in
/// parallel, each on its own tape; the reduction runs in batch order so the
/// result does not depend on the thread count.
pub fn batch_loss_and_grad(model: &TprRnn, batch: &Batch) -> std::result::Result<(f64, ModelParams), ModelError> {
    let per: Vec<_> = (0..batch.len())
        .into_par_iter()
        .map(|i| model.loss_and_grad(&batch.stories[i], Some(&batch.masks[i]), &batch.questions[i], batch.answers[i]))
        .collect::<std::result::Result<_, _>>()?;
    let mut grads = model.params.zeros_like();
    let mut loss = 0.0;
    for g in &per {
        loss += g.loss;
        for (acc, x) in grads.iter_mut().zip(g.grads.iter()) {
            acc.add_assign(x)?;
        }
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    for t in grads.iter_mut() {
        for x in t.data_mut() {
            *x *= scale;
        }
    }
    Ok((loss * scale, grads))
}

/// Argmax accuracy and mean cross-entropy over `samples`.
pub fn evaluate(model: &TprRnn, samples: &[Sample]) -> std::result::Result<EvalResult, ModelError> {
    let per: Vec<(f64, bool, u8)> = samples
        .par_iter()
        .map(|s| {
            let logits = model.logits(&s.story, &s.question)?;
            let loss = crate::model::loss(&logits, s.answer)?;
            let right = crate::model::argmax(logits.data()) == s.answer;
            Ok((loss, right, s.task_id))
        })
        .collect::<std::result::Result<_, ModelError>>()?;
    let mut r = EvalResult::default();
    for (loss, right, task) in per {
        r.n += 1;
        r.loss_sum += loss;
        let e = r.per_task.entry(task).or_default();
        e.0 += 1;
        if !right {
            r.wrong += 1;
            e.1 += 1;
        }
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation evaluation.
    pub model: TprRnn,
    pub metrics: RunMetrics,
}

/// Trains on `data.train`, validating every `eval_every` steps. The model
/// with the lowest validation error (ties: lower validation loss) is kept and
/// evaluated on the test split and any augmented cells.
pub fn train(config: &TrainConfig, data: &Dataset, observer: &mut dyn FnMut(&EvalRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(TrainError::Config("training and validation splits must be nonempty".into()));
    }
    let dims = config.model_dims(data.vocab.len(), data.k);
    let init = |reinit: u32| TprRnn::new(dims, config.ablation, &mut ChaCha8Rng::seed_from_u64(config.seed + reinit as u64));
    let mut model = init(0);
    let mut batcher = Batcher::new(
        data.train.len(),
        config.batch_size,
        data.k,
        ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
    );
    let mut opt = Nadam::new(&config.optimizer);
    let mut schedule = Schedule::new(config.optimizer.lr);
    let mut metrics = RunMetrics::default();

    let mut step = 0u64;
    let mut total = 0u64;
    let mut best: Option<(f64, f64, u64, ModelParams)> = None;
    let mut bad_evals = 0u32;
    let (mut run_loss, mut run_n) = (0.0, 0usize);

    while total < config.max_steps {
        step += 1;
        total += 1;
        let batch = batcher.next_batch(&data.train);
        let lr = schedule.effective_lr(step, None);
        let result = batch_loss_and_grad(&model, &batch).map_err(TrainError::from).and_then(|(loss, grads)| {
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { step: total });
            }
            opt.step(model.params.iter_mut(), grads.iter(), lr)?;
            Ok(loss)
        });
        let loss = match result {
            Ok(l) => l,
            Err(e) => {
                let numeric = match &e {
                    TrainError::NonFinite { .. } => true,
                    TrainError::Optim(OptimError::NonFiniteGradient(_) | OptimError::NonFiniteUpdate(_)) => true,
                    TrainError::Model(m) => m.is_non_finite(),
                    _ => false,
                };
                if !numeric {
                    return Err(e);
                }
                match nan_policy(step, &schedule) {
                    NanAction::Reinitialize if metrics.reinit_count < config.max_reinits => {
                        metrics.reinit_count += 1;
                        model = init(metrics.reinit_count);
                        opt.reset();
                        schedule.reset();
                        step = 0;
                        continue;
                    }
                    _ => return Err(TrainError::NonFinite { step: total }),
                }
            }
        };
        metrics.loss_trace.push(loss);
        metrics.lr_trace.push(lr);
        run_loss += loss;
        run_n += 1;

        if total % config.eval_every == 0 || total == config.max_steps {
            let v = evaluate(&model, &data.valid)?;
            let val_loss = v.mean_loss();
            schedule.observe_validation(val_loss);
            let record = EvalRecord {
                step: total,
                train_loss: run_loss / run_n.max(1) as f64,
                val_loss,
                val_error: v.error_pct(),
                per_task_error: v.per_task_error(),
                lr,
                reinit_count: metrics.reinit_count,
            };
            run_loss = 0.0;
            run_n = 0;
            observer(&record);
            let improved = best
                .as_ref()
                .is_none_or(|(err, l, _, _)| (record.val_error, val_loss) < (*err, *l));
            if improved {
                best = Some((record.val_error, val_loss, total, model.params.clone()));
                bad_evals = 0;
            } else {
                bad_evals += 1;
            }
            metrics.records.push(record);
            if bad_evals >= config.patience {
                metrics.stopped_early = true;
                break;
            }
        }
    }
    metrics.steps = total;

    let (best_err, _, best_step, params) = best.expect("at least one evaluation runs");
    let model = TprRnn::from_params(dims, config.ablation, params)?;
    metrics.best_step = best_step;
    metrics.best_val_error = best_err;
    let t = evaluate(&model, &data.test)?;
    metrics.test_error = t.error_pct();
    metrics.test_per_task = t.per_task_error();
    for c in &data.cells {
        let r = evaluate(&model, &c.samples)?;
        metrics.grid.push(CellAccuracy {
            entity: c.entity.clone(),
            task: c.task,
            trained: c.trained,
            accuracy: 1.0 - r.error_pct() / 100.0,
        });
    }
    Ok(TrainOutcome { model, metrics })
}

/// Writes `best.ckpt`, `metrics.csv`, `metrics.json`, `summary.txt` and,
/// for systematic runs, `grid.csv` into `dir`.
pub fn write_run(dir: &Path, outcome: &TrainOutcome, vocab: &Vocabulary, config: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    Checkpoint::new(&outcome.model, vocab, Some(config.clone())).save(&dir.join("best.ckpt"))?;
    let m = &outcome.metrics;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| TrainError::io(&p, e))
    };
    write("metrics.csv", m.to_csv())?;
    write(
        "metrics.json",
        serde_json::to_string_pretty(m).map_err(|e| TrainError::Config(e.to_string()))?,
    )?;
    write("summary.txt", m.summary() + "\n")?;
    if !m.grid.is_empty() {
        write("grid.csv", m.grid_csv())?;
    }
    Ok(())
}

/// Encodes text samples with a checkpoint's vocabulary and evaluates them.
pub fn evaluate_text(ckpt: &Checkpoint, samples: &[TextSample]) -> Result<EvalResult> {
    let model = ckpt.model()?;
    let enc = data::encode_samples(&ckpt.vocab, samples)?;
    Ok(evaluate(&model, &enc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;

    fn tiny_dataset(task: u8) -> (TrainConfig, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        let sizes = synth::SplitSizes {
            train: 200,
            valid: 50,
            test: 50,
        };
        synth::write_dataset(dir.path(), &[task], sizes, 4).unwrap();
        let mut cfg = TrainConfig::single_task(task, dir.path());
        cfg.batch_size = 8;
        cfg.entity = 4;
        cfg.relation = 3;
        cfg.hidden = Some(8);
        cfg.symbol = Some(8);
        cfg.max_steps = 6;
        cfg.eval_every = 3;
        let data = Dataset::load(&cfg).unwrap();
        (cfg, data)
    }

    #[test]
    fn short_run_is_deterministic() {
        let (cfg, data) = tiny_dataset(1);
        let a = train(&cfg, &data, &mut |_| {}).unwrap();
        let b = train(&cfg, &data, &mut |_| {}).unwrap();
        assert_eq!(a.metrics.loss_trace.len(), 6);
        let bits = |m: &RunMetrics| m.loss_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.metrics), bits(&b.metrics));
        assert_eq!(a.metrics.records.len(), 2);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn best_checkpoint_has_lowest_val_error() {
        let (mut cfg, data) = tiny_dataset(20);
        cfg.max_steps = 12;
        cfg.eval_every = 2;
        let out = train(&cfg, &data, &mut |_| {}).unwrap();
        let min = out.metrics.records.iter().map(|r| r.val_error).fold(f64::INFINITY, f64::min);
        assert_eq!(out.metrics.best_val_error, min);
        let again = evaluate(&out.model, &data.valid).unwrap();
        assert_eq!(again.error_pct(), min);
    }

    #[test]
    fn bad_config_rejected() {
        let (mut cfg, data) = tiny_dataset(1);
        cfg.batch_size = 0;
        assert!(matches!(train(&cfg, &data, &mut |_| {}), Err(TrainError::Config(_))));
    }

    #[test]
    fn presets() {
        let s = TrainConfig::single_task(3, "x");
        assert_eq!((s.entity, s.relation, s.hidden, s.batch_size), (15, 10, None, 128));
        assert_eq!(s.model_dims(30, 7).hidden, 30);
        let a = TrainConfig::all_tasks("x");
        assert_eq!((a.entity, a.relation, a.hidden, a.batch_size), (40, 20, Some(90), 32));
        assert_eq!(a.optimizer, NadamConfig::ALL_TASKS);
    }
}
