//! Python bindings: tensors and the memory primitives, task parsing and
//! generation, training, and checkpointed models.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tprrnn::data::{self, synth, TextSample};
use tprrnn::model::{self, MlpRole};
use tprrnn::trainer::{self, Dataset};
use tprrnn::{tensor, AblationConfig, Checkpoint, ModelDims, TprRnn, TrainConfig, Vocabulary};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Dense row-major tensor of f64.
#[pyclass(name = "Tensor", module = "tprrnn_py", frozen)]
struct PyTensor {
    inner: tensor::Tensor,
}

impl PyTensor {
    fn wrap(inner: tensor::Tensor) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(dims: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        tensor::Tensor::new(dims, data).map(Self::wrap).map_err(value_err)
    }

    #[staticmethod]
    fn zeros(dims: Vec<usize>) -> PyResult<Self> {
        tensor::Tensor::zeros(&dims).map(Self::wrap).map_err(value_err)
    }

    #[staticmethod]
    fn vector(data: Vec<f64>) -> PyResult<Self> {
        tensor::Tensor::vector(data).map(Self::wrap).map_err(value_err)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    /// Flat row-major copy of the entries.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        let dims = self.inner.dims();
        if index.len() != dims.len() || index.iter().zip(dims).any(|(i, d)| i >= d) {
            return Err(PyIndexError::new_err(format!("index {index:?} out of range for {dims:?}")));
        }
        let flat = index.iter().zip(dims).fold(0, |acc, (i, d)| acc * d + i);
        Ok(self.inner.data()[flat])
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn dot(&self, other: PyRef<'_, PyTensor>) -> PyResult<f64> {
        self.inner.dot(&other.inner).map_err(value_err)
    }

    fn __add__(&self, other: PyRef<'_, PyTensor>) -> PyResult<Self> {
        self.inner.add(&other.inner).map(Self::wrap).map_err(value_err)
    }

    fn __sub__(&self, other: PyRef<'_, PyTensor>) -> PyResult<Self> {
        self.inner.sub(&other.inner).map(Self::wrap).map_err(value_err)
    }

    fn __mul__(&self, c: f64) -> PyResult<Self> {
        self.inner.scale(c).map(Self::wrap).map_err(value_err)
    }

    fn hadamard(&self, other: PyRef<'_, PyTensor>) -> PyResult<Self> {
        self.inner.hadamard(&other.inner).map(Self::wrap).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(dims={:?})", self.inner.dims())
    }
}

#[pyfunction]
fn outer2(a: PyRef<'_, PyTensor>, b: PyRef<'_, PyTensor>) -> PyResult<PyTensor> {
    tensor::outer2(&a.inner, &b.inner).map(PyTensor::wrap).map_err(value_err)
}

#[pyfunction]
fn outer3(a: PyRef<'_, PyTensor>, b: PyRef<'_, PyTensor>, c: PyRef<'_, PyTensor>) -> PyResult<PyTensor> {
    tensor::outer3(&a.inner, &b.inner, &c.inner).map(PyTensor::wrap).map_err(value_err)
}

#[pyfunction]
fn unbind2(t: PyRef<'_, PyTensor>, u: PyRef<'_, PyTensor>) -> PyResult<PyTensor> {
    tensor::unbind2(&t.inner, &u.inner).map(PyTensor::wrap).map_err(value_err)
}

#[pyfunction]
fn unbind3(f: PyRef<'_, PyTensor>, e: PyRef<'_, PyTensor>, r: PyRef<'_, PyTensor>) -> PyResult<PyTensor> {
    tensor::unbind3(&f.inner, &e.inner, &r.inner).map(PyTensor::wrap).map_err(value_err)
}

/// Contracts mode `j` of `a` with mode `k` of the combined modes, 1-based.
#[pyfunction]
fn tensor_inner(a: PyRef<'_, PyTensor>, b: PyRef<'_, PyTensor>, j: usize, k: usize) -> PyResult<PyTensor> {
    tensor::tensor_inner(&a.inner, &b.inner, j, k).map(PyTensor::wrap).map_err(value_err)
}

/// Returns `(delta, w_hat)`.
#[pyfunction]
fn write_delta(
    f: PyRef<'_, PyTensor>,
    e1: PyRef<'_, PyTensor>,
    r1: PyRef<'_, PyTensor>,
    e2: PyRef<'_, PyTensor>,
) -> PyResult<(PyTensor, PyTensor)> {
    let (d, w) = model::write_delta(&f.inner, &e1.inner, &r1.inner, &e2.inner).map_err(value_err)?;
    Ok((PyTensor::wrap(d), PyTensor::wrap(w)))
}

#[pyfunction]
fn move_delta(
    f: PyRef<'_, PyTensor>,
    e1: PyRef<'_, PyTensor>,
    r2: PyRef<'_, PyTensor>,
    w_hat: PyRef<'_, PyTensor>,
) -> PyResult<PyTensor> {
    model::move_delta(&f.inner, &e1.inner, &r2.inner, &w_hat.inner)
        .map(PyTensor::wrap)
        .map_err(value_err)
}

#[pyfunction]
fn backlink_delta(
    f: PyRef<'_, PyTensor>,
    e1: PyRef<'_, PyTensor>,
    e2: PyRef<'_, PyTensor>,
    r3: PyRef<'_, PyTensor>,
) -> PyResult<PyTensor> {
    model::backlink_delta(&f.inner, &e1.inner, &e2.inner, &r3.inner)
        .map(PyTensor::wrap)
        .map_err(value_err)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    data::tokenize(text)
}

type PySample = (Vec<Vec<String>>, Vec<String>, String, u8);

fn to_py_sample(s: TextSample) -> PySample {
    (s.story, s.question, s.answer, s.task_id)
}

/// Parses task-file text into `(story, question, answer, task_id)` tuples.
#[pyfunction]
#[pyo3(signature = (text, task_id=1))]
fn parse_task(text: &str, task_id: u8) -> PyResult<Vec<PySample>> {
    let samples = data::parse_task_str(text, task_id).map_err(value_err)?;
    Ok(samples.into_iter().map(to_py_sample).collect())
}

/// Text of whole generated stories holding at least `n_questions` questions.
#[pyfunction]
#[pyo3(signature = (task, n_questions, seed=0))]
fn generate_task(task: u8, n_questions: usize, seed: u64) -> PyResult<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = synth::generate_task(task, n_questions, &mut rng).map_err(value_err)?;
    Ok(lines.join("\n") + "\n")
}

/// Writes train/valid/test files for `tasks` into `dir`.
#[pyfunction]
#[pyo3(signature = (dir, tasks, train=9000, valid=1000, test=1000, seed=0))]
fn write_dataset(dir: PathBuf, tasks: Vec<u8>, train: usize, valid: usize, test: usize, seed: u64) -> PyResult<()> {
    let sizes = synth::SplitSizes { train, valid, test };
    synth::write_dataset(&dir, &tasks, sizes, seed).map_err(value_err)
}

/// A model together with its vocabulary.
#[pyclass(name = "Model", module = "tprrnn_py", frozen)]
struct PyModel {
    model: TprRnn,
    vocab: Vocabulary,
}

impl PyModel {
    fn ids(&self, text: &str) -> PyResult<Vec<usize>> {
        self.vocab.encode(&data::tokenize(text)).map_err(value_err)
    }

    fn story_ids(&self, story: &[String]) -> PyResult<Vec<Vec<usize>>> {
        story.iter().map(|s| self.ids(s)).collect()
    }
}

#[pymethods]
impl PyModel {
    /// Fresh single-task model over the given tokens (id 0 is padding).
    #[new]
    #[pyo3(signature = (tokens, max_sentence_len, seed=0, ablation="wmb"))]
    fn new(tokens: Vec<String>, max_sentence_len: usize, seed: u64, ablation: &str) -> PyResult<Self> {
        let vocab = Vocabulary::from_tokens(tokens);
        let ablation: AblationConfig = ablation.parse().map_err(value_err)?;
        let dims = ModelDims::single_task(vocab.len(), max_sentence_len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            model: TprRnn::new(dims, ablation, &mut rng),
            vocab,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::load(&path).map_err(value_err)?;
        let model = ckpt.model().map_err(value_err)?;
        Ok(Self {
            model,
            vocab: ckpt.vocab,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::new(&self.model, &self.vocab, None).save(&path).map_err(value_err)
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.vocab.tokens().to_vec()
    }

    /// `(vocab, symbol, hidden, entity, relation, max_sentence_len)`
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize, usize, usize) {
        let d = self.model.dims;
        (d.vocab, d.symbol, d.hidden, d.entity, d.relation, d.max_sentence_len)
    }

    #[getter]
    fn ablation(&self) -> String {
        self.model.ablation.to_string()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.model.params.num_scalars()
    }

    /// Memory state after reading the story, one sentence per string.
    fn state(&self, story: Vec<String>) -> PyResult<PyTensor> {
        let ids = self.story_ids(&story)?;
        self.model.story_state(&ids).map(PyTensor::wrap).map_err(value_err)
    }

    fn logits(&self, story: Vec<String>, question: &str) -> PyResult<Vec<f64>> {
        let ids = self.story_ids(&story)?;
        let q = self.ids(question)?;
        Ok(self.model.logits(&ids, &q).map_err(value_err)?.into_data())
    }

    fn predict(&self, story: Vec<String>, question: &str) -> PyResult<String> {
        let ids = self.story_ids(&story)?;
        let q = self.ids(question)?;
        let id = self.model.predict(&ids, &q).map_err(value_err)?;
        Ok(self.vocab.token(id).unwrap_or_default().to_string())
    }

    fn loss(&self, story: Vec<String>, question: &str, answer: &str) -> PyResult<f64> {
        let ids = self.story_ids(&story)?;
        let q = self.ids(question)?;
        let a = self.ids(answer)?;
        let [a] = a[..] else {
            return Err(PyValueError::new_err("answer must be a single token"));
        };
        self.model.loss(&ids, &q, a).map_err(value_err)
    }

    /// Output of one MLP (`e1`, `r1`, ..., `r3`) for a sentence.
    fn representation(&self, role: &str, sentence: &str) -> PyResult<Vec<f64>> {
        let role = MlpRole::from_name(role).ok_or_else(|| PyValueError::new_err(format!("unknown role {role:?}")))?;
        let ids = self.ids(sentence)?;
        Ok(self.model.representation(role, &ids).map_err(value_err)?.into_data())
    }

    /// Worst relative error of the analytic gradient against central
    /// differences on one example.
    #[pyo3(signature = (story, question, answer, eps=1e-5))]
    fn grad_check(&self, py: Python<'_>, story: Vec<String>, question: &str, answer: &str, eps: f64) -> PyResult<f64> {
        let ids = self.story_ids(&story)?;
        let q = self.ids(question)?;
        let a = self.vocab.id(answer).ok_or_else(|| PyValueError::new_err(format!("unknown answer {answer:?}")))?;
        py.detach(|| model::grad_check_model(&self.model, &ids, &q, a, eps)).map_err(value_err)
    }

    /// `(error_pct, mean_loss)` on a task file.
    #[pyo3(signature = (path, task_id=1))]
    fn evaluate(&self, py: Python<'_>, path: PathBuf, task_id: u8) -> PyResult<(f64, f64)> {
        let samples = data::parse_task_file(&path, Some(task_id)).map_err(value_err)?;
        let enc = data::encode_samples(&self.vocab, &samples).map_err(value_err)?;
        let r = py.detach(|| trainer::evaluate(&self.model, &enc)).map_err(value_err)?;
        Ok((r.error_pct(), r.mean_loss()))
    }

    fn __repr__(&self) -> String {
        format!("Model(vocab={}, ablation={})", self.vocab.len(), self.model.ablation)
    }
}

/// Trains a single-task model and returns it with a summary dict holding
/// `steps`, `test_error`, `loss_trace` and `lr_trace`. With `out_dir` the
/// checkpoint and metrics files are written there as well.
#[pyfunction]
#[pyo3(signature = (task, data_dir, max_steps=1000, seed=0, eval_every=250, batch_size=128, ablation="wmb", out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    task: u8,
    data_dir: PathBuf,
    max_steps: u64,
    seed: u64,
    eval_every: u64,
    batch_size: usize,
    ablation: &str,
    out_dir: Option<PathBuf>,
) -> PyResult<(PyModel, Bound<'py, pyo3::types::PyDict>)> {
    let mut config = TrainConfig::single_task(task, data_dir);
    config.max_steps = max_steps;
    config.seed = seed;
    config.eval_every = eval_every;
    config.batch_size = batch_size;
    config.ablation = ablation.parse().map_err(value_err)?;
    let (outcome, vocab) = py
        .detach(|| -> trainer::Result<_> {
            let data = Dataset::load(&config)?;
            let outcome = trainer::train(&config, &data, &mut |_| {})?;
            if let Some(dir) = &out_dir {
                trainer::write_run(dir, &outcome, &data.vocab, &config)?;
            }
            Ok((outcome, data.vocab))
        })
        .map_err(|e| PyRuntimeError::new_err(format!("{} error: {e}", e.category())))?;
    let summary = pyo3::types::PyDict::new(py);
    let m = &outcome.metrics;
    summary.set_item("steps", m.steps)?;
    summary.set_item("test_error", m.test_error)?;
    summary.set_item("loss_trace", m.loss_trace.clone())?;
    summary.set_item("lr_trace", m.lr_trace.clone())?;
    let model = PyModel {
        model: outcome.model,
        vocab,
    };
    Ok((model, summary))
}

#[pymodule]
fn tprrnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(outer2, m)?)?;
    m.add_function(wrap_pyfunction!(outer3, m)?)?;
    m.add_function(wrap_pyfunction!(unbind2, m)?)?;
    m.add_function(wrap_pyfunction!(unbind3, m)?)?;
    m.add_function(wrap_pyfunction!(tensor_inner, m)?)?;
    m.add_function(wrap_pyfunction!(write_delta, m)?)?;
    m.add_function(wrap_pyfunction!(move_delta, m)?)?;
    m.add_function(wrap_pyfunction!(backlink_delta, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse_task, m)?)?;
    m.add_function(wrap_pyfunction!(generate_task, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
