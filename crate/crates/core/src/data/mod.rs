//! bAbI ingestion: line parsing, sample extraction, vocabulary and batching.
//!
//! Files use the public line format. A statement is `ID text`; a question is
//! `ID question?<TAB>answer<TAB>supporting ids`. An ID of 1 starts a new
//! story. Each question yields one sample whose story is every statement of
//! the current story seen so far; questions never enter the story.

pub mod augment;
pub mod synth;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::encoder::{EncoderError, Vocabulary, PAD_ID};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line_no}: {reason}: {line:?}")]
    Malformed {
        line_no: usize,
        line: String,
        reason: &'static str,
    },
    #[error("line {line_no}: question without an answer field")]
    MissingAnswer { line_no: usize },
    #[error("no {split} file for task {task} in {dir}")]
    MissingSplit {
        task: u8,
        split: &'static str,
        dir: PathBuf,
    },
    #[error("task {0} is outside 1..=20")]
    BadTask(u8),
    #[error(transparent)]
    Encode(#[from] EncoderError),
    #[error("augmentation: {0}")]
    Augment(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One parsed line of a task file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawStoryLine {
    pub line_id: usize,
    pub text: String,
    pub answer: Option<String>,
    pub supporting: Option<Vec<usize>>,
}

impl RawStoryLine {
    pub fn is_question(&self) -> bool {
        self.answer.is_some()
    }
}

/// A story/question/answer triple in token form, before vocabulary lookup.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TextSample {
    pub story: Vec<Vec<String>>,
    pub question: Vec<String>,
    pub answer: String,
    pub task_id: u8,
}

impl TextSample {
    pub fn contains_token(&self, token: &str) -> bool {
        self.question.iter().any(|t| t == token) || self.story.iter().flatten().any(|t| t == token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.story
            .iter()
            .flatten()
            .chain(&self.question)
            .map(String::as_str)
            .chain(std::iter::once(self.answer.as_str()))
    }
}

/// A sample with every token replaced by its vocabulary id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub story: Vec<Vec<usize>>,
    pub question: Vec<usize>,
    pub answer: usize,
    pub task_id: u8,
}

/// Lowercases and splits off `.`, `?`, `!`, `,` and `;` as their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if matches!(ch, '.' | '?' | '!' | ',' | ';') {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

pub fn parse_line(line: &str, line_no: usize) -> Result<RawStoryLine> {
    let malformed = |reason| DataError::Malformed {
        line_no,
        line: line.to_string(),
        reason,
    };
    let line = line.trim_end_matches(['\r', '\n']);
    let (id_str, rest) = line
        .trim_start()
        .split_once(' ')
        .ok_or_else(|| malformed("expected `ID text`"))?;
    let line_id: usize = id_str.parse().map_err(|_| malformed("no leading integer id"))?;
    let mut fields = rest.split('\t');
    let text = fields.next().unwrap_or_default().trim().to_string();
    if text.is_empty() {
        return Err(malformed("empty sentence"));
    }
    let Some(answer) = fields.next() else {
        return Ok(RawStoryLine {
            line_id,
            text,
            answer: None,
            supporting: None,
        });
    };
    let answer = answer.trim();
    if answer.is_empty() {
        return Err(DataError::MissingAnswer { line_no });
    }
    let supporting = match fields.next().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            s.split_whitespace()
                .map(|x| x.parse())
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| malformed("bad supporting ids"))?,
        ),
    };
    Ok(RawStoryLine {
        line_id,
        text,
        answer: Some(answer.to_lowercase()),
        supporting,
    })
}

/// Parses the contents of one task file into samples. A line containing a
/// tab is a question; anything else is a statement.
pub fn parse_task_str(contents: &str, task_id: u8) -> Result<Vec<TextSample>> {
    let mut samples = Vec::new();
    let mut story: Vec<Vec<String>> = Vec::new();
    let mut prev_id = 0usize;
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw = parse_line(line, i + 1)?;
        if raw.line_id == 1 || raw.line_id <= prev_id {
            story.clear();
        }
        prev_id = raw.line_id;
        let tokens = tokenize(&raw.text);
        match raw.answer {
            Some(answer) => samples.push(TextSample {
                story: story.clone(),
                question: tokens,
                answer,
                task_id,
            }),
            None => story.push(tokens),
        }
    }
    Ok(samples)
}

/// Task number from a file name such as `qa12_conjunction_train.txt`.
pub fn task_from_filename(path: &Path) -> Option<u8> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("qa")?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

pub fn parse_task_file(path: &Path, task_id: Option<u8>) -> Result<Vec<TextSample>> {
    let contents = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let task = task_id.or_else(|| task_from_filename(path)).unwrap_or(0);
    parse_task_str(&contents, task)
}

/// Writes samples in the line format, one story per sample, so that
/// [`parse_task_file`] reproduces them.
pub fn write_task_file(path: &Path, samples: &[TextSample]) -> Result<()> {
    fs::write(path, format_samples(samples)).map_err(|e| DataError::io(path, e))
}

pub fn format_samples(samples: &[TextSample]) -> String {
    let mut out = String::new();
    for s in samples {
        for (i, sent) in s.story.iter().enumerate() {
            out.push_str(&format!("{} {}\n", i + 1, detokenize(sent)));
        }
        out.push_str(&format!(
            "{} {}\t{}\t\n",
            s.story.len() + 1,
            detokenize(&s.question),
            s.answer
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Finds `qa{task}_*_{split}.txt` (or `qa{task}_{split}.txt`) in `dir`.
pub fn find_split_file(dir: &Path, task: u8, split: Split) -> Result<Option<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let suffix = format!("_{}.txt", split.name());
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(&suffix))
                && task_from_filename(p) == Some(task)
        })
        .collect();
    found.sort();
    Ok(found.into_iter().next())
}

#[derive(Debug, Clone, Default)]
pub struct TaskSplits {
    pub train: Vec<TextSample>,
    pub valid: Vec<TextSample>,
    pub test: Vec<TextSample>,
}

/// Loads the three splits of one task. When no validation file exists the
/// last tenth of the training stories is held out instead.
pub fn load_task(dir: &Path, task: u8) -> Result<TaskSplits> {
    if !(1..=20).contains(&task) {
        return Err(DataError::BadTask(task));
    }
    let load = |split| -> Result<Option<Vec<TextSample>>> {
        find_split_file(dir, task, split)?
            .map(|p| parse_task_file(&p, Some(task)))
            .transpose()
    };
    let missing = |split: Split| DataError::MissingSplit {
        task,
        split: split.name(),
        dir: dir.to_path_buf(),
    };
    let mut train = load(Split::Train)?.ok_or_else(|| missing(Split::Train))?;
    let test = load(Split::Test)?.ok_or_else(|| missing(Split::Test))?;
    let valid = match load(Split::Valid)? {
        Some(v) => v,
        None => {
            let cut = train.len() - train.len() / 10;
            train.split_off(cut)
        }
    };
    Ok(TaskSplits { train, valid, test })
}

/// Vocabulary over every story, question and answer token (answers kept
/// atomic), and `k`, the longest sentence.
pub fn build_vocab<'a, I>(samples: I) -> (Vocabulary, usize)
where
    I: IntoIterator<Item = &'a TextSample>,
{
    let mut tokens = Vec::new();
    let mut k = 0;
    for s in samples {
        for sent in s.story.iter().chain(std::iter::once(&s.question)) {
            k = k.max(sent.len());
        }
        tokens.extend(s.tokens().map(str::to_string));
    }
    (Vocabulary::from_tokens(tokens), k)
}

pub fn encode_sample(vocab: &Vocabulary, s: &TextSample) -> Result<Sample> {
    Ok(Sample {
        story: s
            .story
            .iter()
            .map(|sent| vocab.encode(sent))
            .collect::<std::result::Result<_, _>>()?,
        question: vocab.encode(&s.question)?,
        answer: vocab.encode(&[s.answer.as_str()])?[0],
        task_id: s.task_id,
    })
}

pub fn encode_samples(vocab: &Vocabulary, samples: &[TextSample]) -> Result<Vec<Sample>> {
    samples.iter().map(|s| encode_sample(vocab, s)).collect()
}

/// A padded batch. Every story is extended with all-padding sentences to the
/// longest story in the batch and every sentence is padded to `k`;
/// `masks[b][t]` is false for the padding sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub stories: Vec<Vec<Vec<usize>>>,
    pub masks: Vec<Vec<bool>>,
    pub questions: Vec<Vec<usize>>,
    pub answers: Vec<usize>,
    pub task_ids: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn story_len(&self) -> usize {
        self.stories.first().map_or(0, Vec::len)
    }
}

fn pad_sentence(s: &[usize], k: usize) -> Vec<usize> {
    let mut out = s.to_vec();
    out.resize(k.max(s.len()), PAD_ID);
    out
}

pub fn make_batch(samples: &[Sample], indices: &[usize], k: usize) -> Batch {
    let max_len = indices.iter().map(|&i| samples[i].story.len()).max().unwrap_or(0);
    let mut batch = Batch {
        indices: indices.to_vec(),
        stories: Vec::with_capacity(indices.len()),
        masks: Vec::with_capacity(indices.len()),
        questions: Vec::with_capacity(indices.len()),
        answers: Vec::with_capacity(indices.len()),
        task_ids: Vec::with_capacity(indices.len()),
    };
    for &i in indices {
        let s = &samples[i];
        let mut story: Vec<Vec<usize>> = s.story.iter().map(|x| pad_sentence(x, k)).collect();
        let mut mask = vec![true; story.len()];
        story.resize(max_len, vec![PAD_ID; k]);
        mask.resize(max_len, false);
        batch.stories.push(story);
        batch.masks.push(mask);
        batch.questions.push(pad_sentence(&s.question, k));
        batch.answers.push(s.answer);
        batch.task_ids.push(s.task_id);
    }
    batch
}

/// Endless stream of shuffled batches; the order is reshuffled at every
/// epoch boundary and depends only on the rng state.
#[derive(Debug)]
pub struct Batcher<R> {
    len: usize,
    batch_size: usize,
    k: usize,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    rng: R,
}

impl<R: Rng> Batcher<R> {
    pub fn new(len: usize, batch_size: usize, k: usize, rng: R) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        Self {
            len,
            batch_size,
            k,
            order: Vec::new(),
            pos: 0,
            epoch: 0,
            rng,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = self.order[self.pos..end].to_vec();
        self.pos = end;
        idx
    }

    pub fn next_batch(&mut self, samples: &[Sample]) -> Batch {
        debug_assert_eq!(samples.len(), self.len);
        let idx = self.next_indices();
        make_batch(samples, &idx, self.k)
    }
}

/// One epoch of batches in shuffled order.
pub fn make_batches<R: Rng>(samples: &[Sample], batch_size: usize, k: usize, rng: &mut R) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|idx| make_batch(samples, idx, k))
        .collect()
}
