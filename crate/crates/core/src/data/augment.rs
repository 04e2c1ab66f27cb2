//! Systematic-generalisation splits: five new entity names are injected into
//! the eight tasks that share the original four actors. Every (entity, task)
//! cell is tested; each entity is trained on only a subset of the tasks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{parse_task_file, write_task_file, DataError, Result, TextSample};

pub const ORIGINAL_ENTITIES: [&str; 4] = ["mary", "john", "daniel", "sandra"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub entities: Vec<String>,
    pub task_pool: Vec<u8>,
    pub pairs_per_cell: usize,
    pub question_fraction: f64,
    /// Number of tasks each entity (same order as `entities`) is trained on.
    pub train_task_counts: Vec<usize>,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            entities: ["alex", "glenn", "jordan", "mike", "logan"].map(String::from).to_vec(),
            task_pool: vec![1, 6, 7, 8, 9, 11, 12, 13],
            pairs_per_cell: 500,
            question_fraction: 0.2,
            train_task_counts: vec![8, 6, 4, 2, 1],
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// Pairs per cell that must mention the new entity in the question.
    pub fn question_pairs(&self) -> usize {
        (self.question_fraction * self.pairs_per_cell as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.entities.len() != self.train_task_counts.len() {
            return Err(DataError::Augment(format!(
                "{} entities but {} train-task counts",
                self.entities.len(),
                self.train_task_counts.len()
            )));
        }
        if let Some(&n) = self.train_task_counts.iter().find(|&&n| n > self.task_pool.len()) {
            return Err(DataError::Augment(format!(
                "train-task count {n} exceeds the pool of {} tasks",
                self.task_pool.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.question_fraction) {
            return Err(DataError::Augment("question fraction outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentCell {
    pub entity: String,
    pub task: u8,
    pub samples: Vec<TextSample>,
    /// How many samples mention `entity` in the question.
    pub in_question: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub train: Vec<AugmentCell>,
    pub test: Vec<AugmentCell>,
    /// Training tasks per entity, in `spec.entities` order.
    pub train_tasks: Vec<(String, Vec<u8>)>,
}

impl Augmented {
    pub fn train_samples(&self) -> impl Iterator<Item = &TextSample> {
        self.train.iter().flat_map(|c| &c.samples)
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &TextSample> {
        self.test.iter().flat_map(|c| &c.samples)
    }
}

fn rename(s: &TextSample, from: &str, to: &str) -> TextSample {
    let sub = |t: &String| if t == from { to.to_string() } else { t.clone() };
    TextSample {
        story: s.story.iter().map(|sent| sent.iter().map(sub).collect()).collect(),
        question: s.question.iter().map(sub).collect(),
        answer: sub(&s.answer),
        task_id: s.task_id,
    }
}

/// Draws one cell: `n_q` pairs where a renamed original entity occurs in the
/// question, then `n - n_q` where it occurs only in the story. The pool is
/// walked in shuffled order and reshuffled if exhausted.
fn sample_cell<R: Rng>(pool: &[TextSample], entity: &str, n: usize, n_q: usize, rng: &mut R) -> Result<Vec<TextSample>> {
    let mut with_q = Vec::with_capacity(n_q);
    let mut story_only = Vec::with_capacity(n - n_q);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    while with_q.len() < n_q || story_only.len() < n - n_q {
        order.shuffle(rng);
        let before = with_q.len() + story_only.len();
        for &i in &order {
            let s = &pool[i];
            let in_q: Vec<&str> = ORIGINAL_ENTITIES
                .into_iter()
                .filter(|e| s.question.iter().any(|t| t == e))
                .collect();
            let only_story: Vec<&str> = ORIGINAL_ENTITIES
                .into_iter()
                .filter(|e| !in_q.contains(e) && s.story.iter().flatten().any(|t| t == e))
                .collect();
            if with_q.len() < n_q && !in_q.is_empty() {
                let from = in_q.choose(rng).expect("nonempty");
                with_q.push(rename(s, from, entity));
            } else if story_only.len() < n - n_q && !only_story.is_empty() {
                let from = only_story.choose(rng).expect("nonempty");
                story_only.push(rename(s, from, entity));
            }
            if with_q.len() == n_q && story_only.len() == n - n_q {
                break;
            }
        }
        if with_q.len() + story_only.len() == before {
            return Err(DataError::Augment(format!(
                "task pool cannot supply {n_q} question and {} story-only pairs",
                n - n_q
            )));
        }
    }
    let mut out = with_q;
    out.extend(story_only);
    out.shuffle(rng);
    Ok(out)
}

/// Builds the augmented splits. Test cells are drawn from `test_base`,
/// training cells from `train_base`, so no augmented test pair is derived
/// from a training story.
pub fn augment_systematic(
    train_base: &BTreeMap<u8, Vec<TextSample>>,
    test_base: &BTreeMap<u8, Vec<TextSample>>,
    spec: &AugmentSpec,
) -> Result<Augmented> {
    spec.validate()?;
    for entity in &spec.entities {
        let collides = train_base
            .values()
            .chain(test_base.values())
            .flatten()
            .any(|s| s.tokens().any(|t| t == entity));
        if collides {
            return Err(DataError::Augment(format!("entity {entity:?} already occurs in the data")));
        }
    }
    let pool = |base: &BTreeMap<u8, Vec<TextSample>>, task: u8| -> Result<Vec<TextSample>> {
        base.get(&task)
            .cloned()
            .ok_or_else(|| DataError::Augment(format!("task {task} missing from the base data")))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_tasks: Vec<(String, Vec<u8>)> = spec
        .entities
        .iter()
        .zip(&spec.train_task_counts)
        .map(|(e, &n)| {
            let mut tasks: Vec<u8> = spec.task_pool.choose_multiple(&mut rng, n).copied().collect();
            tasks.sort_unstable();
            (e.clone(), tasks)
        })
        .collect();

    let n = spec.pairs_per_cell;
    let n_q = spec.question_pairs();
    let mut test = Vec::new();
    let mut train = Vec::new();
    for (entity, tasks) in &train_tasks {
        for &task in &spec.task_pool {
            let samples = sample_cell(&pool(test_base, task)?, entity, n, n_q, &mut rng)?;
            test.push(AugmentCell {
                entity: entity.clone(),
                task,
                samples,
                in_question: n_q,
            });
            if tasks.contains(&task) {
                let samples = sample_cell(&pool(train_base, task)?, entity, n, n_q, &mut rng)?;
                train.push(AugmentCell {
                    entity: entity.clone(),
                    task,
                    samples,
                    in_question: n_q,
                });
            }
        }
    }
    Ok(Augmented {
        train,
        test,
        train_tasks,
    })
}

fn cell_path(dir: &Path, entity: &str, task: u8, split: &str) -> std::path::PathBuf {
    dir.join(entity).join(format!("qa{task}_systematic_{split}.txt"))
}

/// Writes every cell as `{dir}/{entity}/qa{task}_systematic_{train|test}.txt`
/// plus `train_tasks.json`.
pub fn write_augmented(dir: &Path, aug: &Augmented) -> Result<()> {
    for (cells, split) in [(&aug.train, "train"), (&aug.test, "test")] {
        for c in cells {
            let path = cell_path(dir, &c.entity, c.task, split);
            let parent = path.parent().expect("entity dir");
            fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
            write_task_file(&path, &c.samples)?;
        }
    }
    let manifest: BTreeMap<&str, &Vec<u8>> = aug.train_tasks.iter().map(|(e, t)| (e.as_str(), t)).collect();
    let path = dir.join("train_tasks.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Augment(e.to_string()))?;
    fs::write(&path, json).map_err(|e| DataError::io(&path, e))
}

/// Reads back what [`write_augmented`] produced.
pub fn read_augmented(dir: &Path, spec: &AugmentSpec) -> Result<Augmented> {
    let path = dir.join("train_tasks.json");
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let manifest: BTreeMap<String, Vec<u8>> =
        serde_json::from_str(&text).map_err(|e| DataError::Augment(e.to_string()))?;
    let mut out = Augmented {
        train: Vec::new(),
        test: Vec::new(),
        train_tasks: Vec::new(),
    };
    for entity in &spec.entities {
        let tasks = manifest
            .get(entity)
            .cloned()
            .ok_or_else(|| DataError::Augment(format!("manifest lacks entity {entity:?}")))?;
        for &task in &spec.task_pool {
            for split in ["train", "test"] {
                if split == "train" && !tasks.contains(&task) {
                    continue;
                }
                let samples = parse_task_file(&cell_path(dir, entity, task, split), Some(task))?;
                let in_question = samples
                    .iter()
                    .filter(|s| s.question.iter().any(|t| t == entity))
                    .count();
                let cell = AugmentCell {
                    entity: entity.clone(),
                    task,
                    samples,
                    in_question,
                };
                if split == "train" {
                    out.train.push(cell);
                } else {
                    out.test.push(cell);
                }
            }
        }
        out.train_tasks.push((entity.clone(), tasks));
    }
    Ok(out)
}
