//! Representation extraction, cosine-similarity matrices and average-linkage
//! hierarchical clustering over the unique sentences of a split.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{detokenize, TextSample};
use crate::encoder::{EncoderError, Vocabulary};
use crate::model::{MlpRole, ModelError, TprRnn};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown representation {0:?}; expected e1, e2, r1, r2, r3, q_n, q_r1, q_r2 or q_r3")]
    UnknownRep(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// One row per unique sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMatrix {
    pub role: MlpRole,
    pub sentences: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Unique sentences of `samples`, in first-seen order. Question roles
/// (`q_*`) use the questions, every other role the story statements.
pub fn unique_sentences(samples: &[TextSample], questions: bool) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in samples {
        let sents: Box<dyn Iterator<Item = &Vec<String>>> = if questions {
            Box::new(std::iter::once(&s.question))
        } else {
            Box::new(s.story.iter())
        };
        for sent in sents {
            if seen.insert(sent.clone()) {
                out.push(sent.clone());
            }
        }
    }
    out
}

pub fn parse_role(name: &str) -> Result<MlpRole> {
    MlpRole::from_name(name).ok_or_else(|| AnalysisError::UnknownRep(name.to_string()))
}

fn is_query_role(role: MlpRole) -> bool {
    matches!(role, MlpRole::N | MlpRole::L1 | MlpRole::L2 | MlpRole::L3)
}

/// Encodes every unique sentence and passes it through the MLP of `role`.
pub fn collect_reps(model: &TprRnn, vocab: &Vocabulary, samples: &[TextSample], role: MlpRole) -> Result<RepMatrix> {
    let sents = unique_sentences(samples, is_query_role(role));
    let rows = sents
        .par_iter()
        .map(|s| {
            let ids = vocab.encode(s)?;
            Ok(model.representation(role, &ids)?.into_data())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepMatrix {
        role,
        sentences: sents.iter().map(|s| detokenize(s)).collect(),
        rows,
    })
}

/// `S[i][j] = ⟨xᵢ,xⱼ⟩ / (‖xᵢ‖‖xⱼ‖)`, with 0 for any pair involving a
/// zero row and an exact unit diagonal. Only the upper triangle is computed,
/// so the result is exactly symmetric.
pub fn cosine_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        s[i][i] = 1.0;
        for j in i + 1..n {
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Cluster ids: leaves are `0..n`, the cluster formed by merge `m` is
    /// `n + m`.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

/// Agglomerative clustering on `1 − S` with average linkage. Ties merge the
/// pair with the smallest ids first.
pub fn hcluster(sim: &[Vec<f64>]) -> Dendrogram {
    let n = sim.len();
    if n == 0 {
        return Dendrogram {
            n,
            merges: Vec::new(),
            leaf_order: Vec::new(),
        };
    }
    // Active clusters: (id, size); dist indexed by slot.
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<usize> = vec![1; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut dist: Vec<Vec<f64>> = sim.iter().map(|r| r.iter().map(|s| 1.0 - s).collect()).collect();
    let mut children: Vec<(usize, usize)> = Vec::with_capacity(n.saturating_sub(1));
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for m in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i][j];
                let key = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => {
                        let bkey = (ids[bi].min(ids[bj]), ids[bi].max(ids[bj]));
                        d < bd || (d == bd && key < bkey)
                    }
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, i, j) = best.expect("at least two active clusters");
        let (a, b) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
        let size = sizes[i] + sizes[j];
        for k in 0..n {
            if active[k] && k != i && k != j {
                let v = (sizes[i] as f64 * dist[i][k] + sizes[j] as f64 * dist[j][k]) / size as f64;
                dist[i][k] = v;
                dist[k][i] = v;
            }
        }
        active[j] = false;
        ids[i] = n + m;
        sizes[i] = size;
        children.push((a, b));
        merges.push(Merge { a, b, distance: d, size });
    }

    let mut leaf_order = Vec::with_capacity(n);
    let mut stack = vec![if n == 1 { 0 } else { 2 * n - 2 }];
    while let Some(c) = stack.pop() {
        if c < n {
            leaf_order.push(c);
        } else {
            let (a, b) = children[c - n];
            stack.push(b);
            stack.push(a);
        }
    }
    Dendrogram { n, merges, leaf_order }
}

impl Dendrogram {
    /// Labels `0..k` from undoing the last `k − 1` merges. Labels are
    /// numbered in leaf order.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let k = k.clamp(1, self.n.max(1));
        let kept = self.n.saturating_sub(k);
        let mut parent: Vec<usize> = (0..self.n + kept).collect();
        for (m, merge) in self.merges[..kept].iter().enumerate() {
            parent[merge.a] = self.n + m;
            parent[merge.b] = self.n + m;
        }
        let root = |mut c: usize| {
            while parent[c] != c {
                c = parent[c];
            }
            c
        };
        let mut labels = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut map = std::collections::HashMap::new();
        for &leaf in &self.leaf_order {
            let r = root(leaf);
            let l = *map.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            });
            labels[leaf] = l;
        }
        labels
    }
}

/// Matrix with rows and columns permuted by `order`.
pub fn reorder(sim: &[Vec<f64>], order: &[usize]) -> Vec<Vec<f64>> {
    order.iter().map(|&i| order.iter().map(|&j| sim[i][j]).collect()).collect()
}

/// Mean similarity over off-diagonal pairs in the same cluster and over pairs
/// in different clusters.
pub fn cluster_separation(sim: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..sim.len() {
        for j in i + 1..sim.len() {
            if labels[i] == labels[j] {
                intra += sim[i][j];
                ni += 1;
            } else {
                inter += sim[i][j];
                nx += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (mean(intra, ni), mean(inter, nx))
}

/// Sizes of each cluster label.
pub fn cluster_sizes(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

pub fn matrix_csv(sim: &[Vec<f64>], headers: &[usize]) -> String {
    let mut out = String::new();
    out.push_str(&headers.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in sim {
        out.push_str(&row.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Option<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let headers = lines
        .next()?
        .split(',')
        .map(|h| h.parse().ok())
        .collect::<Option<Vec<usize>>>()?;
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().ok()).collect::<Option<Vec<f64>>>())
        .collect::<Option<Vec<_>>>()?;
    Some((headers, rows))
}

/// Binary greyscale PGM, `[-1, 1]` mapped linearly to `[0, 255]`.
pub fn matrix_pgm(sim: &[Vec<f64>]) -> Vec<u8> {
    let n = sim.len();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for row in sim {
        for &v in row {
            out.push((((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * 255.0).round() as u8);
        }
    }
    out
}

/// Similarity matrix of one representation with its clustering.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub reps: RepMatrix,
    pub sim: Vec<Vec<f64>>,
    pub dendrogram: Dendrogram,
}

pub fn analyze(model: &TprRnn, vocab: &Vocabulary, samples: &[TextSample], role: MlpRole) -> Result<Analysis> {
    let reps = collect_reps(model, vocab, samples, role)?;
    let sim = cosine_matrix(&reps.rows);
    let dendrogram = hcluster(&sim);
    Ok(Analysis { reps, sim, dendrogram })
}

impl Analysis {
    pub fn reordered(&self) -> Vec<Vec<f64>> {
        reorder(&self.sim, &self.dendrogram.leaf_order)
    }

    /// Writes `{role}_similarity.csv` (leaf order, headers are sentence ids),
    /// `{role}_similarity.pgm` and `{role}_sentences.txt` (`id: sentence`
    /// in leaf order).
    pub fn export(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AnalysisError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let name = self.reps.role.name();
        let order = &self.dendrogram.leaf_order;
        let csv = dir.join(format!("{name}_similarity.csv"));
        fs::write(&csv, matrix_csv(&self.reordered(), order)).map_err(io(&csv))?;
        let pgm = dir.join(format!("{name}_similarity.pgm"));
        fs::write(&pgm, matrix_pgm(&self.reordered())).map_err(io(&pgm))?;
        let mut listing = String::new();
        for &i in order {
            writeln!(listing, "{i}: {}", self.reps.sentences[i]).expect("string write");
        }
        let txt = dir.join(format!("{name}_sentences.txt"));
        fs::write(&txt, listing).map_err(io(&txt))?;
        Ok(())
    }
}
