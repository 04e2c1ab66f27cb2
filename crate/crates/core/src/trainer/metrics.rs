//! Evaluation records and their CSV form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Error rate in percent, `100·(1 − accuracy)`.
pub fn error_pct(wrong: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * wrong as f64 / total as f64
    }
}

/// Aggregate over one evaluation pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub wrong: usize,
    pub loss_sum: f64,
    /// task id → (count, wrong)
    pub per_task: BTreeMap<u8, (usize, usize)>,
}

impl EvalResult {
    pub fn mean_loss(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.loss_sum / self.n as f64
        }
    }

    pub fn error_pct(&self) -> f64 {
        error_pct(self.wrong, self.n)
    }

    pub fn per_task_error(&self) -> BTreeMap<u8, f64> {
        self.per_task.iter().map(|(&t, &(n, w))| (t, error_pct(w, n))).collect()
    }

    /// Tasks whose error exceeds `threshold` percent.
    pub fn failures(&self, threshold: f64) -> usize {
        self.per_task_error().values().filter(|&&e| e > threshold).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    /// Mean training loss since the previous evaluation.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_error: f64,
    pub per_task_error: BTreeMap<u8, f64>,
    pub lr: f64,
    pub reinit_count: u32,
}

/// Accuracy on one augmented (entity, task) test cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAccuracy {
    pub entity: String,
    pub task: u8,
    pub trained: bool,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub records: Vec<EvalRecord>,
    /// Loss of every optimisation step, in order.
    pub loss_trace: Vec<f64>,
    /// Learning rate applied at each successful step, same indexing.
    pub lr_trace: Vec<f64>,
    pub steps: u64,
    pub reinit_count: u32,
    pub stopped_early: bool,
    pub best_step: u64,
    pub best_val_error: f64,
    pub test_error: f64,
    pub test_per_task: BTreeMap<u8, f64>,
    pub grid: Vec<CellAccuracy>,
}

impl RunMetrics {
    /// One row per evaluation; per-task columns appear when more than one
    /// task was evaluated.
    pub fn to_csv(&self) -> String {
        let tasks: Vec<u8> = self
            .records
            .first()
            .map(|r| r.per_task_error.keys().copied().collect())
            .unwrap_or_default();
        let per_task = tasks.len() > 1;
        let mut out = String::from("step,train_loss,val_loss,val_error,lr,reinit_count");
        if per_task {
            for t in &tasks {
                write!(out, ",task{t}_error").expect("string write");
            }
        }
        out.push('\n');
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.train_loss, r.val_loss, r.val_error, r.lr, r.reinit_count
            )
            .expect("string write");
            if per_task {
                for t in &tasks {
                    write!(out, ",{}", r.per_task_error.get(t).copied().unwrap_or(f64::NAN)).expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn grid_csv(&self) -> String {
        let mut out = String::from("entity,task,trained,accuracy\n");
        for c in &self.grid {
            writeln!(out, "{},{},{},{}", c.entity, c.task, c.trained, c.accuracy).expect("string write");
        }
        out
    }

    pub fn failures(&self, threshold: f64) -> usize {
        self.test_per_task.values().filter(|&&e| e > threshold).count()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "steps={} best_step={} best_val_error={:.2}% test_error={:.2}% reinit={}",
            self.steps, self.best_step, self.best_val_error, self.test_error, self.reinit_count
        );
        if self.test_per_task.len() > 1 {
            write!(s, " failures(>5%)={}", self.failures(5.0)).expect("string write");
        }
        if self.stopped_early {
            s.push_str(" early_stop");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_definition() {
        assert_eq!(error_pct(0, 10), 0.0);
        assert_eq!(error_pct(1, 4), 25.0);
        let mut r = EvalResult::default();
        r.per_task.insert(1, (100, 6));
        r.per_task.insert(2, (100, 5));
        assert_eq!(r.failures(5.0), 1);
    }

    #[test]
    fn csv_has_row_per_record() {
        let mut m = RunMetrics::default();
        for step in [1000, 2000] {
            m.records.push(EvalRecord {
                step,
                train_loss: 1.0,
                val_loss: 0.5,
                val_error: 10.0,
                per_task_error: [(1, 5.0), (2, 15.0)].into_iter().collect(),
                lr: 0.001,
                reinit_count: 0,
            });
        }
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].ends_with("task1_error,task2_error"));
        assert!(lines[2].starts_with("2000,"));
    }
}
