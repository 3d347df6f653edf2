//! Micro (pooled accuracy) and macro (mean per-class recall) measures, and
//! aggregation of LOSO prediction tables over repeated runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::nn::NUM_CLASSES;
use crate::training::PredictionRow;

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = Self::default();
        for (truth, pred) in pairs {
            cm.0[truth][pred] += 1;
        }
        cm
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a PredictionRow>) -> Self {
        Self::from_pairs(
            rows.into_iter()
                .map(|r| (r.truth.index(), r.predicted.index())),
        )
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.0[i][i]).sum()
    }
}

/// Fraction of correctly classified trials.
pub fn micro_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::domain("confusion matrix is empty"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Unweighted mean of per-class recall over the classes that occur.
pub fn macro_measure(cm: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    let mut present = 0;
    for (c, row) in cm.0.iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n == 0 {
            log::warn!("class {c} has no test trials; excluded from the macro measure");
            continue;
        }
        sum += row[c] as f64 / n as f64;
        present += 1;
    }
    if present == 0 {
        return Err(Error::domain("confusion matrix is empty"));
    }
    Ok(sum / present as f64)
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub run: usize,
    pub micro: f64,
    pub macro_: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: Task,
    pub runs: usize,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub per_run: Vec<RunScore>,
}

/// Pools every fold of a run into one confusion matrix, scores it, then
/// averages across runs separately for each task.
pub fn aggregate_runs(rows: &[PredictionRow]) -> Result<Vec<TaskSummary>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("prediction table has no rows".into()));
    }
    let mut grouped: BTreeMap<Task, BTreeMap<usize, Vec<&PredictionRow>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry(r.task)
            .or_default()
            .entry(r.run)
            .or_default()
            .push(r);
    }
    grouped
        .into_iter()
        .map(|(task, runs)| {
            let per_run = runs
                .into_iter()
                .map(|(run, rows)| {
                    let cm = ConfusionMatrix::from_rows(rows);
                    Ok(RunScore {
                        run,
                        micro: micro_accuracy(&cm)?,
                        macro_: macro_measure(&cm)?,
                        confusion: cm,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let micro: Vec<f64> = per_run.iter().map(|r| r.micro).collect();
            let macro_: Vec<f64> = per_run.iter().map(|r| r.macro_).collect();
            let (micro_mean, micro_std) = mean_std(&micro);
            let (macro_mean, macro_std) = mean_std(&macro_);
            Ok(TaskSummary {
                task,
                runs: per_run.len(),
                micro_mean,
                micro_std,
                macro_mean,
                macro_std,
                per_run,
            })
        })
        .collect()
}

/// Table-style TSV: one row per task with micro and macro means, in percent.
pub fn format_report_tsv(summaries: &[TaskSummary]) -> String {
    let mut out = String::from("task\tmicro\tmicro_std\tmacro\tmacro_std\truns\n");
    for s in summaries {
        out.push_str(&format!(
            "{}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{}\n",
            s.task,
            100.0 * s.micro_mean,
            100.0 * s.micro_std,
            100.0 * s.macro_mean,
            100.0 * s.macro_std,
            s.runs
        ));
    }
    out
}

pub fn format_report_json(summaries: &[TaskSummary]) -> String {
    serde_json::to_string_pretty(summaries).expect("summaries serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Skill;
    use proptest::prelude::*;

    fn row(run: usize, fold: u32, truth: usize, pred: usize) -> PredictionRow {
        PredictionRow {
            run,
            fold,
            subject: format!("S{fold}"),
            task: Task::Suturing,
            trial_index: fold,
            truth: Skill::ALL[truth],
            predicted: Skill::ALL[pred],
            probs: [1.0 / 3.0; 3],
        }
    }

    #[test]
    fn perfect_and_chance() {
        let perfect = ConfusionMatrix([[10, 0, 0], [0, 10, 0], [0, 0, 10]]);
        assert_eq!(micro_accuracy(&perfect).unwrap(), 1.0);
        assert_eq!(macro_measure(&perfect).unwrap(), 1.0);
        let uniform = ConfusionMatrix([[1; 3]; 3]);
        assert!((micro_accuracy(&uniform).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_skipped() {
        let cm = ConfusionMatrix([[10, 0, 0], [5, 5, 0], [0, 0, 0]]);
        assert!((macro_measure(&cm).unwrap() - 0.75).abs() < 1e-12);
        assert!(micro_accuracy(&ConfusionMatrix::default()).is_err());
        assert!(macro_measure(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn single_run_has_zero_std() {
        let rows: Vec<_> = (0..3).map(|c| row(0, c as u32 + 1, c, c)).collect();
        let s = aggregate_runs(&rows).unwrap();
        assert_eq!(s[0].micro_mean, 1.0);
        assert_eq!(s[0].micro_std, 0.0);
    }

    #[test]
    fn two_runs_population_std() {
        let mut rows = Vec::new();
        // run 0: 9/10 correct, run 1: 10/10
        for i in 0..10 {
            rows.push(row(0, 1, 0, if i == 0 { 1 } else { 0 }));
            rows.push(row(1, 1, 0, 0));
        }
        let s = &aggregate_runs(&rows).unwrap()[0];
        assert!((s.micro_mean - 0.95).abs() < 1e-12);
        assert!((s.micro_std - 0.05).abs() < 1e-12);
    }

    #[test]
    fn three_run_fixture_matches_hand_computation() {
        // run 0: [[2,0,0],[0,1,1],[0,0,2]] micro 5/6, macro (1+0.5+1)/3
        // run 1: [[1,1,0],[0,2,0],[1,0,1]] micro 4/6, macro (0.5+1+0.5)/3
        // run 2: all six correct
        let table: [&[(usize, usize)]; 3] = [
            &[(0, 0), (0, 0), (1, 1), (1, 2), (2, 2), (2, 2)],
            &[(0, 0), (0, 1), (1, 1), (1, 1), (2, 0), (2, 2)],
            &[(0, 0), (0, 0), (1, 1), (1, 1), (2, 2), (2, 2)],
        ];
        let mut rows = Vec::new();
        for (run, pairs) in table.iter().enumerate() {
            for (k, &(t, p)) in pairs.iter().enumerate() {
                rows.push(row(run, (k % 5) as u32 + 1, t, p));
            }
        }
        let s = &aggregate_runs(&rows).unwrap()[0];
        let micro = [5.0 / 6.0, 4.0 / 6.0, 1.0];
        let macro_ = [2.5 / 3.0, 2.0 / 3.0, 1.0];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / 3.0;
        let std = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0).sqrt()
        };
        assert!((s.micro_mean - mean(&micro)).abs() < 1e-12);
        assert!((s.micro_std - std(&micro)).abs() < 1e-12);
        assert!((s.macro_mean - mean(&macro_)).abs() < 1e-12);
        assert!((s.macro_std - std(&macro_)).abs() < 1e-12);
        assert_eq!(s.runs, 3);
    }

    #[test]
    fn report_formats() {
        let rows: Vec<_> = (0..3).map(|c| row(0, 1, c, c)).collect();
        let s = aggregate_runs(&rows).unwrap();
        assert_eq!(
            format_report_tsv(&s),
            "task\tmicro\tmicro_std\tmacro\tmacro_std\truns\nSuturing\t100.0\t0.0\t100.0\t0.0\t1\n"
        );
        let v: serde_json::Value = serde_json::from_str(&format_report_json(&s)).unwrap();
        assert_eq!(v[0]["micro_std"], 0.0);
        assert!(aggregate_runs(&[]).is_err());
    }

    fn arb_cm() -> impl Strategy<Value = ConfusionMatrix> {
        proptest::array::uniform3(proptest::array::uniform3(0u64..20))
            .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
            .prop_map(ConfusionMatrix)
    }

    proptest! {
        #[test]
        fn micro_invariant_under_class_relabeling(cm in arb_cm(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
            let mut p = ConfusionMatrix::default();
            for i in 0..3 {
                for j in 0..3 {
                    p.0[perm[i]][perm[j]] = cm.0[i][j];
                }
            }
            prop_assert!((micro_accuracy(&cm).unwrap() - micro_accuracy(&p).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn macro_equals_micro_when_balanced_with_equal_recall(n in 1u64..20, k in 0u64..20) {
            let hit = k.min(n);
            let miss = n - hit;
            let cm = ConfusionMatrix([[hit, miss, 0], [0, hit, miss], [miss, 0, hit]]);
            prop_assert!((micro_accuracy(&cm).unwrap() - macro_measure(&cm).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn pooled_micro_is_size_weighted_fold_average(folds in proptest::collection::vec(arb_cm(), 1..6)) {
            let mut pooled = ConfusionMatrix::default();
            let mut weighted = 0.0;
            let mut total = 0.0;
            for f in &folds {
                for i in 0..3 { for j in 0..3 { pooled.0[i][j] += f.0[i][j]; } }
                weighted += micro_accuracy(f).unwrap() * f.total() as f64;
                total += f.total() as f64;
            }
            prop_assert!((micro_accuracy(&pooled).unwrap() - weighted / total).abs() < 1e-12);
        }
    }
}
