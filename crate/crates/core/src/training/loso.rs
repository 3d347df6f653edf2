use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{train, PredictionRow, TrainConfig, TrainReport};
use crate::data::{FoldPlan, Skill, Task, Trial};
use crate::error::{Error, Result};
use crate::model::{ChannelGrouping, TrainedModel};

/// SplitMix64 finalizer over `(base, stream)`; gives independent seeds for
/// initialization, splitting and shuffling.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct FoldModel {
    pub run: usize,
    pub fold: u32,
    pub task: Task,
    pub model: TrainedModel,
    pub report: TrainReport,
    /// Positions of the fold's test trials in the input slice.
    pub test: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LosoResult {
    /// Sorted by run, then task, fold, subject and trial index.
    pub rows: Vec<PredictionRow>,
    pub models: Vec<FoldModel>,
    pub plans: BTreeMap<Task, FoldPlan>,
}

struct Job {
    run: usize,
    task: Task,
    fold_pos: usize,
}

/// Leave-one-super-trial-out over every task present in `trials`, repeated
/// `n_runs` times with seeds `config.seed + run`.
///
/// `threads = Some(1)` runs jobs sequentially; otherwise jobs are spread
/// across a rayon pool. Each job is seeded from `(run, task, fold)` alone, so
/// output does not depend on scheduling.
pub fn run_loso(
    trials: &[Trial],
    grouping: &ChannelGrouping,
    config: &TrainConfig,
    n_runs: usize,
    threads: Option<usize>,
) -> Result<LosoResult> {
    config.validate()?;
    if n_runs == 0 {
        return Err(Error::config("need at least one run"));
    }
    let mut by_task: BTreeMap<Task, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        by_task.entry(t.task).or_default().push(i);
    }
    let mut plans = BTreeMap::new();
    let mut global_folds: BTreeMap<Task, Vec<(u32, Vec<usize>, Vec<usize>)>> = BTreeMap::new();
    for (&task, idx) in &by_task {
        let keys: Vec<_> = idx.iter().map(|&i| trials[i].key()).collect();
        let plan = FoldPlan::from_keys(&keys)?;
        let folds = plan
            .folds
            .iter()
            .map(|f| {
                (
                    f.index,
                    f.train.iter().map(|&j| idx[j]).collect(),
                    f.test.iter().map(|&j| idx[j]).collect(),
                )
            })
            .collect();
        global_folds.insert(task, folds);
        plans.insert(task, plan);
    }

    let mut jobs = Vec::new();
    for run in 0..n_runs {
        for (&task, folds) in &global_folds {
            for (fold_pos, (_, train_idx, test_idx)) in folds.iter().enumerate() {
                if test_idx.is_empty() || train_idx.len() < 2 {
                    continue;
                }
                jobs.push(Job {
                    run,
                    task,
                    fold_pos,
                });
            }
        }
    }

    let execute = |job: &Job| -> Result<(Vec<PredictionRow>, FoldModel)> {
        let (fold, train_idx, test_idx) = &global_folds[&job.task][job.fold_pos];
        let train_set: Vec<Trial> = train_idx.iter().map(|&i| trials[i].clone()).collect();
        let run_seed = config.seed.wrapping_add(job.run as u64);
        let job_seed = derive_seed(
            derive_seed(run_seed, job.task as u64 + 11),
            *fold as u64 + 101,
        );
        let cfg = TrainConfig {
            seed: job_seed,
            ..config.clone()
        };
        let (model, report) = train(grouping, &train_set, &cfg)?;
        let mut rows = Vec::with_capacity(test_idx.len());
        for &i in test_idx {
            let t = &trials[i];
            let f = model.forward(&t.series)?;
            rows.push(PredictionRow {
                run: job.run,
                fold: *fold,
                subject: t.subject.clone(),
                task: t.task,
                trial_index: t.trial_index,
                truth: t.skill,
                predicted: Skill::from_index(crate::nn::argmax(&f.probs))?,
                probs: f.probs,
            });
        }
        log::info!(
            "run {} {} fold {}: best epoch {}, val loss {:.4}",
            job.run,
            job.task,
            fold,
            report.best_epoch,
            report.best_val_loss
        );
        Ok((
            rows,
            FoldModel {
                run: job.run,
                fold: *fold,
                task: job.task,
                model,
                report,
                test: test_idx.clone(),
            },
        ))
    };

    let outcomes: Vec<Result<(Vec<PredictionRow>, FoldModel)>> = match threads {
        Some(1) => jobs.iter().map(execute).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(execute).collect()),
        None => jobs.par_iter().map(execute).collect(),
    };

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for outcome in outcomes {
        let (r, m) = outcome?;
        rows.extend(r);
        models.push(m);
    }
    rows.sort_by(|a, b| {
        (a.run, a.task, a.fold, &a.subject, a.trial_index).cmp(&(
            b.run,
            b.task,
            b.fold,
            &b.subject,
            b.trial_index,
        ))
    });
    Ok(LosoResult {
        rows,
        models,
        plans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(0, 0);
        assert_ne!(a, derive_seed(0, 1));
        assert_ne!(a, derive_seed(1, 0));
        assert_eq!(a, derive_seed(0, 0));
    }
}
