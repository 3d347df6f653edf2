use std::collections::{BTreeSet, HashSet};

use super::{Manifest, TrialKey};
use crate::error::{Error, Result};

/// LOSO always has five folds, one per trial index.
pub const NUM_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    /// 1-based; equals the trial index held out.
    pub index: u32,
    /// Positions into the key list the plan was built from.
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

/// Leave-one-super-trial-out plan: fold `i` tests trial `i` of every subject
/// and trains on everything else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    /// `(subject, trial_index)` pairs with no recording, per task.
    pub missing: Vec<TrialKey>,
}

impl FoldPlan {
    pub fn from_keys(keys: &[TrialKey]) -> Result<Self> {
        let mut seen = HashSet::new();
        for k in keys {
            if !seen.insert(k) {
                return Err(Error::config(format!("duplicate trial {k}")));
            }
            if k.trial_index < 1 || k.trial_index as usize > NUM_FOLDS {
                return Err(Error::config(format!(
                    "trial {k}: trial_index must be within 1..={NUM_FOLDS}"
                )));
            }
        }

        let subjects: BTreeSet<(&str, _)> =
            keys.iter().map(|k| (k.subject.as_str(), k.task)).collect();
        let mut missing = Vec::new();
        for (subject, task) in subjects {
            for i in 1..=NUM_FOLDS as u32 {
                let key = TrialKey {
                    subject: subject.to_string(),
                    task,
                    trial_index: i,
                };
                if !seen.contains(&key) {
                    missing.push(key);
                }
            }
        }
        if !missing.is_empty() {
            let list: Vec<String> = missing.iter().map(ToString::to_string).collect();
            log::warn!("missing trials: {}", list.join(", "));
        }

        let folds = (1..=NUM_FOLDS as u32)
            .map(|i| {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    (0..keys.len()).partition(|&j| keys[j].trial_index == i);
                Fold {
                    index: i,
                    test,
                    train,
                }
            })
            .collect();
        Ok(Self { folds, missing })
    }
}

pub fn loso_folds(manifest: &Manifest) -> Result<FoldPlan> {
    FoldPlan::from_keys(&manifest.keys())
}
