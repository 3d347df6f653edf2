//! Trials, file formats, the channel grouping, LOSO folds, normalization and
//! the synthetic dataset generator.

mod columns;
mod folds;
mod kinematics;
mod manifest;
mod normalize;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use columns::{
    canonical_grouping, default_column_map, default_grouping, ColumnMap, ManipulatorColumns,
    DEFAULT_COLUMN_MAP_JSON,
};
pub use folds::{loso_folds, Fold, FoldPlan, NUM_FOLDS};
pub use kinematics::{format_kinematics, parse_kinematics, parse_kinematics_str, write_kinematics};
pub use manifest::{Manifest, ManifestEntry};
pub use normalize::{normalize, NormStats, STD_FLOOR};

use crate::error::{Error, Result};
use crate::nn::Mts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Skill {
    Novice,
    Intermediate,
    Expert,
}

impl Skill {
    pub const ALL: [Skill; 3] = [Skill::Novice, Skill::Intermediate, Skill::Expert];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::domain(format!("class index {i} out of range")))
    }

    pub fn letter(self) -> &'static str {
        match self {
            Skill::Novice => "N",
            Skill::Intermediate => "I",
            Skill::Expert => "E",
        }
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for Skill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "N" | "Novice" | "novice" => Ok(Skill::Novice),
            "I" | "Intermediate" | "intermediate" => Ok(Skill::Intermediate),
            "E" | "Expert" | "expert" => Ok(Skill::Expert),
            other => Err(Error::config(format!("unknown skill level '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    Suturing,
    NeedlePassing,
    KnotTying,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Suturing => "Suturing",
            Task::NeedlePassing => "Needle_Passing",
            Task::KnotTying => "Knot_Tying",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "suturing" => Ok(Task::Suturing),
            "needlepassing" => Ok(Task::NeedlePassing),
            "knottying" => Ok(Task::KnotTying),
            _ => Err(Error::config(format!("unknown task '{s}'"))),
        }
    }
}

/// Identity of a trial, independent of its recording.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialKey {
    pub subject: String,
    pub task: Task,
    pub trial_index: u32,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.subject, self.task, self.trial_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub subject: String,
    pub task: Task,
    pub trial_index: u32,
    pub skill: Skill,
    pub series: Mts<f32>,
}

impl Trial {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            subject: self.subject.clone(),
            task: self.task,
            trial_index: self.trial_index,
        }
    }

    pub fn id(&self) -> String {
        self.key().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_labels() {
        assert_eq!("E".parse::<Skill>().unwrap(), Skill::Expert);
        assert_eq!("Knot_Tying".parse::<Task>().unwrap(), Task::KnotTying);
        assert_eq!(
            "needle passing".parse::<Task>().unwrap(),
            Task::NeedlePassing
        );
        assert!("X".parse::<Skill>().is_err());
        assert_eq!(Skill::from_index(2).unwrap(), Skill::Expert);
        assert!(Skill::from_index(3).is_err());
    }
}
