use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{parse_kinematics, Skill, Task, Trial, TrialKey};
use crate::error::{Error, Result};

const HEADER: [&str; 5] = ["path", "subject", "task", "trial_index", "skill"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Kinematics file, relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub subject: String,
    pub task: Task,
    pub trial_index: u32,
    pub skill: Skill,
}

impl ManifestEntry {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            subject: self.subject.clone(),
            task: self.task,
            trial_index: self.trial_index,
        }
    }
}

/// Tab-separated trial list with header `path subject task trial_index skill`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.key()) {
                return Err(Error::config(format!(
                    "duplicate manifest entry {}",
                    e.key()
                )));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<TrialKey> {
        self.entries.iter().map(ManifestEntry::key).collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn parse_str(text: &str, source: &Path, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != HEADER {
            return Err(parse_err(
                1,
                format!(
                    "expected header '{}', found '{}'",
                    HEADER.join("\t"),
                    names.join("\t")
                ),
            ));
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != HEADER.len() {
                return Err(parse_err(
                    line,
                    format!("expected 5 fields, got {}", record.len()),
                ));
            }
            let field = |i: usize| record[i].trim();
            let trial_index: u32 = field(3)
                .parse()
                .map_err(|_| parse_err(line, format!("bad trial_index '{}'", field(3))))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(field(0)),
                subject: field(1).to_string(),
                task: field(2)
                    .parse()
                    .map_err(|e: Error| parse_err(line, e.to_string()))?,
                trial_index,
                skill: field(4)
                    .parse()
                    .map_err(|e: Error| parse_err(line, e.to_string()))?,
            });
        }
        Self::new(entries, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, path, base)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.path.display(),
                e.subject,
                e.task,
                e.trial_index,
                e.skill
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Only the entries for one task.
    pub fn filter_task(&self, task: Task) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| e.task == task)
                .cloned()
                .collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Parses every listed kinematics file, in manifest order.
    pub fn load_trials(&self) -> Result<Vec<Trial>> {
        self.entries
            .par_iter()
            .map(|e| {
                Ok(Trial {
                    subject: e.subject.clone(),
                    task: e.task,
                    trial_index: e.trial_index,
                    skill: e.skill,
                    series: parse_kinematics(self.resolve(e))?,
                })
            })
            .collect()
    }
}
