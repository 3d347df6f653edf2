use std::fs;
use std::path::Path;

use crate::data::{Skill, Task};
use crate::error::{Error, Result};
use crate::nn::NUM_CLASSES;

const HEADER: [&str; 10] = [
    "run",
    "fold",
    "subject",
    "task",
    "trial_index",
    "true",
    "predicted",
    "p_N",
    "p_I",
    "p_E",
];

/// One test-set prediction from a LOSO run.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub run: usize,
    pub fold: u32,
    pub subject: String,
    pub task: Task,
    pub trial_index: u32,
    pub truth: Skill,
    pub predicted: Skill,
    pub probs: [f32; NUM_CLASSES],
}

/// Renders the prediction table as TSV. Probabilities use six decimals.
pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let mut out = HEADER.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.run,
            r.fold,
            r.subject,
            r.task,
            r.trial_index,
            r.truth,
            r.predicted,
            r.probs[0],
            r.probs[1],
            r.probs[2]
        ));
    }
    out
}

pub fn parse_predictions(text: &str, source: &Path) -> Result<Vec<PredictionRow>> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split('\t').map(str::trim).eq(HEADER) => {}
        Some((n, _)) => return Err(err(n + 1, "unexpected prediction table header".into())),
        None => {
            return Err(Error::EmptyInput(format!(
                "{}: empty table",
                source.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != HEADER.len() {
            return Err(err(line_no, format!("expected 10 fields, got {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| err(line_no, format!("{}: bad number '{}'", HEADER[i], f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse()
                .map_err(|_| err(line_no, format!("{}: bad integer '{}'", HEADER[i], f[i])))
        };
        let skill = |i: usize| -> Result<Skill> {
            f[i].parse().map_err(|e: Error| err(line_no, e.to_string()))
        };
        rows.push(PredictionRow {
            run: int(0)? as usize,
            fold: int(1)? as u32,
            subject: f[2].to_string(),
            task: f[3]
                .parse()
                .map_err(|e: Error| err(line_no, e.to_string()))?,
            trial_index: int(4)? as u32,
            truth: skill(5)?,
            predicted: skill(6)?,
            probs: [num(7)? as f32, num(8)? as f32, num(9)? as f32],
        });
    }
    Ok(rows)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path)
}
