use serde::{Deserialize, Serialize};

use super::Trial;
use crate::error::{Error, Result};
use crate::nn::Mts;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-score statistics, computed from training trials only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Pooled mean and population standard deviation over every frame of
    /// every trial.
    pub fn fit(trials: &[Trial]) -> Result<Self> {
        let first = trials
            .first()
            .ok_or_else(|| Error::EmptyInput("no trials to fit normalization on".into()))?;
        let channels = first.series.channels();
        let mut sum = vec![0f64; channels];
        let mut frames = 0usize;
        for t in trials {
            if t.series.channels() != channels {
                return Err(Error::shape(format!(
                    "trial {} has {} channels, expected {channels}",
                    t.id(),
                    t.series.channels()
                )));
            }
            for (c, s) in sum.iter_mut().enumerate() {
                *s += t.series.row(c).iter().map(|&v| v as f64).sum::<f64>();
            }
            frames += t.series.len();
        }
        let n = frames as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = vec![0f64; channels];
        for t in trials {
            for (c, acc) in sq.iter_mut().enumerate() {
                let m = mean[c];
                *acc += t
                    .series
                    .row(c)
                    .iter()
                    .map(|&v| (v as f64 - m).powi(2))
                    .sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::config("normalization mean/std lengths differ"));
        }
        if self.mean.iter().chain(&self.std).any(|v| !v.is_finite())
            || self.std.iter().any(|&s| s < 0.0)
        {
            return Err(Error::config("normalization statistics are not finite"));
        }
        Ok(())
    }

    pub fn apply(&self, series: &Mts<f32>) -> Result<Mts<f32>> {
        if series.channels() != self.mean.len() {
            return Err(Error::shape(format!(
                "normalization fitted on {} channels, series has {}",
                self.mean.len(),
                series.channels()
            )));
        }
        let mut out = series.clone();
        for c in 0..series.channels() {
            let m = self.mean[c];
            let s = self.std[c].max(STD_FLOOR);
            for v in out.row_mut(c) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        Ok(out)
    }
}

/// Z-scores `apply` with statistics from `train`. When disabled, returns the
/// trials unchanged and no statistics.
pub fn normalize(
    train: &[Trial],
    apply: &[Trial],
    enabled: bool,
) -> Result<(Vec<Trial>, Option<NormStats>)> {
    if !enabled {
        return Ok((apply.to_vec(), None));
    }
    let stats = NormStats::fit(train)?;
    let out = apply
        .iter()
        .map(|t| {
            Ok(Trial {
                series: stats.apply(&t.series)?,
                ..t.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, Some(stats)))
}
