//! Desk-scale synthetic stand-in for the JIGSAWS kinematics.
//!
//! Every channel carries a smooth random walk. On top of that, the
//! master-left tool-tip channels of each trial receive a sinusoid over a
//! random window; its frequency encodes the skill label. Skill is assigned
//! per subject, as in the real dataset.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{default_grouping, Manifest, ManifestEntry, Skill, Task, Trial, NUM_FOLDS};
use crate::error::{Error, Result};
use crate::model::INPUT_CHANNELS;
use crate::nn::Mts;

/// Sinusoid frequency per class, in cycles per 100 frames.
pub const CLASS_CYCLES_PER_100_FRAMES: [f64; 3] = [0.5, 1.5, 3.0];

/// Peak amplitude of the injected pattern on each of the three ML xyz axes.
pub const AXIS_AMPLITUDES: [f64; 3] = [4.0, 2.8, 2.0];

const DRIFT_DECAY: f64 = 0.9;
const DRIFT_STEP: f64 = 0.004;

pub const MIN_LENGTH: usize = 50;
pub const MAX_LENGTH: usize = 2000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_subjects: 6,
            trials_per_subject: 5,
            min_len: 300,
            max_len: 600,
        }
    }
}

/// Ground truth for one trial's injected pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub start: usize,
    pub len: usize,
    pub cycles_per_100_frames: f64,
    pub channels: Vec<usize>,
    /// Unit-amplitude pattern over the window, before scaling and background.
    pub clean: Vec<f64>,
}

impl Injection {
    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start && frame < self.start + self.len
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub manifest: Manifest,
    pub trials: Vec<Trial>,
    pub injections: Vec<Injection>,
}

impl SynthDataset {
    /// Writes `manifest.tsv` and one kinematics file per trial under `dir`.
    pub fn write_to(&self, dir: impl AsRef<std::path::Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let kin = dir.join("kinematics");
        std::fs::create_dir_all(&kin).map_err(|e| Error::io(&kin, e))?;
        for (entry, trial) in self.manifest.entries.iter().zip(&self.trials) {
            super::write_kinematics(dir.join(&entry.path), &trial.series)?;
        }
        let path = dir.join("manifest.tsv");
        self.manifest.save(&path)?;
        Ok(path)
    }
}

/// Generates the dataset; identical configs give identical output.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.min_len < MIN_LENGTH || cfg.max_len > MAX_LENGTH || cfg.min_len > cfg.max_len {
        return Err(Error::domain(format!(
            "length range {}..={} must lie within {MIN_LENGTH}..={MAX_LENGTH}",
            cfg.min_len, cfg.max_len
        )));
    }
    if cfg.n_subjects == 0 || cfg.trials_per_subject == 0 || cfg.trials_per_subject > NUM_FOLDS {
        return Err(Error::domain(format!(
            "need at least one subject and 1..={NUM_FOLDS} trials per subject"
        )));
    }

    let channels = default_grouping()
        .sub_cluster("ML", "xyz")
        .expect("ML xyz present")
        .channels
        .clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    let mut trials = Vec::new();
    let mut injections = Vec::new();
    for s in 0..cfg.n_subjects {
        let subject = format!("S{:02}", s + 1);
        let skill = Skill::ALL[s % Skill::ALL.len()];
        for trial_index in 1..=cfg.trials_per_subject as u32 {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let mut values = vec![0f32; INPUT_CHANNELS * len];
            for row in values.chunks_exact_mut(len) {
                // integrated, low-passed noise from a random offset
                let mut x: f64 = rng.gen_range(-1.0..1.0);
                let mut v = 0.0;
                for out in row.iter_mut() {
                    v = DRIFT_DECAY * v + rng.gen_range(-DRIFT_STEP..DRIFT_STEP);
                    x += v;
                    *out = x as f32;
                }
            }

            let win = rng.gen_range(len / 3..=len / 2);
            let start = rng.gen_range(0..=len - win);
            let freq = CLASS_CYCLES_PER_100_FRAMES[skill.index()];
            let clean: Vec<f64> = (0..win)
                .map(|t| (2.0 * PI * freq * t as f64 / 100.0).sin())
                .collect();
            for (&c, amp) in channels.iter().zip(AXIS_AMPLITUDES) {
                for (t, s) in clean.iter().enumerate() {
                    let idx = c * len + start + t;
                    values[idx] = (values[idx] as f64 + amp * s) as f32;
                }
            }

            let path = PathBuf::from(format!("kinematics/{subject}_T{trial_index}.txt"));
            entries.push(ManifestEntry {
                path,
                subject: subject.clone(),
                task: Task::Suturing,
                trial_index,
                skill,
            });
            trials.push(Trial {
                subject: subject.clone(),
                task: Task::Suturing,
                trial_index,
                skill,
                series: Mts::new(INPUT_CHANNELS, len, values)?,
            });
            injections.push(Injection {
                start,
                len: win,
                cycles_per_100_frames: freq,
                channels: channels.clone(),
                clean,
            });
        }
    }

    Ok(SynthDataset {
        manifest: Manifest::new(entries, PathBuf::new())?,
        trials,
        injections,
    })
}

/// Frequencies probed by the spectral baseline, cycles per 100 frames.
fn probe_frequencies() -> impl Iterator<Item = f64> {
    (1..=16).map(|k| k as f64 * 0.25)
}

/// Log power spectrum of the first-differenced channels, centered so only
/// its shape matters.
pub fn spectral_signature(series: &Mts<f32>, channels: &[usize]) -> Vec<f64> {
    let mut power: Vec<f64> = probe_frequencies().map(|_| 0.0).collect();
    for &c in channels {
        let row = series.row(c);
        let diff: Vec<f64> = row.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        for (p, f) in power.iter_mut().zip(probe_frequencies()) {
            let omega = 2.0 * PI * f / 100.0;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, d) in diff.iter().enumerate() {
                re += d * (omega * t as f64).cos();
                im -= d * (omega * t as f64).sin();
            }
            *p += (re * re + im * im) / diff.len().max(1) as f64;
        }
    }
    let logs: Vec<f64> = power.iter().map(|p| (p + 1e-12).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|v| v - mean).collect()
}

/// Nearest-centroid classifier over [`spectral_signature`]s. Serves as an
/// independent learnability check for the synthetic data.
#[derive(Clone, Debug)]
pub struct SpectralCentroids {
    channels: Vec<usize>,
    centroids: Vec<Option<Vec<f64>>>,
}

impl SpectralCentroids {
    pub fn fit(trials: &[Trial], channels: &[usize]) -> Self {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; Skill::ALL.len()];
        for t in trials {
            let sig = spectral_signature(&t.series, channels);
            let slot = &mut sums[t.skill.index()];
            match slot {
                Some((acc, n)) => {
                    acc.iter_mut().zip(&sig).for_each(|(a, s)| *a += s);
                    *n += 1;
                }
                None => *slot = Some((sig, 1)),
            }
        }
        Self {
            channels: channels.to_vec(),
            centroids: sums
                .into_iter()
                .map(|s| s.map(|(acc, n)| acc.into_iter().map(|v| v / n as f64).collect()))
                .collect(),
        }
    }

    pub fn predict(&self, series: &Mts<f32>) -> Skill {
        let sig = spectral_signature(series, &self.channels);
        let mut best = (f64::INFINITY, Skill::Novice);
        for (i, c) in self.centroids.iter().enumerate() {
            if let Some(c) = c {
                let d: f64 = c.iter().zip(&sig).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, Skill::ALL[i]);
                }
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FoldPlan;

    fn zero_crossings(x: &[f64]) -> usize {
        // sign changes, ignoring exact zeros
        let signs: Vec<f64> = x
            .iter()
            .filter(|v| v.abs() > 1e-9)
            .map(|v| v.signum())
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    #[test]
    fn balanced_by_construction() {
        let ds = synth_generate(&SynthConfig::default()).unwrap();
        assert_eq!(ds.trials.len(), 30);
        for skill in Skill::ALL {
            assert_eq!(ds.trials.iter().filter(|t| t.skill == skill).count(), 10);
        }
        assert!(ds
            .trials
            .iter()
            .all(|t| (300..=600).contains(&t.series.len())));
    }

    #[test]
    fn deterministic() {
        let a = synth_generate(&SynthConfig::default()).unwrap();
        let b = synth_generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.manifest, b.manifest);
        let c = synth_generate(&SynthConfig {
            seed: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_ne!(a.trials[0].series, c.trials[0].series);
    }

    #[test]
    fn zero_crossing_oracle_recovers_class() {
        let ds = synth_generate(&SynthConfig {
            n_subjects: 9,
            ..SynthConfig::default()
        })
        .unwrap();
        for (trial, inj) in ds.trials.iter().zip(&ds.injections) {
            let n = zero_crossings(&inj.clean) as f64;
            // expected crossings for a frequency over the window
            let expected = |cyc: f64| 2.0 * cyc * (inj.len as f64 - 1.0) / 100.0;
            let guess = (0..3)
                .min_by(|&a, &b| {
                    let da = (n - expected(CLASS_CYCLES_PER_100_FRAMES[a])).abs();
                    let db = (n - expected(CLASS_CYCLES_PER_100_FRAMES[b])).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(guess, trial.skill.index(), "trial {}", trial.id());
        }
    }

    #[test]
    fn invalid_ranges() {
        for (lo, hi) in [(10, 100), (100, 50), (300, 2500)] {
            let cfg = SynthConfig {
                min_len: lo,
                max_len: hi,
                ..SynthConfig::default()
            };
            assert!(matches!(synth_generate(&cfg), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn spectral_baseline_separates_classes() {
        let ds = synth_generate(&SynthConfig::default()).unwrap();
        let plan =
            FoldPlan::from_keys(&ds.trials.iter().map(Trial::key).collect::<Vec<_>>()).unwrap();
        let channels = &ds.injections[0].channels;
        let mut correct = 0;
        for fold in &plan.folds {
            let train: Vec<Trial> = fold.train.iter().map(|&i| ds.trials[i].clone()).collect();
            let model = SpectralCentroids::fit(&train, channels);
            correct += fold
                .test
                .iter()
                .filter(|&&i| model.predict(&ds.trials[i].series) == ds.trials[i].skill)
                .count();
        }
        let acc = correct as f64 / ds.trials.len() as f64;
        assert!(acc > 0.9, "baseline accuracy {acc}");
    }
}
