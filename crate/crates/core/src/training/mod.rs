//! Per-trial stochastic training with Adam and best-epoch selection, and
//! the LOSO evaluation harness built on it.

mod loso;
mod predictions;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loso::{derive_seed, run_loso, FoldModel, LosoResult};
pub use predictions::{format_predictions, parse_predictions, read_predictions, PredictionRow};

use crate::data::{NormStats, Skill, Trial};
use crate::error::{Error, Result};
use crate::model::{ChannelGrouping, SkillNet, SkillParams, TrainedModel};
use crate::nn::{adam_step, softmax_cross_entropy, AdamConfig, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for TrainConfig {
    /// Published hyper-parameters with a desk-scale epoch budget.
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: 1e-5,
            val_fraction: 0.2,
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    /// The full 1000-epoch schedule.
    pub fn full() -> Self {
        Self {
            epochs: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("invalid learning rate {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return Err(Error::config("l2_lambda must be non-negative"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(Error::config(format!(
                "val_fraction must be in (0, 0.5), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy over the fit set during each epoch.
    pub train_loss: Vec<f64>,
    /// Mean cross-entropy over the validation split after each epoch.
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub fit_trials: Vec<String>,
    pub val_trials: Vec<String>,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

/// Stratified random split into `(fit, val)` index lists, both sorted.
///
/// Each class contributes `round(n_c * val_fraction)` trials to validation,
/// clamped so that both sides keep at least one. When some class has fewer
/// than two trials the split falls back to an unstratified one.
pub fn split_validation(
    trials: &[Trial],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if trials.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 trials to split, got {}",
            trials.len()
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::domain(format!(
            "invalid val_fraction {val_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = |n: usize| ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); Skill::ALL.len()];
    for (i, t) in trials.iter().enumerate() {
        by_class[t.skill.index()].push(i);
    }
    let stratifiable = by_class.iter().all(|c| c.is_empty() || c.len() >= 2);

    let mut val = Vec::new();
    let mut fit = Vec::new();
    if stratifiable {
        for mut members in by_class.into_iter().filter(|c| !c.is_empty()) {
            members.shuffle(&mut rng);
            let k = take(members.len());
            val.extend_from_slice(&members[..k]);
            fit.extend_from_slice(&members[k..]);
        }
    } else {
        log::warn!("too few trials per class to stratify; using an unstratified split");
        let mut all: Vec<usize> = (0..trials.len()).collect();
        all.shuffle(&mut rng);
        let k = take(all.len());
        val.extend_from_slice(&all[..k]);
        fit.extend_from_slice(&all[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

/// Mean cross-entropy of `net` over already-normalized trials.
pub fn mean_loss(net: &SkillNet<f32>, trials: &[Trial]) -> Result<f64> {
    let mut total = 0.0;
    for t in trials {
        let f = net.forward(&t.series)?;
        total += softmax_cross_entropy(&f.logits, t.skill.index())?.loss as f64;
    }
    Ok(total / trials.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Fit-set positions in the order they were visited.
    pub order: Vec<usize>,
}

/// Owns one network and steps it through epochs.
pub struct Trainer {
    net: SkillNet<f32>,
    adam: AdamState<f32>,
    fit: Vec<Trial>,
    val: Vec<Trial>,
    normalization: Option<NormStats>,
    config: TrainConfig,
    shuffle_rng: ChaCha8Rng,
    epoch: usize,
    best: Option<(usize, f64, SkillParams<f32>)>,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
}

impl Trainer {
    /// Fits normalization on `trials`, splits off validation and builds a
    /// fresh network, all seeded from `config.seed`.
    pub fn new(grouping: ChannelGrouping, trials: &[Trial], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if trials.len() < 2 {
            return Err(Error::domain("training needs at least 2 trials"));
        }
        let (prepared, normalization) = crate::data::normalize(trials, trials, config.normalize)?;
        let (fit_idx, val_idx) =
            split_validation(trials, config.val_fraction, derive_seed(config.seed, 1))?;
        let fit = fit_idx.iter().map(|&i| prepared[i].clone()).collect();
        let val = val_idx.iter().map(|&i| prepared[i].clone()).collect();

        let net = SkillNet::build(grouping, derive_seed(config.seed, 0))?;
        let lens: Vec<usize> = net.params.tensors().iter().map(|t| t.len()).collect();
        Ok(Self {
            adam: AdamState::new(config.adam(), &lens),
            net,
            fit,
            val,
            normalization,
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2)),
            config,
            epoch: 0,
            best: None,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        })
    }

    pub fn net(&self) -> &SkillNet<f32> {
        &self.net
    }

    pub fn fit_set(&self) -> &[Trial] {
        &self.fit
    }

    pub fn val_set(&self) -> &[Trial] {
        &self.val
    }

    pub fn normalization(&self) -> Option<&NormStats> {
        self.normalization.as_ref()
    }

    /// One pass over the shuffled fit set with a parameter update per trial,
    /// followed by validation.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.fit.len()).collect();
        order.shuffle(&mut self.shuffle_rng);

        let lambda2 = (2.0 * self.config.l2_lambda) as f32;
        let mut total = 0.0;
        for &i in &order {
            let trial = &self.fit[i];
            let trace = self.net.forward_trace(&trial.series)?;
            let (out, mut grads) = self.net.backward(&trace, trial.skill.index())?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    trial: trial.id(),
                    loss: out.loss as f64,
                });
            }
            total += out.loss as f64;
            if lambda2 != 0.0 {
                let mask = self.net.params.weight_mask();
                for ((g, p), is_weight) in grads
                    .tensors_mut()
                    .into_iter()
                    .zip(self.net.params.tensors())
                    .zip(mask)
                {
                    if is_weight {
                        for (gj, pj) in g.iter_mut().zip(p) {
                            *gj += lambda2 * pj;
                        }
                    }
                }
            }
            let g = grads.tensors();
            adam_step(&mut self.net.params.tensors_mut(), &g, &mut self.adam)?;
        }

        let train_loss = total / self.fit.len() as f64;
        let val_loss = mean_loss(&self.net, &self.val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                trial: "<validation>".into(),
                loss: val_loss,
            });
        }
        self.train_loss.push(train_loss);
        self.val_loss.push(val_loss);
        if self
            .best
            .as_ref()
            .is_none_or(|(_, best, _)| val_loss < *best)
        {
            self.best = Some((self.epoch, val_loss, self.net.params.clone()));
        }
        Ok(EpochStats {
            epoch: self.epoch,
            train_loss,
            val_loss,
            order,
        })
    }

    /// Restores the best-epoch parameters and produces the report.
    pub fn finish(self) -> (TrainedModel, TrainReport) {
        let Trainer {
            mut net,
            fit,
            val,
            normalization,
            config,
            best,
            train_loss,
            val_loss,
            ..
        } = self;
        let (best_epoch, best_val_loss) = match best {
            Some((epoch, loss, params)) => {
                net.params = params;
                (epoch, loss)
            }
            None => (0, f64::NAN),
        };
        let report = TrainReport {
            train_loss,
            val_loss,
            best_epoch,
            best_val_loss,
            fit_trials: fit.iter().map(Trial::id).collect(),
            val_trials: val.iter().map(Trial::id).collect(),
            config,
            checkpoint: None,
        };
        (TrainedModel { net, normalization }, report)
    }
}

/// Trains for `config.epochs` epochs and returns the best-epoch model.
pub fn train(
    grouping: &ChannelGrouping,
    trials: &[Trial],
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    let mut trainer = Trainer::new(grouping.clone(), trials, config.clone())?;
    for _ in 0..config.epochs {
        let stats = trainer.run_epoch()?;
        log::debug!(
            "epoch {}: train {:.5} val {:.5}",
            stats.epoch,
            stats.train_loss,
            stats.val_loss
        );
    }
    Ok(trainer.finish())
}
