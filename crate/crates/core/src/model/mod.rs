//! The channel-grouped three-layer network.
//!
//! Layer 1 runs a separate 8-filter convolution over each of the 20
//! sub-clusters. Layer 2 runs one 16-filter convolution per manipulator over
//! that manipulator's five concatenated sub-cluster outputs (40 channels).
//! Layer 3 is a single 32-filter convolution across all 64 channels. Every
//! convolution is followed by ReLU; the third layer's activations are
//! average-pooled over time and fed to a 3-way softmax head.

mod checkpoint;
mod grouping;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, CheckpointHeader, LayerShape, CHECKPOINT_FORMAT_VERSION};
pub use grouping::{
    ChannelGrouping, Cluster, SubCluster, CHANNELS_PER_CLUSTER, CLUSTER_NAMES, INPUT_CHANNELS,
    SUB_CLUSTER_ROLES,
};
pub use params::SkillParams;

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{
    argmax, conv1d_backward, conv1d_same, dense_backward, dense_logits, gap, gap_backward, relu,
    relu_backward, softmax, softmax_cross_entropy, ConvParams, DenseParams, LossOutput, Mts, Real,
    NUM_CLASSES,
};

pub const LAYER1_FILTERS: usize = 8;
pub const LAYER2_FILTERS: usize = 16;
pub const LAYER3_FILTERS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct SkillNet<T = f32> {
    pub grouping: ChannelGrouping,
    pub params: SkillParams<T>,
    pub seed: u64,
}

/// Network outputs for one series.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub logits: [T; NUM_CLASSES],
    pub probs: [T; NUM_CLASSES],
    /// Post-ReLU third-layer activations, `32 x l`.
    pub a3: Mts<T>,
}

/// Every intermediate needed by [`SkillNet::backward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    sub_inputs: Vec<Mts<T>>,
    l1_pre: Vec<Mts<T>>,
    l2_inputs: Vec<Mts<T>>,
    l2_pre: Vec<Mts<T>>,
    l3_input: Mts<T>,
    l3_pre: Mts<T>,
    pub a3: Mts<T>,
    pub pooled: Vec<T>,
    pub logits: [T; NUM_CLASSES],
    pub probs: [T; NUM_CLASSES],
}

impl<T: Real> ForwardTrace<T> {
    /// Post-ReLU output of layer-1 sub-cluster `s` (flat index 0..20).
    pub fn layer1_output(&self, s: usize) -> Mts<T> {
        relu(&self.l1_pre[s])
    }

    /// Post-ReLU output of layer-2 cluster `c`.
    pub fn layer2_output(&self, c: usize) -> Mts<T> {
        relu(&self.l2_pre[c])
    }

    /// Pre-activation values of every ReLU in the network, layer by layer.
    pub fn pre_activations(&self) -> impl Iterator<Item = T> + '_ {
        self.l1_pre
            .iter()
            .chain(&self.l2_pre)
            .chain(std::iter::once(&self.l3_pre))
            .flat_map(|m| m.values().iter().copied())
    }

    pub fn len(&self) -> usize {
        self.a3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a3.is_empty()
    }
}

fn channel_block<T: Real>(m: &Mts<T>, start: usize, count: usize) -> Mts<T> {
    let idx: Vec<usize> = (start..start + count).collect();
    m.select_channels(&idx).expect("block within bounds")
}

impl SkillNet<f32> {
    /// Glorot-initialized network with zero biases, deterministic per seed.
    pub fn build(grouping: ChannelGrouping, seed: u64) -> Result<Self> {
        Self::build_with(grouping, seed)
    }
}

impl<T: Real> SkillNet<T> {
    pub fn build_with(grouping: ChannelGrouping, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer1 = Vec::with_capacity(20);
        for (_, sub) in grouping.sub_clusters() {
            layer1.push(ConvParams::glorot(
                LAYER1_FILTERS,
                sub.channels.len(),
                &mut rng,
            )?);
        }
        let mut layer2 = Vec::with_capacity(grouping.clusters().len());
        for cluster in grouping.clusters() {
            layer2.push(ConvParams::glorot(
                LAYER2_FILTERS,
                cluster.sub_clusters.len() * LAYER1_FILTERS,
                &mut rng,
            )?);
        }
        let layer3 = ConvParams::glorot(
            LAYER3_FILTERS,
            grouping.clusters().len() * LAYER2_FILTERS,
            &mut rng,
        )?;
        let head = DenseParams::glorot(LAYER3_FILTERS, &mut rng)?;
        Ok(Self {
            grouping,
            params: SkillParams {
                layer1,
                layer2,
                layer3,
                head,
            },
            seed,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn cast<U: Real>(&self) -> SkillNet<U> {
        SkillNet {
            grouping: self.grouping.clone(),
            params: self.params.cast(),
            seed: self.seed,
        }
    }

    pub fn forward_trace(&self, input: &Mts<T>) -> Result<ForwardTrace<T>> {
        if input.channels() != INPUT_CHANNELS {
            return Err(Error::shape(format!(
                "network expects {INPUT_CHANNELS} input channels, got {}",
                input.channels()
            )));
        }
        if input.is_empty() {
            return Err(Error::EmptyInput("input series has no frames".into()));
        }
        let p = &self.params;

        let mut sub_inputs = Vec::with_capacity(p.layer1.len());
        let mut l1_pre = Vec::with_capacity(p.layer1.len());
        for ((_, sub), conv) in self.grouping.sub_clusters().zip(&p.layer1) {
            let x = input.select_channels(&sub.channels)?;
            l1_pre.push(conv1d_same(&x, conv)?);
            sub_inputs.push(x);
        }

        let mut l2_inputs = Vec::with_capacity(p.layer2.len());
        let mut l2_pre = Vec::with_capacity(p.layer2.len());
        let mut offset = 0;
        for (cluster, conv) in self.grouping.clusters().iter().zip(&p.layer2) {
            let n = cluster.sub_clusters.len();
            let parts: Vec<Mts<T>> = l1_pre[offset..offset + n].iter().map(relu).collect();
            offset += n;
            let x = Mts::concat_channels(&parts)?;
            l2_pre.push(conv1d_same(&x, conv)?);
            l2_inputs.push(x);
        }

        let l2_post: Vec<Mts<T>> = l2_pre.iter().map(relu).collect();
        let l3_input = Mts::concat_channels(&l2_post)?;
        let l3_pre = conv1d_same(&l3_input, &p.layer3)?;
        let a3 = relu(&l3_pre);
        debug_assert_eq!(a3.len(), input.len());
        let pooled = gap(&a3)?;
        let logits = dense_logits(&pooled, &p.head)?;
        let probs = softmax(&logits);

        Ok(ForwardTrace {
            sub_inputs,
            l1_pre,
            l2_inputs,
            l2_pre,
            l3_input,
            l3_pre,
            a3,
            pooled,
            logits,
            probs,
        })
    }

    pub fn forward(&self, input: &Mts<T>) -> Result<Forward<T>> {
        let trace = self.forward_trace(input)?;
        Ok(Forward {
            logits: trace.logits,
            probs: trace.probs,
            a3: trace.a3,
        })
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn predict(&self, input: &Mts<T>) -> Result<usize> {
        Ok(argmax(&self.forward(input)?.probs))
    }

    /// Cross-entropy loss against `label` and its gradient for every parameter.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        label: usize,
    ) -> Result<(LossOutput<T>, SkillParams<T>)> {
        let p = &self.params;
        let out = softmax_cross_entropy(&trace.logits, label)?;
        let (head, d_pooled) = dense_backward(&trace.pooled, &p.head, &out.logit_grads)?;

        let d_a3 = gap_backward(&d_pooled, trace.len())?;
        let d_l3_pre = relu_backward(&trace.l3_pre, &d_a3)?;
        let (layer3, d_l3_in) = conv1d_backward(&trace.l3_input, &p.layer3, &d_l3_pre)?;

        let mut layer2 = Vec::with_capacity(p.layer2.len());
        let mut layer1 = Vec::with_capacity(p.layer1.len());
        let mut sub_idx = 0;
        for (c, cluster) in self.grouping.clusters().iter().enumerate() {
            let d_post = channel_block(&d_l3_in, c * LAYER2_FILTERS, LAYER2_FILTERS);
            let d_pre = relu_backward(&trace.l2_pre[c], &d_post)?;
            let (g2, d_in) = conv1d_backward(&trace.l2_inputs[c], &p.layer2[c], &d_pre)?;
            layer2.push(g2);
            for j in 0..cluster.sub_clusters.len() {
                let d_post = channel_block(&d_in, j * LAYER1_FILTERS, LAYER1_FILTERS);
                let d_pre = relu_backward(&trace.l1_pre[sub_idx], &d_post)?;
                layer1.push(crate::nn::conv1d_param_grads(
                    &trace.sub_inputs[sub_idx],
                    &p.layer1[sub_idx],
                    &d_pre,
                )?);
                sub_idx += 1;
            }
        }

        Ok((
            out,
            SkillParams {
                layer1,
                layer2,
                layer3,
                head,
            },
        ))
    }
}

/// A trained network together with the input normalization it was fit with.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub net: SkillNet<f32>,
    pub normalization: Option<NormStats>,
}

impl TrainedModel {
    pub fn prepare(&self, series: &Mts<f32>) -> Result<Mts<f32>> {
        match &self.normalization {
            Some(stats) => stats.apply(series),
            None => Ok(series.clone()),
        }
    }

    /// Forward pass on a raw (un-normalized) series.
    pub fn forward(&self, series: &Mts<f32>) -> Result<Forward<f32>> {
        self.net.forward(&self.prepare(series)?)
    }

    pub fn predict(&self, series: &Mts<f32>) -> Result<usize> {
        Ok(argmax(&self.forward(series)?.probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_grouping;
    use rand::Rng;

    fn random_input(seed: u64, l: usize) -> Mts<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mts::new(
            INPUT_CHANNELS,
            l,
            (0..INPUT_CHANNELS * l)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn canonical_parameter_count() {
        let net = SkillNet::build(default_grouping(), 0).unwrap();
        assert_eq!(
            net.params
                .layer1
                .iter()
                .map(|c| c.num_params())
                .sum::<usize>(),
            1_984
        );
        assert_eq!(
            net.params
                .layer2
                .iter()
                .map(|c| c.num_params())
                .sum::<usize>(),
            7_744
        );
        assert_eq!(net.params.layer3.num_params(), 6_176);
        assert_eq!(net.params.head.num_params(), 99);
        assert_eq!(net.num_params(), 16_003);
    }

    #[test]
    fn build_is_deterministic() {
        let a = SkillNet::build(default_grouping(), 17).unwrap();
        let b = SkillNet::build(default_grouping(), 17).unwrap();
        assert_eq!(a, b);
        let c = SkillNet::build(default_grouping(), 18).unwrap();
        assert_ne!(a.params.layer3.kernels, c.params.layer3.kernels);
        assert!(a
            .params
            .tensors()
            .iter()
            .zip(a.params.weight_mask())
            .all(|(t, is_w)| is_w || t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_input_gives_uniform_probs() {
        let net = SkillNet::build(default_grouping(), 3).unwrap();
        let f = net.forward(&Mts::zeros(INPUT_CHANNELS, 10)).unwrap();
        assert_eq!(f.logits, [0.0; 3]);
        for p in f.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }
        assert_eq!(net.predict(&Mts::zeros(INPUT_CHANNELS, 10)).unwrap(), 0);
    }

    #[test]
    fn length_preserved() {
        let net = SkillNet::build(default_grouping(), 1).unwrap();
        for l in [1, 2, 37, 517] {
            let f = net.forward(&random_input(l as u64, l)).unwrap();
            assert_eq!((f.a3.channels(), f.a3.len()), (32, l));
        }
    }

    #[test]
    fn wrong_channel_count() {
        let net = SkillNet::build(default_grouping(), 1).unwrap();
        assert!(matches!(
            net.forward(&Mts::zeros(75, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn master_right_perturbation_is_isolated() {
        let g = default_grouping();
        let net = SkillNet::build(g.clone(), 5).unwrap();
        let x = random_input(9, 20);
        let ch = g.sub_cluster("MR", "xyz").unwrap().channels[1];
        let mut y = x.clone();
        for t in 0..20 {
            y.set(ch, t, y.get(ch, t) + 0.75);
        }
        let (tx, ty) = (
            net.forward_trace(&x).unwrap(),
            net.forward_trace(&y).unwrap(),
        );
        for c in [0, 2, 3] {
            assert_eq!(tx.layer2_output(c), ty.layer2_output(c));
        }
        assert_ne!(tx.layer2_output(1), ty.layer2_output(1));
    }
}
