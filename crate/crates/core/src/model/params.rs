use crate::nn::{ConvParams, DenseParams, Real};

/// All learnable tensors of the network. Also used to hold gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillParams<T = f32> {
    /// One convolution per sub-cluster, cluster-major.
    pub layer1: Vec<ConvParams<T>>,
    /// One convolution per cluster.
    pub layer2: Vec<ConvParams<T>>,
    pub layer3: ConvParams<T>,
    pub head: DenseParams<T>,
}

impl<T: Real> SkillParams<T> {
    pub fn zeros_like(&self) -> Self {
        let conv = |c: &ConvParams<T>| ConvParams::zeros(c.out_channels(), c.in_channels());
        Self {
            layer1: self.layer1.iter().map(conv).collect(),
            layer2: self.layer2.iter().map(conv).collect(),
            layer3: conv(&self.layer3),
            head: DenseParams::zeros(self.head.features()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flat views in a fixed order: each convolution's kernels then biases,
    /// layer by layer, then head weights and biases.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * (self.layer1.len() + self.layer2.len() + 2));
        for c in self.layer1.iter().chain(&self.layer2).chain([&self.layer3]) {
            out.push(&c.kernels[..]);
            out.push(&c.biases[..]);
        }
        out.push(&self.head.weights[..]);
        out.push(&self.head.biases[..]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * (self.layer1.len() + self.layer2.len() + 2));
        for c in self
            .layer1
            .iter_mut()
            .chain(self.layer2.iter_mut())
            .chain([&mut self.layer3])
        {
            out.push(&mut c.kernels[..]);
            out.push(&mut c.biases[..]);
        }
        out.push(&mut self.head.weights[..]);
        out.push(&mut self.head.biases[..]);
        out
    }

    /// `true` for weight tensors, `false` for biases, aligned with [`Self::tensors`].
    pub fn weight_mask(&self) -> Vec<bool> {
        let n = self.layer1.len() + self.layer2.len() + 2;
        (0..2 * n).map(|i| i % 2 == 0).collect()
    }

    /// Human-readable tensor names aligned with [`Self::tensors`].
    pub fn tensor_names(&self, grouping: &super::ChannelGrouping) -> Vec<String> {
        let mut names = Vec::new();
        for (cluster, sub) in grouping.sub_clusters() {
            names.push(format!("layer1.{}.{}.kernels", cluster.name, sub.name));
            names.push(format!("layer1.{}.{}.biases", cluster.name, sub.name));
        }
        for cluster in grouping.clusters() {
            names.push(format!("layer2.{}.kernels", cluster.name));
            names.push(format!("layer2.{}.biases", cluster.name));
        }
        names.push("layer3.kernels".into());
        names.push("layer3.biases".into());
        names.push("head.weights".into());
        names.push("head.biases".into());
        names
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .zip(self.weight_mask())
            .filter(|(_, w)| *w)
            .flat_map(|(t, _)| t.iter())
            .map(|v| {
                let v = v.to_f64().unwrap_or(0.0);
                v * v
            })
            .sum()
    }

    pub fn cast<U: Real>(&self) -> SkillParams<U> {
        SkillParams {
            layer1: self.layer1.iter().map(ConvParams::cast).collect(),
            layer2: self.layer2.iter().map(ConvParams::cast).collect(),
            layer3: self.layer3.cast(),
            head: self.head.cast(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}
