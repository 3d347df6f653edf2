//! Central finite-difference checks of every analytic gradient, in f64.
//!
//! Each layer is checked in isolation against a scalar probe loss
//! `sum(U ⊙ layer(x))` with random `U`, and the assembled network is checked
//! against the real cross-entropy. Coordinates whose `±h` perturbation flips
//! any ReLU are skipped and counted, since the loss is not differentiable
//! across the flip.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ChannelGrouping, SkillNet, SkillParams, INPUT_CHANNELS};
use crate::nn::{
    conv1d_backward, conv1d_same, dense_backward, dense_logits, gap, gap_backward, relu,
    relu_backward, softmax_cross_entropy, ConvParams, DenseParams, Mts, NUM_CLASSES,
};

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
pub const ABS_FLOOR: f64 = 1e-8;
pub const MAX_CHECK_LEN: usize = 16;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl TensorCheck {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    fn record(&mut self, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.worst_index.is_none() {
            self.max_rel_error = err;
            self.worst_index = Some(index);
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped).sum()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.tensors.iter().all(|t| t.passed(tol))
    }

    pub fn failing(&self, tol: f64) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(move |t| !t.passed(tol))
    }

    fn merge(&mut self, other: GradCheckReport) {
        for t in other.tensors {
            match self.tensors.iter_mut().find(|s| s.name == t.name) {
                Some(s) => {
                    if t.max_rel_error > s.max_rel_error {
                        s.max_rel_error = t.max_rel_error;
                        s.worst_index = t.worst_index;
                        s.worst_analytic = t.worst_analytic;
                        s.worst_numeric = t.worst_numeric;
                    }
                    s.checked += t.checked;
                    s.skipped += t.skipped;
                }
                None => self.tensors.push(t),
            }
        }
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tensor\tchecked\tskipped\tmax_rel_error")?;
        for t in &self.tensors {
            writeln!(
                f,
                "{}\t{}\t{}\t{:.3e}",
                t.name, t.checked, t.skipped, t.max_rel_error
            )?;
        }
        Ok(())
    }
}

/// Which coordinates of each tensor to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    All,
    /// Up to this many random coordinates per tensor.
    Sample(usize),
}

impl Coverage {
    fn indices(self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self {
            Coverage::Sample(n) if n < len => {
                let mut v = sample(rng, len, n).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        }
    }
}

/// Deliberate corruption of the analytic gradient, to confirm the checker
/// catches a wrong backward pass. Adds `offset` to every coordinate of the
/// tensors whose name starts with `tensor_prefix`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fault {
    pub tensor_prefix: String,
    pub offset: f64,
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_mts(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Mts<f64> {
    Mts::new(c, l, random_vec(rng, c * l)).expect("shape is consistent")
}

fn probe(out: &Mts<f64>, upstream: &Mts<f64>) -> f64 {
    out.values()
        .iter()
        .zip(upstream.values())
        .map(|(a, b)| a * b)
        .sum()
}

/// Perturbs `values[i]` by `±h` and returns the central difference of `f`.
fn central_diff(values: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = values[i];
    values[i] = orig + FD_STEP;
    let plus = f(values);
    values[i] = orig - FD_STEP;
    let minus = f(values);
    values[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// One convolution of the given shape: kernels, biases and input gradients.
pub fn check_conv(
    out_channels: usize,
    in_channels: usize,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let params = ConvParams::glorot(out_channels, in_channels, rng)?;
    let params = ConvParams::from_parts(
        out_channels,
        in_channels,
        params.kernels,
        random_vec(rng, out_channels),
    )?;
    let x = random_mts(rng, in_channels, len);
    let u = random_mts(rng, out_channels, len);
    let (grads, dx) = conv1d_backward(&x, &params, &u)?;
    let name = format!("conv{out_channels}x{in_channels}");

    let mut kernels = TensorCheck::new(format!("{name}.kernels"));
    let mut p = params.clone();
    for i in 0..p.kernels.len() {
        let numeric = {
            let (orig, x, u) = (p.kernels[i], &x, &u);
            p.kernels[i] = orig + FD_STEP;
            let plus = probe(&conv1d_same(x, &p)?, u);
            p.kernels[i] = orig - FD_STEP;
            let minus = probe(&conv1d_same(x, &p)?, u);
            p.kernels[i] = orig;
            (plus - minus) / (2.0 * FD_STEP)
        };
        kernels.record(i, grads.kernels[i], numeric);
    }
    let mut biases = TensorCheck::new(format!("{name}.biases"));
    for i in 0..p.biases.len() {
        let orig = p.biases[i];
        p.biases[i] = orig + FD_STEP;
        let plus = probe(&conv1d_same(&x, &p)?, &u);
        p.biases[i] = orig - FD_STEP;
        let minus = probe(&conv1d_same(&x, &p)?, &u);
        p.biases[i] = orig;
        biases.record(i, grads.biases[i], (plus - minus) / (2.0 * FD_STEP));
    }
    let mut input = TensorCheck::new(format!("{name}.input"));
    let mut xv = x.values().to_vec();
    for i in 0..xv.len() {
        let numeric = central_diff(&mut xv, i, |v| {
            let xm = Mts::new(in_channels, len, v.to_vec()).expect("shape");
            probe(&conv1d_same(&xm, &params).expect("valid conv"), &u)
        });
        input.record(i, dx.values()[i], numeric);
    }
    Ok(GradCheckReport {
        tensors: vec![kernels, biases, input],
    })
}

pub fn check_relu(channels: usize, len: usize, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_mts(rng, channels, len);
    let u = random_mts(rng, channels, len);
    let dx = relu_backward(&x, &u)?;
    let mut t = TensorCheck::new("relu.input");
    let mut xv = x.values().to_vec();
    for i in 0..xv.len() {
        if xv[i].abs() <= FD_STEP {
            t.skipped += 1;
            continue;
        }
        let numeric = central_diff(&mut xv, i, |v| {
            probe(
                &relu(&Mts::new(channels, len, v.to_vec()).expect("shape")),
                &u,
            )
        });
        t.record(i, dx.values()[i], numeric);
    }
    Ok(GradCheckReport { tensors: vec![t] })
}

pub fn check_gap(channels: usize, len: usize, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = random_mts(rng, channels, len);
    let u = random_vec(rng, channels);
    let dx = gap_backward(&u, len)?;
    let mut t = TensorCheck::new("gap.input");
    let mut xv = x.values().to_vec();
    for i in 0..xv.len() {
        let numeric = central_diff(&mut xv, i, |v| {
            let pooled = gap(&Mts::new(channels, len, v.to_vec()).expect("shape")).expect("gap");
            pooled.iter().zip(&u).map(|(a, b)| a * b).sum()
        });
        t.record(i, dx.values()[i], numeric);
    }
    Ok(GradCheckReport { tensors: vec![t] })
}

pub fn check_dense(features: usize, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let params = DenseParams::from_parts(
        features,
        random_vec(rng, NUM_CLASSES * features),
        random_vec(rng, NUM_CLASSES),
    )?;
    let x = random_vec(rng, features);
    let u: [f64; NUM_CLASSES] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let (grads, dx) = dense_backward(&x, &params, &u)?;
    let eval = |p: &DenseParams<f64>, x: &[f64]| -> f64 {
        let z = dense_logits(x, p).expect("dense");
        z.iter().zip(&u).map(|(a, b)| a * b).sum()
    };
    let mut weights = TensorCheck::new("dense.weights");
    let mut biases = TensorCheck::new("dense.biases");
    let mut input = TensorCheck::new("dense.input");
    let mut p = params.clone();
    for i in 0..p.weights.len() {
        let mut w = p.weights.clone();
        let numeric = central_diff(&mut w, i, |w| {
            p.weights.copy_from_slice(w);
            eval(&p, &x)
        });
        p.weights = params.weights.clone();
        weights.record(i, grads.weights[i], numeric);
    }
    for i in 0..NUM_CLASSES {
        let mut b = p.biases.clone();
        let numeric = central_diff(&mut b, i, |b| {
            p.biases.copy_from_slice(b);
            eval(&p, &x)
        });
        p.biases = params.biases.clone();
        biases.record(i, grads.biases[i], numeric);
    }
    let mut xv = x.clone();
    for i in 0..features {
        let numeric = central_diff(&mut xv, i, |v| eval(&params, v));
        input.record(i, dx[i], numeric);
    }
    Ok(GradCheckReport {
        tensors: vec![weights, biases, input],
    })
}

pub fn check_softmax_ce(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let logits: [f64; NUM_CLASSES] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
    let label = rng.gen_range(0..NUM_CLASSES);
    let out = softmax_cross_entropy(&logits, label)?;
    let mut t = TensorCheck::new("softmax_ce.logits");
    let mut z = logits.to_vec();
    for i in 0..NUM_CLASSES {
        let numeric = central_diff(&mut z, i, |v| {
            let arr: [f64; NUM_CLASSES] = v.try_into().expect("three logits");
            softmax_cross_entropy(&arr, label).expect("label").loss
        });
        t.record(i, out.logit_grads[i], numeric);
    }
    Ok(GradCheckReport { tensors: vec![t] })
}

fn loss_and_pattern(
    net: &SkillNet<f64>,
    input: &Mts<f64>,
    label: usize,
) -> Result<(f64, Vec<bool>)> {
    let trace = net.forward_trace(input)?;
    let pattern = trace.pre_activations().map(|v| v > 0.0).collect();
    Ok((softmax_cross_entropy(&trace.logits, label)?.loss, pattern))
}

/// Every parameter tensor of the assembled network against the cross-entropy
/// of `label`.
pub fn check_model(
    net: &SkillNet<f64>,
    input: &Mts<f64>,
    label: usize,
    coverage: Coverage,
    rng: &mut ChaCha8Rng,
    fault: Option<&Fault>,
) -> Result<GradCheckReport> {
    let trace = net.forward_trace(input)?;
    let base_pattern: Vec<bool> = trace.pre_activations().map(|v| v > 0.0).collect();
    let (_, mut grads) = net.backward(&trace, label)?;
    let names = net.params.tensor_names(&net.grouping);
    if let Some(fault) = fault {
        if !names.iter().any(|n| n.starts_with(&fault.tensor_prefix)) {
            return Err(Error::config(format!(
                "no parameter tensor matches '{}'",
                fault.tensor_prefix
            )));
        }
        for (name, g) in names.iter().zip(grads.tensors_mut()) {
            if name.starts_with(&fault.tensor_prefix) {
                g.iter_mut().for_each(|v| *v += fault.offset);
            }
        }
    }
    let grads: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut work = net.clone();
    let mut report = GradCheckReport::default();
    for (ti, name) in names.iter().enumerate() {
        let mut check = TensorCheck::new(format!("model.{name}"));
        let len = grads[ti].len();
        for i in coverage.indices(len, rng) {
            let orig = work.params.tensors()[ti][i];
            work.params.tensors_mut()[ti][i] = orig + FD_STEP;
            let (plus, p_pat) = loss_and_pattern(&work, input, label)?;
            work.params.tensors_mut()[ti][i] = orig - FD_STEP;
            let (minus, m_pat) = loss_and_pattern(&work, input, label)?;
            work.params.tensors_mut()[ti][i] = orig;
            if p_pat != base_pattern || m_pat != base_pattern {
                check.skipped += 1;
                continue;
            }
            check.record(i, grads[ti][i], (plus - minus) / (2.0 * FD_STEP));
        }
        report.tensors.push(check);
    }
    Ok(report)
}

/// A random network, input and label for one gradient-check instance.
pub struct Instance {
    pub net: SkillNet<f64>,
    pub input: Mts<f64>,
    pub label: usize,
}

impl Instance {
    /// Random biases are drawn as well, so bias paths carry signal.
    pub fn random(grouping: &ChannelGrouping, seed: u64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput("instance length must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = SkillNet::<f64>::build_with(grouping.clone(), rng.gen())?;
        randomize_biases(&mut net.params, &mut rng);
        let input = random_mts(&mut rng, INPUT_CHANNELS, len);
        let label = rng.gen_range(0..NUM_CLASSES);
        Ok(Self { net, input, label })
    }
}

fn randomize_biases(params: &mut SkillParams<f64>, rng: &mut ChaCha8Rng) {
    let mask = params.weight_mask();
    for (t, is_weight) in params.tensors_mut().into_iter().zip(mask) {
        if !is_weight {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub instances: usize,
    pub layers: GradCheckReport,
    pub model: GradCheckReport,
}

impl SuiteReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers.max_rel_error().max(self.model.max_rel_error())
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.layers.passed(tol) && self.model.passed(tol)
    }
}

/// `instances` random instances, each with a length drawn from
/// `1..=max_len`. Layer shapes follow the network: every distinct layer-1
/// sub-cluster width, the layer-2 and layer-3 fan-ins, ReLU, pooling, the head
/// and the loss.
pub fn run_suite(
    grouping: &ChannelGrouping,
    instances: usize,
    max_len: usize,
    seed: u64,
    coverage: Coverage,
    fault: Option<&Fault>,
) -> Result<SuiteReport> {
    if max_len == 0 || max_len > MAX_CHECK_LEN {
        return Err(Error::config(format!(
            "gradient-check length must be in 1..={MAX_CHECK_LEN}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = GradCheckReport::default();
    let mut model = GradCheckReport::default();
    let mut widths: Vec<usize> = grouping
        .sub_clusters()
        .map(|(_, s)| s.channels.len())
        .collect();
    widths.sort_unstable();
    widths.dedup();
    let l2_in = grouping.clusters()[0].sub_clusters.len() * crate::model::LAYER1_FILTERS;
    let l3_in = grouping.clusters().len() * crate::model::LAYER2_FILTERS;
    for _ in 0..instances {
        let len = rng.gen_range(1..=max_len);
        for &w in &widths {
            layers.merge(check_conv(crate::model::LAYER1_FILTERS, w, len, &mut rng)?);
        }
        layers.merge(check_conv(
            crate::model::LAYER2_FILTERS,
            l2_in,
            len,
            &mut rng,
        )?);
        layers.merge(check_conv(
            crate::model::LAYER3_FILTERS,
            l3_in,
            len,
            &mut rng,
        )?);
        layers.merge(check_relu(crate::model::LAYER3_FILTERS, len, &mut rng)?);
        layers.merge(check_gap(crate::model::LAYER3_FILTERS, len, &mut rng)?);
        layers.merge(check_dense(crate::model::LAYER3_FILTERS, &mut rng)?);
        layers.merge(check_softmax_ce(&mut rng)?);

        let inst = Instance::random(grouping, rng.gen(), len)?;
        model.merge(check_model(
            &inst.net,
            &inst.input,
            inst.label,
            coverage,
            &mut rng,
            fault,
        )?);
    }
    Ok(SuiteReport {
        instances,
        layers,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_grouping;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, -1e-12) < 1e-3);
    }

    #[test]
    fn layers_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (o, i) in [(8, 1), (8, 3), (8, 9), (16, 40), (32, 64)] {
            let r = check_conv(o, i, 7, &mut rng).unwrap();
            assert!(r.passed(FD_TOLERANCE), "{r}");
        }
        for r in [
            check_relu(5, 9, &mut rng).unwrap(),
            check_gap(5, 9, &mut rng).unwrap(),
            check_dense(32, &mut rng).unwrap(),
            check_softmax_ce(&mut rng).unwrap(),
        ] {
            assert!(r.passed(FD_TOLERANCE), "{r}");
        }
    }

    #[test]
    fn model_passes_and_fault_is_caught() {
        let g = default_grouping();
        let inst = Instance::random(&g, 3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ok = check_model(
            &inst.net,
            &inst.input,
            inst.label,
            Coverage::Sample(6),
            &mut rng,
            None,
        )
        .unwrap();
        assert!(ok.passed(FD_TOLERANCE), "{ok}");
        assert_eq!(ok.tensors.len(), 52);

        let fault = Fault {
            tensor_prefix: "layer2.SL".into(),
            offset: 1e-2,
        };
        let bad = check_model(
            &inst.net,
            &inst.input,
            inst.label,
            Coverage::Sample(6),
            &mut rng,
            Some(&fault),
        )
        .unwrap();
        let failing: Vec<_> = bad.failing(FD_TOLERANCE).map(|t| t.name.as_str()).collect();
        assert_eq!(
            failing,
            ["model.layer2.SL.kernels", "model.layer2.SL.biases"]
        );
    }

    #[test]
    fn unknown_fault_target_rejected() {
        let g = default_grouping();
        let inst = Instance::random(&g, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fault = Fault {
            tensor_prefix: "layer9".into(),
            offset: 1.0,
        };
        assert!(matches!(
            check_model(
                &inst.net,
                &inst.input,
                0,
                Coverage::Sample(1),
                &mut rng,
                Some(&fault)
            ),
            Err(Error::Config(_))
        ));
    }
}
