//! JSON checkpoints.
//!
//! Tensors are written as nested arrays, kernels in `[out][in][tap]` order
//! and head weights in `[class][feature]` order. Values are stored as the
//! exact decimal expansion of each `f32` widened to `f64`, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelGrouping, SkillNet, SkillParams, TrainedModel};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{ConvParams, DenseParams, KERNEL_WIDTH, NUM_CLASSES};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    /// 3 for convolutions, absent for the dense head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub seed: u64,
    pub grouping: ChannelGrouping,
    pub layer_shapes: Vec<LayerShape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ConvTensor {
    name: String,
    kernels: Vec<Vec<Vec<f64>>>,
    biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DenseTensor {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamTensors {
    layer1: Vec<ConvTensor>,
    layer2: Vec<ConvTensor>,
    layer3: ConvTensor,
    head: DenseTensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub normalization: Option<NormStats>,
    parameters: ParamTensors,
}

fn conv_to_json(name: String, c: &ConvParams<f32>) -> ConvTensor {
    let kernels = (0..c.out_channels())
        .map(|o| {
            (0..c.in_channels())
                .map(|i| {
                    (0..KERNEL_WIDTH)
                        .map(|k| c.weight(o, i, k) as f64)
                        .collect()
                })
                .collect()
        })
        .collect();
    ConvTensor {
        name,
        kernels,
        biases: c.biases.iter().map(|&b| b as f64).collect(),
    }
}

fn to_f32(v: f64, what: &str) -> Result<f32> {
    let x = v as f32;
    if !x.is_finite() {
        return Err(Error::config(format!(
            "{what}: value {v} is not a finite f32"
        )));
    }
    Ok(x)
}

fn conv_from_json(t: &ConvTensor, expected: &LayerShape) -> Result<ConvParams<f32>> {
    let out = t.kernels.len();
    let inp = t.kernels.first().map_or(0, Vec::len);
    if out != expected.out_channels || inp != expected.in_channels {
        return Err(Error::config(format!(
            "{}: stored kernel is {out}x{inp}, expected {}x{}",
            t.name, expected.out_channels, expected.in_channels
        )));
    }
    let mut flat = Vec::with_capacity(out * inp * KERNEL_WIDTH);
    for row in &t.kernels {
        if row.len() != inp {
            return Err(Error::config(format!("{}: ragged kernel tensor", t.name)));
        }
        for taps in row {
            if taps.len() != KERNEL_WIDTH {
                return Err(Error::config(format!(
                    "{}: kernel width {} (expected {KERNEL_WIDTH})",
                    t.name,
                    taps.len()
                )));
            }
            for &v in taps {
                flat.push(to_f32(v, &t.name)?);
            }
        }
    }
    let biases = t
        .biases
        .iter()
        .map(|&v| to_f32(v, &t.name))
        .collect::<Result<Vec<_>>>()?;
    ConvParams::from_parts(out, inp, flat, biases)
        .map_err(|e| Error::config(format!("{}: {e}", t.name)))
}

fn expected_shapes(grouping: &ChannelGrouping) -> Vec<LayerShape> {
    use super::{LAYER1_FILTERS, LAYER2_FILTERS, LAYER3_FILTERS};
    let mut shapes = Vec::new();
    for (cluster, sub) in grouping.sub_clusters() {
        shapes.push(LayerShape {
            name: format!("layer1.{}.{}", cluster.name, sub.name),
            out_channels: LAYER1_FILTERS,
            in_channels: sub.channels.len(),
            kernel_width: Some(KERNEL_WIDTH),
        });
    }
    for cluster in grouping.clusters() {
        shapes.push(LayerShape {
            name: format!("layer2.{}", cluster.name),
            out_channels: LAYER2_FILTERS,
            in_channels: cluster.sub_clusters.len() * LAYER1_FILTERS,
            kernel_width: Some(KERNEL_WIDTH),
        });
    }
    shapes.push(LayerShape {
        name: "layer3".into(),
        out_channels: LAYER3_FILTERS,
        in_channels: grouping.clusters().len() * LAYER2_FILTERS,
        kernel_width: Some(KERNEL_WIDTH),
    });
    shapes.push(LayerShape {
        name: "head".into(),
        out_channels: NUM_CLASSES,
        in_channels: LAYER3_FILTERS,
        kernel_width: None,
    });
    shapes
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        let net = &model.net;
        let shapes = expected_shapes(&net.grouping);
        let p = &net.params;
        let layer1 = shapes
            .iter()
            .zip(&p.layer1)
            .map(|(s, c)| conv_to_json(s.name.clone(), c))
            .collect();
        let layer2 = shapes[p.layer1.len()..]
            .iter()
            .zip(&p.layer2)
            .map(|(s, c)| conv_to_json(s.name.clone(), c))
            .collect();
        let head = DenseTensor {
            weights: (0..NUM_CLASSES)
                .map(|c| p.head.class_weights(c).iter().map(|&w| w as f64).collect())
                .collect(),
            biases: p.head.biases.iter().map(|&b| b as f64).collect(),
        };
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_FORMAT_VERSION,
                seed: net.seed,
                grouping: net.grouping.clone(),
                layer_shapes: shapes,
            },
            normalization: model.normalization.clone(),
            parameters: ParamTensors {
                layer1,
                layer2,
                layer3: conv_to_json("layer3".into(), &p.layer3),
                head,
            },
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint format version {}",
                self.header.format_version
            )));
        }
        let shapes = expected_shapes(&self.header.grouping);
        if shapes != self.header.layer_shapes {
            return Err(Error::config(
                "checkpoint layer shapes do not match its channel grouping",
            ));
        }
        let n1 = self.header.grouping.sub_clusters().count();
        let n2 = self.header.grouping.clusters().len();
        let params = &self.parameters;
        if params.layer1.len() != n1 || params.layer2.len() != n2 {
            return Err(Error::config(format!(
                "checkpoint has {} layer-1 and {} layer-2 tensors, expected {n1} and {n2}",
                params.layer1.len(),
                params.layer2.len()
            )));
        }
        let layer1 = params
            .layer1
            .iter()
            .zip(&shapes)
            .map(|(t, s)| conv_from_json(t, s))
            .collect::<Result<Vec<_>>>()?;
        let layer2 = params
            .layer2
            .iter()
            .zip(&shapes[n1..])
            .map(|(t, s)| conv_from_json(t, s))
            .collect::<Result<Vec<_>>>()?;
        let layer3 = conv_from_json(&params.layer3, &shapes[n1 + n2])?;
        let head_shape = &shapes[n1 + n2 + 1];
        if params.head.weights.len() != head_shape.out_channels
            || params
                .head
                .weights
                .iter()
                .any(|r| r.len() != head_shape.in_channels)
        {
            return Err(Error::config("head weight tensor has the wrong shape"));
        }
        let weights = params
            .head
            .weights
            .iter()
            .flatten()
            .map(|&v| to_f32(v, "head"))
            .collect::<Result<Vec<_>>>()?;
        let biases = params
            .head
            .biases
            .iter()
            .map(|&v| to_f32(v, "head"))
            .collect::<Result<Vec<_>>>()?;
        let head = DenseParams::from_parts(head_shape.in_channels, weights, biases)
            .map_err(|e| Error::config(format!("head: {e}")))?;
        if let Some(stats) = &self.normalization {
            stats.validate()?;
        }
        Ok(TrainedModel {
            net: SkillNet {
                grouping: self.header.grouping,
                params: SkillParams {
                    layer1,
                    layer2,
                    layer3,
                    head,
                },
                seed: self.header.seed,
            },
            normalization: self.normalization,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}
