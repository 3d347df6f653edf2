//! Numerical kernels for the network: same-padded 1D convolution, ReLU,
//! global average pooling, the dense head, softmax cross-entropy, Glorot
//! initialization and Adam.
//!
//! Every kernel is generic over [`Real`] so the exact same code runs in
//! `f32` for training and in `f64` for finite-difference checks.

mod activation;
mod adam;
mod conv;
mod dense;
mod init;
mod loss;
mod mts;
mod pool;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use activation::{relu, relu_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub(crate) use conv::conv1d_param_grads;
pub use conv::{conv1d_backward, conv1d_same, ConvGrads, ConvParams, KERNEL_WIDTH};
pub use dense::{dense_backward, dense_logits, DenseGrads, DenseParams};
pub use init::{glorot_bound, glorot_uniform};
pub use loss::{argmax, softmax, softmax_cross_entropy, LossOutput};
pub use mts::{Mts, DEFAULT_FRAME_RATE_HZ};
pub use pool::{gap, gap_backward};

/// Number of output classes (Novice, Intermediate, Expert).
pub const NUM_CLASSES: usize = 3;

/// Floating-point element type accepted by the kernels.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
