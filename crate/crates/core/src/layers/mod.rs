//! Layer kernels: a naive float reference, the optimized batched float path
//! used during training, and the packed binary paths for inference.
//!
//! Batched tensors are `N×H×W×C`; convolution weights are `kh×kw×Cin×Cout`.
//! Convolutions are stride 1 with zero "same" padding.

mod binary;
mod conv;
mod dense;
mod dropout;
mod loss;
mod norm;
mod pool;

pub use binary::{bil_first_layer, conv2d_binary, conv2d_binary_with, dbi_first_layer, fpid_first_layer, fpid_tap_sum};
pub use conv::{conv2d_backward_input, conv2d_backward_weights, conv2d_forward, conv2d_reference, ReferenceConv};
pub use dense::{dense_backward_input, dense_backward_weights, fully_connected};
pub use dropout::{dropout, dropout_backward};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use norm::{batch_norm_backward, batch_norm_forward, BatchNormCache, BatchNormParams, BN_EPS, BN_MOMENTUM};
pub(crate) use norm::batch_norm_train as norm_train;
pub use pool::{max_pool, max_pool_backward, PoolOutput};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Whether kernels and pooling windows span both spatial axes or only the
/// second (time) axis, as for sensor windows laid out `channels × time × 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisPolicy {
    Full2d,
    TimeOnly,
}

impl AxisPolicy {
    /// Window for a kernel or pool of nominal size `k`.
    pub fn window(self, k: usize) -> (usize, usize) {
        match self {
            AxisPolicy::Full2d => (k, k),
            AxisPolicy::TimeOnly => (1, k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// `I`, the number of output filters.
    pub filters: usize,
    pub kernel: (usize, usize),
    pub axis_policy: AxisPolicy,
}

impl ConvSpec {
    pub fn new(filters: usize, kernel: usize, axis_policy: AxisPolicy) -> Self {
        ConvSpec {
            filters,
            kernel: axis_policy.window(kernel),
            axis_policy,
        }
    }

    /// Kernel element count (`F²` for square kernels).
    pub fn kernel_elems(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Top/left zero padding for same-size output.
    pub fn padding(&self) -> (usize, usize) {
        ((self.kernel.0 - 1) / 2, (self.kernel.1 - 1) / 2)
    }

    pub fn weight_shape(&self, in_channels: usize) -> [usize; 4] {
        [self.kernel.0, self.kernel.1, in_channels, self.filters]
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(invalid!("convolution needs at least one filter and a nonempty kernel"));
        }
        Ok(())
    }
}

/// The extra 1×1 binary layer: conv → batch norm → bounded activation → quantize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilSpec {
    /// `K`, the number of 1×1 filters.
    pub filters: usize,
}

impl BilSpec {
    pub fn new(filters: usize) -> Result<Self> {
        if filters == 0 {
            return Err(invalid!("BIL needs K >= 1"));
        }
        Ok(BilSpec { filters })
    }

    pub fn conv(&self) -> ConvSpec {
        ConvSpec {
            filters: self.filters,
            kernel: (1, 1),
            axis_policy: AxisPolicy::Full2d,
        }
    }
}
