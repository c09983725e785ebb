//! Binary first-layer strategies for binarized convolutional networks.
//!
//! Four ways of feeding M-bit fixed-point inputs into a fully binarized CNN:
//!
//! * **baseline**: normalized float inputs times full-precision weights,
//! * **FPID**: fixed-point inputs times one shared binary weight per tap,
//! * **DBI**: bit-plane inputs with an independent binary weight per bit,
//! * **BIL**: bit-plane inputs through an extra 1×1 binary layer with `K` filters.
//!
//! The crate carries the bit-plane tensor types and packed popcount kernels
//! ([`bitplane`], [`layers`]), the quantizers and their straight-through
//! gradients ([`quant`]), a small tape-based training engine ([`autodiff`],
//! [`train`]), the architecture-string parser and presets ([`model`]), data
//! ingestion ([`data`]) and the multiplication/gate cost model ([`cost`]).
//!
//! Data-parallel loops go through [`par::Execution`]; with the `parallel`
//! feature (default) they run on rayon, otherwise sequentially. Both paths
//! produce bit-identical results.

pub mod autodiff;
pub mod bitplane;
pub mod cost;
pub mod data;
mod error;
pub mod layers;
pub mod model;
pub mod par;
pub mod quant;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use par::Execution;
pub use tensor::Tensor;
