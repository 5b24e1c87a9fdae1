//! Construction, shape inference, cost modeling and reference execution of
//! the MOSAIC mobile semantic-segmentation network.
//!
//! A [`ModelConfig`] is turned into a [`Graph`] of primitive operators by
//! [`build_model`]. The graph can be shape-checked, costed with
//! [`cost::count_model`], and executed with the reference kernels in
//! [`tensor`].

pub mod arch;
pub mod cost;
pub mod error;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod reference;
pub mod selftest;
pub mod tensor;

pub use arch::{build_model, Model, ModelConfig};
pub use cost::{count_model, CostReport, CountingPolicy};
pub use error::{Error, Result};
pub use graph::{Graph, NodeId, Op};
pub use tensor::{Tensor, TensorShape};
