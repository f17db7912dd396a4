//! Orbital edge computing toolkit: downlink-bottleneck modelling, a
//! tiling → transform → entropy-coding pipeline with a bit-exact rANS coder,
//! a throughput profiler that ranks configurations by transfer-cost reduction
//! per second, and a downlink pass simulator.

pub mod artifacts;
pub mod codec;
pub mod downlink;
pub mod entropy;
pub mod error;
pub mod fixtures;
pub mod imageio;
pub mod orbit;
pub mod pipeline;
pub mod profiler;
pub mod reports;
pub mod tensor;
pub mod tiler;

pub use artifacts::{load_artifacts, persist_artifacts, LatentArtifacts};
pub use codec::{EncoderWeights, SizeClass, ToyEncoderSpec};
pub use entropy::{CdfTable, CoderConfig, EncodedStream};
pub use error::{Error, Result};
pub use orbit::{Constellation, LinkSpec, SensorSpec};
pub use tensor::{IntTensor, RealTensor, Tensor};
pub use tiler::{ImageBuffer, TileBatch, TileOrigin, TilePad};
