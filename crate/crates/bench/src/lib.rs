//! Shared inputs for the benchmarks.

use oec_core::codec::{encode_tile, init_weights, ToyEncoderSpec};
use oec_core::imageio::synthetic_image;
use oec_core::tiler::partition;
use oec_core::{LatentArtifacts, SizeClass};

/// Latents of one seeded synthetic tile.
pub fn sample_latents(tile: u32, class: SizeClass, seed: u64) -> LatentArtifacts {
    let w = init_weights(&ToyEncoderSpec::for_class(class, seed)).expect("valid spec");
    let image = synthetic_image(tile, tile, seed);
    let batch = partition(&image, 0, tile).expect("valid tile");
    encode_tile(&batch.tiles[0], batch.origins[0], &w).expect("encodes")
}
