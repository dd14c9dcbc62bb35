//! Fixtures shared by the criterion benches.

use confiderai::data::{two_blobs, BlobsConfig, Dataset};
use confiderai::Result;

/// Blobs of `n_samples` points in `dim` features with a fixed seed.
pub fn blobs(n_samples: usize, dim: usize) -> Result<Dataset> {
    two_blobs(&BlobsConfig {
        n_samples,
        dim,
        seed: 7,
        ..Default::default()
    })
}
