//! Segmentation of feature sequences into overlapped 3-D chunk tensors and
//! the inverse merge.
//!
//! `segment` lays chunk `c` over frames `[c*hop, c*hop + K)` with zero
//! padding past the last frame; `merge` overlap-adds the chunks back and
//! divides every frame by its overlap count, so `merge(segment(x)) == x`.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::frontend::{FeatureMap, FrameGeometry};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::Result;

/// Chunking geometry: chunk length `K` frames and hop between chunk starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkingConfig {
    pub chunk_len: usize,
    pub hop: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig { chunk_len: 100, hop: 50 }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.chunk_len {
            return Err(invalid(
                "chunking",
                alloc::format!("need 0 < hop <= chunk_len, got hop={} K={}", self.hop, self.chunk_len),
            ));
        }
        Ok(())
    }
}

/// Number of chunks covering `frames` frames.
pub fn chunk_count(frames: usize, chunk_len: usize, hop: usize) -> usize {
    frames.saturating_sub(chunk_len).div_ceil(hop) + 1
}

/// Overlap count per frame: how many in-bounds chunk positions land on it.
pub fn overlap_counts(frames: usize, chunk_len: usize, hop: usize, n_chunks: usize) -> Vec<usize> {
    let mut counts = alloc::vec![0usize; frames];
    for c in 0..n_chunks {
        for k in 0..chunk_len {
            let f = c * hop + k;
            if f < frames {
                counts[f] += 1;
            }
        }
    }
    counts
}

/// 3-D chunk tensor `[channels, chunk_len, n_chunks]` with the geometry
/// needed to reconstruct the original feature sequence.
#[derive(Debug, Clone)]
pub struct ChunkTensor<T> {
    channels: usize,
    chunk_len: usize,
    n_chunks: usize,
    frames: usize,
    hop: usize,
    frame_geometry: Option<FrameGeometry>,
    data: Vec<T>,
}

impl<T: Scalar> ChunkTensor<T> {
    /// Build from raw `[N, K, C]` data without reconstruction metadata.
    pub fn from_raw(
        channels: usize,
        chunk_len: usize,
        n_chunks: usize,
        frames: usize,
        hop: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != channels * chunk_len * n_chunks {
            return Err(invalid("chunk_tensor", "data length does not match dimensions"));
        }
        Ok(ChunkTensor { channels, chunk_len, n_chunks, frames, hop, frame_geometry: None, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn n_chunks(&self) -> usize {
        self.n_chunks
    }

    /// Original (unpadded) frame count.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Number of zero-padded trailing positions in the last chunk.
    pub fn padding(&self) -> usize {
        ((self.n_chunks - 1) * self.hop + self.chunk_len).saturating_sub(self.frames)
    }

    /// Element at `(channel, within-chunk position, chunk)`.
    pub fn at(&self, n: usize, k: usize, c: usize) -> T {
        self.data[n * self.chunk_len * self.n_chunks + k * self.n_chunks + c]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Split a feature sequence into an overlapped chunk tensor.
pub fn segment<T: Scalar>(features: &FeatureMap<T>, cfg: &ChunkingConfig) -> Result<ChunkTensor<T>> {
    cfg.validate()?;
    if features.frames() == 0 {
        return Err(invalid("segment", "empty feature sequence"));
    }
    let g: Graph<T> = Graph::new();
    let x = g.constant(features.to_tensor());
    let out = g.segment_chunks(x, cfg.chunk_len, cfg.hop)?;
    let value = g.value(out);
    Ok(ChunkTensor {
        channels: features.channels(),
        chunk_len: cfg.chunk_len,
        n_chunks: chunk_count(features.frames(), cfg.chunk_len, cfg.hop),
        frames: features.frames(),
        hop: cfg.hop,
        frame_geometry: features.geometry(),
        data: value.data().to_vec(),
    })
}

/// Overlap-add a chunk tensor back to its feature sequence.
pub fn merge<T: Scalar>(chunks: &ChunkTensor<T>) -> Result<FeatureMap<T>> {
    let g: Graph<T> = Graph::new();
    let x = g.constant(crate::tensor::Tensor::new(
        alloc::vec![chunks.channels, chunks.chunk_len, chunks.n_chunks],
        chunks.data.clone(),
    )?);
    let out = g.merge_chunks(x, chunks.hop, chunks.frames)?;
    let value = g.value(out);
    Ok(FeatureMap::from_parts(
        chunks.channels,
        chunks.frames,
        chunks.frame_geometry,
        value.data().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn feature_map(frames: usize, channels: usize, seed: u64) -> FeatureMap<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..frames * channels).map(|_| rng.random_range(-1.0..=1.0)).collect();
        FeatureMap::from_parts(channels, frames, None, data)
    }

    #[test]
    fn chunk_starts_follow_hop() {
        // F=8, K=4, hop=2 -> 3 chunks starting at frames 0, 2, 4.
        let fm = feature_map(8, 2, 1);
        let ct = segment(&fm, &ChunkingConfig { chunk_len: 4, hop: 2 }).unwrap();
        assert_eq!(ct.n_chunks(), 3);
        for c in 0..3 {
            for k in 0..4 {
                assert_eq!(ct.at(1, k, c), fm.at(1, c * 2 + k));
            }
        }
    }

    #[test]
    fn single_chunk_is_identity() {
        let fm = feature_map(6, 3, 2);
        let cfg = ChunkingConfig { chunk_len: 6, hop: 6 };
        let ct = segment(&fm, &cfg).unwrap();
        assert_eq!(ct.n_chunks(), 1);
        for n in 0..3 {
            for k in 0..6 {
                assert_eq!(ct.at(n, k, 0), fm.at(n, k));
            }
        }
        let back = merge(&ct).unwrap();
        for n in 0..3 {
            for f in 0..6 {
                assert_eq!(back.at(n, f), fm.at(n, f));
            }
        }
    }

    #[test]
    fn every_entry_maps_to_source_or_padding() {
        let fm = feature_map(13, 4, 3);
        let cfg = ChunkingConfig { chunk_len: 5, hop: 2 };
        let ct = segment(&fm, &cfg).unwrap();
        assert_eq!(ct.n_chunks(), chunk_count(13, 5, 2));
        for n in 0..4 {
            for k in 0..5 {
                for c in 0..ct.n_chunks() {
                    let f = c * 2 + k;
                    let expect = if f < 13 { fm.at(n, f) } else { 0.0 };
                    assert_eq!(ct.at(n, k, c), expect);
                }
            }
        }
    }

    #[test]
    fn round_trip_exact() {
        let fm = feature_map(37, 5, 4);
        let cfg = ChunkingConfig { chunk_len: 10, hop: 5 };
        let ct = segment(&fm, &cfg).unwrap();
        let back = merge(&ct).unwrap();
        for n in 0..5 {
            for f in 0..37 {
                assert!((back.at(n, f) - fm.at(n, f)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_input_merges_to_constant() {
        for frames in [1usize, 7, 16, 33] {
            let fm = FeatureMap::from_parts(2, frames, None, alloc::vec![1.0f64; 2 * frames]);
            let ct = segment(&fm, &ChunkingConfig { chunk_len: 6, hop: 3 }).unwrap();
            let back = merge(&ct).unwrap();
            for n in 0..2 {
                for f in 0..frames {
                    assert!((back.at(n, f) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn merge_without_geometry_still_reconstructs_frames() {
        let ct = ChunkTensor::from_raw(1, 4, 1, 4, 4, alloc::vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let back = merge(&ct).unwrap();
        assert_eq!(back.frames(), 4);
        assert!(back.geometry().is_none());
    }

    #[test]
    fn invalid_hop_rejected() {
        let fm = feature_map(8, 1, 5);
        assert!(segment(&fm, &ChunkingConfig { chunk_len: 4, hop: 0 }).is_err());
        assert!(segment(&fm, &ChunkingConfig { chunk_len: 4, hop: 5 }).is_err());
    }
}
