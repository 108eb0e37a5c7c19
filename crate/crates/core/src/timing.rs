//! Per-descriptor timing of coding plus embedding.

use std::time::{Duration, Instant};

use crate::coding::{CodingModel, SolverParams};
use crate::embed::{embed_into, embedding_len, EmbeddingConfig};
use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedTiming {
    pub descriptors: usize,
    pub total: Duration,
}

impl EmbedTiming {
    pub fn per_descriptor(&self) -> Duration {
        self.total / self.descriptors.max(1) as u32
    }

    pub fn per_descriptor_ms(&self) -> f64 {
        self.total.as_secs_f64() * 1e3 / self.descriptors.max(1) as f64
    }
}

/// Codes and embeds every row of `descriptors` (row-major, `model.dim()`
/// columns) on the calling thread, reusing one output buffer.
///
/// Returns the timing and a checksum of the embeddings so the work cannot be
/// optimized away.
pub fn time_embedding(
    descriptors: &[f64],
    model: &CodingModel,
    params: &SolverParams,
    cfg: &EmbeddingConfig,
) -> Result<(EmbedTiming, f64)> {
    let d = model.dim();
    check_dim(0, descriptors.len() % d)?;
    let mut out = vec![0.0; embedding_len(model.n_anchors(), d, cfg)];
    let mut checksum = 0.0;
    let start = Instant::now();
    for x in descriptors.chunks_exact(d) {
        let g = model.code(x, params)?;
        embed_into(x, g.as_slice(), model.anchors(), cfg, &mut out);
        checksum += out[out.len() - 1];
    }
    let total = start.elapsed();
    Ok((EmbedTiming { descriptors: descriptors.len() / d, total }, checksum))
}
