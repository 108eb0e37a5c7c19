//! End-to-end signature extraction: coding, embedding, whitening,
//! aggregation and normalization.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::aggregate::{fit_whitening, signature, AggregationMode, DemocraticParams, ImageSignature, WhiteningModel};
use crate::aggregate::{DEFAULT_ALPHA, DEFAULT_EPS_REL};
use crate::coding::{train_coding, CodingModel, SolverParams, Variant, DEFAULT_MU};
use crate::descriptor::DescriptorSet;
use crate::embed::{embed_set, EmbeddingConfig};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub n_anchors: usize,
    pub mu: f64,
    pub variant: Variant,
    pub solver: SolverParams,
    pub embedding: EmbeddingConfig,
    /// Leading whitened components discarded; `None` drops one embedding block.
    pub drop: Option<usize>,
    pub mode: AggregationMode,
    pub alpha: f64,
    pub democratic: DemocraticParams,
    /// Descriptors sampled from the learning set to train the anchors.
    pub coding_samples: usize,
    /// Descriptors sampled from the learning set to fit whitening.
    pub whitening_samples: usize,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            n_anchors: 16,
            mu: DEFAULT_MU,
            variant: Variant::FFAemb,
            solver: SolverParams::default(),
            embedding: EmbeddingConfig::default(),
            drop: None,
            mode: AggregationMode::Democratic,
            alpha: DEFAULT_ALPHA,
            democratic: DemocraticParams::default(),
            coding_samples: 5000,
            whitening_samples: 20000,
            seed: 0,
        }
    }
}

impl PipelineParams {
    pub fn drop_for(&self, dim: usize) -> usize {
        self.drop.unwrap_or_else(|| self.embedding.block_len(dim))
    }
}

/// Fitted models plus the settings needed to apply them.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub coding: CodingModel,
    pub whitening: WhiteningModel,
    pub solver: SolverParams,
    pub embedding: EmbeddingConfig,
    pub mode: AggregationMode,
    pub alpha: f64,
    pub democratic: DemocraticParams,
}

/// Row-major descriptors sampled without replacement (all of them if fewer).
pub fn sample_descriptors(sets: &[DescriptorSet], count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let dim = sets.first().map(DescriptorSet::dim).ok_or_else(|| Error::InvalidArgument("no descriptor sets".into()))?;
    let mut refs: Vec<&[f64]> = Vec::new();
    for s in sets {
        check_dim(dim, s.dim())?;
        refs.extend(s.iter());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    refs.shuffle(&mut rng);
    refs.truncate(count);
    Ok(DMatrix::from_fn(dim, refs.len(), |r, c| refs[c][r]))
}

/// Learns anchors and whitening from a learning set.
pub fn fit_pipeline(learn: &[DescriptorSet], p: &PipelineParams) -> Result<Pipeline> {
    let x = sample_descriptors(learn, p.coding_samples, p.seed)?;
    let trained = train_coding(&x, p.n_anchors, p.mu, p.variant, &p.solver, p.seed)?;
    log::info!("coding trained: objective {:?}", trained.trace.last());
    let coding = trained.model;
    let sample = sample_descriptors(learn, p.whitening_samples, p.seed.wrapping_add(1))?;
    let sample = DescriptorSet::new("whitening-sample", sample.nrows(), sample.as_slice().to_vec())?;
    let phi = embed_set(&sample, &coding, &p.solver, &p.embedding)?;
    let whitening = fit_whitening(&phi, p.drop_for(coding.dim()), DEFAULT_EPS_REL)?;
    Ok(Pipeline {
        coding,
        whitening,
        solver: p.solver.clone(),
        embedding: p.embedding,
        mode: p.mode,
        alpha: p.alpha,
        democratic: p.democratic.clone(),
    })
}

impl Pipeline {
    /// Whitened embeddings of one image, one column per descriptor.
    pub fn embed_whitened(&self, set: &DescriptorSet) -> Result<DMatrix<f64>> {
        let phi = embed_set(set, &self.coding, &self.solver, &self.embedding)?;
        self.whitening.whiten_columns(&phi)
    }

    pub fn signature(&self, set: &DescriptorSet) -> Result<ImageSignature> {
        let phi_w = self.embed_whitened(set)?;
        Ok(signature(set.image_id(), &phi_w, self.mode, self.alpha, &self.democratic)?.0)
    }

    /// Signatures of many images, in input order.
    pub fn signatures(&self, sets: &[DescriptorSet]) -> Result<Vec<ImageSignature>> {
        sets.par_iter().map(|s| self.signature(s)).collect()
    }

    pub fn signature_dim(&self) -> usize {
        self.whitening.output_dim()
    }
}
