//! Planted-cluster corpora for desk-scale retrieval experiments.
//!
//! Every cluster owns a template pool of descriptors; each image of the
//! cluster perturbs the whole pool with Gaussian noise of scale `sigma`.
//! Descriptor coordinates are scaled by `1/sqrt(d)` so descriptors have
//! roughly unit norm. A separate learning set of images with their own,
//! unrelated templates is produced for fitting models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::eval::{GroundTruth, QueryTruth};
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_clusters: usize,
    pub per_cluster: usize,
    pub descriptors_per_image: usize,
    pub dim: usize,
    pub sigma: f64,
    pub learn_images: usize,
    pub learn_descriptors_per_image: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_clusters: 20,
            per_cluster: 5,
            descriptors_per_image: 200,
            dim: 16,
            sigma: 0.5,
            learn_images: 400,
            learn_descriptors_per_image: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub images: Vec<DescriptorSet>,
    pub learn: Vec<DescriptorSet>,
    pub ground_truth: GroundTruth,
}

pub fn image_id(cluster: usize, member: usize) -> String {
    format!("c{cluster:03}_{member:02}")
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| { let z: f64 = StandardNormal.sample(&mut *rng); scale * z }).collect()
}

pub fn synth_corpus(p: &SynthParams) -> Result<SynthCorpus> {
    if p.n_clusters == 0 || p.per_cluster == 0 || p.descriptors_per_image == 0 || p.dim == 0 {
        return Err(Error::InvalidArgument("corpus sizes must be positive".into()));
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma = {} must be finite and ≥ 0", p.sigma)));
    }
    let scale = 1.0 / (p.dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let pool_len = p.descriptors_per_image * p.dim;

    let mut images = Vec::with_capacity(p.n_clusters * p.per_cluster);
    let mut gt = GroundTruth::default();
    for c in 0..p.n_clusters {
        let template = gaussian(&mut rng, pool_len, scale);
        let ids: Vec<String> = (0..p.per_cluster).map(|m| image_id(c, m)).collect();
        for id in &ids {
            let noise = gaussian(&mut rng, pool_len, scale * p.sigma);
            // rounded through f32 so the corpus survives the descriptor file format unchanged
            let data = template.iter().zip(&noise).map(|(t, e)| (t + e) as f32 as f64).collect();
            images.push(DescriptorSet::new(id.clone(), p.dim, data)?);
            let relevant = ids.iter().filter(|o| *o != id).cloned().collect();
            gt.insert(id.clone(), QueryTruth { relevant, junk: Default::default() })?;
        }
    }

    let learn_len = p.learn_descriptors_per_image * p.dim;
    // same marginal distribution as corpus descriptors (template + noise)
    let learn_scale = scale * (1.0 + p.sigma * p.sigma).sqrt();
    let learn = (0..p.learn_images)
        .map(|i| {
            let data = gaussian(&mut rng, learn_len, learn_scale).into_iter().map(|v| v as f32 as f64).collect();
            DescriptorSet::new(format!("learn{i:05}"), p.dim, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCorpus { images, learn, ground_truth: gt })
}
