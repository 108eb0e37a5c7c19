use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use faemb_core::aggregate::{fit_rotation_norm, fit_whitening, ImageSignature, RotationNormModel, WhiteningModel};
use faemb_core::binary::{encode_itq, fit_itq, ItqModel};
use faemb_core::coding::{kmeans_init, train_coding};
use faemb_core::descriptor::{read_descriptor_file, write_descriptor_file};
use faemb_core::embed::embed_set;
use faemb_core::pipeline::{sample_descriptors, Pipeline};
use faemb_core::retrieval::{
    evaluate_map, synth_corpus, CodeSet, Container, EmbeddedImages, GroundTruth, Persist, Query, RetrievalIndex,
    SignatureSet,
};
use faemb_core::timing::time_embedding;
use faemb_core::{CodingModel, DescriptorSet, Variant};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::config::Config;

pub const CODING_FILE: &str = "coding.famb";
pub const WHITENING_FILE: &str = "whitening.famb";
pub const EMBEDDED_FILE: &str = "embedded.famb";
pub const SIGNATURES_FILE: &str = "signatures.famb";
pub const RN_FILE: &str = "rn.famb";
pub const ITQ_FILE: &str = "itq.famb";
pub const CODES_FILE: &str = "codes.famb";
pub const INDEX_FILE: &str = "index.famb";

fn read_sets(path: &Path) -> Result<Vec<DescriptorSet>> {
    let sets = read_descriptor_file(path)?;
    log::info!("read {} images from {}", sets.len(), path.display());
    Ok(sets)
}

fn load<T: Persist>(path: &Path) -> Result<T> {
    T::load(path).with_context(|| format!("loading {} from {}", T::KIND, path.display()))
}

fn save<T: Persist>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    value.save(path)?;
    log::info!("wrote {} to {}", T::KIND, path.display());
    Ok(())
}

fn or_model(cfg: &Config, path: Option<PathBuf>, file: &str) -> PathBuf {
    path.unwrap_or_else(|| cfg.model_path(file))
}

fn pipeline(cfg: &Config) -> Result<Pipeline> {
    let coding: CodingModel = load(&cfg.model_path(CODING_FILE))?;
    let whitening: WhiteningModel = load(&cfg.model_path(WHITENING_FILE))?;
    Ok(Pipeline {
        coding,
        whitening,
        solver: cfg.coding.solver.clone(),
        embedding: cfg.embedding,
        mode: cfg.aggregation.mode,
        alpha: cfg.aggregation.alpha,
        democratic: cfg.aggregation.democratic.clone(),
    })
}

fn columns(sigs: &[ImageSignature]) -> Result<DMatrix<f64>> {
    let Some(first) = sigs.first() else { bail!("no signatures") };
    let dim = first.values.len();
    if sigs.iter().any(|s| s.values.len() != dim) {
        bail!("signatures have mixed lengths");
    }
    Ok(DMatrix::from_fn(dim, sigs.len(), |k, i| sigs[i].values[k]))
}

/// Signatures from `input`, or computed from the learning images.
fn training_signatures(cfg: &Config, input: Option<PathBuf>) -> Result<Vec<ImageSignature>> {
    match input {
        Some(p) => Ok(load::<SignatureSet>(&p)?.0),
        None => {
            let p = pipeline(cfg)?;
            Ok(p.signatures(&read_sets(&cfg.paths.train)?)?)
        }
    }
}

pub fn synth(cfg: &Config) -> Result<()> {
    let corpus = synth_corpus(&cfg.synth)?;
    for path in [&cfg.paths.train, &cfg.paths.corpus, &cfg.paths.ground_truth] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    write_descriptor_file(&cfg.paths.train, &corpus.learn)?;
    write_descriptor_file(&cfg.paths.corpus, &corpus.images)?;
    corpus.ground_truth.write(&cfg.paths.ground_truth)?;
    println!(
        "corpus\t{} images\t{}\nlearn\t{} images\t{}\nground truth\t{} queries\t{}",
        corpus.images.len(),
        cfg.paths.corpus.display(),
        corpus.learn.len(),
        cfg.paths.train.display(),
        corpus.ground_truth.queries.len(),
        cfg.paths.ground_truth.display()
    );
    Ok(())
}

pub fn train(cfg: &Config) -> Result<()> {
    let learn = read_sets(&cfg.paths.train)?;
    let x = sample_descriptors(&learn, cfg.coding.samples, cfg.run.seed)?;
    log::info!(
        "training {} anchors ({}) on {} descriptors",
        cfg.coding.n,
        cfg.coding.variant,
        x.ncols()
    );
    let trained = train_coding(&x, cfg.coding.n, cfg.coding.mu, cfg.coding.variant, &cfg.coding.solver, cfg.run.seed)?;
    println!("iteration\tobjective");
    for (t, q) in trained.trace.iter().enumerate() {
        println!("{t}\t{q:.9e}");
    }
    save(&trained.model, &cfg.model_path(CODING_FILE))
}

pub fn embed(cfg: &Config, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let input = input.unwrap_or_else(|| cfg.paths.corpus.clone());
    let sets = read_sets(&input)?;
    let coding: CodingModel = load(&cfg.model_path(CODING_FILE))?;
    let embedded = sets
        .iter()
        .map(|s| Ok((s.image_id().to_owned(), embed_set(s, &coding, &cfg.coding.solver, &cfg.embedding)?)))
        .collect::<Result<Vec<_>>>()?;
    save(&EmbeddedImages(embedded), &or_model(cfg, output, EMBEDDED_FILE))
}

pub fn fit_agg(cfg: &Config) -> Result<()> {
    let learn = read_sets(&cfg.paths.train)?;
    let coding: CodingModel = load(&cfg.model_path(CODING_FILE))?;
    let params = cfg.pipeline_params();
    // same sample as the library's one-shot fit
    let sample = sample_descriptors(&learn, cfg.whitening.samples, cfg.run.seed.wrapping_add(1))?;
    let sample = DescriptorSet::new("whitening-sample", sample.nrows(), sample.as_slice().to_vec())?;
    let phi = embed_set(&sample, &coding, &cfg.coding.solver, &cfg.embedding)?;
    let drop = params.drop_for(coding.dim());
    let model = fit_whitening(&phi, drop, cfg.whitening.eps_rel)?;
    println!("input dim\t{}\ndrop\t{drop}\noutput dim\t{}", model.input_dim(), model.output_dim());
    save(&model, &cfg.model_path(WHITENING_FILE))
}

pub fn aggregate(cfg: &Config, input: Option<PathBuf>, output: Option<PathBuf>, rn: bool) -> Result<()> {
    let input = input.unwrap_or_else(|| cfg.paths.corpus.clone());
    let sets = read_sets(&input)?;
    let p = pipeline(cfg)?;
    let mut sigs = p.signatures(&sets)?;
    if rn {
        let model: RotationNormModel = load(&cfg.model_path(RN_FILE))?;
        sigs = sigs.iter().map(|s| model.apply(s)).collect::<faemb_core::Result<_>>()?;
    }
    let degenerate = sigs.iter().filter(|s| s.degenerate).count();
    if degenerate > 0 {
        log::warn!("{degenerate} images gave zero signatures");
    }
    println!("images\t{}\ndim\t{}", sigs.len(), sigs.first().map_or(0, |s| s.values.len()));
    save(&SignatureSet(sigs), &or_model(cfg, output, SIGNATURES_FILE))
}

pub fn fit_rn(cfg: &Config, input: Option<PathBuf>) -> Result<()> {
    let sigs = training_signatures(cfg, input)?;
    let model = fit_rotation_norm(&columns(&sigs)?, cfg.rn_keep, cfg.whitening.eps_rel)?;
    println!("input dim\t{}\nkeep\t{}", model.input_dim(), model.keep());
    save(&model, &cfg.model_path(RN_FILE))
}

pub fn fit_itq_cmd(cfg: &Config, input: Option<PathBuf>) -> Result<()> {
    let sigs = training_signatures(cfg, input)?;
    let fit = fit_itq(&columns(&sigs)?, cfg.itq.bits, cfg.itq.iters, cfg.run.seed)?;
    println!("iteration\tquantization error");
    for (t, e) in fit.quantization_error.iter().enumerate() {
        println!("{t}\t{e:.6}");
    }
    save(&fit.model, &cfg.model_path(ITQ_FILE))
}

pub fn encode(cfg: &Config, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let sigs = load::<SignatureSet>(&or_model(cfg, input, SIGNATURES_FILE))?.0;
    let model: ItqModel = load(&cfg.model_path(ITQ_FILE))?;
    let codes = sigs.iter().map(|s| encode_itq(s, &model)).collect::<faemb_core::Result<Vec<_>>>()?;
    println!("codes\t{}\nbits\t{}", codes.len(), model.bits());
    save(&CodeSet(codes), &or_model(cfg, output, CODES_FILE))
}

/// Signatures or codes, whichever the container holds.
fn load_entries(path: &Path) -> Result<RetrievalIndex> {
    let c = Container::load(path)?;
    let kind = c.str("type")?.to_owned();
    let index = match kind.as_str() {
        SignatureSet::KIND => RetrievalIndex::from_signatures(&SignatureSet::from_container(&c)?.0)?,
        CodeSet::KIND => RetrievalIndex::from_codes(CodeSet::from_container(&c)?.0)?,
        RetrievalIndex::KIND => RetrievalIndex::from_container(&c)?,
        other => bail!("{}: holds {other}, expected signatures, codes or an index", path.display()),
    };
    Ok(index)
}

pub fn index(cfg: &Config, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let index = load_entries(&or_model(cfg, input, SIGNATURES_FILE))?;
    println!("items\t{}\nmode\t{:?}", index.len(), index.mode());
    save(&index, &or_model(cfg, output, INDEX_FILE))
}

fn query_of<'a>(entries: &'a RetrievalIndex, id: &str) -> Option<Query<'a>> {
    match entries {
        RetrievalIndex::Real { dim, ids, data } => {
            ids.iter().position(|i| i == id).map(|k| Query::Real(&data[k * dim..(k + 1) * dim]))
        }
        RetrievalIndex::Binary { codes, .. } => codes.iter().find(|c| c.image_id == id).map(Query::Binary),
    }
}

pub fn search(
    cfg: &Config,
    index: Option<PathBuf>,
    queries: Option<PathBuf>,
    ids: &[String],
    k: usize,
) -> Result<()> {
    let index: RetrievalIndex = load(&or_model(cfg, index, INDEX_FILE))?;
    let source = match queries {
        Some(p) => load_entries(&p)?,
        None => index.clone(),
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "query\trank\timage\tdistance")?;
    for id in ids {
        let q = query_of(&source, id).with_context(|| format!("query `{id}` not found"))?;
        for (r, hit) in index.search(q, Some(k))?.iter().enumerate() {
            writeln!(out, "{id}\t{}\t{}\t{}", r + 1, hit.image_id, hit.distance)?;
        }
    }
    Ok(())
}

pub fn eval(cfg: &Config, index: Option<PathBuf>, ground_truth: Option<PathBuf>) -> Result<()> {
    let gt_path = ground_truth.unwrap_or_else(|| cfg.paths.ground_truth.clone());
    let gt = GroundTruth::read(&gt_path).with_context(|| format!("reading ground truth {}", gt_path.display()))?;
    let index: RetrievalIndex = load(&or_model(cfg, index, INDEX_FILE))?;
    let queries = gt
        .queries
        .keys()
        .map(|id| {
            let q = query_of(&index, id).with_context(|| format!("query `{id}` is not in the index"))?;
            Ok((id.clone(), q))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_map(&queries, &index, &gt)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "query\tAP")?;
    for (id, ap) in &report.per_query {
        writeln!(out, "{id}\t{:.4}", ap.ap)?;
    }
    writeln!(out, "mAP\t{:.4}\t({} queries, {:?} index of {})", report.map, queries.len(), index.mode(), index.len())?;
    Ok(())
}

pub fn bench(cfg: &Config) -> Result<()> {
    let b = &cfg.bench;
    let normal = Normal::new(0.0, 1.0 / (b.dim as f64).sqrt())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let x: Vec<f64> = (0..b.descriptors * b.dim).map(|_| normal.sample(&mut rng)).collect();
    let train = b.descriptors.min(5000).max(b.n);
    let sample = if train <= b.descriptors {
        DMatrix::from_column_slice(b.dim, train, &x[..train * b.dim])
    } else {
        bail!("bench.descriptors must be >= bench.n");
    };
    let anchors = kmeans_init(&sample, b.n, cfg.run.seed)?;
    let fa = CodingModel::new(anchors, cfg.coding.mu, Variant::FAemb)?;
    let ff = fa.with_variant(Variant::FFAemb);
    log::info!("timing {} descriptors, n = {}, d = {}", b.descriptors, b.n, b.dim);
    let (t_fa, _) = time_embedding(&x, &fa, &cfg.coding.solver, &cfg.embedding)?;
    let (t_ff, _) = time_embedding(&x, &ff, &cfg.coding.solver, &cfg.embedding)?;
    println!("method\tms/descriptor");
    println!("FAemb\t{:.4}", t_fa.per_descriptor_ms());
    println!("F-FAemb\t{:.4}", t_ff.per_descriptor_ms());
    println!("ratio\t{:.2}", t_fa.per_descriptor_ms() / t_ff.per_descriptor_ms());
    Ok(())
}
