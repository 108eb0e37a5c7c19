//! Saving and loading models, signatures, codes and indexes as containers.
//!
//! Matrices are stored as `F64` sections of shape `[rows, cols]` in
//! column-major order; every container has a `type` section naming what it
//! holds.

use std::path::Path;

use nalgebra::DMatrix;

use super::container::{Blob, Container};
use super::index::RetrievalIndex;
use crate::aggregate::{ImageSignature, RotationNormModel, WhiteningModel};
use crate::binary::{BinaryCode, ItqModel};
use crate::coding::{CodingModel, Variant};
use crate::error::{Error, Result};

pub trait Persist: Sized {
    /// Value of the `type` section.
    const KIND: &'static str;

    fn write_sections(&self, c: &mut Container);
    fn read_sections(c: &Container) -> Result<Self>;

    fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.put_str("type", Self::KIND);
        self.write_sections(&mut c);
        c
    }

    fn from_container(c: &Container) -> Result<Self> {
        let kind = c.str("type")?;
        if kind != Self::KIND {
            return Err(Error::Format(format!("container holds {kind}, expected {}", Self::KIND)));
        }
        Self::read_sections(c)
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn put_matrix(c: &mut Container, name: &str, m: &DMatrix<f64>) {
    c.put_f64(name, &[m.nrows(), m.ncols()], m.as_slice().to_vec());
}

fn get_matrix(c: &Container, name: &str) -> Result<DMatrix<f64>> {
    match c.f64(name)? {
        (&[r, k], data) => Ok(DMatrix::from_column_slice(r, k, data)),
        (shape, _) => Err(Error::Format(format!("section {name} has shape {shape:?}, expected a matrix"))),
    }
}

fn get_vector(c: &Container, name: &str) -> Result<Vec<f64>> {
    match c.f64(name)? {
        (&[_], data) => Ok(data.to_vec()),
        (shape, _) => Err(Error::Format(format!("section {name} has shape {shape:?}, expected a vector"))),
    }
}

fn get_scalar(c: &Container, name: &str) -> Result<f64> {
    match get_vector(c, name)?[..] {
        [v] => Ok(v),
        _ => Err(Error::Format(format!("section {name} should hold one number"))),
    }
}

fn get_usize(c: &Container, name: &str) -> Result<usize> {
    usize::try_from(c.scalar_u64(name)?).map_err(|_| Error::Format(format!("section {name} overflows")))
}

impl Persist for CodingModel {
    const KIND: &'static str = "coding";

    fn write_sections(&self, c: &mut Container) {
        put_matrix(c, "anchors", self.anchors());
        c.put_f64("mu", &[1], vec![self.mu()]).put_str("variant", self.variant().as_str());
    }

    fn read_sections(c: &Container) -> Result<Self> {
        let variant: Variant = c.str("variant")?.parse()?;
        CodingModel::new(get_matrix(c, "anchors")?, get_scalar(c, "mu")?, variant)
    }
}

impl Persist for WhiteningModel {
    const KIND: &'static str = "whitening";

    fn write_sections(&self, c: &mut Container) {
        put_matrix(c, "projection", self.projection());
        c.put_f64("mean", &[self.mean().len()], self.mean().to_vec())
            .put_f64("eigenvalues", &[self.eigenvalues().len()], self.eigenvalues().to_vec())
            .put_f64("eps", &[1], vec![self.eps()])
            .put_u64("drop", vec![self.drop() as u64]);
    }

    fn read_sections(c: &Container) -> Result<Self> {
        WhiteningModel::from_parts(
            get_vector(c, "mean")?,
            get_matrix(c, "projection")?,
            get_vector(c, "eigenvalues")?,
            get_usize(c, "drop")?,
            get_scalar(c, "eps")?,
        )
    }
}

impl Persist for RotationNormModel {
    const KIND: &'static str = "rotation-norm";

    fn write_sections(&self, c: &mut Container) {
        self.whitening().write_sections(c);
        c.put_u64("keep", vec![self.keep() as u64]);
    }

    fn read_sections(c: &Container) -> Result<Self> {
        RotationNormModel::new(WhiteningModel::read_sections(c)?, get_usize(c, "keep")?)
    }
}

impl Persist for ItqModel {
    const KIND: &'static str = "itq";

    fn write_sections(&self, c: &mut Container) {
        put_matrix(c, "pca", self.pca());
        put_matrix(c, "rotation", self.rotation());
        c.put_f64("mean", &[self.mean().len()], self.mean().to_vec());
    }

    fn read_sections(c: &Container) -> Result<Self> {
        ItqModel::from_parts(get_vector(c, "mean")?, get_matrix(c, "pca")?, get_matrix(c, "rotation")?)
    }
}

/// Image signatures of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignatureSet(pub Vec<ImageSignature>);

impl Persist for SignatureSet {
    const KIND: &'static str = "signatures";

    fn write_sections(&self, c: &mut Container) {
        let dim = self.0.first().map_or(0, |s| s.values.len());
        let data: Vec<f64> = self.0.iter().flat_map(|s| s.values.iter().copied()).collect();
        c.insert("ids", Blob::Strings(self.0.iter().map(|s| s.image_id.clone()).collect()))
            .put_f64("values", &[self.0.len(), dim], data)
            .put_u64("degenerate", self.0.iter().map(|s| s.degenerate as u64).collect());
    }

    fn read_sections(c: &Container) -> Result<Self> {
        let ids = c.strings("ids")?;
        let (shape, data) = c.f64("values")?;
        let degenerate = c.u64("degenerate")?;
        let &[count, dim] = shape else {
            return Err(Error::Format("signature values must be a matrix".into()));
        };
        if count != ids.len() || degenerate.len() != count {
            return Err(Error::Format("signature sections disagree on the count".into()));
        }
        let sigs = ids
            .iter()
            .enumerate()
            .map(|(i, id)| ImageSignature {
                image_id: id.clone(),
                values: data[i * dim..(i + 1) * dim].to_vec(),
                degenerate: degenerate[i] != 0,
            })
            .collect();
        Ok(Self(sigs))
    }
}

/// Binary codes of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodeSet(pub Vec<BinaryCode>);

fn write_codes(codes: &[BinaryCode], c: &mut Container) {
    let bits = codes.first().map_or(0, |b| b.bits());
    c.insert("ids", Blob::Strings(codes.iter().map(|b| b.image_id.clone()).collect()))
        .put_u64("bits", vec![bits as u64])
        .insert("packed", Blob::Bytes(codes.iter().flat_map(|b| b.bytes().iter().copied()).collect()));
}

fn read_codes(c: &Container) -> Result<Vec<BinaryCode>> {
    let ids = c.strings("ids")?;
    let bits = get_usize(c, "bits")?;
    let packed = c.bytes("packed")?;
    let stride = bits.div_ceil(8);
    if packed.len() != stride * ids.len() {
        return Err(Error::Format(format!("{} packed bytes for {} codes of {bits} bits", packed.len(), ids.len())));
    }
    ids.iter()
        .enumerate()
        .map(|(i, id)| BinaryCode::from_packed(id.clone(), bits, packed[i * stride..(i + 1) * stride].to_vec()))
        .collect()
}

impl Persist for CodeSet {
    const KIND: &'static str = "codes";

    fn write_sections(&self, c: &mut Container) {
        write_codes(&self.0, c);
    }

    fn read_sections(c: &Container) -> Result<Self> {
        Ok(Self(read_codes(c)?))
    }
}

impl Persist for RetrievalIndex {
    const KIND: &'static str = "index";

    fn write_sections(&self, c: &mut Container) {
        match self {
            RetrievalIndex::Real { dim, ids, data } => {
                c.put_str("mode", "real")
                    .insert("ids", Blob::Strings(ids.clone()))
                    .put_f64("values", &[ids.len(), *dim], data.clone());
            }
            RetrievalIndex::Binary { codes, .. } => {
                c.put_str("mode", "binary");
                write_codes(codes, c);
            }
        }
    }

    fn read_sections(c: &Container) -> Result<Self> {
        match c.str("mode")? {
            "real" => {
                let ids = c.strings("ids")?.to_vec();
                match c.f64("values")? {
                    (&[count, dim], data) if count == ids.len() => {
                        Ok(RetrievalIndex::Real { dim, ids, data: data.to_vec() })
                    }
                    _ => Err(Error::Format("index values do not match the id list".into())),
                }
            }
            "binary" => {
                let bits = get_usize(c, "bits")?;
                let codes = read_codes(c)?;
                Ok(RetrievalIndex::Binary { bits, codes })
            }
            m => Err(Error::Format(format!("unknown index mode {m}"))),
        }
    }
}

/// Per-image embedded descriptors; each matrix holds one column per descriptor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddedImages(pub Vec<(String, DMatrix<f64>)>);

impl Persist for EmbeddedImages {
    const KIND: &'static str = "embedded";

    fn write_sections(&self, c: &mut Container) {
        let dim = self.0.first().map_or(0, |(_, m)| m.nrows());
        let total: usize = self.0.iter().map(|(_, m)| m.ncols()).sum();
        let mut data = Vec::with_capacity(dim * total);
        for (_, m) in &self.0 {
            data.extend_from_slice(m.as_slice());
        }
        c.insert("ids", Blob::Strings(self.0.iter().map(|(id, _)| id.clone()).collect()))
            .put_u64("counts", self.0.iter().map(|(_, m)| m.ncols() as u64).collect())
            .put_f64("values", &[dim, total], data);
    }

    fn read_sections(c: &Container) -> Result<Self> {
        let ids = c.strings("ids")?;
        let counts = c.u64("counts")?;
        let (shape, data) = c.f64("values")?;
        let &[dim, total] = shape else {
            return Err(Error::Format("embedded values must be a matrix".into()));
        };
        if counts.len() != ids.len() || counts.iter().sum::<u64>() != total as u64 {
            return Err(Error::Format("embedded sections disagree on the counts".into()));
        }
        let mut start = 0;
        let images = ids
            .iter()
            .zip(counts)
            .map(|(id, &n)| {
                let n = n as usize;
                let m = DMatrix::from_column_slice(dim, n, &data[start * dim..(start + n) * dim]);
                start += n;
                (id.clone(), m)
            })
            .collect();
        Ok(Self(images))
    }
}
