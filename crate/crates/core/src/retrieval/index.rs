use rayon::prelude::*;

use crate::aggregate::ImageSignature;
use crate::binary::{hamming_distance, BinaryCode};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Real,
    Binary,
}

/// An immutable collection of database items searched exhaustively.
#[derive(Debug, Clone, PartialEq)]
pub enum RetrievalIndex {
    Real { dim: usize, ids: Vec<String>, data: Vec<f64> },
    Binary { bits: usize, codes: Vec<BinaryCode> },
}

#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    Real(&'a [f64]),
    Binary(&'a BinaryCode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub image_id: String,
    pub distance: f64,
}

impl RetrievalIndex {
    pub fn from_signatures(sigs: &[ImageSignature]) -> Result<Self> {
        let dim = sigs.first().map_or(0, |s| s.values.len());
        let mut data = Vec::with_capacity(dim * sigs.len());
        for s in sigs {
            check_dim(dim, s.values.len())?;
            data.extend_from_slice(&s.values);
        }
        Ok(Self::Real { dim, ids: sigs.iter().map(|s| s.image_id.clone()).collect(), data })
    }

    pub fn from_codes(codes: Vec<BinaryCode>) -> Result<Self> {
        let bits = codes.first().map_or(0, |c| c.bits());
        for c in &codes {
            check_dim(bits, c.bits())?;
        }
        Ok(Self::Binary { bits, codes })
    }

    pub fn mode(&self) -> IndexMode {
        match self {
            Self::Real { .. } => IndexMode::Real,
            Self::Binary { .. } => IndexMode::Binary,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Real { ids, .. } => ids.len(),
            Self::Binary { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, i: usize) -> &str {
        match self {
            Self::Real { ids, .. } => &ids[i],
            Self::Binary { codes, .. } => &codes[i].image_id,
        }
    }

    /// Distance from the query to every entry, in insertion order.
    pub fn distances(&self, query: Query<'_>) -> Result<Vec<f64>> {
        match (self, query) {
            (Self::Real { dim, data, .. }, Query::Real(q)) => {
                check_dim(*dim, q.len())?;
                if *dim == 0 {
                    return Ok(vec![0.0; self.len()]);
                }
                Ok(data
                    .chunks_exact(*dim)
                    .map(|row| row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                    .collect())
            }
            (Self::Binary { bits, codes }, Query::Binary(q)) => {
                check_dim(*bits, q.bits())?;
                codes.iter().map(|c| Ok(hamming_distance(q, c)? as f64)).collect()
            }
            _ => Err(Error::InvalidArgument("query mode does not match the index".into())),
        }
    }

    /// The `k` nearest entries (all of them when `k` is `None`); equal
    /// distances keep insertion order.
    pub fn search(&self, query: Query<'_>, k: Option<usize>) -> Result<Vec<SearchHit>> {
        let dist = self.distances(query)?;
        let mut order: Vec<usize> = (0..dist.len()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        order.truncate(k.unwrap_or(usize::MAX));
        Ok(order
            .into_iter()
            .map(|i| SearchHit { image_id: self.id(i).to_owned(), distance: dist[i] })
            .collect())
    }

    /// Full rankings for many queries, computed in parallel, returned in query order.
    pub fn search_many(&self, queries: &[Query<'_>], k: Option<usize>) -> Result<Vec<Vec<SearchHit>>> {
        queries.par_iter().map(|q| self.search(*q, k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sig(id: &str, v: &[f64]) -> ImageSignature {
        ImageSignature { image_id: id.into(), values: v.to_vec(), degenerate: false }
    }

    #[test]
    fn near_before_far() {
        let idx = RetrievalIndex::from_signatures(&[sig("far", &[2.0, 0.0]), sig("near", &[0.0, 1.0])]).unwrap();
        let hits = idx.search(Query::Real(&[0.0, 0.0]), None).unwrap();
        assert_eq!(hits[0], SearchHit { image_id: "near".into(), distance: 1.0 });
        assert_eq!(hits[1], SearchHit { image_id: "far".into(), distance: 2.0 });
        let hits = idx.search(Query::Real(&[2.0, 0.0]), Some(1)).unwrap();
        assert_eq!(hits, vec![SearchHit { image_id: "far".into(), distance: 0.0 }]);
    }

    #[test]
    fn ties_are_stable_and_modes_checked() {
        let idx = RetrievalIndex::from_signatures(&[sig("a", &[1.0]), sig("b", &[-1.0]), sig("c", &[1.0])]).unwrap();
        let hits = idx.search(Query::Real(&[0.0]), None).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let code = BinaryCode::from_bits("q", &[true]);
        assert!(idx.search(Query::Binary(&code), None).is_err());
        assert!(idx.search(Query::Real(&[0.0, 1.0]), None).is_err());
        assert!(RetrievalIndex::from_signatures(&[sig("a", &[1.0]), sig("b", &[1.0, 2.0])]).is_err());
    }

    #[test]
    fn binary_search_orders_by_hamming() {
        let codes = vec![
            BinaryCode::from_bits("x", &[true, true, false]),
            BinaryCode::from_bits("y", &[false, false, false]),
        ];
        let idx = RetrievalIndex::from_codes(codes).unwrap();
        let q = BinaryCode::from_bits("q", &[false, false, true]);
        let hits = idx.search(Query::Binary(&q), None).unwrap();
        assert_eq!(hits[0].image_id, "y");
        assert_eq!(hits[1].distance, 3.0);
    }

    #[test]
    fn many_queries_keep_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let sigs: Vec<_> = (0..50).map(|i| sig(&i.to_string(), &[rng.random(), rng.random()])).collect();
        let idx = RetrievalIndex::from_signatures(&sigs).unwrap();
        let qs: Vec<_> = sigs.iter().map(|s| Query::Real(&s.values)).collect();
        let all = idx.search_many(&qs, Some(1)).unwrap();
        for (s, hits) in sigs.iter().zip(all) {
            assert_eq!(hits[0].image_id, s.image_id);
        }
    }
}
