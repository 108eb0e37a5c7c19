use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;

use super::index::{Query, RetrievalIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryTruth {
    pub relevant: BTreeSet<String>,
    pub junk: BTreeSet<String>,
}

/// Relevance judgements keyed by query id.
///
/// Text form, one query per line:
/// `query_id | relevant: id,id,… | junk: id,id,…`. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub queries: BTreeMap<String, QueryTruth>,
}

fn parse_ids(field: &str, label: &str, line_no: usize) -> Result<BTreeSet<String>> {
    let rest = field
        .trim()
        .strip_prefix(label)
        .and_then(|r| r.trim_start().strip_prefix(':'))
        .ok_or_else(|| Error::Format(format!("line {line_no}: expected `{label}: …`")))?;
    Ok(rest.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect())
}

impl GroundTruth {
    pub fn insert(&mut self, query: impl Into<String>, truth: QueryTruth) -> Result<()> {
        let query = query.into();
        if let Some(id) = truth.relevant.intersection(&truth.junk).next() {
            return Err(Error::InvalidArgument(format!("{id} is both relevant and junk for {query}")));
        }
        self.queries.insert(query, truth);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&QueryTruth> {
        self.queries.get(query)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut gt = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 `|`-separated fields", i + 1)));
            }
            let query = fields[0].trim();
            if query.is_empty() {
                return Err(Error::Format(format!("line {}: empty query id", i + 1)));
            }
            if gt.queries.contains_key(query) {
                return Err(Error::Format(format!("line {}: duplicate query {query}", i + 1)));
            }
            let truth = QueryTruth {
                relevant: parse_ids(fields[1], "relevant", i + 1)?,
                junk: parse_ids(fields[2], "junk", i + 1)?,
            };
            gt.insert(query, truth)?;
        }
        Ok(gt)
    }

    pub fn to_text(&self) -> String {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        self.queries
            .iter()
            .map(|(q, t)| format!("{q} | relevant: {} | junk: {}\n", join(&t.relevant), join(&t.junk)))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// The query had no relevant items; `ap` is 0 by convention.
    pub no_relevant: bool,
}

/// Average precision of `ranked` after deleting junk ids and the query itself.
pub fn average_precision(ranked: &[&str], query: Option<&str>, truth: &QueryTruth) -> ApResult {
    let relevant: HashSet<&str> = truth.relevant.iter().map(String::as_str).filter(|r| Some(*r) != query).collect();
    if relevant.is_empty() {
        return ApResult { ap: 0.0, no_relevant: true };
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for id in ranked {
        if truth.junk.contains(*id) || Some(*id) == query {
            continue;
        }
        rank += 1;
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    ApResult { ap: sum / relevant.len() as f64, no_relevant: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// `(query id, AP)` in query order.
    pub per_query: Vec<(String, ApResult)>,
}

/// Ranks the whole index for every query and averages the APs.
pub fn evaluate_map(queries: &[(String, Query<'_>)], index: &RetrievalIndex, gt: &GroundTruth) -> Result<MapReport> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    for (id, _) in queries {
        if gt.get(id).is_none() {
            return Err(Error::MissingGroundTruth(id.clone()));
        }
    }
    let per_query = queries
        .par_iter()
        .map(|(id, q)| {
            let hits = index.search(*q, None)?;
            let ranked: Vec<&str> = hits.iter().map(|h| h.image_id.as_str()).collect();
            let ap = average_precision(&ranked, Some(id), gt.get(id).unwrap());
            if ap.no_relevant {
                log::warn!("query {id} has no relevant items; AP counted as 0");
            }
            Ok((id.clone(), ap))
        })
        .collect::<Result<Vec<_>>>()?;
    let map = per_query.iter().map(|(_, a)| a.ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport { map, per_query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::ImageSignature;

    fn truth(rel: &[&str], junk: &[&str]) -> QueryTruth {
        QueryTruth {
            relevant: rel.iter().map(|s| s.to_string()).collect(),
            junk: junk.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn ap_examples() {
        let t = truth(&["a", "b"], &[]);
        assert_eq!(average_precision(&["a", "b", "c"], None, &t).ap, 1.0);
        let ap = average_precision(&["a", "x", "b"], None, &t).ap;
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let t = truth(&["a"], &["j"]);
        assert_eq!(average_precision(&["j", "a"], None, &t).ap, 1.0);
        // query removed from its own list and relevant set
        let t = truth(&["q", "a"], &[]);
        assert_eq!(average_precision(&["q", "a"], Some("q"), &t).ap, 1.0);
        let r = average_precision(&["q"], Some("q"), &truth(&["q"], &[]));
        assert!(r.no_relevant && r.ap == 0.0);
    }

    #[test]
    fn junk_insertion_invariance() {
        let t = truth(&["a", "c", "e"], &["j1", "j2"]);
        let base = ["b", "a", "d", "c", "f", "e"];
        let ap = average_precision(&base, None, &t).ap;
        for p in 0..=base.len() {
            let mut l: Vec<&str> = base.to_vec();
            l.insert(p, "j1");
            l.insert(p.min(2), "j2");
            assert_eq!(average_precision(&l, None, &t).ap, ap);
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let text = "# comment\nq1 | relevant: a,b | junk: c\n\nq2 | relevant: | junk:\n";
        let gt = GroundTruth::parse(text).unwrap();
        assert_eq!(gt.get("q1").unwrap(), &truth(&["a", "b"], &["c"]));
        assert!(gt.get("q2").unwrap().relevant.is_empty());
        assert_eq!(GroundTruth::parse(&gt.to_text()).unwrap(), gt);
        assert!(GroundTruth::parse("q | relevant: a").is_err());
        assert!(GroundTruth::parse("q | relevant: a | junk: a").is_err());
        assert!(GroundTruth::parse("q | rel: a | junk:").is_err());
        assert!(GroundTruth::parse("q | relevant: a | junk:\nq | relevant: b | junk:").is_err());
    }

    #[test]
    fn map_is_mean_of_aps() {
        let sigs: Vec<_> = [("q1", 0.0), ("a", 0.1), ("q2", 5.0), ("b", 1.0), ("c", 4.0)]
            .iter()
            .map(|(id, v)| ImageSignature { image_id: id.to_string(), values: vec![*v], degenerate: false })
            .collect();
        let idx = RetrievalIndex::from_signatures(&sigs).unwrap();
        let mut gt = GroundTruth::default();
        gt.insert("q1", truth(&["a"], &[])).unwrap();
        // from q2 the ranking is c, b, a, q1 → relevant b at rank 2
        gt.insert("q2", truth(&["b"], &[])).unwrap();
        let qs = vec![("q1".to_string(), Query::Real(&[0.0])), ("q2".to_string(), Query::Real(&[5.0]))];
        let rep = evaluate_map(&qs, &idx, &gt).unwrap();
        assert_eq!(rep.per_query[0].1.ap, 1.0);
        assert_eq!(rep.per_query[1].1.ap, 0.5);
        assert_eq!(rep.map, 0.75);
        let qs = vec![("zz".to_string(), Query::Real(&[5.0]))];
        assert!(matches!(evaluate_map(&qs, &idx, &gt), Err(Error::MissingGroundTruth(_))));
    }
}
