//! Retrieval datasets: the in-memory representation, synthetic task
//! generation, JSONL ingestion, and all-negatives expansion.

pub mod jsonl;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use jsonl::{load_jsonl, save_jsonl, to_jsonl_string};
pub use synth::{synth_task, SynthRule};

/// Dataset partition tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocRec {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRec {
    pub id: String,
    pub text: String,
    pub split: Split,
}

/// A document pool, a set of queries, and the positive annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalDataset {
    pub pool: Vec<DocRec>,
    pub queries: Vec<QueryRec>,
    /// query_id → positive doc_ids.
    pub positives: BTreeMap<String, BTreeSet<String>>,
}

impl RetrievalDataset {
    /// Structural validation: ids unique, every query annotated with at least
    /// one positive that exists in the pool.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::validation("dataset has no queries"));
        }
        if self.pool.is_empty() {
            return Err(Error::validation("dataset has an empty document pool"));
        }
        let mut doc_ids = BTreeSet::new();
        for doc in &self.pool {
            if !doc_ids.insert(doc.id.as_str()) {
                return Err(Error::validation(format!("duplicate doc id '{}'", doc.id)));
            }
        }
        let mut query_ids = BTreeSet::new();
        for q in &self.queries {
            if !query_ids.insert(q.id.as_str()) {
                return Err(Error::validation(format!("duplicate query id '{}'", q.id)));
            }
            let pos = self
                .positives
                .get(&q.id)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| {
                    Error::validation(format!("query '{}' has no positive documents", q.id))
                })?;
            for doc_id in pos {
                if !doc_ids.contains(doc_id.as_str()) {
                    return Err(Error::validation(format!(
                        "query '{}' references unknown doc '{doc_id}'",
                        q.id
                    )));
                }
            }
        }
        for qid in self.positives.keys() {
            if !query_ids.contains(qid.as_str()) {
                return Err(Error::validation(format!(
                    "positives reference unknown query '{qid}'"
                )));
            }
        }
        Ok(())
    }

    pub fn queries_in(&self, split: Split) -> Vec<&QueryRec> {
        self.queries.iter().filter(|q| q.split == split).collect()
    }

    pub fn doc(&self, id: &str) -> Option<&DocRec> {
        self.pool.iter().find(|d| d.id == id)
    }

    pub fn positives_of(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.positives.get(query_id)
    }

    pub fn is_positive(&self, query_id: &str, doc_id: &str) -> bool {
        self.positives.get(query_id).is_some_and(|p| p.contains(doc_id))
    }
}

/// One labeled (query, document) pair after all-negatives expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub query_id: String,
    pub doc_id: String,
    pub positive: bool,
}

/// Expand every query into the full cross product against the pool: one pair
/// per (query, document), labeled positive iff annotated. Order is dataset
/// query order × pool order, so the expansion is deterministic.
pub fn augment_negatives(dataset: &RetrievalDataset) -> Vec<LabeledPair> {
    let mut pairs = Vec::with_capacity(dataset.queries.len() * dataset.pool.len());
    for q in &dataset.queries {
        for d in &dataset.pool {
            pairs.push(LabeledPair {
                query_id: q.id.clone(),
                doc_id: d.id.clone(),
                positive: dataset.is_positive(&q.id, &d.id),
            });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> RetrievalDataset {
        let pool = (0..8)
            .map(|i| DocRec { id: format!("d{i}"), text: format!("DOC {i}") })
            .collect();
        let queries = vec![QueryRec { id: "q0".into(), text: "hello".into(), split: Split::Train }];
        let mut positives = BTreeMap::new();
        positives.insert("q0".to_string(), BTreeSet::from(["d3".to_string()]));
        RetrievalDataset { pool, queries, positives }
    }

    #[test]
    fn valid_dataset_passes() {
        tiny_dataset().validate().unwrap();
    }

    #[test]
    fn dangling_positive_is_rejected() {
        let mut ds = tiny_dataset();
        ds.positives.get_mut("q0").unwrap().insert("d99".into());
        assert!(ds.validate().is_err());
    }

    #[test]
    fn query_without_positive_is_rejected() {
        let mut ds = tiny_dataset();
        ds.positives.clear();
        assert!(ds.validate().is_err());
    }

    #[test]
    fn one_query_eight_docs_gives_seven_negatives() {
        let pairs = augment_negatives(&tiny_dataset());
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs.iter().filter(|p| p.positive).count(), 1);
        assert_eq!(pairs.iter().filter(|p| !p.positive).count(), 7);
    }

    #[test]
    fn all_positive_query_has_no_negatives() {
        let mut ds = tiny_dataset();
        let all: BTreeSet<String> = ds.pool.iter().map(|d| d.id.clone()).collect();
        ds.positives.insert("q0".into(), all);
        let pairs = augment_negatives(&ds);
        assert_eq!(pairs.len(), 8);
        assert!(pairs.iter().all(|p| p.positive));
    }

    #[test]
    fn pair_count_is_queries_times_pool() {
        let mut ds = tiny_dataset();
        for i in 1..10 {
            let id = format!("q{i}");
            ds.queries.push(QueryRec { id: id.clone(), text: "t".into(), split: Split::Train });
            ds.positives.insert(id, BTreeSet::from(["d0".to_string()]));
        }
        let pairs = augment_negatives(&ds);
        assert_eq!(pairs.len(), 10 * 8);
        assert_eq!(pairs.iter().filter(|p| p.positive).count(), 10);
    }
}
