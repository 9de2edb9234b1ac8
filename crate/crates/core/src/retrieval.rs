//! Exact cosine nearest-neighbor search and aspect-conditioned retrieval
//! metrics (precision, recall and reciprocal rank at k).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::training::cosine_sim;

/// Embeddings keyed by document id, iterated in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    positions: HashMap<String, usize>,
    dim: usize,
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.positions.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.iter().map(Vec::as_slice))
    }
}

pub fn build_index<I>(entries: I) -> Result<EmbeddingIndex>
where
    I: IntoIterator<Item = (String, Vec<f64>)>,
{
    let mut entries: Vec<(String, Vec<f64>)> = entries.into_iter().collect();
    if entries.is_empty() {
        return Err(Error::InvalidArgument("cannot index zero embeddings".into()));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let dim = entries[0].1.len();
    for pair in entries.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateId {
                id: pair[0].0.clone(),
                line: None,
            });
        }
    }
    if let Some((id, v)) = entries.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::Dimension {
            id: id.clone(),
            expected: dim,
            found: v.len(),
        });
    }
    let (ids, vectors): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    let positions = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(EmbeddingIndex {
        ids,
        vectors,
        positions,
        dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
}

/// The `k` most cosine-similar entries to `query_id`, ties broken by
/// ascending id.
pub fn knn(
    index: &EmbeddingIndex,
    query_id: &str,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let query = index
        .get(query_id)
        .ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
    let mut scored: Vec<(usize, f64)> = index
        .vectors
        .iter()
        .enumerate()
        .filter(|&(i, _)| !(exclude_self && index.ids[i] == query_id))
        .map(|(i, v)| (i, cosine_sim(query, v)))
        .collect();
    // Positions follow ascending id order, so comparing them breaks ties by id.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(r, (i, s))| Neighbor {
            id: index.ids[i].clone(),
            similarity: s,
            rank: r + 1,
        })
        .collect())
}

/// Whether `candidate` shares a label with `seed` for `aspect`.
pub fn relevance(corpus: &Corpus, seed: &Document, candidate: &Document, aspect: &str) -> Result<bool> {
    corpus.require_aspect(aspect)?;
    Ok(seed.shares_label(candidate, aspect))
}

/// Relevant hits divided by `k`, even when fewer than `k` neighbors exist.
pub fn precision_at_k(relevant: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits(relevant, k) as f64 / k as f64
}

/// Relevant hits within the first `k` divided by `total_relevant`; 0 when
/// nothing is relevant.
pub fn recall_at_k(relevant: &[bool], total_relevant: usize, k: usize) -> f64 {
    if total_relevant == 0 {
        return 0.0;
    }
    hits(relevant, k) as f64 / total_relevant as f64
}

fn hits(relevant: &[bool], k: usize) -> usize {
    relevant.iter().take(k).filter(|&&r| r).count()
}

/// Reciprocal rank of the first relevant neighbor, or 0.
pub fn mrr_at_k(relevant: &[bool]) -> f64 {
    relevant
        .iter()
        .position(|&r| r)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Mean of `1/rank` over all relevant neighbors, or 0.
pub fn mean_reciprocal_rank_all(relevant: &[bool]) -> f64 {
    let ranks: Vec<f64> = relevant
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(p, _)| 1.0 / (p + 1) as f64)
        .collect();
    if ranks.is_empty() {
        0.0
    } else {
        ranks.iter().sum::<f64>() / ranks.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrrMode {
    #[default]
    FirstRelevant,
    AllRelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub seed: String,
    pub neighbors: Vec<Neighbor>,
    pub relevant: Vec<bool>,
    pub total_relevant: usize,
    pub precision: f64,
    pub recall: f64,
    pub reciprocal_rank: f64,
    /// No other indexed document is relevant; left out of the averages.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aspect: String,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub mrr: f64,
    pub mrr_mode: MrrMode,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
    pub queries: Vec<QueryRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Scores every document labeled for `aspect` as a retrieval query over the
/// whole index. Index entries without a corpus document are never relevant.
pub fn evaluate(
    index: &EmbeddingIndex,
    corpus: &Corpus,
    aspect: &str,
    k: usize,
    mode: MrrMode,
) -> Result<EvalReport> {
    corpus.require_aspect(aspect)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut seeds: Vec<&Document> = corpus
        .documents()
        .iter()
        .filter(|d| d.has_labels_for(aspect))
        .collect();
    seeds.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(missing) = seeds.iter().find(|d| !index.contains(&d.id)) {
        return Err(Error::MissingEmbedding(missing.id.clone()));
    }
    let indexed_docs: Vec<Option<&Document>> = index.ids.iter().map(|id| corpus.get(id)).collect();

    let mut queries = Vec::with_capacity(seeds.len());
    let (mut p_sum, mut r_sum, mut m_sum, mut counted) = (0.0, 0.0, 0.0, 0usize);
    for seed in seeds {
        let total_relevant = index
            .ids
            .iter()
            .zip(&indexed_docs)
            .filter(|(id, doc)| {
                **id != seed.id && doc.is_some_and(|d| seed.shares_label(d, aspect))
            })
            .count();
        let neighbors = knn(index, &seed.id, k, true)?;
        let relevant: Vec<bool> = neighbors
            .iter()
            .map(|n| corpus.get(&n.id).is_some_and(|d| seed.shares_label(d, aspect)))
            .collect();
        let precision = precision_at_k(&relevant, k);
        let recall = recall_at_k(&relevant, total_relevant, k);
        let reciprocal_rank = match mode {
            MrrMode::FirstRelevant => mrr_at_k(&relevant),
            MrrMode::AllRelevant => mean_reciprocal_rank_all(&relevant),
        };
        let skipped = total_relevant == 0;
        if !skipped {
            p_sum += precision;
            r_sum += recall;
            m_sum += reciprocal_rank;
            counted += 1;
        }
        queries.push(QueryRecord {
            seed: seed.id.clone(),
            neighbors,
            relevant,
            total_relevant,
            precision,
            recall,
            reciprocal_rank,
            skipped,
        });
    }
    let avg = |s: f64| if counted == 0 { 0.0 } else { s / counted as f64 };
    let skipped_queries = queries.len() - counted;
    Ok(EvalReport {
        aspect: aspect.to_string(),
        k,
        precision: avg(p_sum),
        recall: avg(r_sum),
        mrr: avg(m_sum),
        mrr_mode: mode,
        evaluated_queries: counted,
        skipped_queries,
        queries,
    })
}
