//! Training examples: anchor/positive/negative triplets under the single-aspect,
//! intersection and union schemes, and anchor/positive pairs for the
//! in-batch-negatives baseline.
//!
//! "Same label" means a nonempty intersection of label sets. Negatives for the
//! multi-aspect schemes must be disjoint on *every* listed aspect, so a pair
//! that shares some but not all aspects is never a negative.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SamplingScheme {
    SingleAspect { aspect: String },
    Intersection { aspects: Vec<String> },
    Union { aspects: Vec<String> },
    PairsOnly { aspect: String },
}

impl SamplingScheme {
    pub fn single(aspect: &str) -> Self {
        SamplingScheme::SingleAspect {
            aspect: aspect.to_string(),
        }
    }

    pub fn intersection<S: AsRef<str>>(aspects: &[S]) -> Self {
        SamplingScheme::Intersection {
            aspects: aspects.iter().map(|a| a.as_ref().to_string()).collect(),
        }
    }

    pub fn union<S: AsRef<str>>(aspects: &[S]) -> Self {
        SamplingScheme::Union {
            aspects: aspects.iter().map(|a| a.as_ref().to_string()).collect(),
        }
    }

    pub fn aspects(&self) -> &[String] {
        match self {
            SamplingScheme::SingleAspect { aspect } | SamplingScheme::PairsOnly { aspect } => {
                std::slice::from_ref(aspect)
            }
            SamplingScheme::Intersection { aspects } | SamplingScheme::Union { aspects } => {
                aspects
            }
        }
    }

    /// Checks the scheme's own shape and that every aspect exists in `corpus`.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        if let SamplingScheme::Intersection { aspects } | SamplingScheme::Union { aspects } = self {
            if aspects.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "{self} needs at least two aspects"
                )));
            }
            let distinct: BTreeSet<_> = aspects.iter().collect();
            if distinct.len() != aspects.len() {
                return Err(Error::InvalidArgument(format!(
                    "{self} lists an aspect twice"
                )));
            }
        }
        self.aspects()
            .iter()
            .try_for_each(|a| corpus.require_aspect(a))
    }

    fn is_intersection(&self) -> bool {
        matches!(self, SamplingScheme::Intersection { .. })
    }
}

impl fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingScheme::SingleAspect { aspect } => write!(f, "single({aspect})"),
            SamplingScheme::PairsOnly { aspect } => write!(f, "pairs({aspect})"),
            SamplingScheme::Intersection { aspects } => {
                write!(f, "intersection({})", aspects.join(","))
            }
            SamplingScheme::Union { aspects } => write!(f, "union({})", aspects.join(",")),
        }
    }
}

fn positive_unchecked(a: &Document, b: &Document, scheme: &SamplingScheme) -> bool {
    if a.is_background() || b.is_background() {
        return false;
    }
    let mut shares = scheme.aspects().iter().map(|asp| a.shares_label(b, asp));
    if scheme.is_intersection() {
        shares.all(|s| s)
    } else {
        shares.any(|s| s)
    }
}

fn anchor_is_labeled(a: &Document, scheme: &SamplingScheme) -> bool {
    scheme.aspects().iter().any(|asp| a.has_labels_for(asp))
}

fn negative_unchecked(a: &Document, b: &Document, scheme: &SamplingScheme) -> bool {
    if !anchor_is_labeled(a, scheme) {
        return false;
    }
    if b.is_background() {
        return true;
    }
    scheme.aspects().iter().all(|asp| !a.shares_label(b, asp))
}

/// Whether `b` is a positive for anchor `a` under `scheme`.
pub fn is_positive(
    corpus: &Corpus,
    a: &Document,
    b: &Document,
    scheme: &SamplingScheme,
) -> Result<bool> {
    scheme.validate(corpus)?;
    Ok(positive_unchecked(a, b, scheme))
}

/// Whether `b` is a negative for anchor `a` under `scheme`.
pub fn is_negative(
    corpus: &Corpus,
    a: &Document,
    b: &Document,
    scheme: &SamplingScheme,
) -> Result<bool> {
    scheme.validate(corpus)?;
    Ok(negative_unchecked(a, b, scheme))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    #[serde(rename = "anchor")]
    pub anchor_id: String,
    #[serde(rename = "positive")]
    pub positive_id: String,
    #[serde(rename = "negative")]
    pub negative_id: String,
    pub scheme: SamplingScheme,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    #[serde(rename = "anchor")]
    pub anchor_id: String,
    #[serde(rename = "positive")]
    pub positive_id: String,
    pub aspect: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletConfig {
    pub per_anchor: usize,
    /// Probability that the negative slot is filled from background documents
    /// when both background and labeled negatives are available.
    pub background_negative_fraction: f64,
    pub seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            per_anchor: 1,
            background_negative_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub anchors_without_positive: Vec<String>,
    pub anchors_without_negative: Vec<String>,
}

/// Per-aspect inverted index from label to the sorted positions holding it.
struct LabelPostings<'a> {
    corpus: &'a Corpus,
    by_aspect: Vec<std::collections::HashMap<&'a str, Vec<usize>>>,
}

impl<'a> LabelPostings<'a> {
    fn new(corpus: &'a Corpus, aspects: &[String]) -> Self {
        let by_aspect = aspects
            .iter()
            .map(|aspect| {
                let mut map: std::collections::HashMap<&str, Vec<usize>> = Default::default();
                for (pos, doc) in corpus.documents().iter().enumerate() {
                    for label in doc.labels_for(aspect) {
                        map.entry(label.as_str()).or_default().push(pos);
                    }
                }
                map
            })
            .collect();
        Self { corpus, by_aspect }
    }

    /// Positions sharing at least one `aspects[k]` label with `anchor`.
    fn sharing(&self, anchor: usize, k: usize, aspect: &str) -> BTreeSet<usize> {
        self.corpus.documents()[anchor]
            .labels_for(aspect)
            .iter()
            .flat_map(|l| self.by_aspect[k].get(l.as_str()).into_iter().flatten().copied())
            .collect()
    }
}

struct Candidates {
    positives: Vec<usize>,
    labeled_negatives: Vec<usize>,
}

fn candidates(
    corpus: &Corpus,
    postings: &LabelPostings<'_>,
    scheme: &SamplingScheme,
    anchor: usize,
) -> Candidates {
    let aspects = scheme.aspects();
    let shared: Vec<BTreeSet<usize>> = aspects
        .iter()
        .enumerate()
        .map(|(k, a)| postings.sharing(anchor, k, a))
        .collect();
    let any_shared: BTreeSet<usize> = shared.iter().flatten().copied().collect();
    let positives: Vec<usize> = if scheme.is_intersection() {
        any_shared
            .iter()
            .copied()
            .filter(|p| shared.iter().all(|s| s.contains(p)))
            .collect()
    } else {
        any_shared.iter().copied().collect()
    };
    let positives = positives.into_iter().filter(|&p| p != anchor).collect();
    let labeled_negatives = corpus
        .documents()
        .iter()
        .enumerate()
        .filter(|(pos, doc)| *pos != anchor && !doc.is_background() && !any_shared.contains(pos))
        .map(|(pos, _)| pos)
        .collect();
    Candidates {
        positives,
        labeled_negatives,
    }
}

/// Draws up to `per_anchor` triplets for every anchor that has a positive.
///
/// Positives are drawn without replacement; each negative comes from the
/// background documents with probability `background_negative_fraction` and
/// from the labeled negatives otherwise, falling back to whichever pool is
/// nonempty.
pub fn generate_triplets(
    corpus: &Corpus,
    scheme: &SamplingScheme,
    cfg: TripletConfig,
) -> Result<TripletSet> {
    scheme.validate(corpus)?;
    if let SamplingScheme::PairsOnly { .. } = scheme {
        return Err(Error::InvalidArgument(
            "pairs-only scheme produces pairs, not triplets".into(),
        ));
    }
    if cfg.per_anchor == 0 {
        return Err(Error::InvalidArgument("per_anchor must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.background_negative_fraction) {
        return Err(Error::InvalidArgument(
            "background_negative_fraction must lie in [0, 1]".into(),
        ));
    }

    let docs = corpus.documents();
    let postings = LabelPostings::new(corpus, scheme.aspects());
    let background: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].is_background()).collect();
    let mut rng = SeededRng::for_purpose(cfg.seed, "triplets");
    let mut out = TripletSet::default();

    for anchor in 0..docs.len() {
        if !anchor_is_labeled(&docs[anchor], scheme) {
            continue;
        }
        let cands = candidates(corpus, &postings, scheme, anchor);
        if cands.positives.is_empty() {
            out.anchors_without_positive.push(docs[anchor].id.clone());
            continue;
        }
        if cands.labeled_negatives.is_empty() && background.is_empty() {
            out.anchors_without_negative.push(docs[anchor].id.clone());
            continue;
        }
        for pick in rng.sample_distinct(cands.positives.len(), cfg.per_anchor) {
            let positive = cands.positives[pick];
            let from_background = match (background.is_empty(), cands.labeled_negatives.is_empty()) {
                (false, false) => rng.bernoulli(cfg.background_negative_fraction),
                (false, true) => true,
                _ => false,
            };
            let pool = if from_background {
                &background
            } else {
                &cands.labeled_negatives
            };
            let negative = pool[rng.uniform_index(pool.len())];
            out.triplets.push(Triplet {
                anchor_id: docs[anchor].id.clone(),
                positive_id: docs[positive].id.clone(),
                negative_id: docs[negative].id.clone(),
                scheme: scheme.clone(),
            });
        }
    }

    if out.triplets.is_empty() {
        return Err(if out.anchors_without_negative.is_empty() {
            Error::NoPositives(scheme.to_string())
        } else {
            Error::NoNegatives(scheme.to_string())
        });
    }
    if !out.anchors_without_positive.is_empty() {
        log::info!(
            "{scheme}: {} anchors skipped without a positive",
            out.anchors_without_positive.len()
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairConfig {
    /// `None` emits every ordered positive pair.
    pub per_anchor: Option<usize>,
    pub seed: u64,
}

/// Anchor/positive pairs sharing a label for `aspect`, in seeded order.
pub fn generate_pairs(corpus: &Corpus, aspect: &str, cfg: PairConfig) -> Result<Vec<Pair>> {
    let scheme = SamplingScheme::PairsOnly {
        aspect: aspect.to_string(),
    };
    scheme.validate(corpus)?;
    if cfg.per_anchor == Some(0) {
        return Err(Error::InvalidArgument("per_anchor must be at least 1".into()));
    }
    let docs = corpus.documents();
    let postings = LabelPostings::new(corpus, scheme.aspects());
    let mut rng = SeededRng::for_purpose(cfg.seed, "pairs");
    let mut pairs = Vec::new();
    for anchor in 0..docs.len() {
        if !docs[anchor].has_labels_for(aspect) {
            continue;
        }
        let positives: Vec<usize> = postings
            .sharing(anchor, 0, aspect)
            .into_iter()
            .filter(|&p| p != anchor)
            .collect();
        let picks = match cfg.per_anchor {
            Some(k) => rng.sample_distinct(positives.len(), k),
            None => (0..positives.len()).collect(),
        };
        pairs.extend(picks.into_iter().map(|i| Pair {
            anchor_id: docs[anchor].id.clone(),
            positive_id: docs[positives[i]].id.clone(),
            aspect: aspect.to_string(),
        }));
    }
    if pairs.is_empty() {
        return Err(Error::NoPositives(scheme.to_string()));
    }
    rng.shuffle(&mut pairs);
    Ok(pairs)
}

/// True iff the three ids are distinct and both role predicates hold.
pub fn validate_triplet(t: &Triplet, corpus: &Corpus) -> Result<bool> {
    let anchor = corpus.require(&t.anchor_id)?;
    let positive = corpus.require(&t.positive_id)?;
    let negative = corpus.require(&t.negative_id)?;
    t.scheme.validate(corpus)?;
    let distinct = t.anchor_id != t.positive_id
        && t.anchor_id != t.negative_id
        && t.positive_id != t.negative_id;
    Ok(distinct
        && positive_unchecked(anchor, positive, &t.scheme)
        && negative_unchecked(anchor, negative, &t.scheme))
}

/// Examples loaded from a training file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Examples {
    Triplets(Vec<Triplet>),
    Pairs(Vec<Pair>),
}

impl Examples {
    pub fn len(&self) -> usize {
        match self {
            Examples::Triplets(t) => t.len(),
            Examples::Pairs(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_lines<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("examples always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_triplets_jsonl(triplets: &[Triplet], path: impl AsRef<Path>) -> Result<()> {
    write_lines(triplets, path.as_ref())
}

pub fn write_pairs_jsonl(pairs: &[Pair], path: impl AsRef<Path>) -> Result<()> {
    write_lines(pairs, path.as_ref())
}

/// Reads a triplet or pair file; the kind is fixed by the first line and
/// every later line must match it.
pub fn read_examples_jsonl(path: impl AsRef<Path>) -> Result<Examples> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Line {
        Triplet(Triplet),
        Pair(Pair),
    }

    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triplets = Vec::new();
    let mut pairs = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        match serde_json::from_str::<Line>(line).map_err(|e| err(e.to_string()))? {
            Line::Triplet(t) if pairs.is_empty() => triplets.push(t),
            Line::Pair(p) if triplets.is_empty() => pairs.push(p),
            _ => return Err(err("file mixes triplets and pairs".into())),
        }
    }
    Ok(if pairs.is_empty() {
        Examples::Triplets(triplets)
    } else {
        Examples::Pairs(pairs)
    })
}
