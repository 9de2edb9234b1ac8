//! Aspect-annotated corpora: ingestion, construction from knowledge-graph
//! dumps, filtering, splitting and summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type LabelSet = BTreeSet<String>;

static NO_LABELS: LabelSet = BTreeSet::new();

/// One text unit with its labels, keyed by aspect name.
///
/// A document whose label sets are all empty (or whose label map is empty)
/// is a *background* document: it never counts as a positive and serves as a
/// negative for every labeled anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub labels: BTreeMap<String, LabelSet>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_labels<I, S>(mut self, aspect: &str, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.labels
            .entry(aspect.to_string())
            .or_default()
            .extend(labels.into_iter().map(Into::into));
        self
    }

    /// Label set for `aspect`; empty when the aspect is absent.
    pub fn labels_for(&self, aspect: &str) -> &LabelSet {
        self.labels.get(aspect).unwrap_or(&NO_LABELS)
    }

    pub fn has_labels_for(&self, aspect: &str) -> bool {
        !self.labels_for(aspect).is_empty()
    }

    pub fn is_background(&self) -> bool {
        self.labels.values().all(BTreeSet::is_empty)
    }

    /// True when both documents carry at least one common label for `aspect`.
    pub fn shares_label(&self, other: &Document, aspect: &str) -> bool {
        let (a, b) = (self.labels_for(aspect), other.labels_for(aspect));
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small.iter().any(|l| large.contains(l))
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        for (aspect, labels) in &self.labels {
            if aspect.is_empty() {
                return Err("empty aspect name".into());
            }
            if labels.iter().any(String::is_empty) {
                return Err(format!("empty label for aspect `{aspect}`"));
            }
        }
        Ok(())
    }
}

/// Wire form of a corpus line. Labels arrive as lists so duplicates can be
/// rejected instead of silently merged.
#[derive(Debug, Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default)]
    labels: BTreeMap<String, Vec<String>>,
}

impl DocumentRecord {
    fn into_document(self) -> std::result::Result<Document, String> {
        let mut labels = BTreeMap::new();
        for (aspect, values) in self.labels {
            let mut set = LabelSet::new();
            for v in values {
                if !set.insert(v.clone()) {
                    return Err(format!("duplicate label `{v}` for aspect `{aspect}`"));
                }
            }
            labels.insert(aspect, set);
        }
        let doc = Document {
            id: self.id,
            text: self.text,
            labels,
        };
        doc.check()?;
        Ok(doc)
    }
}

/// Ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    aspects: BTreeSet<String>,
    positions: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for doc in documents {
            corpus.push(doc, None)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, doc: Document, line: Option<usize>) -> Result<()> {
        doc.check().map_err(|reason| Error::InvalidDocument {
            id: doc.id.clone(),
            reason,
        })?;
        if self.positions.contains_key(&doc.id) {
            return Err(Error::DuplicateId { id: doc.id, line });
        }
        self.aspects.extend(doc.labels.keys().cloned());
        self.positions.insert(doc.id.clone(), self.documents.len());
        self.documents.push(doc);
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn aspects(&self) -> &BTreeSet<String> {
        &self.aspects
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.positions.get(id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<&Document> {
        self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn require_aspect(&self, aspect: &str) -> Result<()> {
        if self.aspects.contains(aspect) {
            Ok(())
        } else {
            Err(Error::UnknownAspect(aspect.to_string()))
        }
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }
}

/// Reads a corpus from JSON lines: `{"id", "text", "labels": {aspect: [label, ..]}}`.
///
/// Any malformed line fails the whole read with its line number.
pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::default();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let record: DocumentRecord =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let doc = record.into_document().map_err(parse_err)?;
        corpus.push(doc, Some(line_no))?;
    }
    Ok(corpus)
}

pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in corpus.documents() {
        let line = serde_json::to_string(doc).expect("documents always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A knowledge-graph entity as found in a pre-extracted dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgEntityRecord {
    pub entity_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_text: Option<String>,
    /// Property id (e.g. `P17`) to its values.
    #[serde(default)]
    pub properties: BTreeMap<String, Vec<String>>,
}

pub fn read_kg_jsonl(path: impl AsRef<Path>) -> Result<Vec<KgEntityRecord>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .map(|(idx, line)| {
            let record: KgEntityRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if record.entity_id.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "empty entity_id".into(),
                });
            }
            Ok(record)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KgBuildSummary {
    pub records: usize,
    pub kept: usize,
    pub dropped_without_article: usize,
}

/// Builds a corpus from entity records: every record with article text becomes
/// a document whose label set for each aspect is the value set of the mapped
/// property. Records without article text are dropped and counted.
pub fn build_from_kg(
    records: &[KgEntityRecord],
    aspect_properties: &BTreeMap<String, String>,
) -> Result<(Corpus, KgBuildSummary)> {
    if aspect_properties.is_empty() {
        return Err(Error::InvalidArgument(
            "aspect-to-property mapping is empty".into(),
        ));
    }
    let mut documents = Vec::with_capacity(records.len());
    for record in records {
        let Some(text) = &record.article_text else {
            continue;
        };
        let labels = aspect_properties
            .iter()
            .map(|(aspect, property)| {
                let values = record
                    .properties
                    .get(property)
                    .map(|vs| vs.iter().filter(|v| !v.is_empty()).cloned().collect())
                    .unwrap_or_default();
                (aspect.clone(), values)
            })
            .collect();
        documents.push(Document {
            id: record.entity_id.clone(),
            text: text.clone(),
            labels,
        });
    }
    let summary = KgBuildSummary {
        records: records.len(),
        kept: documents.len(),
        dropped_without_article: records.len() - documents.len(),
    };
    Ok((Corpus::new(documents)?, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub max_label_instances: usize,
    pub min_chars: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_label_instances: 100,
            min_chars: 100,
        }
    }
}

/// Drops short texts, then strips every (aspect, label) held by more than
/// `max_label_instances` documents. Documents that lose all their labels are
/// removed; documents that were background to begin with are kept.
pub fn filter_corpus(corpus: &Corpus, cfg: FilterConfig) -> Result<Corpus> {
    if cfg.max_label_instances == 0 {
        return Err(Error::InvalidArgument(
            "max_label_instances must be at least 1".into(),
        ));
    }
    let long_enough: Vec<&Document> = corpus
        .documents()
        .iter()
        .filter(|d| d.char_len() >= cfg.min_chars)
        .collect();

    let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
    for doc in &long_enough {
        for (aspect, labels) in &doc.labels {
            for label in labels {
                *counts.entry((aspect, label)).or_default() += 1;
            }
        }
    }

    let mut kept = Vec::with_capacity(long_enough.len());
    let mut stripped_docs = 0usize;
    for doc in long_enough {
        let was_background = doc.is_background();
        let mut doc = doc.clone();
        for (aspect, labels) in doc.labels.iter_mut() {
            labels.retain(|l| counts[&(aspect.as_str(), l.as_str())] <= cfg.max_label_instances);
        }
        if doc.is_background() && !was_background {
            stripped_docs += 1;
            continue;
        }
        kept.push(doc);
    }
    log::debug!(
        "filter: {} -> {} documents ({} lost every label)",
        corpus.len(),
        kept.len(),
        stripped_docs
    );
    Corpus::new(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    train_ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_ratio: f64, seed: u64) -> Result<Self> {
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train ratio must lie in (0, 1), got {train_ratio}"
            )));
        }
        Ok(Self { train_ratio, seed })
    }

    pub fn train_ratio(&self) -> f64 {
        self.train_ratio
    }

    /// Number of training documents out of `n`.
    pub fn train_len(&self, n: usize) -> usize {
        // Tolerance keeps e.g. 100 * 0.29 from flooring to 28.
        ((n as f64 * self.train_ratio) + 1e-9).floor() as usize
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then the first `floor(n * ratio)` documents go to train.
pub fn split(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    SeededRng::for_purpose(spec.seed, "split").shuffle(&mut order);
    let cut = spec.train_len(corpus.len());
    let pick = |idx: &[usize]| {
        Corpus::new(idx.iter().map(|&i| corpus.documents[i].clone()).collect())
    };
    Ok((pick(&order[..cut])?, pick(&order[cut..])?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectStats {
    pub documents: usize,
    pub labels: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub background: usize,
    pub aspects: BTreeMap<String, AspectStats>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats {
        documents: corpus.len(),
        ..Default::default()
    };
    let mut distinct: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for doc in corpus.documents() {
        if doc.is_background() {
            stats.background += 1;
        }
        for (aspect, labels) in &doc.labels {
            let entry = stats.aspects.entry(aspect.clone()).or_default();
            if !labels.is_empty() {
                entry.documents += 1;
            }
            distinct
                .entry(aspect)
                .or_default()
                .extend(labels.iter().map(String::as_str));
        }
    }
    for (aspect, labels) in distinct {
        if let Some(entry) = stats.aspects.get_mut(aspect) {
            entry.labels = labels.len();
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, len: usize) -> Document {
        Document::new(id, "x".repeat(len))
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn ingest_preserves_order() {
        let f = write_lines(&[
            r#"{"id":"b","text":"second","labels":{"task":["mt"]}}"#,
            r#"{"id":"a","text":"first"}"#,
        ]);
        let c = ingest_jsonl(f.path()).unwrap();
        let ids: Vec<_> = c.documents().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert!(c.documents()[1].is_background());
        assert_eq!(c.aspects().iter().collect::<Vec<_>>(), ["task"]);
    }

    #[test]
    fn ingest_rejects_duplicate_id_with_line() {
        let f = write_lines(&[
            r#"{"id":"a","text":"x"}"#,
            r#"{"id":"b","text":"y"}"#,
            r#"{"id":"a","text":"z"}"#,
        ]);
        let err = ingest_jsonl(f.path()).unwrap_err();
        match &err {
            Error::DuplicateId { id, line } => {
                assert_eq!(id, "a");
                assert_eq!(*line, Some(3));
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("`a`") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn ingest_empty_file() {
        let f = write_lines(&[]);
        let c = ingest_jsonl(f.path()).unwrap();
        assert!(c.is_empty());
        assert!(c.aspects().is_empty());
    }

    #[test]
    fn ingest_rejects_malformed_lines() {
        let f = write_lines(&[r#"{"id":"a","text":"x"}"#, r#"{"id":"b""#]);
        match ingest_jsonl(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_lines(&[r#"{"id":"a","text":"x","labels":{"t":["l","l"]}}"#]);
        assert!(matches!(ingest_jsonl(f.path()), Err(Error::Parse { line: 1, .. })));
        let f = write_lines(&[r#"{"id":"a","text":"x","labels":{"t":[""]}}"#]);
        assert!(matches!(ingest_jsonl(f.path()), Err(Error::Parse { line: 1, .. })));
        let f = write_lines(&[r#"{"id":"","text":"x"}"#]);
        assert!(matches!(ingest_jsonl(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ingest_missing_file_is_io_error() {
        assert!(matches!(
            ingest_jsonl("/nonexistent/corpus.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let c = Corpus::new(vec![
            doc("a", 3).with_labels("country", ["de", "fr"]),
            doc("b", 4),
        ])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_jsonl(&c, f.path()).unwrap();
        assert_eq!(ingest_jsonl(f.path()).unwrap(), c);
    }

    fn kg(id: &str, text: Option<&str>, props: &[(&str, &[&str])]) -> KgEntityRecord {
        KgEntityRecord {
            entity_id: id.into(),
            article_text: text.map(Into::into),
            properties: props
                .iter()
                .map(|(p, vs)| (p.to_string(), vs.iter().map(|v| v.to_string()).collect()))
                .collect(),
        }
    }

    fn company_mapping() -> BTreeMap<String, String> {
        [("country", "P17"), ("industry", "P452")]
            .into_iter()
            .map(|(a, p)| (a.to_string(), p.to_string()))
            .collect()
    }

    #[test]
    fn kg_record_with_both_properties() {
        let recs = [kg(
            "Q1",
            Some("An automaker."),
            &[("P17", &["Germany"]), ("P452", &["Automotive"])],
        )];
        let (c, summary) = build_from_kg(&recs, &company_mapping()).unwrap();
        assert_eq!(c.len(), 1);
        let d = &c.documents()[0];
        assert_eq!(d.labels_for("country").iter().collect::<Vec<_>>(), ["Germany"]);
        assert_eq!(d.labels_for("industry").iter().collect::<Vec<_>>(), ["Automotive"]);
        assert_eq!(summary.dropped_without_article, 0);
    }

    #[test]
    fn kg_drops_records_without_article() {
        let recs = [
            kg("Q1", None, &[("P17", &["Germany"])]),
            kg("Q2", Some("text"), &[]),
        ];
        let (c, summary) = build_from_kg(&recs, &company_mapping()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.documents()[0].id, "Q2");
        assert!(c.documents()[0].is_background());
        assert_eq!(summary.dropped_without_article, 1);
        assert_eq!(summary.kept, 1);
        assert!(build_from_kg(&recs, &BTreeMap::new()).is_err());
    }

    #[test]
    fn label_over_cap_is_removed_everywhere() {
        let mut docs: Vec<Document> = (0..101)
            .map(|i| doc(&format!("d{i}"), 120).with_labels("task", ["L"]))
            .collect();
        docs[0] = docs[0].clone().with_labels("task", ["M"]);
        let c = Corpus::new(docs).unwrap();
        let f = filter_corpus(&c, FilterConfig::default()).unwrap();
        // Only d0 keeps a label (M); the other 100 lost everything.
        assert_eq!(f.len(), 1);
        assert_eq!(f.documents()[0].labels_for("task").iter().collect::<Vec<_>>(), ["M"]);
        assert!(corpus_counts(&f).values().all(|&n| n <= 100));
    }

    fn corpus_counts(c: &Corpus) -> BTreeMap<(String, String), usize> {
        let mut m = BTreeMap::new();
        for d in c.documents() {
            for (a, ls) in &d.labels {
                for l in ls {
                    *m.entry((a.clone(), l.clone())).or_default() += 1;
                }
            }
        }
        m
    }

    #[test]
    fn short_documents_removed() {
        let c = Corpus::new(vec![
            doc("short", 99).with_labels("task", ["a"]),
            doc("ok", 100).with_labels("task", ["a"]),
        ])
        .unwrap();
        let f = filter_corpus(&c, FilterConfig::default()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.documents()[0].id, "ok");
    }

    #[test]
    fn length_counts_scalar_values() {
        // 50 two-byte characters: 100 bytes but only 50 chars.
        let c = Corpus::new(vec![Document::new("u", "é".repeat(50))]).unwrap();
        assert!(filter_corpus(&c, FilterConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn filter_identity_and_background_kept() {
        let c = Corpus::new(vec![
            doc("a", 150).with_labels("task", ["x"]),
            doc("b", 150).with_labels("task", ["x", "y"]),
            doc("bg", 150),
        ])
        .unwrap();
        assert_eq!(filter_corpus(&c, FilterConfig::default()).unwrap(), c);
        assert!(filter_corpus(
            &c,
            FilterConfig {
                max_label_instances: 0,
                min_chars: 0
            }
        )
        .is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = Corpus::new((0..10).map(|i| doc(&format!("d{i}"), 1)).collect()).unwrap();
        let spec = SplitSpec::new(0.8, 42).unwrap();
        let (train, test) = split(&c, spec).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train2, test2) = split(&c, spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert!(matches!(split(&Corpus::default(), spec), Err(Error::EmptyCorpus)));
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
    }

    #[test]
    fn different_seeds_give_different_partitions() {
        let c = Corpus::new((0..100).map(|i| doc(&format!("d{i:03}"), 1)).collect()).unwrap();
        let ids = |c: &Corpus| -> BTreeSet<String> {
            c.documents().iter().map(|d| d.id.clone()).collect()
        };
        let (a, _) = split(&c, SplitSpec::new(0.8, 0).unwrap()).unwrap();
        let (b, _) = split(&c, SplitSpec::new(0.8, 1).unwrap()).unwrap();
        assert_ne!(ids(&a), ids(&b));
    }

    #[test]
    fn train_len_tolerates_rounding() {
        assert_eq!(SplitSpec::new(0.29, 0).unwrap().train_len(100), 29);
        assert_eq!(SplitSpec::new(0.8, 0).unwrap().train_len(10), 8);
    }

    #[test]
    fn stats_counts() {
        let c = Corpus::new(vec![
            doc("a", 1).with_labels("industry", ["a"]),
            doc("b", 1).with_labels("industry", ["a", "b"]),
            doc("c", 1),
        ])
        .unwrap();
        let s = corpus_stats(&c);
        assert_eq!(s.aspects["industry"], AspectStats { documents: 2, labels: 2 });
        assert_eq!(s.background, 1);
        assert_eq!(corpus_stats(&Corpus::default()), CorpusStats::default());
    }
}
