//! Seeded generator of knowledge-graph-style entity records with
//! label-indicative cue words buried in Zipf-distributed filler.
//!
//! Every labeled entity gets one label per aspect. The first aspect's label is
//! uniform; each further aspect copies the first aspect's label index with
//! probability `label_correlation` and is uniform otherwise, mimicking the
//! country/industry co-occurrence of real company data.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{AspectStats, CorpusStats, KgEntityRecord};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticAspect {
    pub name: String,
    pub property: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub aspects: Vec<SyntheticAspect>,
    /// Labeled entities (each has an article).
    pub documents: usize,
    pub labels_per_aspect: usize,
    /// Size of each label's private cue-word pool.
    pub cue_words_per_label: usize,
    /// Cue words drawn (with replacement) per aspect per document.
    pub cue_tokens_per_aspect: usize,
    pub noise_vocab: usize,
    pub noise_tokens: usize,
    pub label_correlation: f64,
    /// Unlabeled entities with an article.
    pub background: usize,
    /// Labeled entities without an article (dropped at corpus construction).
    pub without_article: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            aspects: vec![
                SyntheticAspect {
                    name: "country".into(),
                    property: "P17".into(),
                },
                SyntheticAspect {
                    name: "industry".into(),
                    property: "P452".into(),
                },
            ],
            documents: 800,
            labels_per_aspect: 8,
            cue_words_per_label: 5,
            cue_tokens_per_aspect: 2,
            noise_vocab: 400,
            noise_tokens: 30,
            label_correlation: 0.8,
            background: 0,
            without_article: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<KgEntityRecord>,
    /// Aspect name to knowledge-graph property.
    pub aspect_properties: BTreeMap<String, String>,
    /// Statistics the built corpus must reproduce.
    pub expected_stats: CorpusStats,
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "ve", "zu", "ba", "de", "fo", "gi", "ha",
    "ju", "ko", "ly", "mo", "na",
];

/// Distinct pronounceable word for every index below 20^3.
fn pseudo_word(index: usize) -> String {
    let n = SYLLABLES.len();
    let mut word = String::new();
    let mut rest = index;
    for _ in 0..3 {
        word.push_str(SYLLABLES[rest % n]);
        rest /= n;
    }
    if rest > 0 {
        word.push_str(&rest.to_string());
    }
    word
}

pub fn label_name(aspect: &str, label: usize) -> String {
    format!("{aspect}-{label:02}")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.aspects.is_empty() || cfg.labels_per_aspect == 0 || cfg.cue_words_per_label == 0 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs aspects, labels and cue words".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.label_correlation) {
        return Err(Error::InvalidArgument("label_correlation must lie in [0, 1]".into()));
    }
    if cfg.noise_vocab == 0 && cfg.noise_tokens > 0 {
        return Err(Error::InvalidArgument("noise tokens need a noise vocabulary".into()));
    }
    let mut rng = SeededRng::for_purpose(cfg.seed, "synthetic");
    let cue_base = |aspect: usize, label: usize| {
        (aspect * cfg.labels_per_aspect + label) * cfg.cue_words_per_label
    };
    let noise_base = cue_base(cfg.aspects.len(), 0);
    // Zipf(1) over the filler vocabulary.
    let mut cumulative = Vec::with_capacity(cfg.noise_vocab);
    let mut acc = 0.0;
    for r in 0..cfg.noise_vocab {
        acc += 1.0 / (r + 1) as f64;
        cumulative.push(acc);
    }
    let noise_word = |rng: &mut SeededRng| {
        let u = rng.unit_f64() * acc;
        let r = cumulative.partition_point(|&c| c <= u).min(cfg.noise_vocab - 1);
        pseudo_word(noise_base + r)
    };

    let aspect_properties: BTreeMap<String, String> = cfg
        .aspects
        .iter()
        .map(|a| (a.name.clone(), a.property.clone()))
        .collect();
    let mut expected = CorpusStats::default();
    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.aspects.len()];
    let mut records = Vec::new();
    let total = cfg.documents + cfg.background + cfg.without_article;

    for i in 0..total {
        let labeled = i < cfg.documents || i >= cfg.documents + cfg.background;
        let has_article = i < cfg.documents + cfg.background;
        let mut words: Vec<String> = Vec::new();
        let mut properties = BTreeMap::new();
        if labeled {
            let first = rng.uniform_index(cfg.labels_per_aspect);
            for (k, aspect) in cfg.aspects.iter().enumerate() {
                let label = if k == 0 || rng.bernoulli(cfg.label_correlation) {
                    first
                } else {
                    rng.uniform_index(cfg.labels_per_aspect)
                };
                for _ in 0..cfg.cue_tokens_per_aspect {
                    let w = rng.uniform_index(cfg.cue_words_per_label);
                    words.push(pseudo_word(cue_base(k, label) + w));
                }
                properties.insert(aspect.property.clone(), vec![label_name(&aspect.name, label)]);
                if has_article {
                    seen[k].insert(label);
                }
            }
        }
        for _ in 0..cfg.noise_tokens {
            words.push(noise_word(&mut rng));
        }
        rng.shuffle(&mut words);
        let text = words
            .chunks(9)
            .map(|s| {
                let mut sentence = s.join(" ");
                if let Some(first) = sentence.get_mut(0..1) {
                    first.make_ascii_uppercase();
                }
                sentence + "."
            })
            .collect::<Vec<_>>()
            .join(" ");
        if has_article {
            expected.documents += 1;
            if labeled {
                for aspect in &cfg.aspects {
                    expected.aspects.entry(aspect.name.clone()).or_default().documents += 1;
                }
            } else {
                expected.background += 1;
            }
        }
        records.push(KgEntityRecord {
            entity_id: format!("Q{}", 10_000 + i),
            article_text: has_article.then_some(text),
            properties,
        });
    }
    for (k, aspect) in cfg.aspects.iter().enumerate() {
        let entry = expected.aspects.entry(aspect.name.clone()).or_insert(AspectStats::default());
        entry.labels = seen[k].len();
    }
    Ok(SyntheticCorpus {
        records,
        aspect_properties,
        expected_stats: expected,
    })
}
