#![allow(dead_code)]

use std::collections::BTreeMap;

use aspectcse::corpus::{Corpus, Document};
use aspectcse::rng::SeededRng;

pub fn random_vectors(rng: &mut SeededRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.symmetric(1.0)).collect())
        .collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Mean softmax loss written out term by term. With `negatives` this is the
/// triplet objective, without it the pairs baseline.
pub fn reference_loss(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: Option<&[Vec<f64>]>,
    tau: f64,
) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut logits: Vec<f64> = positives.iter().map(|p| cosine(&anchors[i], p) / tau).collect();
        if let Some(neg) = negatives {
            logits.extend(neg.iter().map(|q| cosine(&anchors[i], q) / tau));
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        total += lse - logits[i];
    }
    total / n as f64
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn central_differences<F>(x: &mut [f64], eps: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + eps;
            let up = f(x);
            x[k] = orig - eps;
            let down = f(x);
            x[k] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over the coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            if a == n {
                0.0
            } else {
                (a - n).abs() / a.abs().max(n.abs()).max(floor)
            }
        })
        .fold(0.0, f64::max)
}

/// Small corpus with up to three aspects, multi-label documents and some
/// background documents.
pub fn random_corpus(rng: &mut SeededRng, max_docs: usize) -> Corpus {
    let aspects = ["alpha", "beta", "gamma"];
    let n_aspects = 1 + rng.uniform_index(3);
    let n_docs = 2 + rng.uniform_index(max_docs - 1);
    let n_labels = 1 + rng.uniform_index(4);
    let mut docs = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let mut doc = Document::new(format!("d{i:03}"), format!("text of document {i}"));
        if !rng.bernoulli(0.15) {
            for aspect in &aspects[..n_aspects] {
                if rng.bernoulli(0.8) {
                    let count = 1 + rng.uniform_index(2);
                    let labels: Vec<String> = (0..count)
                        .map(|_| format!("{aspect}{}", rng.uniform_index(n_labels)))
                        .collect();
                    doc = doc.with_labels(aspect, labels);
                }
            }
        }
        docs.push(doc);
    }
    // Guarantee every aspect is present on at least one document.
    for (k, aspect) in aspects[..n_aspects].iter().enumerate() {
        let i = k % n_docs;
        let doc = std::mem::replace(&mut docs[i], Document::new("", ""));
        docs[i] = doc.with_labels(aspect, [format!("{aspect}0")]);
    }
    Corpus::new(docs).expect("generated corpus is valid")
}

/// Embeddings for every document, with some exact duplicates to force ties.
pub fn random_embeddings(rng: &mut SeededRng, corpus: &Corpus) -> BTreeMap<String, Vec<f64>> {
    let dim = 2 + rng.uniform_index(5);
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut previous: Vec<Vec<f64>> = Vec::new();
    for doc in corpus.documents() {
        let v = if !previous.is_empty() && rng.bernoulli(0.2) {
            previous[rng.uniform_index(previous.len())].clone()
        } else {
            random_vectors(rng, 1, dim).remove(0)
        };
        previous.push(v.clone());
        out.insert(doc.id.clone(), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceQuery {
    pub seed: String,
    pub neighbors: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub reciprocal_rank: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReport {
    pub precision: f64,
    pub recall: f64,
    pub mrr: f64,
    pub skipped: usize,
    pub queries: Vec<ReferenceQuery>,
}

/// Full enumeration: every labeled seed is compared with every other indexed
/// document, the whole candidate list is sorted, and metrics are counted from
/// scratch.
pub fn reference_evaluate(
    embeddings: &BTreeMap<String, Vec<f64>>,
    corpus: &Corpus,
    aspect: &str,
    k: usize,
) -> ReferenceReport {
    let shares = |a: &Document, b: &Document| {
        a.labels_for(aspect)
            .iter()
            .any(|l| b.labels_for(aspect).contains(l))
    };
    let mut seeds: Vec<&Document> = corpus
        .documents()
        .iter()
        .filter(|d| !d.labels_for(aspect).is_empty())
        .collect();
    seeds.sort_by(|a, b| a.id.cmp(&b.id));
    let mut queries = Vec::new();
    for seed in seeds {
        let q = &embeddings[&seed.id];
        let mut cands: Vec<(&String, f64)> = embeddings
            .iter()
            .filter(|(id, _)| **id != seed.id)
            .map(|(id, v)| (id, cosine(q, v)))
            .collect();
        cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        let relevant_to = |id: &str| corpus.get(id).is_some_and(|d| shares(seed, d));
        let total = cands.iter().filter(|(id, _)| relevant_to(id)).count();
        let top: Vec<&String> = cands.iter().take(k).map(|(id, _)| *id).collect();
        let mut hits = 0usize;
        let mut first = None;
        for (rank, id) in top.iter().enumerate() {
            if relevant_to(id) {
                hits += 1;
                first.get_or_insert(rank + 1);
            }
        }
        queries.push(ReferenceQuery {
            seed: seed.id.clone(),
            neighbors: top.into_iter().cloned().collect(),
            precision: hits as f64 / k as f64,
            recall: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            reciprocal_rank: first.map_or(0.0, |r| 1.0 / r as f64),
            skipped: total == 0,
        });
    }
    let kept: Vec<&ReferenceQuery> = queries.iter().filter(|q| !q.skipped).collect();
    let mean = |f: fn(&ReferenceQuery) -> f64| {
        if kept.is_empty() {
            0.0
        } else {
            let mut s = 0.0;
            for q in &kept {
                s += f(q);
            }
            s / kept.len() as f64
        }
    };
    ReferenceReport {
        precision: mean(|q| q.precision),
        recall: mean(|q| q.recall),
        mrr: mean(|q| q.reciprocal_rank),
        skipped: queries.len() - kept.len(),
        queries,
    }
}

/// Analytic gradient of the library loss against central differences of
/// [`reference_loss`] for one random batch; returns the max relative error.
pub fn loss_gradient_error(triplets: bool, n: usize, dim: usize, seed: u64, floor: f64) -> f64 {
    use aspectcse::training::{contrastive_loss_grad, mnr_loss_grad, Batch};
    let tau = 0.05;
    let mut rng = SeededRng::for_purpose(seed, &format!("gradcheck-{triplets}-{n}-{dim}"));
    let anchors = random_vectors(&mut rng, n, dim);
    let positives = random_vectors(&mut rng, n, dim);
    let negatives = random_vectors(&mut rng, n, dim);
    let (analytic, slots) = if triplets {
        let batch = Batch {
            anchors: anchors.clone(),
            positives: positives.clone(),
            negatives: Some(negatives.clone()),
        };
        let (_, g) = contrastive_loss_grad(&batch, tau).unwrap();
        let flat: Vec<f64> = [g.anchors, g.positives, g.negatives.unwrap()]
            .concat()
            .concat();
        (flat, 3)
    } else {
        let (_, g) = mnr_loss_grad(&anchors, &positives, tau).unwrap();
        ([g.anchors, g.positives].concat().concat(), 2)
    };
    let mut x: Vec<f64> = [anchors, positives, negatives][..slots].concat().concat();
    let numeric = central_differences(&mut x, 1e-5, |x| {
        let rows: Vec<Vec<f64>> = x.chunks(dim).map(<[f64]>::to_vec).collect();
        let (a, rest) = rows.split_at(n);
        let (p, q) = rest.split_at(n);
        reference_loss(a, p, triplets.then_some(q), tau)
    });
    max_relative_error(&analytic, &numeric, floor)
}

/// Gradient of a whole batch objective with respect to every encoder
/// parameter against central differences through `encode`.
pub fn encoder_gradient_error(triplets: bool, seed: u64, floor: f64) -> f64 {
    use aspectcse::encoder::{EncoderConfig, EncoderParams, PoolingMode, Vocabulary};
    use aspectcse::training::{batch_objective, BatchIds, Objective};
    let tau = 0.05;
    let tokens: Vec<String> = std::iter::once("[unk]".to_string())
        .chain((1..12).map(|i| format!("w{i}")))
        .collect();
    let vocab = Vocabulary::from_tokens(tokens, 1).unwrap();
    let pooling = if seed.is_multiple_of(2) { PoolingMode::Mean } else { PoolingMode::FirstToken };
    let cfg = EncoderConfig {
        embedding_dim: 5,
        hidden_dim: 6,
        output_dim: 4,
        pooling,
        max_seq_len: 8,
    };
    let mut params = EncoderParams::init(vocab, &cfg, seed).unwrap();
    let mut rng = SeededRng::for_purpose(seed, "encoder-gradcheck");
    // Nonzero biases so their gradients are exercised away from the origin.
    params.b1.iter_mut().for_each(|b| *b = rng.symmetric(0.3));
    params.b2.iter_mut().for_each(|b| *b = rng.symmetric(0.3));
    let seq = |rng: &mut SeededRng| -> Vec<u32> {
        let len = 1 + rng.uniform_index(6);
        (0..len).map(|_| rng.uniform_index(12) as u32).collect()
    };
    let n = 3;
    let ids = BatchIds {
        anchors: (0..n).map(|_| seq(&mut rng)).collect(),
        positives: (0..n).map(|_| seq(&mut rng)).collect(),
        negatives: if triplets { (0..n).map(|_| seq(&mut rng)).collect() } else { Vec::new() },
    };
    let objective = if triplets { Objective::AspectCse } else { Objective::MultipleNegativeRanking };
    let (_, g) = batch_objective(&params, &ids, tau, objective).unwrap();

    let (v, d) = (params.embeddings.rows(), params.embeddings.cols());
    let mut analytic = vec![0.0; v * d];
    for (row, grad) in &g.embedding_rows {
        analytic[*row as usize * d..(*row as usize + 1) * d].copy_from_slice(grad);
    }
    analytic.extend_from_slice(g.w1.as_slice());
    analytic.extend_from_slice(&g.b1);
    analytic.extend_from_slice(g.w2.as_slice());
    analytic.extend_from_slice(&g.b2);

    let pack = |p: &EncoderParams| -> Vec<f64> {
        [p.embeddings.as_slice(), p.w1.as_slice(), &p.b1, p.w2.as_slice(), &p.b2].concat()
    };
    let unpack = |x: &[f64], p: &mut EncoderParams| {
        let mut rest = x;
        for dst in [
            p.embeddings.as_mut_slice(),
            p.w1.as_mut_slice(),
            &mut p.b1[..],
            p.w2.as_mut_slice(),
            &mut p.b2[..],
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    };
    let mut x = pack(&params);
    let mut probe = params.clone();
    let numeric = central_differences(&mut x, 1e-5, |x| {
        unpack(x, &mut probe);
        let enc = |s: &[Vec<u32>]| -> Vec<Vec<f64>> { s.iter().map(|t| probe.encode(t).unwrap()).collect() };
        let negs = enc(&ids.negatives);
        reference_loss(&enc(&ids.anchors), &enc(&ids.positives), triplets.then_some(&negs[..]), tau)
    });
    max_relative_error(&analytic, &numeric, floor)
}

pub mod experiment {
    use std::path::Path;

    use aspectcse::corpus::{build_from_kg, split, Corpus, SplitSpec};
    use aspectcse::encoder::{
        build_vocab, params_to_bytes, save_params, write_embeddings, EncoderParams,
    };
    use aspectcse::retrieval::{build_index, evaluate, EvalReport, MrrMode};
    use aspectcse::synthetic::{generate, SyntheticConfig};
    use aspectcse::training::{train, LossTrace, TrainConfig};
    use aspectcse::triplets::{generate_triplets, Examples, SamplingScheme, TripletConfig};

    pub const ASPECTS: [&str; 2] = ["country", "industry"];

    /// Settings of the synthetic retrieval experiment.
    #[derive(Debug, Clone)]
    pub struct Setup {
        pub synthetic: SyntheticConfig,
        pub train: TrainConfig,
        pub per_anchor: usize,
        pub seed: u64,
    }

    impl Default for Setup {
        fn default() -> Self {
            let seed = 0;
            Self {
                synthetic: SyntheticConfig { seed, ..Default::default() },
                train: TrainConfig {
                    epochs: 2,
                    learning_rate: 3e-3,
                    seed,
                    ..Default::default()
                },
                per_anchor: 40,
                seed,
            }
        }
    }

    pub struct Data {
        pub train: Corpus,
        pub test: Corpus,
        pub init: EncoderParams,
    }

    pub fn prepare(setup: &Setup) -> Data {
        let syn = generate(&setup.synthetic).unwrap();
        let (corpus, _) = build_from_kg(&syn.records, &syn.aspect_properties).unwrap();
        let (train, test) = split(&corpus, SplitSpec::new(0.8, setup.seed).unwrap()).unwrap();
        let vocab =
            build_vocab(train.documents().iter().map(|d| d.text.as_str()), setup.train.min_freq).unwrap();
        let init = EncoderParams::init(vocab, &setup.train.encoder_config(), setup.seed).unwrap();
        Data { train, test, init }
    }

    pub fn embed(params: &EncoderParams, corpus: &Corpus) -> Vec<(String, Vec<f64>)> {
        corpus
            .documents()
            .iter()
            .map(|d| (d.id.clone(), params.encode_text(&d.text)))
            .collect()
    }

    pub fn reports(params: &EncoderParams, test: &Corpus) -> Vec<EvalReport> {
        let index = build_index(embed(params, test)).unwrap();
        ASPECTS
            .iter()
            .map(|a| evaluate(&index, test, a, 10, MrrMode::FirstRelevant).unwrap())
            .collect()
    }

    pub struct Run {
        pub params: EncoderParams,
        pub trace: LossTrace,
        pub triplets: usize,
        /// One report per entry of [`ASPECTS`].
        pub reports: Vec<EvalReport>,
    }

    impl Run {
        pub fn macro_mrr(&self) -> f64 {
            self.reports.iter().map(|r| r.mrr).sum::<f64>() / self.reports.len() as f64
        }

        pub fn min_precision(&self) -> f64 {
            self.reports.iter().map(|r| r.precision).fold(f64::INFINITY, f64::min)
        }

        /// Writes every artifact of the run into `dir`.
        pub fn write_artifacts(&self, test: &Corpus, dir: &Path) {
            self.trace.write_csv(dir.join("loss.csv")).unwrap();
            save_params(&self.params, dir.join("model.bin")).unwrap();
            let emb = embed(&self.params, test);
            write_embeddings(emb.iter().map(|(i, v)| (i.as_str(), v.as_slice())), dir.join("test.emb")).unwrap();
            for r in &self.reports {
                r.write_json(dir.join(format!("eval-{}.json", r.aspect))).unwrap();
            }
        }

        pub fn model_bytes(&self) -> Vec<u8> {
            params_to_bytes(&self.params)
        }
    }

    pub fn run(setup: &Setup, data: &Data, scheme: &SamplingScheme) -> Run {
        let cfg = TripletConfig {
            per_anchor: setup.per_anchor,
            seed: setup.seed,
            ..Default::default()
        };
        let set = generate_triplets(&data.train, scheme, cfg).unwrap();
        let triplets = set.triplets.len();
        let (params, trace) =
            train(&data.train, &Examples::Triplets(set.triplets), data.init.clone(), &setup.train).unwrap();
        let reports = reports(&params, &data.test);
        Run { params, trace, triplets, reports }
    }
}
