use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use aspectcse::corpus::{
    build_from_kg, corpus_stats, filter_corpus, ingest_jsonl, read_kg_jsonl, split, write_jsonl,
    FilterConfig, SplitSpec,
};
use aspectcse::encoder::{
    build_vocab, load_external_embeddings, load_params, save_params, write_embeddings,
    EncoderParams,
};
use aspectcse::retrieval::{build_index, evaluate, MrrMode};
use aspectcse::synthetic::{generate, SyntheticConfig};
use aspectcse::training::{train, TrainConfig};
use aspectcse::triplets::{
    generate_pairs, generate_triplets, read_examples_jsonl, write_pairs_jsonl,
    write_triplets_jsonl, PairConfig, SamplingScheme, TripletConfig,
};
use aspectcse::viz::{emit_scatter, pca_project, projected_points};
use clap::{Parser, Subcommand, ValueEnum};

/// Aspect-based sentence embeddings: corpus construction, triplet sampling,
/// contrastive training and retrieval evaluation.
#[derive(Parser)]
#[command(name = "aspectcse", version)]
struct Cli {
    /// Seed for every stochastic step (overrides `seed` in a training config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic knowledge-graph dump (country P17, industry P452).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        documents: usize,
        #[arg(long, default_value_t = 8)]
        labels: usize,
        #[arg(long, default_value_t = 0)]
        background: usize,
        /// Labeled entities without article text.
        #[arg(long, default_value_t = 0)]
        without_article: usize,
        /// Probability that an entity's industry mirrors its country.
        #[arg(long, default_value_t = 0.8)]
        correlation: f64,
    },
    /// Build a corpus from a knowledge-graph dump.
    BuildCorpus {
        #[arg(long)]
        records: PathBuf,
        /// Aspect to property mapping, e.g. `country=P17`. Repeatable.
        #[arg(long = "aspect", value_parser = parse_mapping, required = true)]
        aspects: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop short documents and over-frequent labels.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_label_instances: usize,
        #[arg(long, default_value_t = 100)]
        min_chars: usize,
    },
    /// Seeded train/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
    },
    /// Print per-aspect document and label counts as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Sample training triplets (or pairs for the pairs scheme).
    Triplets {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        scheme: SchemeKind,
        /// Aspect name; repeat for multi-aspect schemes.
        #[arg(long = "aspect", required = true)]
        aspects: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Examples per anchor. Pairs default to every positive pair.
        #[arg(long)]
        per_anchor: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        background_fraction: f64,
    },
    /// Train an encoder on triplets or pairs.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        examples: PathBuf,
        /// `key = value` hyperparameter file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Encode every document of a corpus.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score embeddings as aspect-conditioned retrieval; prints a JSON report.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        aspect: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MrrArg::First)]
        mrr_mode: MrrArg,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PCA scatter plot of embeddings colored by aspect label.
    Project {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        aspect: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeKind {
    Single,
    Intersection,
    Union,
    Pairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MrrArg {
    First,
    All,
}

fn parse_mapping(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((a, p)) if !a.is_empty() && !p.is_empty() => Ok((a.to_string(), p.to_string())),
        _ => Err(format!("expected ASPECT=PROPERTY, got `{s}`")),
    }
}

fn scheme_for(kind: SchemeKind, aspects: &[String]) -> Result<SamplingScheme> {
    let one = || -> Result<String> {
        match aspects {
            [a] => Ok(a.clone()),
            _ => bail!("this scheme takes exactly one --aspect"),
        }
    };
    Ok(match kind {
        SchemeKind::Single => SamplingScheme::single(&one()?),
        SchemeKind::Pairs => SamplingScheme::PairsOnly { aspect: one()? },
        SchemeKind::Intersection => SamplingScheme::intersection(aspects),
        SchemeKind::Union => SamplingScheme::union(aspects),
    })
}

fn write_file(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Synth {
            out,
            documents,
            labels,
            background,
            without_article,
            correlation,
        } => {
            let syn = generate(&SyntheticConfig {
                documents,
                labels_per_aspect: labels,
                background,
                without_article,
                label_correlation: correlation,
                seed,
                ..Default::default()
            })?;
            let mut text = String::new();
            for r in &syn.records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            write_file(&out, text)?;
            log::info!("wrote {} records to {}", syn.records.len(), out.display());
        }
        Command::BuildCorpus { records, aspects, out } => {
            let records = read_kg_jsonl(&records)?;
            let mapping: BTreeMap<String, String> = aspects.into_iter().collect();
            let (corpus, summary) = build_from_kg(&records, &mapping)?;
            log::info!(
                "{} of {} records kept, {} without article",
                summary.kept,
                summary.records,
                summary.dropped_without_article
            );
            write_jsonl(&corpus, &out)?;
        }
        Command::Filter {
            corpus,
            out,
            max_label_instances,
            min_chars,
        } => {
            let corpus = ingest_jsonl(&corpus)?;
            let filtered = filter_corpus(
                &corpus,
                FilterConfig {
                    max_label_instances,
                    min_chars,
                },
            )?;
            log::info!("{} of {} documents kept", filtered.len(), corpus.len());
            write_jsonl(&filtered, &out)?;
        }
        Command::Split {
            corpus,
            train_out,
            test_out,
            ratio,
        } => {
            let corpus = ingest_jsonl(&corpus)?;
            let (train, test) = split(&corpus, SplitSpec::new(ratio, seed)?)?;
            write_jsonl(&train, &train_out)?;
            write_jsonl(&test, &test_out)?;
            log::info!("{} train, {} test", train.len(), test.len());
        }
        Command::Stats { corpus } => {
            let stats = corpus_stats(&ingest_jsonl(&corpus)?);
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Triplets {
            corpus,
            scheme,
            aspects,
            out,
            per_anchor,
            background_fraction,
        } => {
            let corpus = ingest_jsonl(&corpus)?;
            match scheme_for(scheme, &aspects)? {
                SamplingScheme::PairsOnly { aspect } => {
                    let pairs = generate_pairs(&corpus, &aspect, PairConfig { per_anchor, seed })?;
                    write_pairs_jsonl(&pairs, &out)?;
                    log::info!("wrote {} pairs", pairs.len());
                }
                s => {
                    let set = generate_triplets(
                        &corpus,
                        &s,
                        TripletConfig {
                            per_anchor: per_anchor.unwrap_or(1),
                            background_negative_fraction: background_fraction,
                            seed,
                        },
                    )?;
                    write_triplets_jsonl(&set.triplets, &out)?;
                    log::info!(
                        "wrote {} triplets; {} anchors without positive, {} without negative",
                        set.triplets.len(),
                        set.anchors_without_positive.len(),
                        set.anchors_without_negative.len()
                    );
                }
            }
        }
        Command::Train {
            corpus,
            examples,
            config,
            model_out,
            loss_out,
        } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    TrainConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
                }
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let corpus = ingest_jsonl(&corpus)?;
            let examples = read_examples_jsonl(&examples)?;
            let vocab = build_vocab(corpus.documents().iter().map(|d| d.text.as_str()), cfg.min_freq)?;
            log::info!("vocabulary of {} tokens, {} examples", vocab.len(), examples.len());
            let init = EncoderParams::init(vocab, &cfg.encoder_config(), cfg.seed)?;
            let (params, trace) = train(&corpus, &examples, init, &cfg)?;
            save_params(&params, &model_out)?;
            if let Some(path) = loss_out {
                trace.write_csv(path)?;
            }
        }
        Command::Embed { model, corpus, out } => {
            let params = load_params(&model)?;
            let corpus = ingest_jsonl(&corpus)?;
            let vectors: Vec<(&str, Vec<f64>)> = corpus
                .documents()
                .iter()
                .map(|d| (d.id.as_str(), params.encode_text(&d.text)))
                .collect();
            write_embeddings(vectors.iter().map(|(id, v)| (*id, v.as_slice())), &out)?;
        }
        Command::Eval {
            corpus,
            embeddings,
            aspect,
            k,
            mrr_mode,
            out,
        } => {
            let corpus = ingest_jsonl(&corpus)?;
            let index = build_index(load_external_embeddings(&embeddings)?)?;
            let mode = match mrr_mode {
                MrrArg::First => MrrMode::FirstRelevant,
                MrrArg::All => MrrMode::AllRelevant,
            };
            let report = evaluate(&index, &corpus, &aspect, k, mode)?;
            log::info!(
                "{aspect}: P@{k} {:.4} R@{k} {:.4} MRR@{k} {:.4} ({} skipped)",
                report.precision,
                report.recall,
                report.mrr,
                report.skipped_queries
            );
            if let Some(path) = out {
                report.write_json(path)?;
            }
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", report.to_json())?;
        }
        Command::Project {
            corpus,
            embeddings,
            aspect,
            out,
            title,
        } => {
            let corpus = ingest_jsonl(&corpus)?;
            corpus.require_aspect(&aspect)?;
            let vectors: BTreeMap<String, Vec<f64>> = load_external_embeddings(&embeddings)?
                .into_iter()
                .filter(|(id, _)| corpus.get(id).is_some())
                .collect();
            let projection = pca_project(&vectors, 2)?;
            log::info!(
                "first two components keep {:.1}% of the variance",
                100.0 * projection.retained_variance() / projection.total_variance()
            );
            let points = projected_points(&projection, |id| {
                let labels = corpus.get(id).map(|d| d.labels_for(&aspect));
                match labels {
                    Some(l) if !l.is_empty() => l.iter().cloned().collect::<Vec<_>>().join("+"),
                    _ => "(unlabeled)".to_string(),
                }
            });
            let title = title.unwrap_or_else(|| format!("{aspect} (PCA)"));
            emit_scatter(&points, &title, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
