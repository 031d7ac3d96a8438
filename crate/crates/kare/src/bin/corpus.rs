//! Corpus tools: validate, normalize and split interchange files.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};

use kare_core::corpus::{make_splits, normalize_mentions, EntityType, NormalizationPolicy, SplitSpec, SURFACE_SCHEME};
use kare_core::synthetic::{planted_cue_corpus, PlantedCueSpec};
use kare::io::{load_corpus, load_mapping, save_corpus, write_text};

#[derive(Parser)]
#[command(name = "corpus", about = "Validate, normalize and split interchange corpora")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a corpus; exits non-zero on the first error.
    Validate { path: PathBuf },
    /// Map mention kb ids through a mapping table.
    Normalize {
        path: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        /// gold_passthrough, table_lookup or string_match
        #[arg(long)]
        policy: String,
        /// Source scheme of the table (defaults to "surface" for string_match).
        #[arg(long)]
        source: Option<String>,
        #[arg(long, default_value = "mesh")]
        target: String,
        /// Comma-separated entity types the table applies to (default: all).
        #[arg(long, value_delimiter = ',')]
        types: Vec<String>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign documents to train/val/test.
    Split {
        path: PathBuf,
        /// train,val,test document counts
        #[arg(long, value_delimiter = ',', num_args = 1, conflicts_with = "ratios")]
        sizes: Option<Vec<usize>>,
        /// train,val,test fractions
        #[arg(long, value_delimiter = ',', num_args = 1)]
        ratios: Option<Vec<f64>>,
        #[arg(long, default_value_t = kare_core::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        stratify: bool,
        /// Write the assignment JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the corpus with split hints set to the assignment.
        #[arg(long)]
        write_corpus: Option<PathBuf>,
    },
    /// Write the planted-cue synthetic corpus.
    Synthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = kare_core::DEFAULT_SEED)]
        seed: u64,
    },
}

fn three<T: Copy>(v: &[T], what: &str) -> Result<[T; 3]> {
    v.try_into().map_err(|_| anyhow!("--{what} takes exactly three values"))
}

fn main() -> Result<()> {
    kare::init_logging();
    match Cli::parse().cmd {
        Cmd::Validate { path } => {
            let c = load_corpus(&path)?;
            let relations: usize = c.documents.iter().map(|d| d.relations.len()).sum();
            println!(
                "ok: {} documents, {} mentions, {} relations",
                c.len(),
                c.mention_count(),
                relations
            );
        }
        Cmd::Normalize {
            path,
            table,
            policy,
            source,
            target,
            types,
            out,
        } => {
            let policy = NormalizationPolicy::parse(&policy).ok_or_else(|| anyhow!("unknown policy {policy:?}"))?;
            let corpus = load_corpus(&path)?;
            let types: Result<Vec<EntityType>> = types
                .iter()
                .map(|t| EntityType::parse(t).ok_or_else(|| anyhow!("unknown entity type {t:?}")))
                .collect();
            let tables = match table {
                Some(t) => {
                    let source = source.unwrap_or_else(|| match policy {
                        NormalizationPolicy::StringMatch => SURFACE_SCHEME.to_string(),
                        _ => "source".to_string(),
                    });
                    vec![load_mapping(&t, &source, &target)?.for_types(&types?)]
                }
                None if policy != NormalizationPolicy::GoldPassthrough => bail!("--table is required for this policy"),
                None => Vec::new(),
            };
            let (normalized, report) = normalize_mentions(&corpus, &tables, policy)?;
            for (t, cov) in &report.per_type {
                eprintln!("{t}\t{}/{}\t{:.2}%", cov.mapped, cov.total, 100.0 * cov.ratio());
            }
            eprintln!("{} unmapped mentions", report.unmapped.len());
            match out {
                Some(p) => save_corpus(&p, &normalized)?,
                None => print!("{}", kare_core::corpus::to_interchange(&normalized)),
            }
        }
        Cmd::Split {
            path,
            sizes,
            ratios,
            seed,
            stratify,
            out,
            write_corpus,
        } => {
            let corpus = load_corpus(&path)?;
            let spec = match (sizes, ratios) {
                (Some(s), _) => SplitSpec::Sizes(three(&s, "sizes")?),
                (None, Some(r)) => SplitSpec::Ratios(three(&r, "ratios")?),
                (None, None) => bail!("one of --sizes or --ratios is required"),
            };
            let a = make_splits(&corpus, &spec, seed, stratify)?;
            eprintln!(
                "train {} / val {} / test {} / held out {}",
                a.train.len(),
                a.val.len(),
                a.test.len(),
                a.held_out.len()
            );
            let json = serde_json::to_string_pretty(&a)?;
            match out {
                Some(p) => write_text(&p, &(json + "\n"))?,
                None => println!("{json}"),
            }
            if let Some(p) = write_corpus {
                let mut c = corpus.clone();
                for d in &mut c.documents {
                    d.split = a.split_of(&d.doc_id);
                }
                save_corpus(&p, &c)?;
            }
        }
        Cmd::Synthetic { out, seed } => {
            let spec = PlantedCueSpec {
                seed,
                ..PlantedCueSpec::default()
            };
            let c = planted_cue_corpus(&spec);
            save_corpus(&out, &c)?;
            println!("wrote {} documents to {}", c.len(), out.display());
        }
    }
    Ok(())
}
