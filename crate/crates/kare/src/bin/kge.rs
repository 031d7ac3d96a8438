//! Knowledge-graph embedding tools: build a graph, train MuRE or RotatE,
//! evaluate by filtered link prediction.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use kare::io::{read_text, write_jsonl, write_text};
use kare_core::kge::{
    build_graph, evaluate_link_prediction, random_ranker_baseline, toy_graph, train_kge, GraphScope, KgeHyperparams,
    KgeMethod, KgeModel, KnowledgeGraph, RankSide, Triple,
};

#[derive(Parser)]
#[command(name = "kge", about = "Build knowledge graphs and train entity embeddings")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Head,
    Tail,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a graph from triple TSV files (the built-in toy graph if none).
    Build {
        #[arg(long = "triples")]
        triples: Vec<PathBuf>,
        /// complete, chemical_gene, chemical_disease, gene_disease, ...
        #[arg(long, default_value = "complete")]
        scope: String,
        /// Default: $KARE_RESULTS/kge/graph.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train embeddings and export snapshot files.
    Train {
        #[arg(long, default_value = "rotate")]
        method: String,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = kare_core::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Graph JSON from `kge build`; default $KARE_RESULTS/kge/graph.json,
        /// or the toy graph when that does not exist.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Default: $KARE_RESULTS/kge/<method>
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filtered link prediction with the random-ranker baseline.
    Eval {
        /// Directory written by `kge train`; default $KARE_RESULTS/kge/rotate
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Test triples TSV; default: every graph triple.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        side: Side,
    },
}

fn kge_dir() -> PathBuf {
    kare::results_root().join("kge")
}

fn load_graph(path: Option<PathBuf>) -> Result<KnowledgeGraph> {
    let path = path.unwrap_or_else(|| kge_dir().join("graph.json"));
    if !path.exists() {
        log::info!("{} not found; using the toy graph", path.display());
        return Ok(toy_graph());
    }
    let mut g: KnowledgeGraph =
        serde_json::from_str(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?;
    g.reindex();
    Ok(g)
}

fn test_triples(graph: &KnowledgeGraph, path: &Path) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cols.len() < 3 || (i == 0 && cols[0] == "head_id") {
            continue;
        }
        let h = graph.lookup_entity(cols[0]);
        let r = graph.lookup_relation(cols[1]);
        let t = graph.lookup_entity(cols[2]);
        match (h, r, t) {
            (Some(h), Some(r), Some(t)) => out.push(Triple::new(h, r, t)),
            _ => log::warn!("{}:{}: triple not in the graph vocabulary, skipped", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn main() -> Result<()> {
    kare::init_logging();
    match Cli::parse().cmd {
        Cmd::Build { triples, scope, out } => {
            let scope = GraphScope::parse(&scope).ok_or_else(|| anyhow!("unknown scope {scope:?}"))?;
            let (graph, report) = if triples.is_empty() {
                (toy_graph(), Default::default())
            } else {
                let texts: Result<Vec<String>> = triples.iter().map(|p| read_text(p)).collect();
                let texts = texts?;
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                build_graph(&refs, scope)?
            };
            let out = out.unwrap_or_else(|| kge_dir().join("graph.json"));
            write_text(&out, &serde_json::to_string(&graph)?)?;
            println!(
                "entities {}\trelations {}\ttriples {}\tskipped {}\tduplicates {}",
                graph.num_entities(),
                graph.num_relations(),
                graph.triples().len(),
                report.skipped,
                report.duplicates
            );
            println!("wrote {}", out.display());
        }
        Cmd::Train {
            method,
            dim,
            seed,
            lr,
            batch,
            epochs,
            negatives,
            gamma,
            graph,
            out,
        } => {
            let method = KgeMethod::parse(&method).ok_or_else(|| anyhow!("unknown method {method:?}"))?;
            let d = KgeHyperparams::default();
            let hp = KgeHyperparams {
                method,
                dim,
                lr: lr.unwrap_or(d.lr),
                batch: batch.unwrap_or(d.batch),
                epochs: epochs.unwrap_or(d.epochs),
                negatives: negatives.unwrap_or(d.negatives),
                gamma: gamma.unwrap_or(d.gamma),
            };
            let graph = load_graph(graph)?;
            let start = Instant::now();
            let trained = train_kge(&graph, &hp, seed)?;
            let out = out.unwrap_or_else(|| kge_dir().join(serde_json::to_value(method).unwrap().as_str().unwrap()));
            write_text(&out.join("model.json"), &serde_json::to_string(&trained.model)?)?;
            write_text(&out.join("graph.json"), &serde_json::to_string(&graph)?)?;
            write_text(&out.join("hyperparams.json"), &serde_json::to_string_pretty(&hp)?)?;
            write_text(&out.join("entities.emb"), &trained.model.export_entities(&graph))?;
            write_text(&out.join("relations.emb"), &trained.model.export_relations(&graph))?;
            write_jsonl(&out.join("loss.jsonl"), &trained.loss_trace)?;
            let first = trained.loss_trace.first().copied().unwrap_or(f64::NAN);
            let last = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs in {:.2}s, loss {first:.4} -> {last:.4}",
                hp.epochs,
                start.elapsed().as_secs_f64()
            );
            println!("wrote {}", out.display());
        }
        Cmd::Eval {
            model,
            graph,
            test,
            side,
        } => {
            let dir = model.unwrap_or_else(|| kge_dir().join("rotate"));
            let m: KgeModel = serde_json::from_str(&read_text(&dir.join("model.json"))?)?;
            let graph = match graph {
                Some(p) => load_graph(Some(p))?,
                None => load_graph(Some(dir.join("graph.json")))?,
            };
            let tests = match test {
                Some(p) => test_triples(&graph, &p)?,
                None => graph.triples().to_vec(),
            };
            let side = match side {
                Side::Head => RankSide::Head,
                Side::Tail => RankSide::Tail,
                Side::Both => RankSide::Both,
            };
            let ks = [1, 3, 10];
            let r = evaluate_link_prediction(&m, &tests, &graph, &ks, side);
            let b = random_ranker_baseline(&tests, &graph, &ks, side);
            println!("metric\tmodel\trandom");
            println!("mrr\t{:.4}\t{:.4}", r.mrr, b.mrr);
            for k in ks {
                println!("hits@{k}\t{:.4}\t{:.4}", r.hits[&k], b.hits[&k]);
            }
        }
    }
    Ok(())
}
