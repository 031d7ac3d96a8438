//! Experiment harness: grid sweeps, the seed protocol, the training-size
//! ablation and result tables, backed by the `$KARE_RESULTS` ledger.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};

use kare::dataset::Dataset;
use kare::io::{read_text, write_text};
use kare::ledger::JsonlStore;
use kare::runner::LocalRunner;
use kare_core::harness::{
    apply_override, baseline_axes, best_hyperparameters_table, enumerate_grid, extension_axes, learning_curve_table,
    main_table, parse_override, per_type_table, protocol_run_count, reports_from_records, run_once, run_protocol,
    training_size_ablation, AblationSpec, Axis, CurveRow, ExperimentConfig, LearningCurve, ProtocolSpec,
    RunAccounting, RunRecord,
};
use kare_core::math::mean_sd;
use kare_core::model::Variant;

#[derive(Parser)]
#[command(name = "bench", about = "Run experiment grids and protocols against the results ledger")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Base {
    /// `synthetic` or a dataset manifest path.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value = "tiny")]
    encoder: String,
    /// baseline, text, embedding or structure
    #[arg(long, default_value = "baseline")]
    variant: String,
    /// Base config JSON (e.g. a protocol winner); replaces --dataset/--encoder.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `field=value`, repeatable. Overridden fields are removed from the grid.
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,
    /// Add compound-encoder configs to a structure sweep.
    #[arg(long)]
    compound_encoder: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every grid config once at the phase-one seed.
    Grid {
        #[command(flatten)]
        base: Base,
        /// Print the configs without running them.
        #[arg(long)]
        dry_run: bool,
    },
    /// Grid at one seed, then extra seeds for the best configs.
    Protocol {
        #[command(flatten)]
        base: Base,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long, value_delimiter = ',', default_values_t = kare_core::harness::EXTRA_SEEDS)]
        extra_seeds: Vec<u64>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Learning curve over training-subset sizes with fixed hyperparameters.
    Ablation {
        #[command(flatten)]
        base: Base,
        /// start:end:step
        #[arg(long, default_value = "25:200:25")]
        sizes: String,
        #[arg(long, default_value_t = 6)]
        seeds: usize,
        #[arg(long)]
        dry_run: bool,
    },
    /// Write result tables from the ledger.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn base_config(b: &Base) -> Result<ExperimentConfig> {
    let variant = Variant::parse(&b.variant).ok_or_else(|| anyhow!("unknown variant {:?}", b.variant))?;
    let mut c = match (&b.config, &b.dataset) {
        (Some(p), _) => {
            let mut c: ExperimentConfig = serde_json::from_str(&read_text(p)?)?;
            c.train.variant = variant;
            c
        }
        (None, Some(d)) => ExperimentConfig::new(d, &b.encoder, variant),
        (None, None) => bail!("--dataset or --config is required"),
    };
    for o in &b.overrides {
        c = apply_override(&c, o)?;
    }
    Ok(c)
}

fn overridden_fields(b: &Base) -> Result<Vec<String>> {
    b.overrides
        .iter()
        .map(|o| {
            let (k, _) = parse_override(o)?;
            Ok(k.rsplit('.').next().unwrap_or(&k).to_string())
        })
        .collect()
}

/// Baseline variants sweep the training grid; extension variants hold the
/// base config fixed and sweep their own options.
fn build_grid(b: &Base) -> Result<Vec<ExperimentConfig>> {
    let base = base_config(b)?;
    let fixed = overridden_fields(b)?;
    let variant = base.train.variant;
    let axes: Vec<Axis> = if variant == Variant::Baseline {
        baseline_axes()
    } else {
        let stores: Vec<String> = if variant == Variant::Embedding {
            Dataset::load(&base.dataset)?.embeddings.keys().cloned().collect()
        } else {
            Vec::new()
        };
        extension_axes(variant, &stores)
    };
    let axes: Vec<Axis> = axes.into_iter().filter(|a| !fixed.contains(&a.field)).collect();
    let mut grid = enumerate_grid(&base, &axes)?;
    if let (Variant::Structure, Some(enc)) = (variant, &b.compound_encoder) {
        let mut extra = base.clone();
        extra.variant_params.fingerprint = None;
        extra.variant_params.compound_encoder = Some(enc.clone());
        let side_axes: Vec<Axis> = axes.into_iter().filter(|a| a.field == "side_lr").collect();
        grid.extend(enumerate_grid(&extra, &side_axes)?);
    }
    Ok(grid)
}

fn print_accounting(a: &RunAccounting) {
    println!("executed {}\treused {}\tfailed {}", a.executed, a.reused, a.failed);
}

fn short(id: &str) -> &str {
    &id[..12.min(id.len())]
}

fn main() -> Result<()> {
    kare::init_logging();
    let root = kare::results_root();
    match Cli::parse().cmd {
        Cmd::Grid { base, dry_run } => {
            let grid = build_grid(&base)?;
            println!("{} configs", grid.len());
            if dry_run {
                for c in &grid {
                    println!("{}\t{}", short(&c.identity()), c.canonical_json());
                }
                return Ok(());
            }
            let mut runner = LocalRunner::new(&root);
            let mut store = JsonlStore::open(&root)?;
            let mut acct = RunAccounting::default();
            println!("id\tstatus\tval_f1\ttest_f1");
            for c in &grid {
                let rec = run_once(&c.with_seed(kare_core::harness::PHASE1_SEED), &mut runner, &mut store, &mut acct)
                    .map_err(|e| anyhow!(e))?;
                match rec.result() {
                    Some(r) => println!("{}\tok\t{:.4}\t{:.4}", short(&rec.id), r.val_f1, r.test_f1),
                    None => println!("{}\tfailed\t\t", short(&rec.id)),
                }
            }
            print_accounting(&acct);
        }
        Cmd::Protocol {
            base,
            top_k,
            extra_seeds,
            dry_run,
        } => {
            let grid = build_grid(&base)?;
            let spec = ProtocolSpec {
                top_k,
                extra_seeds,
                ..ProtocolSpec::default()
            };
            println!("{} configs, {} runs", grid.len(), protocol_run_count(grid.len(), &spec));
            if dry_run {
                return Ok(());
            }
            let mut runner = LocalRunner::new(&root);
            let mut store = JsonlStore::open(&root)?;
            let report = run_protocol(&grid, &spec, &mut runner, &mut store).map_err(|e| anyhow!(e))?;
            for f in &report.finalists {
                println!(
                    "finalist {}\tmean_val {:.4}\ttest {:.4} ± {:.4}\tseeds {:?}",
                    short(&f.identity),
                    f.mean_val,
                    f.mean,
                    f.sd,
                    f.seeds
                );
            }
            if let Some(w) = &report.winner {
                println!("winner {}\ttest {:.4} ± {:.4}", short(&w.identity), w.mean, w.sd);
                let path = root.join("protocols").join(format!("{}.json", w.identity));
                write_text(&path, &serde_json::to_string_pretty(&report)?)?;
                write_text(&root.join("protocols").join(format!("{}.config.json", w.identity)), &w.config.canonical_json())?;
                println!("wrote {}", path.display());
            } else {
                println!("no successful configs");
            }
            print_accounting(&report.accounting);
        }
        Cmd::Ablation {
            base,
            sizes,
            seeds,
            dry_run,
        } => {
            let config = base_config(&base)?;
            let spec = AblationSpec::parse(&sizes, seeds).map_err(|e| anyhow!(e))?;
            println!("{} sizes x {} seeds = {} runs", spec.sizes.len(), spec.seeds.len(), spec.run_count());
            if dry_run {
                return Ok(());
            }
            let mut runner = LocalRunner::new(&root);
            let mut store = JsonlStore::open(&root)?;
            let curve = training_size_ablation(&config, &spec, &mut runner, &mut store).map_err(|e| anyhow!(e))?;
            print!("{}", learning_curve_table(&curve));
            print_accounting(&curve.accounting);
        }
        Cmd::Report { out } => {
            let store = JsonlStore::open(&root)?;
            let records: Vec<RunRecord> = store.records().cloned().collect();
            if records.is_empty() {
                bail!("no records in {}", store.path().display());
            }
            let reports = reports_from_records(&records);
            write_text(&out.join("main.tsv"), &main_table(&reports))?;
            write_text(&out.join("per_type.tsv"), &per_type_table(&reports))?;
            write_text(&out.join("best_hyperparameters.tsv"), &best_hyperparameters_table(&reports))?;
            write_text(&out.join("reports.json"), &serde_json::to_string_pretty(&reports)?)?;
            let curves = learning_curves(&records);
            if !curves.is_empty() {
                let mut text = String::new();
                for (id, curve) in &curves {
                    for (i, line) in learning_curve_table(curve).lines().enumerate() {
                        let prefix = if i == 0 { "setting" } else { short(id) };
                        text.push_str(&format!("{prefix}\t{line}\n"));
                    }
                }
                write_text(&out.join("learning_curve.tsv"), &text)?;
            }
            println!("{} settings from {} runs written to {}", reports.len(), records.len(), out.display());
        }
    }
    Ok(())
}

/// Ablation records grouped by setting (config without seed and subset).
fn learning_curves(records: &[RunRecord]) -> BTreeMap<String, LearningCurve> {
    let mut groups: BTreeMap<String, BTreeMap<usize, (bool, Vec<f64>)>> = BTreeMap::new();
    for r in records {
        let (Some(s), Some(res)) = (r.config.subset, r.result()) else {
            continue;
        };
        let mut c = r.config.clone();
        c.subset = None;
        let e = groups.entry(c.setting_identity()).or_default().entry(s.size).or_default();
        e.0 |= res.clamped;
        e.1.push(res.test_f1);
    }
    groups
        .into_iter()
        .map(|(id, sizes)| {
            let rows = sizes
                .into_iter()
                .map(|(size, (clamped, f1))| {
                    let (mean, sd) = mean_sd(&f1);
                    CurveRow {
                        size,
                        clamped,
                        f1,
                        mean,
                        sd,
                    }
                })
                .collect();
            (
                id,
                LearningCurve {
                    rows,
                    accounting: RunAccounting::default(),
                },
            )
        })
        .collect()
}
