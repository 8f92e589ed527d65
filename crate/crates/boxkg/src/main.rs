//! Command-line entry point: train, eval, inspect, gradcheck, synth.
//!
//! Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use boxkg::config::{effective_threads, RunConfig};
use boxkg::error::{BoxKgError, Result};
use boxkg::eval::{self, Partition, View};
use boxkg::kgdata::{self, SplitKG};
use boxkg::onto::{self, TextFeatureTable, TransformMode};
use boxkg::synth;
use boxkg::trainer::{self, TrainState};

#[derive(Parser)]
#[command(name = "boxkg", about = "Two-view KG embeddings: boxes for concepts, vectors for entities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set lr=0.01 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Split mode: kgc | linking.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints + metrics.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on a ranking task.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task: kgc-inst | kgc-onto | link | diversity.
        #[arg(long)]
        task: String,
        /// Partition: valid | test.
        #[arg(long, default_value = "test")]
        partition: String,
        /// Diversity: number of related concept types (K).
        #[arg(long, default_value_t = 12)]
        types: usize,
        /// Diversity: entities retrieved per type (M).
        #[arg(long, default_value_t = 10)]
        items: usize,
        /// Diversity: fixed retrieval budget (must equal types*items).
        #[arg(long, default_value_t = 120)]
        budget: usize,
        /// Diversity: ontology relation name (default: first relation).
        #[arg(long)]
        relation: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        /// Write the report CSV here (default: next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the concepts intersecting a query concept, and all volumes.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        concept: String,
        /// Ontology relation name (default: first relation).
        #[arg(long)]
        relation: Option<String>,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 60)]
        points: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Offset added to analytic gradients (negative control).
        #[arg(long, default_value_t = 0.0)]
        sabotage: f64,
    },
    /// Generate a synthetic two-view KG as TSV files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Children per hierarchy level, e.g. 7,6.
        #[arg(long, default_value = "7,6")]
        branching: String,
        #[arg(long, default_value_t = 500)]
        entities: usize,
        #[arg(long, default_value_t = 5000)]
        triples: usize,
        #[arg(long, default_value_t = 3)]
        relations: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.9)]
        intra_leaf: f64,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

fn build_run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for pair in &args.sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| BoxKgError::BadConfig(format!("--set needs KEY=VALUE, got `{pair}`")))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &args.mode {
        cfg.set("mode", v)?;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(SplitKG, Option<TextFeatureTable>)> {
    let kg = kgdata::load_kg(
        Path::new(&cfg.inst_file),
        Path::new(&cfg.onto_file),
        Path::new(&cfg.links_file),
    )?;
    let features = if cfg.features_file.is_empty() {
        if cfg.transform == TransformMode::Text {
            return Err(BoxKgError::BadConfig(
                "transform=text requires features_file".into(),
            ));
        }
        None
    } else {
        Some(onto::load_text_features(
            Path::new(&cfg.features_file),
            &kg.concepts,
            &kg.onto_relations,
        )?)
    };
    let data = kgdata::split_kg(kg, cfg.split_ratios(), cfg.seed, cfg.mode)?;
    Ok((data, features))
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = build_run_config(args)?;
    let tc = cfg.to_train_config()?;
    let (data, features) = load_data(&cfg)?;
    let mut state = trainer::init_state(&data, &tc, features.as_ref())?;
    state.config_echo = cfg.echo();

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_path("config.echo"), cfg.echo())?;

    let threads = effective_threads(cfg.threads);
    let report = trainer::fit(&mut state, &data, &tc, features.as_ref(), threads, |r| {
        println!(
            "epoch {:>4}  J_O {:>10.6}  J_I {:>10.6}  J_Cross {:>10.6}  val {:.4}",
            r.epoch, r.losses.onto, r.losses.inst, r.losses.cross, r.val_metric
        );
    })?;

    std::fs::write(cfg.out_path("metrics.csv"), trainer::metrics_csv(&report.history))?;
    // state.params holds the best epoch after fit; stash it, save the final
    // parameters, then save the best checkpoint
    let best = std::mem::replace(&mut state.params, report.final_params.clone());
    trainer::save_checkpoint(&state, &cfg.out_path("final.ckpt"))?;
    state.params = best;
    trainer::save_checkpoint(&state, &cfg.out_path("best.ckpt"))?;
    println!(
        "best epoch {} (val {:.4}); wrote {}",
        report.best_epoch,
        report.best_metric,
        cfg.out_dir
    );
    Ok(())
}

fn load_checkpoint_with_data(
    checkpoint: &Path,
) -> Result<(TrainState, RunConfig, SplitKG, Option<TextFeatureTable>)> {
    let state = trainer::load_checkpoint(checkpoint)?;
    if state.config_echo.is_empty() {
        return Err(BoxKgError::CheckpointFormat(
            "checkpoint carries no config echo".into(),
        ));
    }
    let cfg = RunConfig::from_echo(&state.config_echo)?;
    let (data, features) = load_data(&cfg)?;
    // dimension agreement between checkpoint tables and echoed config
    let d_box = state.params.table(boxkg::params::tables::CONCEPT_CENTER)?.dim;
    if d_box != cfg.d_box {
        return Err(BoxKgError::DimMismatch { expected: cfg.d_box, got: d_box });
    }
    let d_vec = state.params.table(boxkg::params::tables::ENTITY_VEC)?.dim;
    if d_vec != cfg.d_vec {
        return Err(BoxKgError::DimMismatch { expected: cfg.d_vec, got: d_vec });
    }
    Ok((state, cfg, data, features))
}

fn resolve_relation(data: &SplitKG, name: &Option<String>) -> Result<u32> {
    match name {
        None => {
            if data.kg.onto_relations.len() == 0 {
                return Err(BoxKgError::EmptyPartition("ontology relations".into()));
            }
            Ok(0)
        }
        Some(n) => data.kg.onto_relations.id_of(n).ok_or_else(|| BoxKgError::UnknownName {
            kind: "relation",
            name: n.clone(),
            suggestion: data.kg.onto_relations.nearest(n),
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    task: &str,
    partition: &str,
    types: usize,
    items: usize,
    budget: usize,
    relation: &Option<String>,
    threads: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let (state, cfg, data, features) = load_checkpoint_with_data(checkpoint)?;
    let tc = cfg.to_train_config()?;
    let partition = match partition {
        "valid" => Partition::Valid,
        "test" => Partition::Test,
        other => {
            return Err(BoxKgError::BadConfig(format!(
                "unknown partition `{other}` (expected valid|test)"
            )))
        }
    };
    let threads = effective_threads(threads.unwrap_or(cfg.threads));
    let out_path = out
        .clone()
        .unwrap_or_else(|| checkpoint.with_file_name(format!("eval_{task}.csv")));

    let csv = match task {
        "kgc-inst" | "kgc-onto" => {
            let view = if task == "kgc-inst" { View::Instance } else { View::Ontology };
            let report = eval::eval_kgc(
                &state.params,
                &data,
                view,
                partition,
                &tc.ocfg,
                &tc.icfg,
                &tc.bcfg,
                features.as_ref(),
                threads,
            )?;
            println!("{report}");
            report.csv_rows()
        }
        "link" => {
            let report =
                eval::eval_linking(&state.params, &data, partition, &tc.bcfg, threads)?;
            println!("{report}");
            report.csv_rows()
        }
        "diversity" => {
            let rel = resolve_relation(&data, relation)?;
            // every concept with gold links in the test partition
            let mut recipes: Vec<u32> = data.link_test.iter().map(|&(_, c)| c).collect();
            recipes.sort_unstable();
            recipes.dedup();
            let results = eval::eval_diversity(
                &state.params,
                &data,
                &recipes,
                rel,
                types,
                items,
                budget,
                &tc.ocfg,
                &tc.bcfg,
                features.as_ref(),
            )?;
            let mut csv = String::from("recipe,hits,gold,retrieved,padded\n");
            let mut mean = 0.0;
            for r in &results {
                let name = data.kg.concepts.name_of(r.recipe).unwrap_or("?");
                println!(
                    "{name}\thits {:.1}\tgold {}\tretrieved {}{}",
                    r.hits,
                    r.gold,
                    r.retrieved,
                    if r.padded { "\t(padded)" } else { "" }
                );
                csv.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    r.hits, r.gold, r.retrieved, r.padded
                ));
                mean += r.hits;
            }
            println!("mean Hits@{budget}: {:.2}", mean / results.len() as f64);
            csv
        }
        other => {
            return Err(BoxKgError::BadConfig(format!(
                "unknown task `{other}` (expected kgc-inst|kgc-onto|link|diversity)"
            )))
        }
    };
    std::fs::write(&out_path, csv)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_inspect(checkpoint: &Path, concept: &str, relation: &Option<String>, top_k: usize) -> Result<()> {
    let (state, cfg, data, features) = load_checkpoint_with_data(checkpoint)?;
    let tc = cfg.to_train_config()?;
    let cid = data.kg.concepts.id_of(concept).ok_or_else(|| BoxKgError::UnknownName {
        kind: "concept",
        name: concept.to_string(),
        suggestion: data.kg.concepts.nearest(concept),
    })?;
    let rid = resolve_relation(&data, relation)?;
    let (intersections, volumes) = eval::inspect_concepts(
        &state.params,
        cid,
        rid,
        top_k,
        data.kg.concepts.len(),
        &tc.ocfg,
        &tc.bcfg,
        features.as_ref(),
    )?;
    println!("# top-{top_k} intersections with `{concept}`");
    for (c, vol) in &intersections {
        println!("{}\t{vol:.6e}", data.kg.concepts.name_of(*c).unwrap_or("?"));
    }
    println!("# all concepts by expected volume");
    for (c, vol) in &volumes {
        println!("{}\t{vol:.6e}", data.kg.concepts.name_of(*c).unwrap_or("?"));
    }
    Ok(())
}

fn cmd_gradcheck(args: &ConfigArgs, points: usize, step: f64, tol: f64, sabotage: f64) -> Result<()> {
    let cfg = build_run_config(args)?;
    let tc = cfg.to_train_config()?;
    let (data, features) = load_data(&cfg)?;
    let state = trainer::init_state(&data, &tc, features.as_ref())?;
    let report =
        trainer::check_gradients(&state, &data, &tc, features.as_ref(), points, step, tol, sabotage)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(BoxKgError::NonFinite(format!(
            "gradient check failed at tolerance {tol}"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    out: &Path,
    branching: &str,
    entities: usize,
    triples: usize,
    relations: usize,
    noise: f64,
    intra_leaf: f64,
    seed: u64,
) -> Result<()> {
    let branching: Vec<usize> = branching
        .split(',')
        .map(|b| {
            b.trim()
                .parse::<usize>()
                .map_err(|_| BoxKgError::BadConfig(format!("bad branching factor `{b}`")))
        })
        .collect::<Result<_>>()?;
    let cfg = synth::SynthConfig {
        branching,
        entities,
        inst_triples: triples,
        inst_relations: relations,
        noise,
        intra_leaf,
        seed,
    };
    let kg = synth::generate(&cfg)?;
    kgdata::write_kg(&kg, out)?;
    println!(
        "wrote {}: {} concepts, {} entities, {} ontology triples, {} instance triples, {} links",
        out.display(),
        kg.concepts.len(),
        kg.entities.len(),
        kg.onto_triples.len(),
        kg.inst_triples.len(),
        kg.cross_links.len()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval {
            checkpoint,
            task,
            partition,
            types,
            items,
            budget,
            relation,
            threads,
            out,
        } => cmd_eval(
            checkpoint, task, partition, *types, *items, *budget, relation, *threads, out,
        ),
        Command::Inspect { checkpoint, concept, relation, top_k } => {
            cmd_inspect(checkpoint, concept, relation, *top_k)
        }
        Command::Gradcheck { config, points, step, tol, sabotage } => {
            cmd_gradcheck(config, *points, *step, *tol, *sabotage)
        }
        Command::Synth {
            out,
            branching,
            entities,
            triples,
            relations,
            noise,
            intra_leaf,
            seed,
        } => cmd_synth(
            out, branching, *entities, *triples, *relations, *noise, *intra_leaf, *seed,
        ),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
