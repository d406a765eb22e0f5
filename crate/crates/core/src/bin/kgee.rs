//! Command-line front end for the extraction pipeline. Every subcommand
//! reads its knobs from an optional TOML configuration (`-c`) and prints
//! machine-greppable lines; exit codes are 0 (ok), 1 (usage), 2 (bad
//! data), 3 (numeric failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgee::config::{PipelineConfig, TaggerKind};
use kgee::ds::LabelingConfig;
use kgee::edag::{DecoderModel, KgEmbeddings};
use kgee::embed::train::holdout_accuracy;
use kgee::embed::{encode_pair_onehot, export_embeddings, render_embeddings_tsv};
use kgee::eval::render_report;
use kgee::io::{
    load_checkpoint, parse_documents, parse_embeddings_tsv, read_to_string, render_documents,
    report_json, save_checkpoint, write_bytes,
};
use kgee::kg::{export, KnowledgeGraph};
use kgee::ner::{train_crf, TaggedSentence};
use kgee::pipeline::{
    build_graph, crf_from_store, embedding_model_from_store, evaluate_documents, extract_documents,
    init_workers, label_documents, load_rules, load_schemas, load_templates, parse_holdout,
    tagged_sentences, to_training_docs, Tagger,
};
use kgee::{Error, Result};

#[derive(Parser)]
#[command(name = "kgee", version, about = "Event extraction over financial knowledge graphs")]
struct Cli {
    /// Pipeline configuration (TOML). Relative paths inside it resolve
    /// against its own directory.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-graph construction and path queries.
    #[command(subcommand)]
    Kg(KgCommand),
    /// Graph embedding training and export.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Distant supervision over unlabeled announcements.
    #[command(subcommand)]
    Label(LabelCommand),
    /// Document-level event extraction.
    #[command(subcommand)]
    Dee(DeeCommand),
    /// Scores predicted events against a gold corpus.
    Evaluate(EvaluateArgs),
    /// Writes the built-in example data tree for smoke tests.
    Fixtures {
        /// Directory to populate.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum KgCommand {
    /// Ingests entity and triple tables, then prints an ingest summary.
    Build {
        /// Entity table, overrides `kg.entities`.
        #[arg(long, value_name = "TSV")]
        entities: Option<String>,
        /// Triple table, overrides `kg.triples`.
        #[arg(long, value_name = "TSV")]
        triples: Option<String>,
        /// Writes the graph back out in canonical order.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Prints the path feature vector for an entity pair.
    Paths {
        #[arg(long, value_name = "NAME")]
        from: String,
        #[arg(long, value_name = "NAME")]
        to: String,
        /// Number of shortest paths, overrides `kg.k`.
        #[arg(long, value_name = "N")]
        k: Option<usize>,
        /// Hop limit per path, overrides `kg.max_len`.
        #[arg(long, value_name = "N")]
        max_len: Option<usize>,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Trains link-prediction embeddings on the configured graph.
    Train {
        /// Checkpoint to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Held-out triples (head, relation name, tail) to score.
        #[arg(long, value_name = "TSV")]
        holdout: Option<String>,
        /// Also writes the per-entity embedding table.
        #[arg(long, value_name = "TSV")]
        export: Option<PathBuf>,
    },
    /// Recomputes the embedding table from a checkpoint.
    Export {
        #[arg(long, value_name = "FILE")]
        checkpoint: String,
        #[arg(long, value_name = "TSV")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LabelCommand {
    /// Labels documents with template matches alone.
    Template(LabelArgs),
    /// Labels documents with templates plus coverage-gated propagation.
    Ds {
        #[command(flatten)]
        common: LabelArgs,
        /// Minimum role coverage, overrides `ds.theta`.
        #[arg(long, value_name = "F")]
        theta: Option<f64>,
    },
}

#[derive(Args)]
struct LabelArgs {
    /// Documents to label (JSON lines).
    #[arg(long, value_name = "JSONL")]
    corpus: String,
    /// Labeled output (JSON lines).
    #[arg(long, value_name = "JSONL")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DeeCommand {
    /// Trains the event decoder (and the tagger, when one is configured).
    Train {
        /// Gold corpus with mentions and events (JSON lines).
        #[arg(long, value_name = "JSONL")]
        corpus: String,
        /// Entity embedding table from `embed train`.
        #[arg(long, value_name = "TSV")]
        embeddings: String,
        /// Decoder checkpoint to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Tagger checkpoint to write; trains one whenever given.
        #[arg(long, value_name = "FILE")]
        crf_out: Option<PathBuf>,
    },
    /// Extracts events from documents with a trained decoder.
    Extract {
        /// Documents to read (JSON lines).
        #[arg(long, value_name = "JSONL")]
        corpus: String,
        /// Entity embedding table from `embed train`.
        #[arg(long, value_name = "TSV")]
        embeddings: String,
        /// Decoder checkpoint from `dee train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: String,
        /// Extracted output (JSON lines).
        #[arg(long, value_name = "JSONL")]
        out: PathBuf,
        /// Tagger checkpoint, needed when `ner.strategy = "crf"`.
        #[arg(long, value_name = "FILE")]
        crf: Option<String>,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted corpus (JSON lines).
    #[arg(long, value_name = "JSONL")]
    pred: String,
    /// Gold corpus (JSON lines).
    #[arg(long, value_name = "JSONL")]
    gold: String,
    /// Metrics report to write (JSON), overrides `eval.report_json`.
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version also arrive here; only real mistakes go to stderr
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kgee: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let mut cfg = PipelineConfig::read(p)?;
            if let Some(base) = p.parent() {
                cfg.rebase(base);
            }
            Ok(cfg)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_workers()?;
    let mut cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Kg(cmd) => run_kg(cmd, &mut cfg),
        Command::Embed(cmd) => run_embed(cmd, &cfg),
        Command::Label(cmd) => run_label(cmd, &cfg),
        Command::Dee(cmd) => run_dee(cmd, &cfg),
        Command::Evaluate(args) => run_evaluate(args, &cfg),
        Command::Fixtures { out } => {
            let written = kgee::fixtures::write_fixture_tree(&out)?;
            for name in written {
                println!("{}", out.join(name).display());
            }
            Ok(())
        }
    }
}

fn run_kg(cmd: KgCommand, cfg: &mut PipelineConfig) -> Result<()> {
    match cmd {
        KgCommand::Build { entities, triples, out_dir } => {
            if entities.is_some() {
                cfg.kg.entities = entities;
            }
            if triples.is_some() {
                cfg.kg.triples = triples;
            }
            cfg.check_files()?;
            let (graph, report) = build_graph(cfg)?;
            print!("{}", report.render());
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| Error::io(dir.display().to_string(), e))?;
                export(&graph, dir.join("entities.tsv"), dir.join("triples.tsv"))?;
            }
            Ok(())
        }
        KgCommand::Paths { from, to, k, max_len } => {
            cfg.check_files()?;
            let (graph, _) = build_graph(cfg)?;
            let resolve = |name: &str| {
                graph
                    .resolve(name)
                    .ok_or_else(|| Error::data(format!("unknown entity {name:?}")))
            };
            let a = resolve(&from)?;
            let b = resolve(&to)?;
            let features = encode_pair_onehot(
                &graph,
                a,
                b,
                k.unwrap_or(cfg.kg.k),
                max_len.unwrap_or(cfg.kg.max_len),
            )?;
            let cells: Vec<String> = features.iter().map(|v| format!("{v}")).collect();
            println!("{}", cells.join("\t"));
            Ok(())
        }
    }
}

fn run_embed(cmd: EmbedCommand, cfg: &PipelineConfig) -> Result<()> {
    cfg.check_files()?;
    let (graph, _) = build_graph(cfg)?;
    match cmd {
        EmbedCommand::Train { out, holdout, export } => {
            let (model, trace) = kgee::embed::train_link_prediction(&graph, &cfg.embed.to_config())?;
            for (epoch, loss) in trace.iter().enumerate() {
                println!("epoch {epoch}\tloss {loss:?}");
            }
            save_checkpoint(&out, &model.store)?;
            if let Some(path) = holdout {
                let triples = parse_holdout(&read_to_string(&path)?, &path, &graph)?;
                let acc = holdout_accuracy(&model, &graph, &triples)?;
                println!("holdout accuracy {acc:?}");
            }
            if let Some(path) = export {
                let table = export_embeddings(&model, &graph)?;
                write_bytes(path, render_embeddings_tsv(&table).as_bytes())?;
            }
            Ok(())
        }
        EmbedCommand::Export { checkpoint, out } => {
            let model = embedding_model_from_store(load_checkpoint(checkpoint)?)?;
            let table = export_embeddings(&model, &graph)?;
            write_bytes(out, render_embeddings_tsv(&table).as_bytes())?;
            Ok(())
        }
    }
}

/// Rules plus reserved relation names; the graph is optional here because
/// labeling itself never walks it.
fn labeling_context(cfg: &PipelineConfig) -> Result<(Vec<kgee::kg::NormalizeRule>, Vec<String>)> {
    if cfg.kg.entities.is_some() && cfg.kg.triples.is_some() {
        let (graph, _) = build_graph(cfg)?;
        Ok((graph.normalize_rules().to_vec(), graph.relation_names().to_vec()))
    } else {
        Ok((load_rules(cfg)?, Vec::new()))
    }
}

fn run_label(cmd: LabelCommand, cfg: &PipelineConfig) -> Result<()> {
    cfg.check_files()?;
    let (common, ds) = match cmd {
        LabelCommand::Template(common) => (common, None),
        LabelCommand::Ds { common, theta } => {
            (common, Some(LabelingConfig { theta: theta.unwrap_or(cfg.ds.theta) }))
        }
    };
    let docs = parse_documents(&read_to_string(&common.corpus)?, &common.corpus)?;
    let schemas = load_schemas(cfg)?;
    let templates = load_templates(cfg, &schemas)?;
    let (rules, main_relations) = labeling_context(cfg)?;
    let (labeled, report) =
        label_documents(&docs, &templates, &schemas, &rules, &main_relations, ds.as_ref())?;
    write_bytes(&common.out, render_documents(&labeled)?.as_bytes())?;
    let events: usize = labeled.iter().map(|d| d.records().len()).sum();
    println!("labeled {} documents with {events} events", labeled.len());
    if let Some(report) = report {
        print!("{}", render_report(&report));
    }
    Ok(())
}

fn run_dee(cmd: DeeCommand, cfg: &PipelineConfig) -> Result<()> {
    cfg.check_files()?;
    let schemas = load_schemas(cfg)?;
    let (graph, _) = build_graph(cfg)?;
    let rules = graph.normalize_rules().to_vec();
    let kg_table = |path: &str, graph: &KnowledgeGraph| -> Result<KgEmbeddings> {
        KgEmbeddings::from_graph(graph, &parse_embeddings_tsv(&read_to_string(path)?, path)?)
    };
    match cmd {
        DeeCommand::Train { corpus, embeddings, out, crf_out } => {
            if cfg.ner.strategy == TaggerKind::Crf && crf_out.is_none() {
                return Err(Error::Config(
                    "ner.strategy = \"crf\" needs --crf-out to store the tagger".into(),
                ));
            }
            let docs = parse_documents(&read_to_string(&corpus)?, &corpus)?;
            let kg = kg_table(&embeddings, &graph)?;
            // the decoder always learns from gold mentions; the tagger
            // strategy only decides who finds mentions at extraction time
            let training = to_training_docs(&docs, &Tagger::Gold)?;
            let (model, trace) =
                kgee::edag::train_decoder(&training, &kg, &schemas, &rules, &cfg.decoder_config())?;
            for (epoch, loss) in trace.iter().enumerate() {
                println!("epoch {epoch}\tloss {loss:?}");
            }
            save_checkpoint(&out, &model.store)?;
            if let Some(path) = crf_out {
                let sentences: Vec<TaggedSentence> = tagged_sentences(&docs)?;
                let (tagger, crf_trace) = train_crf(&sentences, &cfg.ner.to_crf_config())?;
                for (epoch, loss) in crf_trace.iter().enumerate() {
                    println!("crf epoch {epoch}\tloss {loss:?}");
                }
                save_checkpoint(&path, &tagger.store)?;
            }
            Ok(())
        }
        DeeCommand::Extract { corpus, embeddings, checkpoint, out, crf } => {
            let docs = parse_documents(&read_to_string(&corpus)?, &corpus)?;
            let kg = kg_table(&embeddings, &graph)?;
            let model = DecoderModel::from_store(
                load_checkpoint(checkpoint)?,
                schemas,
                cfg.decode.fusion,
                cfg.decode.branch_cap,
            )?;
            let crf_model = match crf {
                Some(path) => Some(crf_from_store(load_checkpoint(path)?)?),
                None => None,
            };
            let tagger = Tagger::from_config(&cfg.ner, crf_model)?;
            let extracted = extract_documents(
                &model,
                &docs,
                &kg,
                &rules,
                &tagger,
                cfg.decode.type_threshold,
                cfg.decode.select_threshold,
            )?;
            write_bytes(&out, render_documents(&extracted)?.as_bytes())?;
            let events: usize = extracted.iter().map(|d| d.records().len()).sum();
            println!("extracted {events} events from {} documents", extracted.len());
            Ok(())
        }
    }
}

fn run_evaluate(args: EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    cfg.check_files()?;
    let pred = parse_documents(&read_to_string(&args.pred)?, &args.pred)?;
    let gold = parse_documents(&read_to_string(&args.gold)?, &args.gold)?;
    let schemas = load_schemas(cfg)?;
    let report = evaluate_documents(&pred, &gold, &schemas)?;
    print!("{}", render_report(&report));
    let json_path = args.out.as_deref().or(cfg.eval.report_json.as_deref());
    if let Some(path) = json_path {
        let mut text = serde_json::to_string_pretty(&report_json(&report))?;
        text.push('\n');
        write_bytes(path, text.as_bytes())?;
    }
    if let Some(path) = &cfg.eval.report_text {
        write_bytes(path, render_report(&report).as_bytes())?;
    }
    Ok(())
}
