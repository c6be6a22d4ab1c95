use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gardenpath::analyze::{LoadedRun, PipelineSettings, RunConfig, ScalarMode};
use gardenpath::corpus::{enumerate_forms, load_corpus, render, seed_corpus, SentenceFamily};
use gardenpath::model::synthetic::synthetic_archive;
use gardenpath::model::{write_trace_dump, HiddenLayer, LogBase, ModelConfig};
use gardenpath::report::{self, aggregate_table, read_trajectories_csv, write_aggregates, write_json};
use gardenpath::Vocabulary;

#[derive(Parser)]
#[command(
    name = "gardenpath",
    version,
    about = "Hidden-state trajectories of garden-path sentences in GPT-2"
)]
struct Cli {
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the sentence corpus.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the full pipeline and write tables, diagnostics and plots.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Skip SVG output.
        #[arg(long)]
        no_plots: bool,
    },
    /// Summarize a trajectories table per kind and comparison.
    Aggregate {
        /// Run config whose out_dir holds trajectories.csv.
        #[arg(long, conflicts_with = "input")]
        config: Option<PathBuf>,
        /// Directory holding trajectories.csv.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        mode: Option<ScalarMode>,
        /// Where to write aggregates.csv/json (defaults to the input directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Report rogue dimensions at the configured layer and their pull on the metrics.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        rogue_k: Option<usize>,
    },
    /// Print the BPE tokens of a text.
    Tokenize { text: String },
    /// Write activation dumps for every rendered form of the corpus.
    Dump {
        #[command(flatten)]
        run: RunArgs,
        /// Leave out LM-head logits.
        #[arg(long)]
        no_logits: bool,
    },
    /// Write a seeded random-weight archive with the GPT-2 tensor layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        n_layer: usize,
        #[arg(long, default_value_t = 4)]
        n_head: usize,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 50257)]
        vocab_size: usize,
        #[arg(long, default_value_t = 64)]
        n_ctx: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        std: f32,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Print every form of one family.
    Render {
        #[arg(long)]
        id: String,
        /// Corpus TSV (defaults to the bundled seed corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// List family ids with their kind.
    List {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Hidden-state boundary: last, embed, ln_f, block.N.
    #[arg(long)]
    layer: Option<HiddenLayer>,
    #[arg(long)]
    mode: Option<ScalarMode>,
    /// Surprisal log base: e or 2.
    #[arg(long)]
    log_base: Option<LogBase>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::from_file(&self.config)?;
        if let Some(v) = self.layer {
            config.layer = v;
        }
        if let Some(v) = self.mode {
            config.mode = v;
        }
        if let Some(v) = self.log_base {
            config.log_base = v;
        }
        if let Some(v) = &self.out_dir {
            config.out_dir = v.clone();
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
        Ok(config)
    }
}

fn corpus_from(path: Option<&Path>) -> Result<Vec<SentenceFamily>> {
    Ok(match path {
        Some(p) => load_corpus(p)?,
        None => seed_corpus()?,
    })
}

fn settings(config: &RunConfig) -> PipelineSettings {
    PipelineSettings {
        layer: config.layer,
        log_base: config.log_base,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCommand::Render { id, corpus }) => {
            let corpus = corpus_from(corpus.as_deref())?;
            let family = corpus
                .iter()
                .find(|f| f.id == id)
                .with_context(|| format!("no family with id `{id}`"))?;
            for form in enumerate_forms(family) {
                let r = render(family, form)?;
                println!("{}\t{}", form.tag(), r.text);
            }
        }
        Command::Corpus(CorpusCommand::List { corpus }) => {
            for f in corpus_from(corpus.as_deref())? {
                println!("{}\t{}", f.id, f.kind);
            }
        }
        Command::Analyze { run, no_plots } => {
            let config = run.load()?;
            let summary = report::execute(&config, !no_plots)?;
            for f in &summary.output.failures {
                log::warn!("{} {}: {}", f.family_id, f.item, f.message);
            }
            let aggregates = gardenpath::aggregate(&summary.output.records, config.mode);
            print!("{}", aggregate_table(&aggregates, config.mode));
            println!(
                "{} records ({} flagged), {} failures; {} files under {}",
                summary.header.records,
                summary.header.flagged_records,
                summary.header.failures,
                summary.written.len(),
                config.out_dir.display()
            );
        }
        Command::Aggregate {
            config,
            input,
            mode,
            out_dir,
        } => {
            let (dir, default_mode) = match (config, input) {
                (Some(c), None) => {
                    let c = RunConfig::from_file(&c)?;
                    (c.out_dir, c.mode)
                }
                (None, Some(dir)) => (dir, ScalarMode::AtTrigger),
                _ => bail!("give --config or --input"),
            };
            let mode = mode.unwrap_or(default_mode);
            let records = read_trajectories_csv(dir.join("trajectories.csv"))?;
            let out = out_dir.unwrap_or(dir);
            let report = write_aggregates(&records, &out)?;
            print!("{}", aggregate_table(&report.aggregates, mode));
        }
        Command::Diagnose { run, rogue_k } => {
            let mut config = run.load()?;
            if let Some(k) = rogue_k {
                config.rogue_k = k;
            }
            let loaded = LoadedRun::load(&config)?;
            let output = loaded.run(&settings(&config), config.threads)?;
            let diag = report::diagnostics(&output, config.rogue_k)?;
            std::fs::create_dir_all(&config.out_dir)
                .with_context(|| format!("creating {}", config.out_dir.display()))?;
            let path = config.out_dir.join("diagnostics.json");
            write_json(&path, &diag)?;
            println!("layer {} over {} vectors", diag.layer, diag.dimensions.count);
            for d in diag.dimensions.ranked.iter().take(config.rogue_k) {
                println!(
                    "  dim {:>4}: mean {:>10.4} variance {:>12.4} share {:.4}",
                    d.dimension, d.mean, d.variance, d.variance_share
                );
            }
            let ri = &diag.rogue_influence;
            println!(
                "rogue dims carry {:.1}% of Manhattan mass; mean |Δcosine| when zeroed {:.4}",
                100.0 * ri.rogue_l1_share,
                ri.cosine_mean_abs_change
            );
            println!("wrote {}", path.display());
        }
        Command::Tokenize { text } => {
            let vocab = Vocabulary::gpt2()?;
            let seq = vocab.encode(&text)?;
            for ((id, piece), span) in seq.ids.iter().zip(&seq.pieces).zip(&seq.spans) {
                println!("{id}\t{piece:?}\t{}..{}", span.start, span.end);
            }
        }
        Command::Dump { run, no_logits } => {
            let config = run.load()?;
            let loaded = LoadedRun::load(&config)?;
            let Some(model) = &loaded.model else {
                bail!("dump needs `weights` in the run config");
            };
            let mut count = 0;
            for family in &loaded.corpus {
                for form in enumerate_forms(family) {
                    let sentence = render(family, form)?;
                    let ids = loaded.vocab.encode(&sentence.text)?.ids;
                    let mut trace = model.forward(&ids)?;
                    if no_logits {
                        trace.logits = None;
                    }
                    write_trace_dump(&trace, &config.out_dir, &format!("{}.{}", family.id, form.tag()))?;
                    count += 1;
                }
            }
            println!("wrote {count} dumps to {}", config.out_dir.display());
        }
        Command::Synth {
            out,
            n_layer,
            n_head,
            d_model,
            vocab_size,
            n_ctx,
            seed,
            std,
        } => {
            let config = ModelConfig {
                n_layer,
                n_head,
                d_model,
                vocab_size,
                n_ctx,
                layernorm_epsilon: ModelConfig::DEFAULT_EPSILON,
            };
            config.validate()?;
            let bytes = synthetic_archive(&config, seed, std)?;
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
