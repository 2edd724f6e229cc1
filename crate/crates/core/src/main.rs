use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ncli_ground::cli::{self, ProviderChoice, RunConfig};
use ncli_ground::dataset::synth_corpus;
use ncli_ground::grounding::LossWeights;
use ncli_ground::Error;

#[derive(Parser)]
#[command(
    name = "ncli-ground",
    version,
    about = "Persona and knowledge grounding with normalized late interaction"
)]
struct Cli {
    /// Seed for the projection and the hashed provider.
    #[arg(long, global = true, default_value_t = cli::DEFAULT_SEED)]
    seed: u64,
    /// Hashed-provider embedding width d (reduced width is d / 4).
    #[arg(long, global = true, default_value_t = cli::DEFAULT_DIM)]
    dim: usize,
    /// Token cap per text at scoring time (0 = no cap).
    #[arg(long, global = true, default_value_t = cli::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    /// Embedding cache root.
    #[arg(long, global = true, env = cli::CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ProviderKind::Hashed)]
    provider: ProviderKind,
    /// Export directory (manifest.json + embeddings.bin) for `--provider import`.
    #[arg(long, global = true)]
    import_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Hashed,
    Import,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print corpus statistics as JSON.
    Stats { corpus: PathBuf },
    /// Write a synthetic corpus. Dialog count is clamped to at least 1.
    Synth {
        #[arg(long, default_value_t = 200)]
        dialogs: usize,
        /// Tokens each question shares with its gold knowledge entry.
        #[arg(long, default_value_t = 3)]
        overlap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed and cache every persona and knowledge entry.
    Precompute {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Fit both grounding heads and write heads.json.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground every turn and write grounded.jsonl.
    Ground {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        heads: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the four similarity matrices in each record.
        #[arg(long)]
        dump_sims: bool,
    },
    /// Score grounded output against the corpus.
    Eval {
        #[arg(long)]
        grounded: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// JSONL of {dialog_id, turn_index, token_nlls}; enables perplexity.
        #[arg(long)]
        nll_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate over a grid of loss weights (each must sum to 10).
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        /// Evaluation corpus; defaults to the training corpus.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// "a,b,g;a,b,g;..."; defaults to the six standard points.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare grounding without a cache, with a cold cache and with a warm one.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        heads: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Cli {
    fn config(&self, corpus: &std::path::Path) -> Result<RunConfig, Error> {
        let provider = match self.provider {
            ProviderKind::Hashed => ProviderChoice::Hashed,
            ProviderKind::Import => {
                ProviderChoice::Import(self.import_dir.clone().ok_or_else(|| {
                    Error::InvalidConfig("--provider import needs --import-dir".into())
                })?)
            }
        };
        Ok(RunConfig {
            cache_dir: self.cache_dir.clone(),
            provider,
            seed: self.seed,
            dim: self.dim,
            max_tokens: self.max_tokens,
            ..RunConfig::new(corpus)
        })
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Stats { corpus } => cli::write_json(None, &cli::stats(corpus)?),
        Command::Synth {
            dialogs,
            overlap,
            out,
        } => {
            let corpus = synth_corpus(cli.seed, *dialogs, *overlap);
            match out {
                Some(path) => corpus.write_jsonl(path),
                None => {
                    print!("{}", corpus.to_jsonl());
                    Ok(())
                }
            }
        }
        Command::Precompute { corpus } => {
            cli::write_json(None, &cli::precompute(&cli.config(corpus)?)?)
        }
        Command::Train { corpus, train, out } => {
            let config = RunConfig {
                weights: LossWeights::new(train.alpha, train.beta, train.gamma),
                learning_rate: train.lr,
                epochs: train.epochs,
                ..cli.config(corpus)?
            };
            let summary = cli::train(&config)?;
            cli::write_json(Some(out), &summary.heads)?;
            cli::write_json(None, &summary)
        }
        Command::Ground {
            corpus,
            heads,
            out,
            dump_sims,
        } => {
            let heads = cli::read_heads(heads)?;
            let records = cli::ground(&cli.config(corpus)?, &heads, *dump_sims)?;
            cli::write_jsonl(out.as_deref(), &records)
        }
        Command::Eval {
            grounded,
            corpus,
            nll_file,
            out,
        } => {
            let report = cli::eval_files(grounded, corpus, nll_file.as_deref())?;
            cli::write_json(out.as_deref(), &report)
        }
        Command::Sweep {
            corpus,
            valid,
            grid,
            lr,
            epochs,
            out,
        } => {
            let grid = match grid {
                Some(spec) => cli::parse_grid(spec)?,
                None => cli::DEFAULT_SWEEP_GRID.to_vec(),
            };
            let config = RunConfig {
                learning_rate: *lr,
                epochs: *epochs,
                ..cli.config(corpus)?
            };
            let rows = cli::sweep(&config, &grid, valid.as_deref())?;
            cli::write_json(out.as_deref(), &rows)
        }
        Command::Bench { corpus, heads, out } => {
            let heads = match heads {
                Some(path) => cli::read_heads(path)?,
                None => cli::default_bench_heads(),
            };
            let summary = cli::bench(&cli.config(corpus)?, &heads)?;
            cli::write_json(out.as_deref(), &summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
