//! Subcommand implementations behind the `ncli-ground` binary.
//!
//! Every function here is deterministic for fixed inputs and seed, apart from
//! the wall-clock fields of [`BenchReport`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{corpus_stats, load_corpus, Corpus, CorpusStats};
use crate::embedstore::{
    precompute_candidates, Embedder, EmbeddingCache, EmbeddingProvider, HashedProvider,
    ImportProvider, ProjectionMatrix,
};
use crate::error::{Error, Result};
use crate::grounding::{
    build_lm_input, extract_features, fit_heads, ground_turn, turn_sims, GroundingHead,
    GroundingOutput, HeadsFile, LossWeights, NullLmLoss, Task, TrainOptions, TurnFeatures,
    TurnSims,
};
use crate::metrics::{evaluate, EvalReport};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_MAX_TOKENS: usize = 256;
pub const CACHE_DIR_ENV: &str = "NCLI_CACHE_DIR";

/// The (alpha, beta, gamma) grid searched by default.
pub const DEFAULT_SWEEP_GRID: [LossWeights; 6] = [
    LossWeights::new(2.0, 2.0, 6.0),
    LossWeights::new(2.0, 4.0, 4.0),
    LossWeights::new(2.0, 6.0, 2.0),
    LossWeights::new(4.0, 2.0, 4.0),
    LossWeights::new(4.0, 4.0, 2.0),
    LossWeights::new(6.0, 2.0, 2.0),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderChoice {
    Hashed,
    /// Export directory holding `manifest.json` and `embeddings.bin`.
    Import(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub provider: ProviderChoice,
    pub seed: u64,
    /// Provider width `d` (ignored for imports, which carry their own).
    pub dim: usize,
    /// Per-text token cap at scoring time; 0 disables it.
    pub max_tokens: usize,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            cache_dir: None,
            provider: ProviderChoice::Hashed,
            seed: DEFAULT_SEED,
            dim: DEFAULT_DIM,
            max_tokens: DEFAULT_MAX_TOKENS,
            weights: LossWeights::new(1.0, 1.0, 10.0),
            learning_rate: 0.1,
            epochs: 50,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            weights: self.weights,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.provider == ProviderChoice::Hashed && self.dim < 4 {
            return Err(Error::InvalidConfig(format!(
                "--dim must be >= 4, got {}",
                self.dim
            )));
        }
        self.train_options().validate()
    }

    pub fn provider(&self) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match &self.provider {
            ProviderChoice::Hashed => Arc::new(HashedProvider::new(self.seed, self.dim)?),
            ProviderChoice::Import(dir) => Arc::new(ImportProvider::open(dir)?),
        })
    }

    fn embedder_with(
        &self,
        provider: Arc<dyn EmbeddingProvider>,
        cache_root: Option<&Path>,
    ) -> Result<Embedder> {
        let projection = Arc::new(ProjectionMatrix::for_width(self.seed, provider.dim())?);
        let cache = match cache_root {
            Some(root) => EmbeddingCache::open(root, provider.as_ref(), &projection)?,
            None => EmbeddingCache::in_memory(provider.as_ref(), &projection),
        };
        Embedder::new(provider, projection, Some(Arc::new(cache)))
    }

    /// Embedder backed by the configured cache directory, or by an in-memory
    /// cache when none is set.
    pub fn embedder(&self) -> Result<Embedder> {
        self.embedder_with(self.provider()?, self.cache_dir.as_deref())
    }
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, contents).map_err(|e| Error::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    s
}

pub fn stats(corpus: &Path) -> Result<CorpusStats> {
    Ok(corpus_stats(&load_corpus(corpus)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeSummary {
    pub cache_dir: PathBuf,
    pub newly_stored: usize,
    pub provider_calls: u64,
}

pub fn precompute(config: &RunConfig) -> Result<PrecomputeSummary> {
    config.validate()?;
    let root = config.cache_dir.as_deref().ok_or_else(|| {
        Error::InvalidConfig(format!("precompute needs --cache-dir or {CACHE_DIR_ENV}"))
    })?;
    let corpus = load_corpus(&config.corpus)?;
    let provider = config.provider()?;
    let projection = ProjectionMatrix::for_width(config.seed, provider.dim())?;
    let cache = EmbeddingCache::open(root, provider.as_ref(), &projection)?;
    let newly_stored =
        precompute_candidates(&corpus.candidates, provider.as_ref(), &projection, &cache)?;
    Ok(PrecomputeSummary {
        cache_dir: cache.dir().expect("opened on disk").to_path_buf(),
        newly_stored,
        provider_calls: cache.provider_calls(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub heads: HeadsFile,
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub turn_count: usize,
}

pub fn train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    let embedder = config.embedder()?;
    let features = extract_features(&corpus, &embedder, config.max_tokens)?;
    let trained = fit_heads(&corpus, &features, &config.train_options(), &NullLmLoss)?;
    Ok(TrainSummary {
        heads: HeadsFile::from_heads(&trained.pg, &trained.kg),
        loss_history: trained.history,
        final_loss: trained.final_loss,
        turn_count: corpus.turns.len(),
    })
}

pub fn read_heads(path: &Path) -> Result<HeadsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let heads: HeadsFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let (pg, kg) = heads.heads();
    if !pg.is_finite() || !kg.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "{}: non-finite head parameters",
            path.display()
        )));
    }
    Ok(heads)
}

/// One line of `grounded.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedRecord {
    pub dialog_id: String,
    pub turn_index: usize,
    pub selected_personas: Vec<usize>,
    pub selected_knowledge: usize,
    pub persona_probs: Vec<f64>,
    pub knowledge_probs: Vec<f64>,
    pub lm_input: Vec<String>,
    /// Generated response, filled in by an external generator when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sims: Option<TurnSims>,
}

impl GroundedRecord {
    pub fn output(&self) -> GroundingOutput {
        GroundingOutput {
            persona_probs: self.persona_probs.clone(),
            selected_personas: self.selected_personas.clone(),
            knowledge_probs: self.knowledge_probs.clone(),
            selected_knowledge: self.selected_knowledge,
        }
    }
}

fn grounded_record(
    corpus: &Corpus,
    turn_idx: usize,
    output: GroundingOutput,
    sims: Option<TurnSims>,
) -> GroundedRecord {
    let turn = &corpus.turns[turn_idx];
    let set = corpus.candidates_for(turn);
    let personas: Vec<&str> = output
        .selected_personas
        .iter()
        .map(|&i| set.persona[i].as_str())
        .collect();
    let lm_input = build_lm_input(
        &set.knowledge[output.selected_knowledge],
        &personas,
        &turn.utterance_history,
    );
    GroundedRecord {
        dialog_id: turn.dialog_id.clone(),
        turn_index: turn.turn_index,
        selected_personas: output.selected_personas,
        selected_knowledge: output.selected_knowledge,
        persona_probs: output.persona_probs,
        knowledge_probs: output.knowledge_probs,
        lm_input,
        response: None,
        sims,
    }
}

pub fn ground(
    config: &RunConfig,
    heads: &HeadsFile,
    dump_sims: bool,
) -> Result<Vec<GroundedRecord>> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    let embedder = config.embedder()?;
    let (pg, kg) = heads.heads();
    (0..corpus.turns.len())
        .map(|i| {
            let turn = &corpus.turns[i];
            let sims = turn_sims(
                &embedder,
                corpus.candidates_for(turn),
                turn,
                config.max_tokens,
            )?;
            let output = ground_turn(&pg, &kg, &TurnFeatures::from(&sims))?;
            Ok(grounded_record(
                &corpus,
                i,
                output,
                dump_sims.then_some(sims),
            ))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn read_grounded(path: &Path) -> Result<Vec<GroundedRecord>> {
    read_jsonl(path)
}

/// One line of an NLL file: per-token negative log-likelihoods (nats) of the
/// gold answer, produced by an external language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllRecord {
    pub dialog_id: String,
    pub turn_index: usize,
    pub token_nlls: Vec<f64>,
}

/// Aligns grounded records with corpus turns by `(dialog_id, turn_index)`.
/// The hypothesis for text metrics is the record's `response` when present,
/// otherwise the text of the selected knowledge entry.
pub fn eval(
    corpus: &Corpus,
    grounded: &[GroundedRecord],
    nlls: Option<&[NllRecord]>,
) -> Result<EvalReport> {
    let mut by_key: HashMap<(&str, usize), &GroundedRecord> = HashMap::new();
    for r in grounded {
        if by_key
            .insert((r.dialog_id.as_str(), r.turn_index), r)
            .is_some()
        {
            return Err(Error::InvalidConfig(format!(
                "duplicate grounded record for dialog {} turn {}",
                r.dialog_id, r.turn_index
            )));
        }
    }
    if by_key.len() != corpus.turns.len() {
        return Err(Error::Shape(format!(
            "{} grounded records for {} corpus turns",
            by_key.len(),
            corpus.turns.len()
        )));
    }
    let mut hypotheses = Vec::with_capacity(corpus.turns.len());
    let mut outputs = Vec::with_capacity(corpus.turns.len());
    for turn in &corpus.turns {
        let record = by_key
            .get(&(turn.dialog_id.as_str(), turn.turn_index))
            .ok_or_else(|| {
                Error::Shape(format!(
                    "no grounded record for dialog {} turn {}",
                    turn.dialog_id, turn.turn_index
                ))
            })?;
        let set = corpus.candidates_for(turn);
        if record.selected_knowledge >= set.knowledge.len()
            || record
                .selected_personas
                .iter()
                .any(|&i| i >= set.persona.len())
        {
            return Err(Error::Index {
                index: record.selected_knowledge,
                len: set.knowledge.len(),
            }
            .context(format!(
                "dialog {} turn {}",
                turn.dialog_id, turn.turn_index
            )));
        }
        hypotheses.push(
            record
                .response
                .clone()
                .unwrap_or_else(|| set.knowledge[record.selected_knowledge].clone()),
        );
        outputs.push(record.output());
    }
    let pooled: Option<Vec<f64>> = nlls.map(|records| {
        records
            .iter()
            .flat_map(|r| r.token_nlls.iter().copied())
            .collect()
    });
    evaluate(&hypotheses, &corpus.turns, &outputs, pooled.as_deref())
}

pub fn eval_files(grounded: &Path, corpus: &Path, nll_file: Option<&Path>) -> Result<EvalReport> {
    let corpus = load_corpus(corpus)?;
    let grounded = read_grounded(grounded)?;
    let nlls = nll_file.map(read_jsonl::<NllRecord>).transpose()?;
    eval(&corpus, &grounded, nlls.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub weights: LossWeights,
    pub final_loss: f64,
    pub report: EvalReport,
}

/// Parses `"a,b,g;a,b,g;..."`.
pub fn parse_grid(spec: &str) -> Result<Vec<LossWeights>> {
    spec.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|point| {
            let values: Vec<f64> = point
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidConfig(format!("grid point {point:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            match values[..] {
                [a, b, g] => Ok(LossWeights::new(a, b, g)),
                _ => Err(Error::InvalidConfig(format!(
                    "grid point {point:?} needs exactly three values"
                ))),
            }
        })
        .collect()
}

/// Trains and evaluates once per grid point. Features are extracted once and
/// shared, which is valid because the embeddings do not depend on the loss
/// weights. Rows are sorted by KG accuracy, best first; ties keep grid order.
pub fn sweep(
    config: &RunConfig,
    grid: &[LossWeights],
    eval_corpus: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    for point in grid {
        point.validate_for_sweep()?;
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    config.validate()?;
    let train_corpus = load_corpus(&config.corpus)?;
    let eval_corpus = eval_corpus.map(load_corpus).transpose()?;
    let embedder = config.embedder()?;
    let train_features = extract_features(&train_corpus, &embedder, config.max_tokens)?;
    let eval_features = match &eval_corpus {
        Some(c) => Some(extract_features(c, &embedder, config.max_tokens)?),
        None => None,
    };
    let (eval_corpus, eval_features) = match (&eval_corpus, &eval_features) {
        (Some(c), Some(f)) => (c, f),
        _ => (&train_corpus, &train_features),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &weights in grid {
        let options = TrainOptions {
            weights,
            ..config.train_options()
        };
        let trained = fit_heads(&train_corpus, &train_features, &options, &NullLmLoss)?;
        let grounded = eval_features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(grounded_record(
                    eval_corpus,
                    i,
                    ground_turn(&trained.pg, &trained.kg, f)?,
                    None,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow {
            weights,
            final_loss: trained.final_loss,
            report: eval(eval_corpus, &grounded, None)?,
        });
    }
    rows.sort_by(|a, b| b.report.kg_accuracy.total_cmp(&a.report.kg_accuracy));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchVariant {
    NoCache,
    Cold,
    Warm,
}

impl BenchVariant {
    fn name(self) -> &'static str {
        match self {
            BenchVariant::NoCache => "no-cache",
            BenchVariant::Cold => "cold",
            BenchVariant::Warm => "warm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub variant: BenchVariant,
    /// Candidate plus utterance provider invocations.
    pub provider_calls: u64,
    pub candidate_provider_calls: u64,
    pub utterance_provider_calls: u64,
    pub wall_time_ms: u64,
    pub wall_time_us: u64,
    pub turns_processed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub reports: Vec<BenchReport>,
    /// No-cache wall time divided by warm wall time, as measured on this run.
    pub warm_speedup_vs_no_cache: f64,
    pub outputs_identical: bool,
}

/// Heads used by `bench` when none are supplied: both score by utterance similarity.
pub fn default_bench_heads() -> HeadsFile {
    HeadsFile::from_heads(
        &GroundingHead::new(Task::PersonaGrounding, 0.0, 1.0, 0.0),
        &GroundingHead::new(Task::KnowledgeGrounding, 0.0, 1.0, 0.0),
    )
}

fn bench_run(
    variant: BenchVariant,
    corpus: &Corpus,
    embedder: &Embedder,
    heads: &HeadsFile,
    max_tokens: usize,
) -> Result<(BenchReport, Vec<GroundingOutput>)> {
    let (pg, kg) = heads.heads();
    let start = Instant::now();
    let outputs = corpus
        .turns
        .iter()
        .map(|turn| {
            let sims = turn_sims(embedder, corpus.candidates_for(turn), turn, max_tokens)?;
            ground_turn(&pg, &kg, &TurnFeatures::from(&sims))
        })
        .collect::<Result<Vec<_>>>()?;
    let elapsed = start.elapsed();
    let candidate = embedder.candidate_provider_calls();
    let utterance = embedder.utterance_provider_calls();
    Ok((
        BenchReport {
            variant,
            provider_calls: candidate + utterance,
            candidate_provider_calls: candidate,
            utterance_provider_calls: utterance,
            wall_time_ms: elapsed.as_millis() as u64,
            wall_time_us: elapsed.as_micros() as u64,
            turns_processed: outputs.len(),
        },
        outputs,
    ))
}

/// Grounds every turn three ways: recomputing every embedding, against an
/// empty on-disk cache, and against the cache the cold run left behind
/// (reopened, so entries come from disk). Fails if the outputs differ in any
/// bit or if the warm run touches the provider for a candidate entry.
pub fn bench(config: &RunConfig, heads: &HeadsFile) -> Result<BenchSummary> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    bench_corpus(config, &corpus, heads)
}

pub fn bench_corpus(
    config: &RunConfig,
    corpus: &Corpus,
    heads: &HeadsFile,
) -> Result<BenchSummary> {
    let provider = config.provider()?;
    let scratch = match &config.cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            tempfile::Builder::new().prefix("bench-").tempdir_in(dir)
        }
        None => tempfile::Builder::new().prefix("ncli-bench-").tempdir(),
    }
    .map_err(|e| Error::io(config.cache_dir.clone().unwrap_or_default(), e))?;

    let projection = Arc::new(ProjectionMatrix::for_width(config.seed, provider.dim())?);
    let no_cache = Embedder::new(Arc::clone(&provider), Arc::clone(&projection), None)?;
    let (no_cache_report, reference) = bench_run(
        BenchVariant::NoCache,
        corpus,
        &no_cache,
        heads,
        config.max_tokens,
    )?;

    let cold = config.embedder_with(Arc::clone(&provider), Some(scratch.path()))?;
    let (cold_report, cold_out) =
        bench_run(BenchVariant::Cold, corpus, &cold, heads, config.max_tokens)?;
    drop(cold);

    let warm = config.embedder_with(Arc::clone(&provider), Some(scratch.path()))?;
    let (warm_report, warm_out) =
        bench_run(BenchVariant::Warm, corpus, &warm, heads, config.max_tokens)?;

    for (variant, outputs) in [
        (BenchVariant::Cold, &cold_out),
        (BenchVariant::Warm, &warm_out),
    ] {
        if let Some(turn) = reference
            .iter()
            .zip(outputs.iter())
            .position(|(a, b)| !a.bit_identical(b))
        {
            return Err(Error::OutputMismatch {
                left: BenchVariant::NoCache.name(),
                right: variant.name(),
                turn,
            });
        }
    }
    if warm_report.candidate_provider_calls != 0 {
        return Err(Error::InvalidConfig(format!(
            "warm run made {} candidate provider calls",
            warm_report.candidate_provider_calls
        )));
    }
    let speedup = no_cache_report.wall_time_us as f64 / warm_report.wall_time_us.max(1) as f64;
    Ok(BenchSummary {
        reports: vec![no_cache_report, cold_report, warm_report],
        warm_speedup_vs_no_cache: speedup,
        outputs_identical: true,
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    write_output(path, &to_json(value))
}

pub fn write_jsonl<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    write_output(path, &to_jsonl(records))
}
