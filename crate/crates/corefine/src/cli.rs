//! Command entry points behind the thin binary: corpus generation,
//! training, prediction, scoring and format conversion.
//!
//! Every run resolves its configuration (config file overridden by flags,
//! handled in the binary) and serializes the result next to its outputs, so
//! any run can be reproduced from the artifacts alone.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{
    chunk_splitter, from_jsonl, gen_synthetic, identity_splitter, parse_conll, remap_spans,
    to_jsonl, unmap_clusters, write_conll, ClusterSet, Document, MentionSpan, SyntheticConfig,
};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::{
    assign_document_heads, clusters_to_output, decode_clusters, output_to_input, CorefGraph,
    GraphKind,
};
use crate::longdoc::{decode_windows, plan_windows, refine_reduced, truncate};
use crate::metrics::{paired_bootstrap, score_corpus, BootstrapReport, ScoreReport};
use crate::model::Model;
use crate::optim::{Optimizer, OptimizerKind};
use crate::refine::{
    refine, train, RefinementConfig, StepLog, TrainOptions, TrainSample, TrainState,
};
use crate::vocab::Vocab;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Single-pass encoding; documents longer than max_positions are an error.
    Full,
    Truncated,
    Overlap,
    Reduced,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(Strategy::Full),
            "truncated" => Ok(Strategy::Truncated),
            "overlap" => Ok(Strategy::Overlap),
            "reduced" => Ok(Strategy::Reduced),
            other => Err(format!(
                "unknown strategy `{other}` (expected full|truncated|overlap|reduced)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Full => "full",
            Strategy::Truncated => "truncated",
            Strategy::Overlap => "overlap",
            Strategy::Reduced => "reduced",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    None,
    /// Words longer than 6 characters split into 6-character chunks.
    Chunk6,
}

impl std::str::FromStr for SplitKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(SplitKind::None),
            "chunk6" => Ok(SplitKind::Chunk6),
            other => Err(format!("unknown splitter `{other}` (expected none|chunk6)")),
        }
    }
}

fn default_window() -> usize {
    512
}
fn default_iters() -> usize {
    4
}
fn default_tau() -> Scalar {
    0.5
}
fn default_span_len() -> usize {
    10
}
fn default_recall_margin() -> Scalar {
    0.15
}
fn default_jobs() -> usize {
    1
}
fn default_split() -> SplitKind {
    SplitKind::Chunk6
}
fn default_strategy() -> Strategy {
    Strategy::Full
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    4
}
fn default_d_model() -> usize {
    32
}
fn default_d_ff() -> usize {
    64
}
fn default_max_positions() -> usize {
    1024
}
fn default_steps() -> usize {
    1000
}
fn default_lr() -> Scalar {
    2e-3
}
fn default_optimizer() -> String {
    "momentum".to_string()
}
fn default_momentum() -> Scalar {
    0.9
}
fn default_teacher_forcing() -> Scalar {
    0.5
}
fn default_range_low_high(lo: usize, hi: usize) -> (usize, usize) {
    (lo, hi)
}
fn default_doc_len() -> (usize, usize) {
    default_range_low_high(30, 60)
}
fn default_n_entities() -> (usize, usize) {
    default_range_low_high(2, 4)
}
fn default_mentions_per_entity() -> (usize, usize) {
    default_range_low_high(2, 4)
}
fn default_mention_len() -> (usize, usize) {
    default_range_low_high(1, 3)
}
fn default_vocab_size() -> usize {
    60
}
fn default_n_docs() -> usize {
    20
}

/// The fully resolved configuration of a run. Serialized next to every
/// command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub key: Option<PathBuf>,
    #[serde(default)]
    pub response: Option<PathBuf>,
    #[serde(default)]
    pub response_b: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub resume: Option<PathBuf>,

    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_tau")]
    pub tau: Scalar,
    #[serde(default = "default_span_len")]
    pub max_span_len: usize,
    #[serde(default)]
    pub top_lambda: Option<Scalar>,
    #[serde(default = "default_recall_margin")]
    pub recall_margin: Scalar,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub bootstrap: Option<usize>,
    #[serde(default = "default_split")]
    pub split: SplitKind,

    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_d_ff")]
    pub d_ff: usize,
    #[serde(default = "default_max_positions")]
    pub max_positions: usize,

    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Steps for the mention detector of the reduced strategy; defaults to
    /// `steps`.
    #[serde(default)]
    pub detector_steps: Option<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: Scalar,
    /// `momentum` or `adam`.
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_momentum")]
    pub momentum: Scalar,
    #[serde(default = "default_teacher_forcing")]
    pub teacher_forcing: Scalar,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,

    #[serde(default = "default_n_docs")]
    pub n_docs: usize,
    #[serde(default = "default_doc_len")]
    pub doc_len: (usize, usize),
    #[serde(default = "default_n_entities")]
    pub n_entities: (usize, usize),
    #[serde(default = "default_mentions_per_entity")]
    pub mentions_per_entity: (usize, usize),
    #[serde(default = "default_mention_len")]
    pub mention_len: (usize, usize),
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default)]
    pub nesting_prob: f64,
    #[serde(default)]
    pub scattered: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read config {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn refinement(&self) -> RefinementConfig {
        RefinementConfig {
            max_iterations: self.iters,
            mention_threshold: self.tau,
            max_span_len: self.max_span_len,
            top_lambda: self.top_lambda,
        }
    }

    pub fn encoder_config(&self, vocab: usize) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab,
            max_positions: self.max_positions,
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_docs: self.n_docs,
            doc_len: self.doc_len,
            n_entities: self.n_entities,
            mentions_per_entity: self.mentions_per_entity,
            mention_len: self.mention_len,
            vocab_size: self.vocab_size,
            nesting_prob: self.nesting_prob,
            scattered: self.scattered,
        }
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        match self.optimizer.as_str() {
            "momentum" => Ok(OptimizerKind::Momentum {
                momentum: self.momentum,
            }),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(Error::data(format!(
                "unknown optimizer `{other}` (expected momentum|adam)"
            ))),
        }
    }

    fn splitter(&self) -> Box<dyn Fn(&str) -> Vec<String>> {
        match self.split {
            SplitKind::None => Box::new(identity_splitter()),
            SplitKind::Chunk6 => Box::new(chunk_splitter(6)),
        }
    }

    fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("run_config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Maps an error onto the documented exit codes: 2 for data problems,
/// 3 for numerical failures. Usage errors exit 1 in the binary.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => from_jsonl(&text),
        Some("conll") | Some("txt") | Some("v4_gold_conll") => parse_conll(&text),
        _ => {
            // sniff: jsonl lines start with '{'
            if text.trim_start().starts_with('{') {
                from_jsonl(&text)
            } else {
                parse_conll(&text)
            }
        }
    }
}

fn output_dir(config: &RunConfig, fallback: &str) -> PathBuf {
    config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(fallback))
}

/// `gen`: synthesize a corpus and write it in both JSON-lines and CoNLL form.
pub fn cmd_gen(config: &RunConfig) -> Result<()> {
    let docs = gen_synthetic(&config.synthetic(), config.seed)?;
    let dir = output_dir(config, "gen-out");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("corpus.jsonl"), to_jsonl(&docs))?;
    std::fs::write(dir.join("corpus.conll"), write_conll(&docs))?;
    config.write_resolved(&dir)?;
    eprintln!(
        "generated {} documents ({} mentions) into {}",
        docs.len(),
        docs.iter()
            .map(|d| d.gold.as_ref().map_or(0, |g| g.mention_count()))
            .sum::<usize>(),
        dir.display()
    );
    Ok(())
}

/// Restricts gold annotation to spans fully inside [start, end), re-indexed.
fn slice_document(doc: &Document, start: usize, end: usize) -> Document {
    let tokens = doc.tokens[start..end].to_vec();
    let mut bounds: Vec<usize> = doc
        .sentence_bounds
        .iter()
        .filter_map(|&b| {
            if b > start && b < end {
                Some(b - start)
            } else {
                None
            }
        })
        .collect();
    bounds.push(end - start);
    let gold = doc.gold.as_ref().map(|g| {
        let clusters: Vec<Vec<MentionSpan>> = g
            .clusters
            .iter()
            .map(|c| {
                c.iter()
                    .filter(|s| s.start >= start && s.end < end)
                    .map(|s| MentionSpan::new(s.start - start, s.end - start))
                    .collect::<Vec<_>>()
            })
            .filter(|c: &Vec<MentionSpan>| !c.is_empty())
            .collect();
        ClusterSet::new(clusters)
    });
    Document {
        doc_id: format!("{}@{start}..{end}", doc.doc_id),
        tokens,
        sentence_bounds: bounds,
        gold,
        passthrough: None,
    }
}

struct ReducedTrainingData {
    detector_samples: Vec<TrainSample>,
    detector: Model,
}

fn build_detector(config: &RunConfig, docs: &[Document], vocab: &Vocab) -> Result<ReducedTrainingData> {
    // the detector trains on overlapping window segments, each an
    // independent sample with within-segment gold
    let mut segments = Vec::new();
    for doc in docs {
        let plan = plan_windows(doc.len(), config.window.min(config.max_positions))?;
        for &(s, e) in &plan.segments {
            segments.push(slice_document(doc, s, e));
        }
    }
    let detector = Model::new(config.encoder_config(vocab.len()), vocab.clone(), config.seed ^ 0x5eed)?;
    let detector_samples = segments
        .iter()
        .map(|d| TrainSample::from_document(d, &detector))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedTrainingData {
        detector_samples,
        detector,
    })
}

fn write_log(path: &Path, logs: &[StepLog]) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for log in logs {
        writeln!(out, "{}", serde_json::to_string(log)?)?;
    }
    Ok(())
}

fn run_training(
    samples: &[TrainSample],
    model: &mut Model,
    config: &RunConfig,
    state: &mut TrainState,
    steps: usize,
    dir: &Path,
    name: &str,
) -> Result<Vec<StepLog>> {
    let opt = TrainOptions {
        steps,
        seed: config.seed,
        teacher_forcing: config.teacher_forcing,
        coref_loss_weight: 1.0,
    };
    let cfg = config.refinement();
    let mut remaining = steps;
    let chunk = config.checkpoint_every.unwrap_or(steps.max(1));
    let mut logs = Vec::new();
    while remaining > 0 {
        let now = remaining.min(chunk.max(1));
        let opt_chunk = TrainOptions {
            steps: now,
            ..opt
        };
        logs.extend(train(samples, &mut model.params, &cfg, &opt_chunk, state)?);
        remaining -= now;
        if config.checkpoint_every.is_some() && remaining > 0 {
            let ckpt = Checkpoint::new(&config.strategy.to_string(), model).with_train_state(state);
            ckpt.save(&dir.join(format!("{name}-step{}.json", state.step)))?;
        }
    }
    Ok(logs)
}

/// `train`: build models for the selected strategy, run the training loop
/// and write a loadable checkpoint plus a JSON-lines log.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::data("train requires --input"))?;
    let raw_docs = read_documents(input)?;
    if raw_docs.is_empty() {
        return Err(Error::data("training corpus is empty"));
    }
    let split = config.splitter();
    let docs: Vec<Document> = raw_docs
        .iter()
        .map(|d| remap_spans(d, split.as_ref()).map(|(doc, _)| doc))
        .collect::<Result<Vec<_>>>()?;

    let dir = output_dir(config, "train-out");
    std::fs::create_dir_all(&dir)?;
    config.write_resolved(&dir)?;

    // resume or initialize
    let resumed = match &config.resume {
        Some(path) => Some(Checkpoint::load(path)?),
        None => None,
    };
    let vocab = match &resumed {
        Some(ckpt) => Vocab::from_tokens(ckpt.vocab.clone()),
        None => Vocab::build(&docs),
    };

    let cfg = config.refinement();
    cfg.validate()?;
    let strategy = config.strategy;
    let mut logs: Vec<StepLog> = Vec::new();

    let (coref_model, detector_model, final_state) = match strategy {
        Strategy::Reduced => {
            let mut data = build_detector(config, &docs, &vocab)?;
            let mut coref = Model::new(config.encoder_config(vocab.len()), vocab.clone(), config.seed)?;
            // in a resumed run the detector is already trained; only the
            // second stage continues
            let mut skip_detector = false;
            let mut coref_state;
            if let Some(ckpt) = &resumed {
                data.detector = ckpt
                    .detector_model()?
                    .ok_or_else(|| Error::data("resume checkpoint lacks a detector model"))?;
                coref = ckpt.coref_model()?;
                coref_state = ckpt
                    .train_state()
                    .ok_or_else(|| Error::data("resume checkpoint lacks training state"))?;
                skip_detector = true;
            } else {
                coref_state = TrainState::new(
                    Optimizer::new(config.optimizer_kind()?, config.learning_rate, &coref.params),
                    config.seed,
                );
            }
            // stage 1: mention detector (non-iterative)
            let detector_steps = config.detector_steps.unwrap_or(config.steps);
            if !skip_detector && detector_steps > 0 {
                let mut det_state = TrainState::new(
                    Optimizer::new(
                        config.optimizer_kind()?,
                        config.learning_rate,
                        &data.detector.params,
                    ),
                    config.seed ^ 0xdead,
                );
                let det_cfg = RunConfig {
                    iters: 1,
                    ..config.clone()
                };
                let mut detector = data.detector.clone();
                let det_logs = run_training(
                    &data.detector_samples,
                    &mut detector,
                    &det_cfg,
                    &mut det_state,
                    detector_steps,
                    &dir,
                    "detector",
                )?;
                logs.extend(det_logs);
                data.detector = detector;
            }
            // stage 2: coreference over reduced documents with fixed candidates
            let cfg = config.refinement();
            let samples: Vec<TrainSample> = docs
                .iter()
                .map(|d| {
                    crate::longdoc::reduced_train_sample(
                        d,
                        &data.detector,
                        &coref,
                        &cfg,
                        config.window.min(config.max_positions),
                        config.recall_margin,
                    )
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if samples.is_empty() {
                return Err(Error::data(
                    "the detector found no candidates in any training document",
                ));
            }
            if config.steps > 0 {
                let coref_logs = run_training(
                    &samples,
                    &mut coref,
                    config,
                    &mut coref_state,
                    config.steps,
                    &dir,
                    "coref",
                )?;
                logs.extend(coref_logs);
            }
            (coref, Some(data.detector), coref_state)
        }
        _ => {
            let training_docs: Vec<Document> = match strategy {
                Strategy::Full => {
                    for d in &docs {
                        if d.len() > config.max_positions {
                            return Err(Error::data(format!(
                                "document {} has {} tokens, over max_positions {}; pick a \
                                 --strategy (truncated|overlap|reduced)",
                                d.doc_id,
                                d.len(),
                                config.max_positions
                            )));
                        }
                    }
                    docs.clone()
                }
                Strategy::Truncated => docs
                    .iter()
                    .map(|d| truncate(d, config.window.min(config.max_positions)).0)
                    .collect(),
                Strategy::Overlap => {
                    let mut segments = Vec::new();
                    for doc in &docs {
                        let plan =
                            plan_windows(doc.len(), config.window.min(config.max_positions))?;
                        for &(s, e) in &plan.segments {
                            segments.push(slice_document(doc, s, e));
                        }
                    }
                    segments
                }
                Strategy::Reduced => unreachable!(),
            };
            let mut model = match &resumed {
                Some(ckpt) => ckpt.coref_model()?,
                None => Model::new(config.encoder_config(vocab.len()), vocab.clone(), config.seed)?,
            };
            let mut state = match resumed.as_ref().and_then(|c| c.train_state()) {
                Some(state) => state,
                None => TrainState::new(
                    Optimizer::new(config.optimizer_kind()?, config.learning_rate, &model.params),
                    config.seed,
                ),
            };
            let samples: Vec<TrainSample> = training_docs
                .iter()
                .map(|d| TrainSample::from_document(d, &model))
                .collect::<Result<Vec<_>>>()?;
            if config.steps > 0 {
                logs.extend(run_training(
                    &samples,
                    &mut model,
                    config,
                    &mut state,
                    config.steps,
                    &dir,
                    "model",
                )?);
            }
            (model, None, state)
        }
    };

    let mut ckpt =
        Checkpoint::new(&strategy.to_string(), &coref_model).with_train_state(&final_state);
    if let Some(det) = &detector_model {
        ckpt = ckpt.with_detector(det);
    }
    ckpt.save(&dir.join("checkpoint.json"))?;
    write_log(&dir.join("train_log.jsonl"), &logs)?;
    eprintln!(
        "trained {} steps ({} log lines) into {}",
        config.steps,
        logs.len(),
        dir.display()
    );
    Ok(())
}

struct PredictOutcome {
    doc: Document,
    dropped_spans: usize,
}

fn predict_document(
    doc: &Document,
    coref: &Model,
    detector: Option<&Model>,
    config: &RunConfig,
) -> Result<PredictOutcome> {
    let split = config.splitter();
    let (sub_doc, map) = remap_spans(doc, split.as_ref())?;
    let cfg = config.refinement();
    let window = config.window.min(config.max_positions);
    let mut dropped = 0usize;

    let (graph, graph_len): (CorefGraph, usize) = match config.strategy {
        Strategy::Full => {
            if sub_doc.len() > config.max_positions {
                return Err(Error::data(format!(
                    "document {} has {} sub-tokens, over max_positions {}; pick a \
                     --strategy (truncated|overlap|reduced)",
                    doc.doc_id,
                    sub_doc.len(),
                    config.max_positions
                )));
            }
            let trace = refine(&sub_doc, coref, &cfg)?;
            (trace.final_graph().clone(), sub_doc.len())
        }
        Strategy::Truncated => {
            let (prefix, d) = truncate(&sub_doc, window);
            dropped = d;
            let trace = refine(&prefix, coref, &cfg)?;
            (trace.final_graph().clone(), prefix.len())
        }
        Strategy::Overlap => {
            let (g, _) = decode_windows(&sub_doc, coref, &cfg, window)?;
            (g, sub_doc.len())
        }
        Strategy::Reduced => {
            let det = detector.ok_or_else(|| {
                Error::data("reduced strategy requires a checkpoint with a detector model")
            })?;
            let out = refine_reduced(&sub_doc, det, coref, &cfg, window, config.recall_margin)?;
            (out.graph, sub_doc.len())
        }
    };
    debug_assert!(graph.len() == graph_len);

    let (clusters, _) = decode_clusters(&graph);
    let words = unmap_clusters(&clusters, &map);
    let mut out = doc.clone();
    out.gold = Some(words);
    Ok(PredictOutcome {
        doc: out,
        dropped_spans: dropped,
    })
}

/// `predict`: run the selected strategy over input documents and write the
/// system output in CoNLL format, mapped back to words. When the strategy
/// was not given explicitly, the checkpoint's own strategy is used.
pub fn cmd_predict(config: &RunConfig, strategy_explicit: bool) -> Result<()> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::data("predict requires --input"))?;
    let ckpt_path = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::data("predict requires --checkpoint"))?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let coref = ckpt.coref_model()?;
    let detector = ckpt.detector_model()?;

    // the checkpoint's strategy is the default; an explicit flag overrides it
    let mut config = config.clone();
    if !strategy_explicit {
        config.strategy = ckpt.strategy.parse().unwrap_or(config.strategy);
    }
    let docs = read_documents(input)?;
    let outcomes = run_jobs(&docs, config.jobs, |doc| {
        predict_document(doc, &coref, detector.as_ref(), &config)
    })?;

    let total_dropped: usize = outcomes.iter().map(|o| o.dropped_spans).sum();
    let predicted: Vec<Document> = outcomes.into_iter().map(|o| o.doc).collect();
    let dir = output_dir(&config, "predict-out");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("system.conll"), write_conll(&predicted))?;
    config.write_resolved(&dir)?;
    if total_dropped > 0 {
        eprintln!("warning: {total_dropped} gold spans dropped by truncation");
    }
    eprintln!(
        "predicted {} documents into {}",
        predicted.len(),
        dir.display()
    );
    Ok(())
}

/// Deterministic document-level parallelism: results keep input order.
fn run_jobs<T: Send, F>(docs: &[Document], jobs: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(&Document) -> Result<T> + Sync,
{
    let jobs = jobs.max(1);
    if jobs == 1 || docs.len() <= 1 {
        return docs.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = Vec::new();
    slots.resize_with(docs.len(), || None);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(docs.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= docs.len() {
                    break;
                }
                let result = f(&docs[idx]);
                slots_mutex.lock().unwrap()[idx] = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}

#[derive(Serialize)]
struct ScoreOutput {
    report: ScoreReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapReport>,
    documents: usize,
}

/// `score`: evaluate a response file against a key file, print the score
/// table and optionally a paired-bootstrap comparison against a second
/// system.
pub fn cmd_score(config: &RunConfig) -> Result<()> {
    let key_path = config
        .key
        .as_ref()
        .or(config.input.as_ref())
        .ok_or_else(|| Error::data("score requires --key"))?;
    let response_path = config
        .response
        .as_ref()
        .ok_or_else(|| Error::data("score requires --response"))?;
    let key_docs = read_documents(key_path)?;
    let response_docs = read_documents(response_path)?;
    if key_docs.len() != response_docs.len() {
        return Err(Error::data(format!(
            "key has {} documents, response has {}",
            key_docs.len(),
            response_docs.len()
        )));
    }
    let empty = ClusterSet::default();
    let clusters = |d: &Document| d.gold.clone().unwrap_or_else(|| empty.clone());
    let key_clusters: Vec<ClusterSet> = key_docs.iter().map(clusters).collect();
    let response_clusters: Vec<ClusterSet> = response_docs.iter().map(clusters).collect();
    let pairs: Vec<(&ClusterSet, &ClusterSet)> = key_clusters
        .iter()
        .zip(response_clusters.iter())
        .collect();
    let report = score_corpus(&pairs);
    print!("{}", report.table());

    let bootstrap = match (&config.response_b, config.bootstrap) {
        (Some(b_path), Some(iterations)) => {
            let b_docs = read_documents(b_path)?;
            if b_docs.len() != key_docs.len() {
                return Err(Error::data("second response does not match the key"));
            }
            let b_clusters: Vec<ClusterSet> = b_docs.iter().map(clusters).collect();
            let report = paired_bootstrap(
                &key_clusters,
                &response_clusters,
                &b_clusters,
                iterations,
                config.seed,
            )?;
            println!(
                "bootstrap ({} iterations): p(A<=B) muc={:.4} b3={:.4} ceaf={:.4} avg={:.4}",
                report.iterations, report.p_muc, report.p_b_cubed, report.p_ceaf_phi4, report.p_avg_f1
            );
            Some(report)
        }
        (Some(_), None) => {
            return Err(Error::data("--response-b requires --bootstrap <iterations>"))
        }
        _ => None,
    };

    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir)?;
        let out = ScoreOutput {
            report,
            bootstrap,
            documents: key_docs.len(),
        };
        std::fs::write(dir.join("scores.json"), serde_json::to_string_pretty(&out)?)?;
        config.write_resolved(dir)?;
    }
    Ok(())
}

/// `convert`: clusters to graph dumps and back.
///
/// Graph dump format, one block per document:
/// ```text
/// #graph <doc_id> kind=<input|output> n=<N>
/// #tokens <token> <token> ...
/// <i> <j> <code>
/// #end graph
/// ```
/// Matrix dumps replace the triples with dense rows and cannot be read back.
pub fn cmd_convert(config: &RunConfig) -> Result<()> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::data("convert requires --input"))?;
    let output = config
        .output
        .as_ref()
        .ok_or_else(|| Error::data("convert requires --output"))?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", input.display())))?;

    let in_kind = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    let docs: Vec<Document> = if in_kind == "graph" {
        parse_graph_dump(&text)?
    } else {
        read_documents(input)?
    };

    let out_kind = output.extension().and_then(|e| e.to_str()).unwrap_or("");
    let rendered = match out_kind {
        "conll" => write_conll(&docs),
        "jsonl" => to_jsonl(&docs),
        "graph" => render_graph_dump(&docs, false)?,
        "matrix" => render_graph_dump(&docs, true)?,
        other => {
            return Err(Error::data(format!(
                "unknown output format `.{other}` (expected conll|jsonl|graph|matrix)"
            )))
        }
    };
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(output, rendered)?;
    Ok(())
}

fn render_graph_dump(docs: &[Document], dense: bool) -> Result<String> {
    let mut out = String::new();
    for doc in docs {
        let mut headed = doc.clone();
        assign_document_heads(&mut headed)?;
        let output_graph = clusters_to_output(&headed)?;
        out.push_str(&format!(
            "#graph {} kind=output n={}\n#tokens {}\n",
            doc.doc_id,
            doc.len(),
            doc.tokens.join(" ")
        ));
        if dense {
            out.push_str(&output_graph.to_dense_text());
            out.push_str("#end matrix\n");
            // the dense input encoding is informative next to the output dump
            let spans = headed.gold.as_ref().unwrap().all_spans();
            let input = output_to_input(&output_graph, &spans)?;
            out.push_str(&format!(
                "#graph {} kind=input n={}\n",
                doc.doc_id,
                doc.len()
            ));
            out.push_str(&input.to_dense_text());
            out.push_str("#end matrix\n");
        } else {
            out.push_str(&output_graph.to_triples());
            out.push_str("#end graph\n");
        }
    }
    Ok(out)
}

fn parse_graph_dump(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let header = line
            .strip_prefix("#graph ")
            .ok_or_else(|| Error::parse(idx + 1, "expected `#graph` header"))?;
        let mut parts = header.split_whitespace();
        let doc_id = parts
            .next()
            .ok_or_else(|| Error::parse(idx + 1, "missing doc id"))?
            .to_string();
        let mut n = None;
        for part in parts {
            if let Some(v) = part.strip_prefix("n=") {
                n = Some(
                    v.parse::<usize>()
                        .map_err(|_| Error::parse(idx + 1, "bad n="))?,
                );
            }
        }
        let n = n.ok_or_else(|| Error::parse(idx + 1, "missing n="))?;
        let (tok_idx, tok_line) = lines
            .next()
            .ok_or_else(|| Error::parse(idx + 1, "truncated graph block"))?;
        let tokens: Vec<String> = tok_line
            .strip_prefix("#tokens ")
            .ok_or_else(|| Error::parse(tok_idx + 1, "expected `#tokens` line"))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if tokens.len() != n {
            return Err(Error::parse(tok_idx + 1, "token count does not match n="));
        }
        let mut triples = String::new();
        let mut closed = false;
        for (_, l) in lines.by_ref() {
            if l.trim() == "#end graph" {
                closed = true;
                break;
            }
            triples.push_str(l);
            triples.push('\n');
        }
        if !closed {
            return Err(Error::parse(idx + 1, "graph block missing #end graph"));
        }
        let graph = CorefGraph::from_triples(n, GraphKind::Output, &triples)?;
        let (clusters, _) = decode_clusters(&graph);
        let mut doc = Document::new(doc_id, tokens);
        doc.gold = Some(clusters);
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_and_split_parse() {
        assert_eq!("overlap".parse::<Strategy>().unwrap(), Strategy::Overlap);
        assert!("bogus".parse::<Strategy>().is_err());
        assert_eq!("none".parse::<SplitKind>().unwrap(), SplitKind::None);
    }

    #[test]
    fn run_config_defaults() {
        let config = RunConfig::default();
        assert_eq!(config.window, 512);
        assert_eq!(config.tau, 0.5);
        assert_eq!(config.iters, 4);
        assert_eq!(config.strategy, Strategy::Full);
    }

    #[test]
    fn graph_dump_round_trip() {
        let docs = gen_synthetic_docs();
        let dump = render_graph_dump(&docs, false).unwrap();
        let parsed = parse_graph_dump(&dump).unwrap();
        assert_eq!(parsed.len(), docs.len());
        for (orig, back) in docs.iter().zip(parsed.iter()) {
            assert_eq!(orig.tokens, back.tokens);
            assert_eq!(
                orig.gold.as_ref().unwrap().non_singletons().canonical(),
                back.gold.as_ref().unwrap().canonical()
            );
        }
    }

    fn gen_synthetic_docs() -> Vec<Document> {
        gen_synthetic(
            &SyntheticConfig {
                n_docs: 3,
                ..Default::default()
            },
            8,
        )
        .unwrap()
    }
}
