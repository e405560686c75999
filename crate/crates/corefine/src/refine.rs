//! Iterative graph refinement.
//!
//! Inference predicts a graph, converts it to the dense input encoding,
//! re-encodes and repeats until the prediction stops changing or the
//! iteration bound is hit. The first iteration predicts mention links only;
//! coreference links join from the second iteration once candidate heads
//! exist. Training runs the same loop with an independent loss per iteration
//! and no gradient flow between iterations, since graph decisions are
//! discrete.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{Document, MentionSpan};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{
    assign_document_heads, assign_heads_lossy, output_to_input, CorefGraph, GraphKind,
    RelationCode,
};
use crate::mat::Mat;
use crate::model::{EncodedDoc, Model};
use crate::objective::{
    antecedent_scores, gold_head_clusters, loss_coref, loss_mention, mention_scores,
    scores_backward, AntecedentDistribution, CandidateSet, MentionLogitMatrix,
};
use crate::optim::Optimizer;
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    /// Iteration bound T.
    pub max_iterations: usize,
    /// Mention probability threshold tau; a cell is kept when p > tau.
    pub mention_threshold: Scalar,
    /// Maximum span width: a cell (i, j) is considered only when i - j is
    /// below this many tokens.
    pub max_span_len: usize,
    /// Optional cap: keep at most ceil(lambda * N) mention cells by
    /// probability.
    pub top_lambda: Option<Scalar>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            max_iterations: 4,
            mention_threshold: 0.5,
            max_span_len: 10,
            top_lambda: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::data("max_iterations must be at least 1"));
        }
        if !(self.mention_threshold > 0.0 && self.mention_threshold < 1.0) {
            return Err(Error::data("mention_threshold must lie strictly in (0, 1)"));
        }
        if self.max_span_len == 0 {
            return Err(Error::data("max_span_len must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FixedPoint,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IterationStats {
    pub mention_cells: usize,
    pub coref_cells: usize,
    /// Predicted spans dropped while deriving heads for the next input graph.
    pub dropped_spans: usize,
}

/// The sequence of predicted graphs G_1..G_t plus the stopping reason.
#[derive(Debug, Clone)]
pub struct RefinementTrace {
    pub graphs: Vec<CorefGraph>,
    pub stop_reason: StopReason,
    pub stats: Vec<IterationStats>,
}

impl RefinementTrace {
    pub fn final_graph(&self) -> &CorefGraph {
        self.graphs.last().expect("trace holds at least one graph")
    }

    pub fn iterations(&self) -> usize {
        self.graphs.len()
    }
}

/// How the engine treats mentions across iterations.
#[derive(Debug, Clone)]
pub enum RefineMode {
    /// Mentions and links are both predicted; iteration 1 is mention-only.
    /// An optional seed graph (decoded from an earlier window) conditions
    /// iteration 1 and provides the initial candidates.
    Joint { seed: Option<CorefGraph> },
    /// The mention set is fixed (second stage over a reduced document);
    /// every iteration predicts only coreference links among the fixed
    /// candidate heads.
    FixedMentions { spans: Vec<MentionSpan> },
}

/// Mention cells above the threshold, subject to the span-width limit and
/// the optional top-lambda cap. Shared by graph prediction and the
/// stand-alone mention detector.
pub fn select_mention_cells(
    scores: &MentionLogitMatrix,
    threshold: Scalar,
    cfg: &RefinementConfig,
) -> Vec<(usize, usize)> {
    let n = scores.len();
    if cfg.max_span_len == 0 {
        return Vec::new();
    }
    let mut cells = Vec::new();
    for i in 0..n {
        for j in i.saturating_sub(cfg.max_span_len - 1)..=i {
            if i - j < cfg.max_span_len {
                let p = scores.prob(i, j);
                if p > threshold {
                    cells.push((p, i, j));
                }
            }
        }
    }
    if let Some(lambda) = cfg.top_lambda {
        let cap = ((lambda * n as Scalar).ceil() as usize).max(0);
        if cells.len() > cap {
            cells.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            cells.truncate(cap);
        }
    }
    let mut out: Vec<(usize, usize)> = cells.into_iter().map(|(_, i, j)| (i, j)).collect();
    out.sort_unstable();
    out
}

/// Argmax antecedent per candidate head. Ties prefer the closest antecedent;
/// the null slot loses ties and yields no cell.
fn coref_argmax_cells(dist: &AntecedentDistribution) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for (k, &head) in dist.heads.iter().enumerate() {
        let logits = &dist.logits[k];
        let mut best = 0usize;
        let mut best_val = logits[0];
        for (s, &v) in logits.iter().enumerate().skip(1) {
            if v >= best_val {
                best = s;
                best_val = v;
            }
        }
        if best != 0 {
            cells.push((head, dist.heads[best - 1]));
        }
    }
    cells
}

/// Predicts the output graph for one iteration: mention cells from the
/// thresholded scores, and, from the second iteration on, one argmax
/// antecedent cell per candidate head. Coreference cells overwrite mention
/// cells on the rare shared address.
pub fn predict_graph(
    hidden: &Mat,
    params: &EncoderParams,
    cands: &CandidateSet,
    iteration: usize,
    cfg: &RefinementConfig,
) -> CorefGraph {
    let n = hidden.rows();
    let scores = mention_scores(hidden, &params.mention_scorer);
    let mut g = CorefGraph::new(n, GraphKind::Output);
    for (i, j) in select_mention_cells(&scores, cfg.mention_threshold, cfg) {
        g.set(i, j, RelationCode::Mention).expect("cell in range");
    }
    if iteration >= 2 && !cands.is_empty() {
        let dist = antecedent_scores(hidden, cands, &params.coref_scorer);
        for (i, j) in coref_argmax_cells(&dist) {
            g.set(i, j, RelationCode::Coref).expect("cell in range");
        }
    }
    g
}

/// Fixed-mention prediction: the candidate cells stay, links are predicted
/// at every iteration.
fn predict_fixed(
    hidden: &Mat,
    params: &EncoderParams,
    spans: &[MentionSpan],
    cands: &CandidateSet,
) -> CorefGraph {
    let mut g = CorefGraph::new(hidden.rows(), GraphKind::Output);
    for span in spans {
        g.set(span.end, span.start, RelationCode::Mention)
            .expect("cell in range");
    }
    let dist = antecedent_scores(hidden, cands, &params.coref_scorer);
    for (i, j) in coref_argmax_cells(&dist) {
        g.set(i, j, RelationCode::Coref).expect("cell in range");
    }
    g
}

/// Headed spans plus a sanitized copy of the graph whose mention cells match
/// them and whose coreference cells connect only their heads; the raw
/// prediction may contain unheadable nests and stray links.
fn sanitize_output(g: &CorefGraph) -> (Vec<MentionSpan>, CorefGraph, usize) {
    let (spans, dropped) = assign_heads_lossy(&g.mention_spans());
    let heads: std::collections::BTreeSet<usize> =
        spans.iter().map(|s| s.head.unwrap()).collect();
    let mut clean = CorefGraph::new(g.len(), GraphKind::Output);
    for span in &spans {
        clean
            .set(span.end, span.start, RelationCode::Mention)
            .expect("cell in range");
    }
    for (i, j) in g.coref_cells() {
        if heads.contains(&i) && heads.contains(&j) {
            clean.set(i, j, RelationCode::Coref).expect("cell in range");
        }
    }
    (spans, clean, dropped)
}

struct IterationState {
    input_graph: CorefGraph,
    input_spans: Vec<MentionSpan>,
    prev_prediction: CorefGraph,
}

fn initial_state(n: usize, mode: &RefineMode) -> Result<IterationState> {
    match mode {
        RefineMode::Joint { seed: None } => Ok(IterationState {
            input_graph: CorefGraph::new(n, GraphKind::Input),
            input_spans: Vec::new(),
            prev_prediction: CorefGraph::new(n, GraphKind::Output),
        }),
        RefineMode::Joint { seed: Some(seed) } => {
            if seed.len() != n {
                return Err(Error::data("seed graph size mismatch"));
            }
            let (spans, clean, _) = sanitize_output(seed);
            Ok(IterationState {
                input_graph: output_to_input(&clean, &spans)?,
                input_spans: spans,
                prev_prediction: seed.clone(),
            })
        }
        RefineMode::FixedMentions { spans } => {
            let mut mention_only = CorefGraph::new(n, GraphKind::Output);
            for span in spans {
                mention_only.set(span.end, span.start, RelationCode::Mention)?;
            }
            Ok(IterationState {
                input_graph: output_to_input(&mention_only, spans)?,
                input_spans: spans.clone(),
                prev_prediction: mention_only,
            })
        }
    }
}

/// The inference loop shared by plain refinement, windowed decoding and the
/// reduced second stage.
pub fn run_refinement(
    sample: &EncodedDoc,
    params: &EncoderParams,
    cfg: &RefinementConfig,
    mode: &RefineMode,
) -> Result<RefinementTrace> {
    cfg.validate()?;
    let n = sample.len();
    let mut state = initial_state(n, mode)?;
    let mut graphs = Vec::new();
    let mut stats = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for t in 1..=cfg.max_iterations {
        let enc = encode(
            params,
            &sample.token_ids,
            &sample.positions,
            sample.extra.as_ref(),
            &state.input_graph,
        )?;
        let predicted = match mode {
            RefineMode::Joint { .. } => {
                let cands = CandidateSet::from_spans(&state.input_spans)?;
                predict_graph(&enc.hidden, params, &cands, t, cfg)
            }
            RefineMode::FixedMentions { spans } => {
                let cands = CandidateSet::from_spans(spans)?;
                predict_fixed(&enc.hidden, params, spans, &cands)
            }
        };
        let (spans, clean, dropped) = sanitize_output(&predicted);
        stats.push(IterationStats {
            mention_cells: predicted.count_code(1),
            coref_cells: predicted.count_code(2),
            dropped_spans: dropped,
        });
        let fixed_point = predicted == state.prev_prediction;
        graphs.push(predicted.clone());
        if fixed_point {
            stop_reason = StopReason::FixedPoint;
            break;
        }
        state.input_graph = output_to_input(&clean, &spans)?;
        state.input_spans = spans;
        state.prev_prediction = predicted;
    }

    Ok(RefinementTrace {
        graphs,
        stop_reason,
        stats,
    })
}

/// Refines a document from the all-zero graph to a fixed point or the
/// iteration bound.
pub fn refine(doc: &Document, model: &Model, cfg: &RefinementConfig) -> Result<RefinementTrace> {
    let sample = EncodedDoc::from_document(doc, &model.vocab);
    run_refinement(&sample, &model.params, cfg, &RefineMode::Joint { seed: None })
}

/// One training sample: an encoded document plus its gold annotation in
/// graph space.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub encoded: EncodedDoc,
    pub gold_output: CorefGraph,
    pub gold_spans: Vec<MentionSpan>,
    pub gold_heads: BTreeMap<usize, usize>,
    pub mode: TrainMode,
}

#[derive(Debug, Clone)]
pub enum TrainMode {
    /// Mention and coreference losses through the joint schedule.
    Joint,
    /// Coreference loss only, mentions fixed (reduced second stage).
    FixedMentions { spans: Vec<MentionSpan> },
}

impl TrainSample {
    /// Builds a joint-mode sample from a gold document; heads are assigned
    /// here if missing.
    pub fn from_document(doc: &Document, model: &Model) -> Result<TrainSample> {
        let mut doc = doc.clone();
        if doc.gold.is_none() {
            return Err(Error::data(format!(
                "document {} has no gold annotation",
                doc.doc_id
            )));
        }
        assign_document_heads(&mut doc)?;
        let gold = doc.gold.as_ref().unwrap();
        let gold_output = crate::graph::clusters_to_output(&doc)?;
        Ok(TrainSample {
            encoded: EncodedDoc::from_document(&doc, &model.vocab),
            gold_output,
            gold_spans: gold.all_spans(),
            gold_heads: gold_head_clusters(gold)?,
            mode: TrainMode::Joint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub seed: u64,
    /// Probability of teacher-forcing the gold input graph from iteration 2.
    pub teacher_forcing: Scalar,
    pub coref_loss_weight: Scalar,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            seed: 0,
            teacher_forcing: 0.5,
            coref_loss_weight: 1.0,
        }
    }
}

/// One JSON line per iteration of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub doc_id: String,
    pub iteration: usize,
    pub loss_m: Scalar,
    pub loss_c: Scalar,
    pub total: Scalar,
    pub t_stop: usize,
}

/// Optimizer and schedule state; checkpointing it makes a resumed run
/// continue the loss curve exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub optimizer: Optimizer,
    pub rng: Rng,
    pub step: usize,
}

impl TrainState {
    pub fn new(optimizer: Optimizer, seed: u64) -> TrainState {
        TrainState {
            optimizer,
            rng: Rng::new(seed),
            step: 0,
        }
    }
}

/// Trains for `opt.steps` further steps, one document per step, with an
/// independent loss and update per refinement iteration. The inner loop uses
/// the same stopping criteria as inference.
pub fn train(
    samples: &[TrainSample],
    params: &mut EncoderParams,
    cfg: &RefinementConfig,
    opt: &TrainOptions,
    state: &mut TrainState,
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::data("training corpus is empty"));
    }
    let mut logs = Vec::new();
    for _ in 0..opt.steps {
        let sample = &samples[state.step % samples.len()];
        let step_logs = train_document(sample, params, cfg, opt, state)?;
        logs.extend(step_logs);
        state.step += 1;
    }
    Ok(logs)
}

fn train_document(
    sample: &TrainSample,
    params: &mut EncoderParams,
    cfg: &RefinementConfig,
    opt: &TrainOptions,
    state: &mut TrainState,
) -> Result<Vec<StepLog>> {
    let n = sample.encoded.len();
    let refine_mode = match &sample.mode {
        TrainMode::Joint => RefineMode::Joint { seed: None },
        TrainMode::FixedMentions { spans } => RefineMode::FixedMentions { spans: spans.clone() },
    };
    let mut iter_state = initial_state(n, &refine_mode)?;
    let gold_input = output_to_input(&sample.gold_output, &sample.gold_spans)?;

    let mut logs: Vec<StepLog> = Vec::new();
    let mut t_stop = cfg.max_iterations;
    for t in 1..=cfg.max_iterations {
        let enc = encode(
            params,
            &sample.encoded.token_ids,
            &sample.encoded.positions,
            sample.encoded.extra.as_ref(),
            &iter_state.input_graph,
        )?;

        let joint = matches!(sample.mode, TrainMode::Joint);
        let scores = mention_scores(&enc.hidden, &params.mention_scorer);
        let (loss_m, d_mention) = if joint {
            let (l, d) = loss_mention(&scores, &sample.gold_output);
            (l, Some(d))
        } else {
            (0.0, None)
        };

        let cands = match &sample.mode {
            TrainMode::Joint => CandidateSet::from_spans(&iter_state.input_spans)?,
            TrainMode::FixedMentions { spans } => CandidateSet::from_spans(spans)?,
        };
        let (loss_c, dist_and_grads) = if cands.is_empty() {
            (0.0, None)
        } else {
            let dist = antecedent_scores(&enc.hidden, &cands, &params.coref_scorer);
            let (l, mut d, _) = loss_coref(&dist, &sample.gold_heads, &cands);
            for row in &mut d {
                for v in row.iter_mut() {
                    *v *= opt.coref_loss_weight;
                }
            }
            (l, Some((dist, d)))
        };

        let total = loss_m + opt.coref_loss_weight * loss_c;
        if !total.is_finite() {
            return Err(Error::numeric(format!(
                "training diverged at step {} (doc {}, iteration {t}): loss {total}",
                state.step, sample.encoded.doc_id
            )));
        }

        let back = scores_backward(
            &enc.hidden,
            &params.mention_scorer,
            &params.coref_scorer,
            d_mention.as_deref(),
            dist_and_grads.as_ref().map(|(d, g)| (d, g.as_slice())),
        );
        let mut grads = EncoderParams::zeros(params.config)?;
        crate::encoder::backprop(&back.d_hidden, &enc, params, &mut grads)?;
        for (g, d) in grads.mention_scorer.iter_mut().zip(&back.d_mention_scorer) {
            *g += d;
        }
        for (g, d) in grads.coref_scorer.iter_mut().zip(&back.d_coref_scorer) {
            *g += d;
        }
        state.optimizer.step(params, &grads);

        // Predict from the pre-update scores for scheduling and stopping.
        let predicted = match &sample.mode {
            TrainMode::Joint => predict_graph(&enc.hidden, params, &cands, t, cfg),
            TrainMode::FixedMentions { spans } => {
                predict_fixed(&enc.hidden, params, spans, &cands)
            }
        };

        logs.push(StepLog {
            step: state.step,
            doc_id: sample.encoded.doc_id.clone(),
            iteration: t,
            loss_m,
            loss_c,
            total,
            t_stop: 0,
        });

        if predicted == iter_state.prev_prediction {
            t_stop = t;
            break;
        }
        if t == cfg.max_iterations {
            t_stop = t;
            break;
        }

        // Input for the next iteration: teacher-forced gold or the model's
        // own prediction.
        if state.rng.coin(opt.teacher_forcing) {
            iter_state.input_graph = gold_input.clone();
            iter_state.input_spans = sample.gold_spans.clone();
        } else {
            let (spans, clean, _) = sanitize_output(&predicted);
            iter_state.input_graph = output_to_input(&clean, &spans)?;
            iter_state.input_spans = spans;
        }
        iter_state.prev_prediction = predicted;
    }
    for log in &mut logs {
        log.t_stop = t_stop;
    }
    Ok(logs)
}
