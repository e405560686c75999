//! Length management: overlapping windows with subgraph carry-over versus
//! plain truncation on a document longer than the encoder window.
//!
//! Run with: `cargo run --example long_documents`

use corefine::corpus::{gen_synthetic, ClusterSet, SyntheticConfig};
use corefine::encoder::EncoderConfig;
use corefine::graph::decode_clusters;
use corefine::longdoc::{decode_windows, plan_windows, truncate};
use corefine::metrics::score_document;
use corefine::model::Model;
use corefine::optim::{Optimizer, OptimizerKind};
use corefine::refine::{refine, train, RefinementConfig, TrainOptions, TrainSample, TrainState};
use corefine::vocab::Vocab;

fn main() {
    let window = 32;
    println!("window plan for a 80-token document at K = {window}:");
    for (i, (s, e)) in plan_windows(80, window).unwrap().segments.iter().enumerate() {
        println!("  segment {i}: [{s}, {e})");
    }

    // long documents whose clusters live in different regions
    let corpus = gen_synthetic(
        &SyntheticConfig {
            n_docs: 10,
            doc_len: (60, 80),
            n_entities: (2, 3),
            mentions_per_entity: (2, 3),
            mention_len: (1, 2),
            vocab_size: 40,
            ..Default::default()
        },
        9,
    )
    .unwrap();
    let vocab = Vocab::build(&corpus);
    let config = EncoderConfig {
        layers: 2,
        heads: 4,
        d_model: 32,
        d_ff: 64,
        vocab: vocab.len(),
        max_positions: window,
    };
    let mut model = Model::new(config, vocab, 4).unwrap();

    // train on window segments, each an independent sample
    let mut segments = Vec::new();
    for doc in &corpus {
        let plan = plan_windows(doc.len(), window).unwrap();
        for &(s, e) in &plan.segments {
            segments.push(slice(doc, s, e));
        }
    }
    let samples: Vec<TrainSample> = segments
        .iter()
        .map(|d| TrainSample::from_document(d, &model).unwrap())
        .collect();
    let cfg = RefinementConfig::default();
    let opt = TrainOptions {
        steps: 2500,
        seed: 3,
        teacher_forcing: 1.0,
        coref_loss_weight: 0.3,
    };
    let mut state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 1e-3, &model.params),
        opt.seed,
    );
    train(&samples, &mut model.params, &cfg, &opt, &mut state).unwrap();

    let mut window_f1 = 0.0;
    let mut truncated_f1 = 0.0;
    for doc in &corpus {
        let gold = doc.gold.clone().unwrap().non_singletons();

        let (graph, diagnostics) = decode_windows(doc, &model, &cfg, window).unwrap();
        let (predicted, _) = decode_clusters(&graph);
        window_f1 += score_document(&gold, &predicted).avg_f1;
        if diagnostics.seed_cells_dropped > 0 {
            println!(
                "{}: {} seed cells crossed a segment boundary",
                doc.doc_id, diagnostics.seed_cells_dropped
            );
        }

        let (prefix, dropped) = truncate(doc, window);
        let trace = refine(&prefix, &model, &cfg).unwrap();
        let (predicted, _) = decode_clusters(trace.final_graph());
        truncated_f1 += score_document(&gold, &predicted).avg_f1;
        if dropped > 0 {
            println!("{}: truncation dropped {dropped} gold spans", doc.doc_id);
        }
    }
    let n = corpus.len() as f64;
    println!("\noverlapping windows: avg F1 {:.4}", window_f1 / n);
    println!("plain truncation:    avg F1 {:.4}", truncated_f1 / n);
    println!("(truncation cannot see mentions past token {window})");
}

fn slice(doc: &corefine::corpus::Document, start: usize, end: usize) -> corefine::corpus::Document {
    use corefine::corpus::{Document, MentionSpan};
    let gold = doc.gold.as_ref().map(|g| {
        ClusterSet::new(
            g.clusters
                .iter()
                .map(|c| {
                    c.iter()
                        .filter(|m| m.start >= start && m.end < end)
                        .map(|m| MentionSpan::new(m.start - start, m.end - start))
                        .collect::<Vec<_>>()
                })
                .filter(|c: &Vec<MentionSpan>| !c.is_empty())
                .collect(),
        )
    });
    let mut out = Document::new(
        format!("{}@{start}..{end}", doc.doc_id),
        doc.tokens[start..end].to_vec(),
    );
    out.gold = gold;
    out
}
