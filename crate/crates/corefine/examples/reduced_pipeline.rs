//! The two-stage reduced-document pipeline: a non-iterative detector
//! proposes candidate mentions over windows, the document shrinks to the
//! candidate tokens plus separators, and a second network refines
//! coreference links among the fixed candidates.
//!
//! Run with: `cargo run --example reduced_pipeline`

use corefine::corpus::{gen_synthetic, ClusterSet, SyntheticConfig};
use corefine::encoder::EncoderConfig;
use corefine::graph::decode_clusters;
use corefine::longdoc::{detect_candidates, reduce_document, reduced_train_sample, refine_reduced};
use corefine::metrics::score_corpus;
use corefine::model::Model;
use corefine::optim::{Optimizer, OptimizerKind};
use corefine::refine::{train, RefinementConfig, TrainOptions, TrainSample, TrainState};
use corefine::vocab::Vocab;

fn main() {
    let window = 64;
    let recall_margin = 0.10;
    let corpus = gen_synthetic(
        &SyntheticConfig {
            n_docs: 20,
            doc_len: (20, 35),
            n_entities: (2, 3),
            mentions_per_entity: (2, 3),
            mention_len: (1, 2),
            vocab_size: 40,
            ..Default::default()
        },
        42,
    )
    .unwrap();
    let vocab = Vocab::build(&corpus);
    let config = EncoderConfig {
        layers: 2,
        heads: 4,
        d_model: 32,
        d_ff: 64,
        vocab: vocab.len(),
        max_positions: 256,
    };
    let cfg = RefinementConfig::default();

    // stage 1: train the non-iterative mention detector
    let mut detector = Model::new(config, vocab.clone(), 11).unwrap();
    let det_samples: Vec<TrainSample> = corpus
        .iter()
        .map(|d| TrainSample::from_document(d, &detector).unwrap())
        .collect();
    let det_cfg = RefinementConfig {
        max_iterations: 1,
        ..cfg
    };
    let mut det_state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 3e-3, &detector.params),
        1,
    );
    train(
        &det_samples,
        &mut detector.params,
        &det_cfg,
        &TrainOptions {
            steps: 1200,
            seed: 1,
            teacher_forcing: 1.0,
            coref_loss_weight: 1.0,
        },
        &mut det_state,
    )
    .unwrap();

    // what the detector proposes, and what the reduced document looks like
    let doc = &corpus[0];
    let detection = detect_candidates(doc, &detector, window, recall_margin, &cfg).unwrap();
    println!("document {} has {} tokens", doc.doc_id, doc.len());
    println!(
        "detector proposes {} candidates (gold has {} mentions)",
        detection.spans.len(),
        doc.gold.as_ref().unwrap().mention_count()
    );
    let reduced = reduce_document(doc, &detection.spans, &detection.context).unwrap();
    println!(
        "reduced document: {} tokens (original positions retained): {}",
        reduced.len(),
        reduced.tokens.join(" ")
    );
    println!("positions: {:?}", reduced.positions);

    // stage 2: train the fixed-candidate coreference network
    let mut coref = Model::new(config, vocab.clone(), 12).unwrap();
    let samples: Vec<TrainSample> = corpus
        .iter()
        .filter_map(|d| {
            reduced_train_sample(d, &detector, &coref, &cfg, window, recall_margin).unwrap()
        })
        .collect();
    let mut coref_state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 3e-3, &coref.params),
        2,
    );
    train(
        &samples,
        &mut coref.params,
        &cfg,
        &TrainOptions {
            steps: 800,
            seed: 2,
            teacher_forcing: 0.5,
            coref_loss_weight: 1.0,
        },
        &mut coref_state,
    )
    .unwrap();

    // end to end: detect, reduce, refine links, expand back
    let mut pairs = Vec::new();
    for doc in &corpus {
        let out = refine_reduced(doc, &detector, &coref, &cfg, window, recall_margin).unwrap();
        if let Some(trace) = &out.trace {
            assert!(trace.iterations() <= cfg.max_iterations);
        }
        let (predicted, _) = decode_clusters(&out.graph);
        pairs.push((doc.gold.clone().unwrap().non_singletons(), predicted));
    }
    let refs: Vec<(&ClusterSet, &ClusterSet)> = pairs.iter().map(|(a, b)| (a, b)).collect();
    let report = score_corpus(&refs);
    println!("\ntraining-set scores after 1200 + 800 steps:");
    print!("{}", report.table());
}
