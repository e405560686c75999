//! Watching iterative refinement converge: the graph sequence G_1..G_t,
//! per-iteration cell counts and the stopping reason.
//!
//! Run with: `cargo run --example refinement_trace`

use corefine::corpus::{gen_synthetic, SyntheticConfig};
use corefine::encoder::EncoderConfig;
use corefine::graph::decode_clusters;
use corefine::model::Model;
use corefine::optim::{Optimizer, OptimizerKind};
use corefine::refine::{refine, train, RefinementConfig, TrainOptions, TrainSample, TrainState};
use corefine::vocab::Vocab;

fn main() {
    let corpus = gen_synthetic(
        &SyntheticConfig {
            n_docs: 8,
            doc_len: (18, 26),
            n_entities: (2, 2),
            mentions_per_entity: (2, 3),
            mention_len: (1, 2),
            vocab_size: 30,
            ..Default::default()
        },
        5,
    )
    .unwrap();
    let vocab = Vocab::build(&corpus);
    let config = EncoderConfig {
        layers: 2,
        heads: 4,
        d_model: 32,
        d_ff: 64,
        vocab: vocab.len(),
        max_positions: 32,
    };
    let mut model = Model::new(config, vocab, 2).unwrap();
    let cfg = RefinementConfig::default();

    // an untrained model predicts nothing and stops immediately
    let trace = refine(&corpus[0], &model, &cfg).unwrap();
    println!(
        "untrained model: {} iteration(s), stop reason {:?}, {} cells",
        trace.iterations(),
        trace.stop_reason,
        trace.final_graph().cell_count()
    );

    let samples: Vec<TrainSample> = corpus
        .iter()
        .map(|d| TrainSample::from_document(d, &model).unwrap())
        .collect();
    let opt = TrainOptions {
        steps: 1500,
        seed: 3,
        teacher_forcing: 1.0,
        coref_loss_weight: 0.3,
    };
    let mut state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 1e-3, &model.params),
        opt.seed,
    );
    train(&samples, &mut model.params, &cfg, &opt, &mut state).unwrap();

    for doc in corpus.iter().take(3) {
        let trace = refine(doc, &model, &cfg).unwrap();
        println!("\n--- {} ({} tokens) ---", doc.doc_id, doc.len());
        for (t, stats) in trace.stats.iter().enumerate() {
            println!(
                "iteration {}: {} mention cells, {} coreference cells",
                t + 1,
                stats.mention_cells,
                stats.coref_cells
            );
        }
        println!(
            "stopped after {} iteration(s): {:?}",
            trace.iterations(),
            trace.stop_reason
        );
        // the first iteration never predicts coreference links
        assert_eq!(trace.graphs[0].count_code(2), 0);

        let (predicted, _) = decode_clusters(trace.final_graph());
        println!("predicted clusters: {:?}", predicted.canonical());
        println!(
            "gold clusters:      {:?}",
            doc.gold.as_ref().unwrap().non_singletons().canonical()
        );
    }
}
