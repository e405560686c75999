//! Saving and loading model checkpoints, and resuming training with an
//! identical loss curve.
//!
//! Run with: `cargo run --example checkpoints`

use corefine::checkpoint::Checkpoint;
use corefine::corpus::{gen_synthetic, SyntheticConfig};
use corefine::encoder::EncoderConfig;
use corefine::model::Model;
use corefine::optim::{Optimizer, OptimizerKind};
use corefine::refine::{train, RefinementConfig, TrainOptions, TrainSample, TrainState};
use corefine::vocab::Vocab;
use corefine::Scalar;

fn main() {
    let corpus = gen_synthetic(
        &SyntheticConfig {
            n_docs: 5,
            doc_len: (15, 22),
            n_entities: (1, 2),
            mention_len: (1, 1),
            vocab_size: 25,
            ..Default::default()
        },
        3,
    )
    .unwrap();
    let vocab = Vocab::build(&corpus);
    let config = EncoderConfig {
        layers: 1,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        vocab: vocab.len(),
        max_positions: 32,
    };
    let model = Model::new(config, vocab, 1).unwrap();
    let samples: Vec<TrainSample> = corpus
        .iter()
        .map(|d| TrainSample::from_document(d, &model).unwrap())
        .collect();
    let cfg = RefinementConfig::default();
    let opt = |steps: usize| TrainOptions {
        steps,
        seed: 7,
        ..Default::default()
    };

    // uninterrupted run
    let mut full = model.params.clone();
    let mut full_state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 1e-3, &full),
        7,
    );
    let logs_a = train(&samples, &mut full, &cfg, &opt(30), &mut full_state).unwrap();

    // the same run split in two, saved and restored through a checkpoint
    let mut part = model.params.clone();
    let mut part_state = TrainState::new(
        Optimizer::new(OptimizerKind::adam(), 1e-3, &part),
        7,
    );
    let logs_b1 = train(&samples, &mut part, &cfg, &opt(12), &mut part_state).unwrap();

    let dir = std::env::temp_dir().join("corefine-checkpoint-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    let half = Model {
        params: part,
        vocab: model.vocab.clone(),
    };
    Checkpoint::new("full", &half)
        .with_train_state(&part_state)
        .save(&path)
        .unwrap();
    println!("checkpoint written to {}", path.display());

    let loaded = Checkpoint::load(&path).unwrap();
    let mut restored = loaded.coref_model().unwrap();
    let mut restored_state = loaded.train_state().unwrap();
    assert_eq!(restored.params, half.params);
    println!("restored parameters are bit-identical");

    let logs_b2 = train(
        &samples,
        &mut restored.params,
        &cfg,
        &opt(18),
        &mut restored_state,
    )
    .unwrap();

    let curve_a: Vec<Scalar> = logs_a.iter().map(|l| l.total).collect();
    let curve_b: Vec<Scalar> = logs_b1
        .iter()
        .chain(logs_b2.iter())
        .map(|l| l.total)
        .collect();
    assert_eq!(curve_a, curve_b);
    assert_eq!(full, restored.params);
    println!(
        "resumed training continues the loss curve exactly ({} log lines match)",
        curve_a.len()
    );
    let _ = std::fs::remove_dir_all(&dir);
}
