//! Verifying the hand-written backward pass against central finite
//! differences on a small model, through both losses.
//!
//! Run with: `cargo run --example gradient_check`

use corefine::corpus::{ClusterSet, Document, MentionSpan};
use corefine::encoder::{backprop, encode, EncoderConfig, EncoderParams};
use corefine::graph::{assign_document_heads, clusters_to_output, output_to_input};
use corefine::model::Model;
use corefine::objective::{
    antecedent_scores, gold_head_clusters, loss_coref, loss_mention, mention_scores,
    scores_backward, CandidateSet,
};
use corefine::vocab::Vocab;
use corefine::Scalar;

fn main() {
    let mut doc = Document::new(
        "grad",
        ["a", "b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect(),
    );
    doc.gold = Some(ClusterSet::new(vec![vec![
        MentionSpan::new(0, 1),
        MentionSpan::new(3, 4),
    ]]));
    assign_document_heads(&mut doc).unwrap();

    let vocab = Vocab::build(std::slice::from_ref(&doc));
    let config = EncoderConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab: vocab.len(),
        max_positions: 8,
    };
    let model = Model::new(config, vocab.clone(), 7).unwrap();
    let mut params = model.params.clone();

    let gold_graph = clusters_to_output(&doc).unwrap();
    let gold = doc.gold.as_ref().unwrap();
    let spans = gold.all_spans();
    let input_graph = output_to_input(&gold_graph, &spans).unwrap();
    let cands = CandidateSet::from_spans(&spans).unwrap();
    let heads = gold_head_clusters(gold).unwrap();
    let ids = vocab.ids(&doc.tokens);
    let positions: Vec<usize> = (0..ids.len()).collect();

    let loss_of = |params: &EncoderParams| -> Scalar {
        let enc = encode(params, &ids, &positions, None, &input_graph).unwrap();
        let scores = mention_scores(&enc.hidden, &params.mention_scorer);
        let (lm, _) = loss_mention(&scores, &gold_graph);
        let dist = antecedent_scores(&enc.hidden, &cands, &params.coref_scorer);
        let (lc, _, _) = loss_coref(&dist, &heads, &cands);
        lm + lc
    };

    // analytic pass
    let enc = encode(&params, &ids, &positions, None, &input_graph).unwrap();
    let scores = mention_scores(&enc.hidden, &params.mention_scorer);
    let (loss_m, d_mention) = loss_mention(&scores, &gold_graph);
    let dist = antecedent_scores(&enc.hidden, &cands, &params.coref_scorer);
    let (loss_c, d_coref, _) = loss_coref(&dist, &heads, &cands);
    println!("loss_m = {loss_m:.6}, loss_c = {loss_c:.6}");
    let back = scores_backward(
        &enc.hidden,
        &params.mention_scorer,
        &params.coref_scorer,
        Some(&d_mention),
        Some((&dist, d_coref.as_slice())),
    );
    let mut grads = EncoderParams::zeros(config).unwrap();
    backprop(&back.d_hidden, &enc, &params, &mut grads).unwrap();
    for (g, v) in grads.mention_scorer.iter_mut().zip(&back.d_mention_scorer) {
        *g += v;
    }
    for (g, v) in grads.coref_scorer.iter_mut().zip(&back.d_coref_scorer) {
        *g += v;
    }

    // central differences over every parameter
    let analytic: Vec<(String, Vec<Scalar>)> = grads
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.to_vec()))
        .collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut count = 0usize;
    for (idx, (name, tensor)) in analytic.iter().enumerate() {
        for e in 0..tensor.len() {
            let orig = {
                let mut ts = params.tensors_mut();
                let v = ts[idx].1[e];
                ts[idx].1[e] = v + h;
                v
            };
            let up = loss_of(&params);
            {
                let mut ts = params.tensors_mut();
                ts[idx].1[e] = orig - h;
            }
            let down = loss_of(&params);
            {
                let mut ts = params.tensors_mut();
                ts[idx].1[e] = orig;
            }
            let fd = ((up - down) / (2.0 * h)) as f64;
            let an = tensor[e] as f64;
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
            if rel > worst {
                worst = rel;
                worst_at = format!("{name}[{e}]");
            }
            count += 1;
        }
    }
    println!("checked {count} parameters");
    println!("worst relative error {worst:.3e} at {worst_at}");
    assert!(worst < 1e-5);
    println!("analytic gradients match central finite differences");
}
