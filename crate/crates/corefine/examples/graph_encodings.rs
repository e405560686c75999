//! The two graph encodings of clusters: the minimal output form the model
//! predicts and the dense input form fed to attention, plus decoding back
//! to clusters with the union-find grouper.
//!
//! Run with: `cargo run --example graph_encodings`

use corefine::corpus::{ClusterSet, Document, MentionSpan};
use corefine::graph::{
    assign_document_heads, clusters_to_output, decode_clusters, output_to_input, validate,
};

fn main() {
    let tokens = "Anna met Ben ; she greeted him"
        .split(' ')
        .map(str::to_string)
        .collect();
    let mut doc = Document::new("demo", tokens);
    doc.gold = Some(ClusterSet::new(vec![
        vec![MentionSpan::new(0, 0), MentionSpan::new(4, 4)], // Anna, she
        vec![MentionSpan::new(2, 2), MentionSpan::new(6, 6)], // Ben, him
    ]));
    assign_document_heads(&mut doc).unwrap();

    let gold = doc.gold.as_ref().unwrap();
    println!("tokens: {}", doc.tokens.join(" "));
    for cluster in &gold.clusters {
        let heads: Vec<usize> = cluster.iter().map(|m| m.head.unwrap()).collect();
        println!("cluster {:?} with heads {:?}", cluster.iter().map(|m| m.key()).collect::<Vec<_>>(), heads);
    }

    // output encoding: one last-to-first link per mention, one
    // closest-antecedent link per non-first mention
    let output = clusters_to_output(&doc).unwrap();
    println!("\noutput graph ({} cells):\n{}", output.cell_count(), output.to_dense_text());

    // input encoding: every mention token links to its head (diagonal for
    // the head itself), all head pairs of a cluster link
    let spans = gold.all_spans();
    let input = output_to_input(&output, &spans).unwrap();
    println!("input graph ({} cells):\n{}", input.cell_count(), input.to_dense_text());

    println!("sparse triples of the output graph:\n{}", output.to_triples());

    let (decoded, diagnostics) = decode_clusters(&output);
    println!("decoded clusters: {:?}", decoded.canonical());
    println!("diagnostics: {diagnostics:?}");
    assert_eq!(decoded.canonical(), gold.non_singletons().canonical());

    assert!(validate(&output).is_empty());
    assert!(validate(&input).is_empty());

    // validation reports problems in hand-built graphs
    let mut broken = corefine::graph::CorefGraph::new(4, corefine::graph::GraphKind::Output);
    broken.set_raw(2, 1, 7);
    for diagnostic in validate(&broken) {
        println!("broken graph: {diagnostic}");
    }
}
