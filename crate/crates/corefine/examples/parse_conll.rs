//! CoNLL-2012 coreference column format: parsing, bracket nesting and the
//! write/parse round trip.
//!
//! Run with: `cargo run --example parse_conll`

use corefine::corpus::{parse_conll, write_conll};

const SAMPLE: &str = "\
#begin document (demo/doc1); part 000
d The (0
d old (1
d man 1)|0)
d saw -
d the (2
d dog 2)
d . -

d He (0)
d smiled -
d at -
d it (2)
d . -
#end document
";

fn main() {
    let docs = parse_conll(SAMPLE).expect("sample parses");
    let doc = &docs[0];
    println!("document {} with {} tokens", doc.doc_id, doc.len());
    println!("sentence bounds: {:?}", doc.sentence_bounds);

    let gold = doc.gold.as_ref().unwrap();
    for (entity, cluster) in gold.clusters.iter().enumerate() {
        let mentions: Vec<String> = cluster
            .iter()
            .map(|m| {
                format!(
                    "({}, {}) \"{}\"",
                    m.start,
                    m.end,
                    doc.tokens[m.start..=m.end].join(" ")
                )
            })
            .collect();
        println!("entity {entity}: {}", mentions.join(", "));
    }

    // note the nested mention: "old man" sits inside "The old man"
    println!("\nwritten back:\n{}", write_conll(&docs));

    let reparsed = parse_conll(&write_conll(&docs)).unwrap();
    assert_eq!(
        gold.canonical(),
        reparsed[0].gold.as_ref().unwrap().canonical()
    );
    println!("round trip preserves every span and cluster");

    // parse errors carry line numbers
    let broken = "#begin document (x); part 000\nx word 7)\n#end document\n";
    match parse_conll(broken) {
        Err(err) => println!("\nbroken input rejected: {err}"),
        Ok(_) => unreachable!(),
    }
}
