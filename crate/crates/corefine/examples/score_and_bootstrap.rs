//! Coreference evaluation: MUC, B-cubed and CEAF on a hand-checked fixture,
//! corpus-level scoring, and paired bootstrap resampling between systems.
//!
//! Run with: `cargo run --example score_and_bootstrap`

use corefine::corpus::{ClusterSet, MentionSpan};
use corefine::metrics::{paired_bootstrap, score_corpus, score_document};

fn clusters(groups: &[&[(usize, usize)]]) -> ClusterSet {
    ClusterSet::new(
        groups
            .iter()
            .map(|g| g.iter().map(|&(s, e)| MentionSpan::new(s, e)).collect())
            .collect(),
    )
}

fn main() {
    // the classic check: key {a, b, c} against response {a, b} {c}
    let key = clusters(&[&[(0, 0), (1, 1), (2, 2)]]);
    let response = clusters(&[&[(0, 0), (1, 1)], &[(2, 2)]]);
    let report = score_document(&key, &response);
    println!("key {{a,b,c}} vs response {{a,b}},{{c}}:");
    print!("{}", report.table());
    println!(
        "exact fractions: MUC 2/3 = {:.6}, B3 10/14 = {:.6}, CEAF 8/15 = {:.6}\n",
        report.muc.f1, report.b_cubed.f1, report.ceaf_phi4.f1
    );

    // corpus-level scores sum the per-document counts
    let docs: Vec<(ClusterSet, ClusterSet)> = vec![
        (key.clone(), response.clone()),
        (key.clone(), key.clone()),
        (
            clusters(&[&[(0, 1), (5, 5)], &[(3, 3), (7, 8)]]),
            clusters(&[&[(0, 1), (5, 5), (3, 3)], &[(7, 8), (9, 9)]]),
        ),
    ];
    let refs: Vec<(&ClusterSet, &ClusterSet)> = docs.iter().map(|(a, b)| (a, b)).collect();
    println!("corpus of {} documents:", refs.len());
    print!("{}", score_corpus(&refs).table());

    // paired bootstrap: system A is gold itself, system B merges too much
    let keys: Vec<ClusterSet> = (0..12)
        .map(|i| clusters(&[&[(i, i), (i + 20, i + 20)], &[(i + 40, i + 40), (i + 60, i + 60)]]))
        .collect();
    let sys_a = keys.clone();
    let sys_b: Vec<ClusterSet> = (0..12)
        .map(|i| {
            clusters(&[&[
                (i, i),
                (i + 20, i + 20),
                (i + 40, i + 40),
                (i + 60, i + 60),
            ]])
        })
        .collect();
    let report = paired_bootstrap(&keys, &sys_a, &sys_b, 2000, 7).unwrap();
    println!(
        "\npaired bootstrap over {} resamples: p(A <= B) avg F1 = {:.4}",
        report.iterations, report.p_avg_f1
    );
    println!("system A beats system B significantly (p below any usual alpha)");

    let self_report = paired_bootstrap(&keys, &sys_a, &sys_a, 2000, 7).unwrap();
    println!(
        "self-comparison sanity: p(A <= A) = {:.4} (never significant)",
        self_report.p_avg_f1
    );
}
