//! Coreference evaluation: MUC, B³, CEAF_φ4, their average F1 and paired
//! bootstrap resampling.
//!
//! Mentions are atoms identified by exact (start, end) match; a one-token
//! boundary error counts as a miss. Degenerate cases follow the reference
//! scorer conventions: an empty side scores 0 and 0/0 is 0. Corpus-level
//! scores sum the per-document numerators and denominators rather than
//! averaging per-document ratios.

mod hungarian;

pub use hungarian::max_weight_assignment;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::ClusterSet;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricScore {
    pub precision: Scalar,
    pub recall: Scalar,
    pub f1: Scalar,
}

impl MetricScore {
    fn from_fractions(rec_num: Scalar, rec_den: Scalar, prec_num: Scalar, prec_den: Scalar) -> Self {
        let recall = if rec_den > 0.0 { rec_num / rec_den } else { 0.0 };
        let precision = if prec_den > 0.0 { prec_num / prec_den } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricScore {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreReport {
    pub muc: MetricScore,
    pub b_cubed: MetricScore,
    pub ceaf_phi4: MetricScore,
    pub avg_f1: Scalar,
    pub key_mentions: usize,
    pub response_mentions: usize,
}

impl ScoreReport {
    /// Table in the usual P/R/F1-per-metric layout plus the average F1.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "Metric         P        R       F1\n",
        );
        for (name, m) in [
            ("MUC", &self.muc),
            ("B3", &self.b_cubed),
            ("CEAF_phi4", &self.ceaf_phi4),
        ] {
            out.push_str(&format!(
                "{:<10} {:>7.2} {:>8.2} {:>8.2}\n",
                name,
                m.precision * 100.0,
                m.recall * 100.0,
                m.f1 * 100.0
            ));
        }
        out.push_str(&format!("{:<10} {:>26.2}\n", "Avg F1", self.avg_f1 * 100.0));
        out
    }
}

/// Mean of the three metric F1 scores.
pub fn avg_f1(muc: &MetricScore, b_cubed: &MetricScore, ceaf: &MetricScore) -> Scalar {
    (muc.f1 + b_cubed.f1 + ceaf.f1) / 3.0
}

/// Per-document score components; summing them across documents gives
/// corpus-level scores and makes bootstrap resampling cheap.
#[derive(Debug, Clone, Copy, Default)]
pub struct DocComponents {
    muc_rec_num: Scalar,
    muc_rec_den: Scalar,
    muc_prec_num: Scalar,
    muc_prec_den: Scalar,
    b3_rec_num: Scalar,
    b3_rec_den: Scalar,
    b3_prec_num: Scalar,
    b3_prec_den: Scalar,
    ceaf_phi: Scalar,
    ceaf_key: Scalar,
    ceaf_resp: Scalar,
    key_mentions: usize,
    response_mentions: usize,
}

impl DocComponents {
    pub fn compute(key: &ClusterSet, response: &ClusterSet) -> Self {
        let mut c = DocComponents::default();
        let (rn, rd) = muc_half(key, response);
        let (pn, pd) = muc_half(response, key);
        c.muc_rec_num = rn;
        c.muc_rec_den = rd;
        c.muc_prec_num = pn;
        c.muc_prec_den = pd;

        let (rn, rd) = b3_half(key, response);
        let (pn, pd) = b3_half(response, key);
        c.b3_rec_num = rn;
        c.b3_rec_den = rd;
        c.b3_prec_num = pn;
        c.b3_prec_den = pd;

        c.ceaf_phi = ceaf_matched_similarity(key, response);
        c.ceaf_key = key.clusters.len() as Scalar;
        c.ceaf_resp = response.clusters.len() as Scalar;

        c.key_mentions = key.mention_count();
        c.response_mentions = response.mention_count();
        c
    }

    fn add(&mut self, other: &DocComponents) {
        self.muc_rec_num += other.muc_rec_num;
        self.muc_rec_den += other.muc_rec_den;
        self.muc_prec_num += other.muc_prec_num;
        self.muc_prec_den += other.muc_prec_den;
        self.b3_rec_num += other.b3_rec_num;
        self.b3_rec_den += other.b3_rec_den;
        self.b3_prec_num += other.b3_prec_num;
        self.b3_prec_den += other.b3_prec_den;
        self.ceaf_phi += other.ceaf_phi;
        self.ceaf_key += other.ceaf_key;
        self.ceaf_resp += other.ceaf_resp;
        self.key_mentions += other.key_mentions;
        self.response_mentions += other.response_mentions;
    }

    pub fn report(&self) -> ScoreReport {
        let muc = MetricScore::from_fractions(
            self.muc_rec_num,
            self.muc_rec_den,
            self.muc_prec_num,
            self.muc_prec_den,
        );
        let b_cubed = MetricScore::from_fractions(
            self.b3_rec_num,
            self.b3_rec_den,
            self.b3_prec_num,
            self.b3_prec_den,
        );
        let ceaf_phi4 =
            MetricScore::from_fractions(self.ceaf_phi, self.ceaf_key, self.ceaf_phi, self.ceaf_resp);
        ScoreReport {
            muc,
            b_cubed,
            ceaf_phi4,
            avg_f1: avg_f1(&muc, &b_cubed, &ceaf_phi4),
            key_mentions: self.key_mentions,
            response_mentions: self.response_mentions,
        }
    }
}

/// MUC recall components of `left` against `right` (swap sides for precision):
/// sum over left clusters S of |S| - p(S), over |S| - 1, where p counts the
/// partitions of S induced by the right-hand clustering (unaligned mentions
/// are their own partition).
fn muc_half(left: &ClusterSet, right: &ClusterSet) -> (Scalar, Scalar) {
    let membership = membership_map(right);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &left.clusters {
        if cluster.len() < 2 {
            continue;
        }
        let mut partitions = std::collections::BTreeSet::new();
        let mut unaligned = 0usize;
        for span in cluster {
            match membership.get(&span.key()) {
                Some(&c) => {
                    partitions.insert(c);
                }
                None => unaligned += 1,
            }
        }
        let p = partitions.len() + unaligned;
        num += (cluster.len() - p) as Scalar;
        den += (cluster.len() - 1) as Scalar;
    }
    (num, den)
}

/// B³ recall components of `left` against `right`: per left mention, the
/// overlap between its left cluster and its right cluster over the left
/// cluster size; denominator is the number of left mentions.
fn b3_half(left: &ClusterSet, right: &ClusterSet) -> (Scalar, Scalar) {
    let membership = membership_map(right);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &left.clusters {
        let keys: Vec<(usize, usize)> = cluster.iter().map(|m| m.key()).collect();
        for key in &keys {
            den += 1.0;
            if let Some(&rc) = membership.get(key) {
                let overlap = keys
                    .iter()
                    .filter(|k| membership.get(*k) == Some(&rc))
                    .count();
                num += overlap as Scalar / cluster.len() as Scalar;
            }
        }
    }
    (num, den)
}

fn membership_map(set: &ClusterSet) -> BTreeMap<(usize, usize), usize> {
    let mut map = BTreeMap::new();
    for (idx, cluster) in set.clusters.iter().enumerate() {
        for span in cluster {
            map.insert(span.key(), idx);
        }
    }
    map
}

/// Total φ4 similarity over the optimal one-to-one cluster alignment.
fn ceaf_matched_similarity(key: &ClusterSet, response: &ClusterSet) -> Scalar {
    if key.is_empty() || response.is_empty() {
        return 0.0;
    }
    let resp_membership = membership_map(response);
    let sims = Mat::from_fn(key.clusters.len(), response.clusters.len(), |i, j| {
        let k = &key.clusters[i];
        let overlap = k
            .iter()
            .filter(|m| resp_membership.get(&m.key()) == Some(&j))
            .count();
        2.0 * overlap as Scalar / (k.len() + response.clusters[j].len()) as Scalar
    });
    max_weight_assignment(&sims).1
}

pub fn muc(key: &ClusterSet, response: &ClusterSet) -> MetricScore {
    DocComponents::compute(key, response).report().muc
}

pub fn b_cubed(key: &ClusterSet, response: &ClusterSet) -> MetricScore {
    DocComponents::compute(key, response).report().b_cubed
}

pub fn ceaf_phi4(key: &ClusterSet, response: &ClusterSet) -> MetricScore {
    DocComponents::compute(key, response).report().ceaf_phi4
}

/// Scores a single document pair.
pub fn score_document(key: &ClusterSet, response: &ClusterSet) -> ScoreReport {
    DocComponents::compute(key, response).report()
}

/// Corpus-level scores over paired documents.
pub fn score_corpus(pairs: &[(&ClusterSet, &ClusterSet)]) -> ScoreReport {
    let mut total = DocComponents::default();
    for (key, response) in pairs {
        total.add(&DocComponents::compute(key, response));
    }
    total.report()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BootstrapReport {
    pub iterations: usize,
    /// One-sided p-values for "system A beats system B": the fraction of
    /// resamples where A's F1 is less than or equal to B's.
    pub p_muc: Scalar,
    pub p_b_cubed: Scalar,
    pub p_ceaf_phi4: Scalar,
    pub p_avg_f1: Scalar,
}

/// Paired bootstrap resampling over documents, deterministic per seed.
pub fn paired_bootstrap(
    key: &[ClusterSet],
    sys_a: &[ClusterSet],
    sys_b: &[ClusterSet],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if key.len() != sys_a.len() || key.len() != sys_b.len() {
        return Err(Error::data("bootstrap requires aligned document lists"));
    }
    if key.len() < 2 {
        return Err(Error::data("bootstrap requires at least 2 documents"));
    }
    if iterations < 100 {
        return Err(Error::data("bootstrap requires at least 100 iterations"));
    }
    let comp_a: Vec<DocComponents> = key
        .iter()
        .zip(sys_a)
        .map(|(k, r)| DocComponents::compute(k, r))
        .collect();
    let comp_b: Vec<DocComponents> = key
        .iter()
        .zip(sys_b)
        .map(|(k, r)| DocComponents::compute(k, r))
        .collect();

    let n = key.len();
    let mut rng = Rng::new(seed);
    let mut le_counts = [0usize; 4]; // muc, b3, ceaf, avg
    for _ in 0..iterations {
        let mut total_a = DocComponents::default();
        let mut total_b = DocComponents::default();
        for _ in 0..n {
            let d = rng.below(0, n);
            total_a.add(&comp_a[d]);
            total_b.add(&comp_b[d]);
        }
        let ra = total_a.report();
        let rb = total_b.report();
        if ra.muc.f1 <= rb.muc.f1 {
            le_counts[0] += 1;
        }
        if ra.b_cubed.f1 <= rb.b_cubed.f1 {
            le_counts[1] += 1;
        }
        if ra.ceaf_phi4.f1 <= rb.ceaf_phi4.f1 {
            le_counts[2] += 1;
        }
        if ra.avg_f1 <= rb.avg_f1 {
            le_counts[3] += 1;
        }
    }
    let frac = |c: usize| c as Scalar / iterations as Scalar;
    Ok(BootstrapReport {
        iterations,
        p_muc: frac(le_counts[0]),
        p_b_cubed: frac(le_counts[1]),
        p_ceaf_phi4: frac(le_counts[2]),
        p_avg_f1: frac(le_counts[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionSpan;

    fn clusters(groups: &[&[(usize, usize)]]) -> ClusterSet {
        ClusterSet::new(
            groups
                .iter()
                .map(|g| g.iter().map(|&(s, e)| MentionSpan::new(s, e)).collect())
                .collect(),
        )
    }

    /// key {{a,b,c}} vs response {{a,b},{c}} with a=(0,0), b=(1,1), c=(2,2)
    fn fixture() -> (ClusterSet, ClusterSet) {
        (
            clusters(&[&[(0, 0), (1, 1), (2, 2)]]),
            clusters(&[&[(0, 0), (1, 1)], &[(2, 2)]]),
        )
    }

    #[test]
    fn identical_sets_score_one() {
        let key = clusters(&[&[(0, 0), (1, 1)], &[(3, 4), (6, 6)]]);
        let report = score_document(&key, &key);
        for m in [report.muc, report.b_cubed, report.ceaf_phi4] {
            assert!((m.precision - 1.0).abs() < 1e-12);
            assert!((m.recall - 1.0).abs() < 1e-12);
            assert!((m.f1 - 1.0).abs() < 1e-12);
        }
        assert!((report.avg_f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn muc_hand_fixture() {
        let (key, resp) = fixture();
        let m = muc(&key, &resp);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.precision - 1.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn muc_empty_response() {
        let (key, _) = fixture();
        let m = muc(&key, &ClusterSet::default());
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn b_cubed_hand_fixture() {
        let (key, resp) = fixture();
        let m = b_cubed(&key, &resp);
        assert!((m.recall - 5.0 / 9.0).abs() < 1e-12);
        assert!((m.precision - 1.0).abs() < 1e-12);
        assert!((m.f1 - 10.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn b_cubed_disjoint_mentions() {
        let key = clusters(&[&[(0, 0), (1, 1)]]);
        let resp = clusters(&[&[(5, 5), (6, 6)]]);
        let m = b_cubed(&key, &resp);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ceaf_hand_fixture() {
        let (key, resp) = fixture();
        let m = ceaf_phi4(&key, &resp);
        assert!((m.recall - 0.8).abs() < 1e-12);
        assert!((m.precision - 0.4).abs() < 1e-12);
        assert!((m.f1 - 8.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn ceaf_empty_response() {
        let (key, _) = fixture();
        let m = ceaf_phi4(&key, &ClusterSet::default());
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn avg_f1_of_fixture() {
        let (key, resp) = fixture();
        let report = score_document(&key, &resp);
        let expected = (2.0 / 3.0 + 10.0 / 14.0 + 8.0 / 15.0) / 3.0;
        assert!((report.avg_f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall() {
        let key = clusters(&[&[(0, 0), (1, 1), (4, 4)], &[(2, 2), (3, 3)]]);
        let resp = clusters(&[&[(0, 0), (2, 2)], &[(1, 1), (3, 3), (5, 5)]]);
        let forward = score_document(&key, &resp);
        let backward = score_document(&resp, &key);
        for (a, b) in [
            (forward.muc, backward.muc),
            (forward.b_cubed, backward.b_cubed),
            (forward.ceaf_phi4, backward.ceaf_phi4),
        ] {
            assert!((a.precision - b.recall).abs() < 1e-12);
            assert!((a.recall - b.precision).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_identical_systems() {
        let key: Vec<ClusterSet> = (0..5)
            .map(|i| clusters(&[&[(i, i), (i + 10, i + 10)]]))
            .collect();
        let report = paired_bootstrap(&key, &key, &key, 200, 9).unwrap();
        assert_eq!(report.p_avg_f1, 1.0);
        assert_eq!(report.p_muc, 1.0);
    }

    #[test]
    fn bootstrap_deterministic_per_seed() {
        let key: Vec<ClusterSet> = (0..6)
            .map(|i| clusters(&[&[(i, i), (i + 10, i + 10), (i + 20, i + 20)]]))
            .collect();
        let sys_a: Vec<ClusterSet> = key.clone();
        let sys_b: Vec<ClusterSet> = (0..6)
            .map(|i| clusters(&[&[(i, i), (i + 10, i + 10)]]))
            .collect();
        let r1 = paired_bootstrap(&key, &sys_a, &sys_b, 300, 5).unwrap();
        let r2 = paired_bootstrap(&key, &sys_a, &sys_b, 300, 5).unwrap();
        assert_eq!(r1.p_avg_f1, r2.p_avg_f1);
    }

    #[test]
    fn bootstrap_dominating_system_p_near_zero() {
        // A is perfect on every document, B always misses a mention
        let key: Vec<ClusterSet> = (0..8)
            .map(|i| clusters(&[&[(i, i), (i + 10, i + 10), (i + 20, i + 20)]]))
            .collect();
        let sys_a = key.clone();
        let sys_b: Vec<ClusterSet> = (0..8)
            .map(|i| clusters(&[&[(i, i), (i + 10, i + 10)]]))
            .collect();
        let report = paired_bootstrap(&key, &sys_a, &sys_b, 1000, 3).unwrap();
        assert_eq!(report.p_avg_f1, 0.0);
    }

    #[test]
    fn bootstrap_input_validation() {
        let key: Vec<ClusterSet> = vec![clusters(&[&[(0, 0), (1, 1)]])];
        assert!(paired_bootstrap(&key, &key, &key, 200, 1).is_err());
        let key2: Vec<ClusterSet> = (0..3).map(|_| clusters(&[&[(0, 0), (1, 1)]])).collect();
        assert!(paired_bootstrap(&key2, &key2, &key2, 50, 1).is_err());
    }

    #[test]
    fn all_metrics_one_iff_identical_nonsingleton_structure() {
        let a = clusters(&[&[(0, 0), (1, 1)], &[(9, 9)]]);
        let b = clusters(&[&[(0, 0), (1, 1)], &[(9, 9)]]);
        let r = score_document(&a, &b);
        assert!((r.avg_f1 - 1.0).abs() < 1e-12);
        let c = clusters(&[&[(0, 0), (2, 2)]]);
        let r = score_document(&a, &c);
        assert!(r.avg_f1 < 1.0);
    }
}
