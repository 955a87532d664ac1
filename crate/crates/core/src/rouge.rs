//! ROUGE-N and ROUGE-L scoring over token sequences.
//!
//! Scores are computed on exactly the tokens given; there is no stemming or
//! stop-word removal. Summary-level ROUGE-L uses union-LCS composition by
//! default, with flat concatenation available through [`SummaryLcsMode`].

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RougeError {
    #[error("reference has {len} tokens, fewer than n = {n}")]
    ReferenceTooShort { n: usize, len: usize },
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("reference is empty")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        RougeScore { precision, recall, f1 }
    }

    /// Score from a hit count and the candidate/reference lengths; an empty
    /// side contributes 0.
    pub fn from_counts(hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        let ratio = |den: usize| if den == 0 { 0.0 } else { hits as f64 / den as f64 };
        RougeScore::new(ratio(candidate_len), ratio(reference_len))
    }
}

/// How multi-sentence candidates and references are compared for ROUGE-L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryLcsMode {
    #[default]
    Union,
    Concatenated,
}

fn lcs_table<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Vec<u32>> {
    let mut table = vec![vec![0u32; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table
}

pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // Two-row DP; only the length is needed here.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Positions in `reference` covered by one longest common subsequence with
/// `candidate`, in increasing order.
///
/// Backtracking prefers a diagonal match, then moving up in the reference,
/// so the chosen alignment is deterministic.
pub fn lcs_reference_positions<T: PartialEq>(reference: &[T], candidate: &[T]) -> Vec<usize> {
    let table = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut positions = Vec::with_capacity(table[i][j] as usize);
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            positions.push(i - 1);
            i -= 1;
            j -= 1;
        } else if table[i - 1][j] >= table[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    positions.reverse();
    positions
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap<K: Eq + Hash>(candidate: &HashMap<K, usize>, reference: &HashMap<K, usize>) -> usize {
    candidate.iter().map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0))).sum()
}

pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<RougeScore, RougeError> {
    rouge_n_summary(&[candidate], &[reference], n)
}

/// ROUGE-N over sentence lists; n-grams never span a sentence boundary.
pub fn rouge_n_summary<T: Eq + Hash, S: AsRef<[T]>>(
    candidate_sents: &[S],
    reference_sents: &[S],
    n: usize,
) -> Result<RougeScore, RougeError> {
    if n == 0 {
        return Err(RougeError::ZeroOrder);
    }
    let ref_len: usize = reference_sents.iter().map(|s| s.as_ref().len()).sum();
    let ref_max = reference_sents.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
    if ref_max < n {
        return Err(RougeError::ReferenceTooShort { n, len: ref_len });
    }
    let mut cand: HashMap<&[T], usize> = HashMap::new();
    let mut refs: HashMap<&[T], usize> = HashMap::new();
    for s in candidate_sents {
        for (g, c) in ngram_counts(s.as_ref(), n) {
            *cand.entry(g).or_insert(0) += c;
        }
    }
    for s in reference_sents {
        for (g, c) in ngram_counts(s.as_ref(), n) {
            *refs.entry(g).or_insert(0) += c;
        }
    }
    let n_cand: usize = cand.values().sum();
    let n_ref: usize = refs.values().sum();
    Ok(RougeScore::from_counts(clipped_overlap(&cand, &refs), n_cand, n_ref))
}

pub fn rouge_l_sentence<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<RougeScore, RougeError> {
    if reference.is_empty() {
        return Err(RougeError::EmptyReference);
    }
    Ok(RougeScore::from_counts(lcs_length(candidate, reference), candidate.len(), reference.len()))
}

pub fn rouge_l_summary<T: Eq + Hash, S: AsRef<[T]>>(
    candidate_sents: &[S],
    reference_sents: &[S],
) -> Result<RougeScore, RougeError> {
    rouge_l_summary_with(candidate_sents, reference_sents, SummaryLcsMode::Union)
}

/// Summary-level ROUGE-L.
///
/// In union mode each reference sentence contributes the union of its LCS
/// positions against every candidate sentence. A matched token counts as a
/// hit only while unconsumed copies remain in the candidate pool, which keeps
/// precision within [0, 1] when several reference sentences match the same
/// candidate words.
pub fn rouge_l_summary_with<T: Eq + Hash, S: AsRef<[T]>>(
    candidate_sents: &[S],
    reference_sents: &[S],
    mode: SummaryLcsMode,
) -> Result<RougeScore, RougeError> {
    if reference_sents.is_empty() || reference_sents.iter().any(|r| r.as_ref().is_empty()) {
        return Err(RougeError::EmptyReference);
    }
    let cand_len: usize = candidate_sents.iter().map(|s| s.as_ref().len()).sum();
    let ref_len: usize = reference_sents.iter().map(|s| s.as_ref().len()).sum();
    let hits = match mode {
        SummaryLcsMode::Concatenated => {
            let cand: Vec<&T> = candidate_sents.iter().flat_map(|s| s.as_ref()).collect();
            let refs: Vec<&T> = reference_sents.iter().flat_map(|s| s.as_ref()).collect();
            lcs_length(&cand, &refs)
        }
        SummaryLcsMode::Union => {
            let mut union_counts: HashMap<&T, usize> = HashMap::new();
            for r in reference_sents {
                let r = r.as_ref();
                let mut covered = vec![false; r.len()];
                for c in candidate_sents {
                    for p in lcs_reference_positions(r, c.as_ref()) {
                        covered[p] = true;
                    }
                }
                for (tok, _) in r.iter().zip(&covered).filter(|(_, &c)| c) {
                    *union_counts.entry(tok).or_insert(0) += 1;
                }
            }
            let mut cand_counts: HashMap<&T, usize> = HashMap::new();
            for tok in candidate_sents.iter().flat_map(|s| s.as_ref()) {
                *cand_counts.entry(tok).or_insert(0) += 1;
            }
            clipped_overlap(&union_counts, &cand_counts)
        }
    };
    Ok(RougeScore::from_counts(hits, cand_len, ref_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<u8> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            let mut it = b.iter();
            if sub.iter().all(|x| it.any(|y| y == x)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&w("the cat sat"), &w("the cat ate")), 2);
        assert_eq!(brute_lcs(b"abc", b"abd"), 2);
        let x = w("a b c a b");
        assert_eq!(lcs_length(&x, &x), 5);
        assert_eq!(lcs_length(&w("a b"), &w("c d")), 0);
        assert_eq!(lcs_length::<&str>(&[], &w("a")), 0);
    }

    #[test]
    fn lcs_positions_form_a_common_subsequence() {
        let r = w("a b c b d a b");
        let c = w("b d c a b a");
        let pos = lcs_reference_positions(&r, &c);
        assert_eq!(pos.len(), lcs_length(&r, &c));
        assert!(pos.windows(2).all(|p| p[0] < p[1]));
        let picked: Vec<&str> = pos.iter().map(|&p| r[p]).collect();
        assert_eq!(lcs_length(&picked, &c), picked.len());
    }

    #[test]
    fn rouge_n_examples() {
        let s = rouge_n(&w("a b c"), &w("a b d"), 2).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        let x = w("a b c d");
        let s = rouge_n(&x, &x, 2).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = rouge_n(&w("x"), &w("a b"), 2).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(rouge_n(&w("a b"), &w("a"), 2), Err(RougeError::ReferenceTooShort { n: 2, len: 1 }));
    }

    #[test]
    fn rouge_n_clips_repeated_ngrams() {
        let s = rouge_n(&w("the the the"), &w("the cat"), 1).unwrap();
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn rouge_l_sentence_examples() {
        let s = rouge_l_sentence(&w("the cat sat"), &w("the cat ate")).unwrap();
        let two_thirds = 2.0 / 3.0;
        assert_eq!((s.precision, s.recall), (two_thirds, two_thirds));
        assert!((s.f1 - two_thirds).abs() < 1e-15);
        let x = w("p q r");
        assert_eq!(rouge_l_sentence(&x, &x).unwrap(), RougeScore { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(rouge_l_sentence(&[], &w("a")).unwrap(), RougeScore::default());
        assert_eq!(rouge_l_sentence(&w("a"), &[]), Err(RougeError::EmptyReference));
    }

    #[test]
    fn rouge_l_summary_examples() {
        let cand = vec![w("a b"), w("c d")];
        let refs = vec![w("a b c")];
        let s = rouge_l_summary(&cand, &refs).unwrap();
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.precision, 0.75);
        assert!((s.f1 - 6.0 / 7.0).abs() < 1e-15);

        let same = vec![w("x y z"), w("y z q w")];
        assert_eq!(rouge_l_summary(&same, &same).unwrap(), RougeScore { precision: 1.0, recall: 1.0, f1: 1.0 });

        let s = rouge_l_summary(&[w("x y")], &[w("a b")]).unwrap();
        assert_eq!(s, RougeScore::default());

        let empty: Vec<Vec<&str>> = Vec::new();
        assert_eq!(rouge_l_summary(&cand, &empty), Err(RougeError::EmptyReference));
        assert_eq!(rouge_l_summary(&cand, &[w("a"), vec![]]), Err(RougeError::EmptyReference));
    }

    #[test]
    fn union_hits_clipped_by_candidate_counts() {
        // Both reference sentences match the single candidate "a".
        let s = rouge_l_summary(&[w("a")], &[w("a"), w("a")]).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn concatenated_mode_differs_from_union() {
        let cand = vec![w("c d"), w("a b")];
        let refs = vec![w("a b c")];
        let union = rouge_l_summary_with(&cand, &refs, SummaryLcsMode::Union).unwrap();
        let flat = rouge_l_summary_with(&cand, &refs, SummaryLcsMode::Concatenated).unwrap();
        assert_eq!(union.recall, 1.0);
        assert_eq!(flat.recall, 2.0 / 3.0);
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..=8)
    }

    proptest! {
        #[test]
        fn lcs_matches_enumeration(a in seq(), b in seq()) {
            let l = lcs_length(&a, &b);
            prop_assert_eq!(l, brute_lcs(&a, &b));
            prop_assert_eq!(l, lcs_length(&b, &a));
            prop_assert!(l <= a.len().min(b.len()));
        }

        #[test]
        fn sentence_recall_is_swapped_precision(a in seq(), b in seq()) {
            prop_assume!(!a.is_empty() && !b.is_empty());
            let ab = rouge_l_sentence(&a, &b).unwrap();
            let ba = rouge_l_sentence(&b, &a).unwrap();
            prop_assert_eq!(ab.recall, ba.precision);
        }

        #[test]
        fn invariant_under_renaming(a in seq(), b in seq(), perm in Just([0u8, 1, 2, 3]).prop_shuffle()) {
            prop_assume!(b.len() >= 2);
            let rename = |s: &[u8]| s.iter().map(|&x| perm[x as usize] + 10).collect::<Vec<u8>>();
            let (ra, rb) = (rename(&a), rename(&b));
            prop_assert_eq!(rouge_l_sentence(&a, &b), rouge_l_sentence(&ra, &rb));
            prop_assert_eq!(rouge_n(&a, &b, 2), rouge_n(&ra, &rb, 2));
            prop_assert_eq!(rouge_l_summary(&[&a[..]], &[&b[..]]), rouge_l_summary(&[&ra[..]], &[&rb[..]]));
        }

        #[test]
        fn single_sentence_summary_equals_sentence_level(a in seq(), b in seq()) {
            prop_assume!(!b.is_empty());
            prop_assert_eq!(rouge_l_summary(&[&a[..]], &[&b[..]]).unwrap(), rouge_l_sentence(&a, &b).unwrap());
        }

        #[test]
        fn summary_scores_in_unit_interval(
            cands in prop::collection::vec(seq(), 0..4),
            refs in prop::collection::vec(prop::collection::vec(0u8..4, 1..=8), 1..4),
        ) {
            for mode in [SummaryLcsMode::Union, SummaryLcsMode::Concatenated] {
                let s = rouge_l_summary_with(&cands, &refs, mode).unwrap();
                for v in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
