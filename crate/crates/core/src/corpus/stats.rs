use serde::{Deserialize, Serialize};

use super::{CorpusError, Document};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    /// Mean positive-label count per document; 0 without labels.
    pub avg_labels: f64,
    pub avg_sentences: f64,
    /// Mean tokens per sentence over all sentences of the corpus.
    pub avg_sentence_length: f64,
}

impl CorpusStats {
    /// Stats of the concatenation of the two corpora the inputs describe.
    ///
    /// Label and sentence averages are document-weighted; sentence length is
    /// weighted by each corpus's total sentence count.
    pub fn combine(&self, other: &CorpusStats) -> CorpusStats {
        let (na, nb) = (self.n_documents as f64, other.n_documents as f64);
        let n = na + nb;
        let (sa, sb) = (na * self.avg_sentences, nb * other.avg_sentences);
        let avg_sentence_length = if sa + sb > 0.0 {
            (sa * self.avg_sentence_length + sb * other.avg_sentence_length) / (sa + sb)
        } else {
            0.0
        };
        CorpusStats {
            n_documents: self.n_documents + other.n_documents,
            avg_labels: (na * self.avg_labels + nb * other.avg_labels) / n,
            avg_sentences: (sa + sb) / n,
            avg_sentence_length,
        }
    }
}

pub fn corpus_stats(docs: &[Document], labels: Option<&[Vec<u8>]>) -> Result<CorpusStats, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut positives = 0usize;
    if let Some(labels) = labels {
        if labels.len() != docs.len() {
            return Err(CorpusError::LabelMismatch { doc: labels.len().min(docs.len()), labels: labels.len(), sentences: docs.len() });
        }
        for (i, (doc, l)) in docs.iter().zip(labels).enumerate() {
            if l.len() != doc.sentences.len() {
                return Err(CorpusError::LabelMismatch { doc: i, labels: l.len(), sentences: doc.sentences.len() });
            }
            positives += l.iter().filter(|&&y| y == 1).count();
        }
    }
    let n = docs.len() as f64;
    let n_sentences: usize = docs.iter().map(|d| d.sentences.len()).sum();
    let n_tokens: usize = docs.iter().flat_map(|d| &d.sentences).map(|s| s.tokens.len()).sum();
    Ok(CorpusStats {
        n_documents: docs.len(),
        avg_labels: positives as f64 / n,
        avg_sentences: n_sentences as f64 / n,
        avg_sentence_length: if n_sentences == 0 { 0.0 } else { n_tokens as f64 / n_sentences as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::doc;
    use proptest::prelude::*;

    #[test]
    fn single_document_arithmetic() {
        let d = doc("a", &["one two three", "a b c d e"], &[]);
        let s = corpus_stats(&[d], Some(&[vec![1, 0]])).unwrap();
        assert_eq!(s, CorpusStats { n_documents: 1, avg_labels: 1.0, avg_sentences: 2.0, avg_sentence_length: 4.0 });
    }

    #[test]
    fn average_sentences_over_documents() {
        let a = doc("a", &["x", "y"], &[]);
        let b = doc("b", &["x", "y", "z", "w"], &[]);
        let s = corpus_stats(&[a, b], None).unwrap();
        assert_eq!(s.avg_sentences, 3.0);
        assert_eq!(s.avg_labels, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(corpus_stats(&[], None), Err(CorpusError::EmptyCorpus)));
        let d = doc("a", &["x", "y"], &[]);
        assert!(matches!(corpus_stats(&[d], Some(&[vec![1]])), Err(CorpusError::LabelMismatch { .. })));
    }

    fn arb_corpus() -> impl Strategy<Value = (Vec<Document>, Vec<Vec<u8>>)> {
        prop::collection::vec(prop::collection::vec((1usize..9, 0u8..2), 1..6), 1..5).prop_map(|spec| {
            let mut docs = Vec::new();
            let mut labels = Vec::new();
            for (i, sents) in spec.iter().enumerate() {
                let texts: Vec<String> = sents.iter().map(|(len, _)| vec!["w"; *len].join(" ")).collect();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                docs.push(doc(&format!("d{i}"), &refs, &[]));
                labels.push(sents.iter().map(|(_, y)| *y).collect());
            }
            (docs, labels)
        })
    }

    proptest! {
        #[test]
        fn concatenation_matches_weighted_combination((da, la) in arb_corpus(), (db, lb) in arb_corpus()) {
            let sa = corpus_stats(&da, Some(&la)).unwrap();
            let sb = corpus_stats(&db, Some(&lb)).unwrap();
            let docs: Vec<Document> = da.iter().chain(&db).cloned().collect();
            let labels: Vec<Vec<u8>> = la.iter().chain(&lb).cloned().collect();
            let whole = corpus_stats(&docs, Some(&labels)).unwrap();
            let combined = sa.combine(&sb);
            prop_assert_eq!(whole.n_documents, combined.n_documents);
            prop_assert!((whole.avg_labels - combined.avg_labels).abs() < 1e-12);
            prop_assert!((whole.avg_sentences - combined.avg_sentences).abs() < 1e-12);
            prop_assert!((whole.avg_sentence_length - combined.avg_sentence_length).abs() < 1e-12);
        }
    }
}
