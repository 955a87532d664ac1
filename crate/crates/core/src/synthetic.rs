//! Seeded synthetic corpora for tests, ablations and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Document, SectionClass, Sentence, Token};
use crate::oracle::{LabeledDocument, TraceStep};
use crate::rouge;

/// Token used by [`marker_corpus`] to flag the sentence before a positive one.
pub const MARKER: &str = "marker";

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub vocab: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub highlights: usize,
    pub highlight_len: usize,
    pub asjc_codes: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab: 50,
            min_sentences: 8,
            max_sentences: 16,
            min_len: 4,
            max_len: 12,
            highlights: 4,
            highlight_len: 8,
            asjc_codes: 5,
        }
    }
}

fn word(i: usize) -> Token {
    Token::new(format!("w{i}")).expect("synthetic words are valid tokens")
}

fn random_words<R: Rng>(rng: &mut R, vocab: usize, len: usize) -> Vec<Token> {
    (0..len).map(|_| word(rng.gen_range(0..vocab))).collect()
}

const SECTION_TITLES: [(&str, SectionClass); 7] = [
    ("Introduction", SectionClass::Introduction),
    ("Related work", SectionClass::RelatedWork),
    ("Methods", SectionClass::Methods),
    ("Results", SectionClass::Results),
    ("Discussion", SectionClass::Discussions),
    ("Conclusions", SectionClass::Conclusion),
    ("Acknowledgements", SectionClass::Other),
];

/// A document of random words. About half of the highlights are noisy copies
/// of document sentences so that greedy labelling has real signal to find.
pub fn random_document<R: Rng>(rng: &mut R, id: &str, spec: &SyntheticSpec) -> Document {
    let n = rng.gen_range(spec.min_sentences..=spec.max_sentences);
    let mut sentences = Vec::with_capacity(n);
    let mut section = rng.gen_range(0..SECTION_TITLES.len());
    for index in 0..n {
        if rng.gen_bool(0.2) {
            section = rng.gen_range(0..SECTION_TITLES.len());
        }
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let (title, class) = SECTION_TITLES[section];
        sentences.push(Sentence {
            index,
            tokens: random_words(rng, spec.vocab, len),
            section: class,
            raw_section_title: title.to_string(),
        });
    }
    let highlights = (0..spec.highlights)
        .map(|h| {
            if h % 2 == 0 && n > 0 {
                let source = &sentences[rng.gen_range(0..n)].tokens;
                source
                    .iter()
                    .map(|t| if rng.gen_bool(0.25) { word(rng.gen_range(0..spec.vocab)) } else { t.clone() })
                    .collect()
            } else {
                random_words(rng, spec.vocab, spec.highlight_len.max(1))
            }
        })
        .collect();
    let n_codes = rng.gen_range(0..=2.min(spec.asjc_codes));
    Document {
        id: id.to_string(),
        title_tokens: random_words(rng, spec.vocab, 5),
        abstract_tokens: random_words(rng, spec.vocab, 20),
        key_phrases: (0..2).map(|_| random_words(rng, spec.vocab, 2)).collect(),
        sentences,
        highlights,
        asjc_codes: (0..n_codes).map(|_| format!("{}", 1000 + rng.gen_range(0..spec.asjc_codes.max(1)))).collect(),
    }
}

pub fn random_corpus<R: Rng>(rng: &mut R, n_docs: usize, spec: &SyntheticSpec) -> Vec<Document> {
    (0..n_docs).map(|i| random_document(rng, &format!("doc{i:05}"), spec)).collect()
}

/// Documents where a sentence is positive exactly when the preceding sentence
/// contains [`MARKER`]. Sentence content is otherwise drawn from one
/// distribution, so a model that scores sentences in isolation cannot tell
/// positives apart. Highlights are copies of the positive sentences.
pub fn marker_corpus<R: Rng>(
    rng: &mut R,
    n_docs: usize,
    n_sentences: usize,
    positives: usize,
    spec: &SyntheticSpec,
) -> Vec<LabeledDocument> {
    assert!(n_sentences >= 3 * positives, "need room for marker/positive/gap triples");
    (0..n_docs)
        .map(|d| {
            // Choose marker slots with at least one free sentence between pairs.
            let slots = n_sentences - 3 * positives + positives;
            let mut picks: Vec<usize> = rand::seq::index::sample(rng, slots, positives).into_vec();
            picks.sort_unstable();
            let markers: Vec<usize> = picks.iter().enumerate().map(|(k, &p)| p + 2 * k).collect();

            let mut labels = vec![0u8; n_sentences];
            let mut sentences = Vec::with_capacity(n_sentences);
            for index in 0..n_sentences {
                let len = rng.gen_range(spec.min_len..=spec.max_len);
                let mut tokens = random_words(rng, spec.vocab, len);
                if markers.contains(&index) {
                    let at = rng.gen_range(0..tokens.len());
                    tokens[at] = Token::new(MARKER).expect("valid token");
                }
                if index > 0 && markers.contains(&(index - 1)) {
                    labels[index] = 1;
                }
                let (title, class) = SECTION_TITLES[(index * SECTION_TITLES.len()) / n_sentences];
                sentences.push(Sentence { index, tokens, section: class, raw_section_title: title.to_string() });
            }
            let highlights: Vec<Vec<Token>> =
                (0..n_sentences).filter(|&i| labels[i] == 1).map(|i| sentences[i].tokens.clone()).collect();
            let positive_idx: Vec<usize> = (0..n_sentences).filter(|&i| labels[i] == 1).collect();
            let trace = (1..=positive_idx.len())
                .map(|k| {
                    let cand: Vec<&[Token]> = positive_idx[..k].iter().map(|&i| sentences[i].tokens.as_slice()).collect();
                    let refs: Vec<&[Token]> = highlights.iter().map(Vec::as_slice).collect();
                    let score = rouge::rouge_l_summary(&cand, &refs).map(|s| s.f1).unwrap_or(0.0);
                    TraceStep { index: positive_idx[k - 1], score }
                })
                .collect();
            let doc = Document {
                id: format!("m{d:05}"),
                title_tokens: random_words(rng, spec.vocab, 4),
                abstract_tokens: random_words(rng, spec.vocab, 12),
                key_phrases: Vec::new(),
                sentences,
                highlights,
                asjc_codes: vec![format!("{}", 1000 + rng.gen_range(0..spec.asjc_codes.max(1)))],
            };
            LabeledDocument { doc, labels, trace }
        })
        .collect()
}

/// Shuffles the sentence order of a labelled document; labels travel with
/// their sentences and the trace is remapped.
pub fn shuffle_sentences<R: Rng>(rng: &mut R, labeled: &LabeledDocument) -> LabeledDocument {
    let n = labeled.doc.sentences.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut new_pos = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_pos[old] = new;
    }
    LabeledDocument {
        doc: labeled.doc.reordered(&order),
        labels: order.iter().map(|&old| labeled.labels[old]).collect(),
        trace: labeled.trace.iter().map(|t| TraceStep { index: new_pos[t.index], score: t.score }).collect(),
    }
}
