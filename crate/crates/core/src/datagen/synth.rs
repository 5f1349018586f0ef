//! Synthetic rationale-based retrieval tasks.
//!
//! Each document is a short "strategy" text; each query hides a pair of
//! signal words whose combination — via a fixed rule table — determines the
//! one relevant strategy. Query vocabulary (lowercase pseudo-words) and
//! document vocabulary (uppercase words) are disjoint by construction, so no
//! surface-overlap ranker can recover the mapping: relevance lives entirely
//! in the compositional rule, a miniature of retrieval tasks where a
//! rationale rather than similarity links query to document.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{DocRec, QueryRec, RetrievalDataset, Split};
use crate::error::{Error, Result};

/// Generator settings. The rule table maps a (first-signal, second-signal)
/// pair to a document index: `doc = a · |B| + b`, where `|A| · |B| = n_docs`.
/// With the default 8 documents, `|A| = 4` and `|B| = 2`, so neither signal
/// alone identifies the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthRule {
    pub seed: u64,
    pub n_docs: usize,
    /// Size of the signal vocabulary; must cover `|A| + |B|`.
    pub n_signal_tokens: usize,
}

impl Default for SynthRule {
    fn default() -> Self {
        SynthRule { seed: 0, n_docs: 8, n_signal_tokens: 6 }
    }
}

/// Lowercase signal pseudo-words. Each starts with a distinct consonant
/// from `{b..p}`, and filler words avoid those consonants entirely, so the
/// signal identity is recoverable from single bytes — deliberately easy at
/// the byte level, because the task's difficulty is meant to live in the
/// compositional pair→strategy rule, not in spelling.
const SIGNAL_WORDS: [&str; 12] =
    ["bi", "ca", "du", "fe", "go", "hi", "ja", "ke", "lo", "mu", "na", "po"];
/// Lowercase filler pseudo-words drawn from the complementary letter set
/// `{a,e,i,o,u,r,s,t,v,w,y,z}`: they share no consonant with any signal word.
const FILLER_WORDS: [&str; 8] =
    ["rose", "wavy", "zest", "suet", "oats", "rove", "wiry", "toast"];
/// Uppercase descriptor words for strategy documents, all the same length so
/// every document text has identical byte length and the rule code lands at
/// a fixed position inside the padded slot.
const DOC_WORDS: [&str; 16] = [
    "STORM", "GLASS", "EMBER", "FROST", "QUILL", "RIDGE", "THORN", "BLAZE", "CRANE", "DRIFT",
    "PLUME", "SHARD", "KNOLL", "VAPOR", "WHEAT", "TULIP",
];

fn factor_pools(n_docs: usize) -> (usize, usize) {
    // |B| = smallest prime factor, |A| = n_docs / |B|; for prime pools this
    // degenerates to |A| = 1 and the second signal alone decides.
    let b = (2..=n_docs).find(|f| n_docs % f == 0).unwrap_or(n_docs);
    (n_docs / b, b)
}

fn signal_word(i: usize) -> String {
    SIGNAL_WORDS[i].to_string()
}

fn doc_code(i: usize) -> String {
    format!("{}{}", (b'A' + (i / 26) as u8) as char, (b'A' + (i % 26) as u8) as char)
}

/// Generate a dataset with `n_train`/`n_dev`/`n_test` queries per split.
///
/// Train and dev queries draw their rule-table case from a skewed (inverse
/// linear) distribution — see the comment at the sampling site for why flat
/// frequencies make the task unlearnable at toy scale — while test queries
/// cycle so every case is evaluated evenly. All draws come from one ChaCha8
/// stream, so the same rule yields a byte-identical dataset.
pub fn synth_task(
    rule: &SynthRule,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
) -> Result<RetrievalDataset> {
    if rule.n_docs < 2 {
        return Err(Error::validation("synth task needs at least 2 documents"));
    }
    let (na, nb) = factor_pools(rule.n_docs);
    if na + nb > rule.n_signal_tokens {
        return Err(Error::structural(format!(
            "signal vocabulary exhausted: need {} words ({}+{}), have {}",
            na + nb,
            na,
            nb,
            rule.n_signal_tokens
        )));
    }
    if rule.n_signal_tokens > SIGNAL_WORDS.len() || na + nb > SIGNAL_WORDS.len() {
        return Err(Error::structural(format!(
            "signal vocabulary exhausted: at most {} distinct signal words",
            SIGNAL_WORDS.len()
        )));
    }
    if rule.n_docs > DOC_WORDS.len() * DOC_WORDS.len() {
        return Err(Error::structural("document vocabulary exhausted"));
    }

    let words_a: Vec<String> = (0..na).map(signal_word).collect();
    let words_b: Vec<String> = (na..na + nb).map(signal_word).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rule.seed);
    let mut pool = Vec::with_capacity(rule.n_docs);
    for i in 0..rule.n_docs {
        let w1 = DOC_WORDS[i % DOC_WORDS.len()];
        let w2 = DOC_WORDS[(i * 7 + 3) % DOC_WORDS.len()];
        // Short on purpose: documents must fit the 32-byte slot unclipped.
        let text = format!("RULE {}: {} {}", doc_code(i), w1, w2);
        pool.push(DocRec { id: format!("d{i}"), text });
    }

    // Training and dev queries follow a skewed type distribution; the test
    // split cycles evenly so every rule-table case is measured with equal
    // weight. The skew is not cosmetic: under a uniform type distribution
    // every single-token feature has exactly zero correlation with the
    // relevance label (each document is positive for exactly one query type,
    // each signal word co-occurs equally often with every document), so a
    // fresh model gets no first-order gradient off the base-rate plateau.
    // Uneven frequencies give each document a distinct positive rate, which
    // bootstraps attention onto the rule code; the signal words then carry
    // conditional first-order signal, and the pair rule becomes learnable at
    // toy scale. The weights factor over the two signals, `w = u[a] * v[b]`,
    // so the frequency ratio between the two members of every code pair is
    // the same everywhere: the second (binary) signal keeps a coherent
    // gradient in all pairs instead of one that decays with the pair's rank.
    let u = |a: usize| 0.62f64.powi(a as i32);
    let v = |b: usize| 0.42f64.powi(b as i32);
    let type_weights: Vec<f64> = (0..rule.n_docs).map(|i| u(i / nb) * v(i % nb)).collect();
    let weighted = WeightedIndex::new(&type_weights)
        .map_err(|e| Error::structural(format!("query type weights: {e}")))?;

    let mut queries = Vec::new();
    let mut positives = BTreeMap::new();
    let mut counter = 0usize;
    for (split, n) in [(Split::Train, n_train), (Split::Dev, n_dev), (Split::Test, n_test)] {
        for i in 0..n {
            let doc_idx =
                if split == Split::Test { i % rule.n_docs } else { weighted.sample(&mut rng) };
            let (a, b) = (doc_idx / nb, doc_idx % nb);
            let mut parts: Vec<String> = Vec::new();
            if rng.gen_bool(0.5) {
                parts.push(FILLER_WORDS.choose(&mut rng).unwrap().to_string());
            }
            parts.push(words_a[a].clone());
            if rng.gen_bool(0.5) {
                parts.push(FILLER_WORDS.choose(&mut rng).unwrap().to_string());
            }
            parts.push(words_b[b].clone());
            if rng.gen_bool(0.5) {
                parts.push(FILLER_WORDS.choose(&mut rng).unwrap().to_string());
            }
            let id = format!("q{counter:04}");
            counter += 1;
            positives.insert(id.clone(), BTreeSet::from([format!("d{doc_idx}")]));
            queries.push(QueryRec { id, text: parts.join(" "), split });
        }
    }

    let dataset = RetrievalDataset { pool, queries, positives };
    dataset.validate()?;
    Ok(dataset)
}
