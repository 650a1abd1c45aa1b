//! Supporting-fact retrieval: tf-idf ranking of question nouns, then the
//! knowledge triplets incident to the entities those nouns name.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::Serialize;

use crate::graph::KnowledgeBase;
use crate::model::{KnowledgeTriplet, Label};

pub const DEFAULT_K: usize = 16;

const STOP_WORDS: &str = "a about above after again against all am an and any are as at be because been before \
being below between both but by can could did do does doing down during each few for from further had has have \
having he her here hers him his how i if in into is it its itself just me more most my no nor not now of off on \
once only or other our out over own same she should so some such than that the their them then there these they \
this those through to too under until up very was we were what when where which while who whom why will with \
would you your";

const TEMPLATE_WORDS: &str = "relationship relation object kind thing something someone picture image photo shown";

const PHRASES: &str = include_str!("../data/relation_phrases.tsv");

fn lexicon() -> &'static BTreeSet<String> {
    static WORDS: OnceLock<BTreeSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        let mut w: BTreeSet<String> = STOP_WORDS.split_whitespace().chain(TEMPLATE_WORDS.split_whitespace()).map(String::from).collect();
        for line in PHRASES.lines().filter(|l| !l.starts_with('#')) {
            w.extend(tokenize(line));
        }
        w
    })
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn looks_like_noun(token: &str) -> bool {
    if token.chars().all(|c| c.is_ascii_digit()) || lexicon().contains(token) {
        return false;
    }
    let long = token.chars().count() > 4;
    !(long && (token.ends_with("ing") || token.ends_with("ly") || token.ends_with("ed")))
}

/// Noun-like tokens of `question` in order of appearance, repeats kept.
pub fn extract_nouns(question: &str) -> Vec<String> {
    tokenize(question).into_iter().filter(|t| looks_like_noun(t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedNoun {
    pub noun: String,
    pub score: f64,
}

/// Document frequencies of nouns over a question collection.
#[derive(Debug, Clone, Default)]
pub struct NounIndex {
    docs: usize,
    df: HashMap<String, usize>,
}

impl NounIndex {
    pub fn new<'a, I: IntoIterator<Item = &'a str>>(corpus: I) -> Self {
        let mut idx = NounIndex::default();
        for q in corpus {
            idx.docs += 1;
            let distinct: BTreeSet<String> = extract_nouns(q).into_iter().collect();
            for n in distinct {
                *idx.df.entry(n).or_default() += 1;
            }
        }
        idx
    }

    pub fn docs(&self) -> usize {
        self.docs
    }

    pub fn idf(&self, noun: &str) -> f64 {
        let df = self.df.get(noun).copied().unwrap_or(0);
        (self.docs as f64 / (1 + df) as f64).ln()
    }

    /// Nouns of `question` by descending tf-idf, ties alphabetical.
    pub fn rank(&self, question: &str) -> Vec<RankedNoun> {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for n in extract_nouns(question) {
            *tf.entry(n).or_default() += 1;
        }
        let mut ranked: Vec<RankedNoun> = tf
            .into_iter()
            .map(|(noun, c)| RankedNoun {
                score: c as f64 * self.idf(&noun),
                noun,
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.noun.cmp(&b.noun)));
        ranked
    }
}

pub fn rank_nouns(question: &str, corpus: &[&str]) -> Vec<String> {
    NounIndex::new(corpus.iter().copied())
        .rank(question)
        .into_iter()
        .map(|r| r.noun)
        .collect()
}

/// Up to `k` triplets incident to the KB entities named by `nouns`, taken
/// noun by noun and in triplet-key order within a noun.
pub fn retrieve_facts(nouns: &[String], kb: &KnowledgeBase, k: usize) -> Vec<KnowledgeTriplet> {
    let mut out: Vec<KnowledgeTriplet> = Vec::new();
    let mut seen = BTreeSet::new();
    for noun in nouns {
        if out.len() >= k {
            break;
        }
        let Ok(entity) = Label::new(noun) else { continue };
        let mut incident: Vec<&KnowledgeTriplet> = kb.incident(&entity).collect();
        incident.sort_by_key(|t| t.key());
        for t in incident {
            if out.len() >= k {
                break;
            }
            if seen.insert(t.key()) {
                out.push(t.clone());
            }
        }
    }
    out
}
