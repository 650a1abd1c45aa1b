//! Shared domain types: interned labels, scene and knowledge facts, QA records
//! and the generation configuration.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::program::Program;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("label is empty after trimming")]
    EmptyLabel,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

/// A normalized (trimmed, lowercase) identifier.
///
/// Equality, ordering and hashing are by string content, so two labels built
/// from strings that normalize identically are interchangeable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Arc<str>);

pub type SynsetId = Label;
pub type EntityId = Label;
pub type RelationId = Label;

impl Label {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        let norm = normalize(raw)?;
        Ok(Label(Arc::from(norm)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Readable word for a synset label: `hot_dog.n.01` becomes `hot dog`.
    /// Labels without a sense suffix are returned with underscores replaced.
    pub fn lemma(&self) -> Label {
        let stripped = strip_sense_suffix(&self.0);
        let word = stripped.replace('_', " ");
        let word = word.trim();
        if word.is_empty() || word == &*self.0 {
            self.clone()
        } else {
            Label(Arc::from(word))
        }
    }
}

fn normalize(raw: &str) -> Result<String, ModelError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ModelError::EmptyLabel);
    }
    Ok(trimmed.to_lowercase())
}

// Strips a trailing `.<pos letter>.<digits>` pair, e.g. `.n.01`.
fn strip_sense_suffix(s: &str) -> &str {
    let mut parts = s.rsplitn(3, '.');
    let (Some(num), Some(pos), Some(stem)) = (parts.next(), parts.next(), parts.next()) else {
        return s;
    };
    let pos_ok = pos.len() == 1 && pos.chars().all(|c| c.is_ascii_lowercase());
    let num_ok = !num.is_empty() && num.chars().all(|c| c.is_ascii_digit());
    if pos_ok && num_ok && !stem.is_empty() {
        stem
    } else {
        s
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl FromStr for Label {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::new(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Label::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Append-only table that hands out shared label storage.
///
/// Interning is atomic: concurrent callers observe one table and equal inputs
/// always resolve to equal labels.
#[derive(Default)]
pub struct Interner {
    table: Mutex<HashSet<Arc<str>>>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&self, raw: &str) -> Result<Label, ModelError> {
        let norm = normalize(raw)?;
        let mut table = self.table.lock().expect("interner lock poisoned");
        if let Some(existing) = table.get(norm.as_str()) {
            return Ok(Label(existing.clone()));
        }
        let stored: Arc<str> = Arc::from(norm);
        table.insert(stored.clone());
        Ok(Label(stored))
    }

    /// Interns a batch in sorted order so the table contents do not depend on
    /// the order in which callers produced the strings.
    pub fn intern_batch<'a, I>(&self, raws: I) -> Result<Vec<Label>, ModelError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut items: Vec<&str> = raws.into_iter().collect();
        items.sort_unstable();
        items.into_iter().map(|r| self.intern(r)).collect()
    }

    pub fn resolve<'a>(&self, label: &'a Label) -> &'a str {
        label.as_str()
    }

    pub fn len(&self) -> usize {
        self.table.lock().expect("interner lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which source a reasoning edge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "IMAGE")]
    Image,
    #[serde(rename = "KB")]
    Kb,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Image => "IMAGE",
            Origin::Kb => "KB",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KbSource {
    WebChild,
    ConceptNet,
    DBpedia,
    Synthetic,
}

impl FromStr for KbSource {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "webchild" => Ok(KbSource::WebChild),
            "conceptnet" => Ok(KbSource::ConceptNet),
            "dbpedia" => Ok(KbSource::DBpedia),
            "synthetic" => Ok(KbSource::Synthetic),
            _ => Err(ModelError::UnknownVariant {
                kind: "knowledge source",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for KbSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KbSource::WebChild => "WebChild",
            KbSource::ConceptNet => "ConceptNet",
            KbSource::DBpedia => "DBpedia",
            KbSource::Synthetic => "Synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub instance_id: u32,
    pub synset: SynsetId,
    pub lemma: Label,
    pub display_name: String,
    pub bbox: Option<[f64; 4]>,
}

impl SceneObject {
    pub fn new(instance_id: u32, synset: SynsetId, display_name: String, bbox: Option<[f64; 4]>) -> Self {
        let lemma = synset.lemma();
        Self {
            instance_id,
            synset,
            lemma,
            display_name,
            bbox,
        }
    }
}

/// An image relation between two object instances of the same scene.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneTriplet {
    pub subject: u32,
    pub predicate: RelationId,
    pub predicate_synset: SynsetId,
    pub object: u32,
}

/// `(head, relation, tail)` identity of a knowledge fact.
pub type TripletKey = (EntityId, RelationId, EntityId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub surface_text: String,
    pub source: KbSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reflexive: bool,
}

impl KnowledgeTriplet {
    pub fn key(&self) -> TripletKey {
        (self.head.clone(), self.relation.clone(), self.tail.clone())
    }

    pub fn fact(&self) -> Fact {
        Fact {
            head: self.head.clone(),
            relation: self.relation.clone(),
            tail: self.tail.clone(),
            origin: Origin::Kb,
        }
    }
}

/// A label-level reasoning triplet, serialized as `[head, relation, tail, origin]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub head: Label,
    pub relation: Label,
    pub tail: Label,
    pub origin: Origin,
}

impl Fact {
    pub fn key(&self) -> TripletKey {
        (self.head.clone(), self.relation.clone(), self.tail.clone())
    }
}

impl Serialize for Fact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.head, &self.relation, &self.tail, self.origin).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (head, relation, tail, origin) = <(Label, Label, Label, Origin)>::deserialize(d)?;
        Ok(Fact {
            head,
            relation,
            tail,
            origin,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(ModelError::UnknownVariant {
                kind: "split",
                value: s.to_string(),
            }),
        }
    }
}

/// One generated question with its groundtruth program and supporting facts.
///
/// Field order is the JSONL key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub image_id: String,
    pub question: String,
    pub answer: String,
    pub qtype: u8,
    pub step: u8,
    pub kb_related: bool,
    #[serde(with = "program_string")]
    pub program: Program,
    pub reason: Vec<Fact>,
    pub split: Split,
}

mod program_string {
    use super::Program;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Program, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(p)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Program, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    QtypeOutOfRange(u8),
    StepOutOfRange(u8),
    StepReasonMismatch { step: u8, reasons: usize },
    StepQtypeMismatch { step: u8, qtype: u8 },
    ProgramQtypeMismatch { stored: u8, derived: u8 },
    ProgramDepthMismatch { depth: usize, step: u8 },
    KbFlagMismatch { kb_related: bool },
    EmptyQuestion,
    EmptyAnswer,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::QtypeOutOfRange(q) => write!(f, "qtype {q} outside 0..=6"),
            Violation::StepOutOfRange(s) => write!(f, "step {s} outside 1..=2"),
            Violation::StepReasonMismatch { step, reasons } => {
                write!(f, "step {step} but {reasons} reason triplets")
            }
            Violation::StepQtypeMismatch { step, qtype } => {
                write!(f, "step/qtype mismatch: step {step}, qtype {qtype}")
            }
            Violation::ProgramQtypeMismatch { stored, derived } => {
                write!(f, "program shape gives qtype {derived}, record says {stored}")
            }
            Violation::ProgramDepthMismatch { depth, step } => {
                write!(f, "program depth {depth} differs from step {step}")
            }
            Violation::KbFlagMismatch { kb_related } => {
                write!(f, "kb_related={kb_related} disagrees with reason origins")
            }
            Violation::EmptyQuestion => f.write_str("empty question"),
            Violation::EmptyAnswer => f.write_str("empty answer"),
        }
    }
}

/// Step count implied by a qtype: 0-2 are one-step, 3-6 two-step.
pub fn qtype_step(qtype: u8) -> Option<u8> {
    match qtype {
        0..=2 => Some(1),
        3..=6 => Some(2),
        _ => None,
    }
}

/// Returns every violated record invariant; an empty list means valid.
pub fn validate_qa(pair: &QAPair) -> Vec<Violation> {
    let mut out = Vec::new();
    if pair.qtype > 6 {
        out.push(Violation::QtypeOutOfRange(pair.qtype));
    }
    if !(1..=2).contains(&pair.step) {
        out.push(Violation::StepOutOfRange(pair.step));
    }
    if pair.reason.len() != pair.step as usize {
        out.push(Violation::StepReasonMismatch {
            step: pair.step,
            reasons: pair.reason.len(),
        });
    }
    if let Some(expected) = qtype_step(pair.qtype) {
        if expected != pair.step || expected as usize != pair.reason.len() {
            out.push(Violation::StepQtypeMismatch {
                step: pair.reason.len() as u8,
                qtype: pair.qtype,
            });
        }
    }
    let derived = pair.program.qtype();
    if derived != pair.qtype {
        out.push(Violation::ProgramQtypeMismatch {
            stored: pair.qtype,
            derived,
        });
    }
    if pair.program.depth() != pair.step as usize {
        out.push(Violation::ProgramDepthMismatch {
            depth: pair.program.depth(),
            step: pair.step,
        });
    }
    let has_kb = pair.reason.iter().any(|f| f.origin == Origin::Kb);
    if has_kb != pair.kb_related {
        out.push(Violation::KbFlagMismatch {
            kb_related: pair.kb_related,
        });
    }
    if pair.question.trim().is_empty() {
        out.push(Violation::EmptyQuestion);
    }
    if pair.answer.trim().is_empty() {
        out.push(Violation::EmptyAnswer);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed: u64,
    pub max_route_len: usize,
    pub answer_cap: usize,
    pub split_ratios: [f64; 3],
    pub max_attempts_per_image: usize,
    pub enforce_triplet_once_qtypes: BTreeSet<u8>,
    /// Reject candidates whose relations lack a phrase-table entry instead of
    /// falling back to the raw relation string.
    pub strict_surface_forms: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_route_len: 2,
            answer_cap: 100,
            split_ratios: [0.6, 0.2, 0.2],
            max_attempts_per_image: 200,
            enforce_triplet_once_qtypes: [2, 3, 5].into_iter().collect(),
            strict_surface_forms: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !(1..=2).contains(&self.max_route_len) {
            return bad(format!("max_route_len {} not in {{1, 2}}", self.max_route_len));
        }
        if self.answer_cap < 1 {
            return bad("answer_cap must be at least 1".into());
        }
        if self.max_attempts_per_image < 1 {
            return bad("max_attempts_per_image must be at least 1".into());
        }
        validate_ratios(&self.split_ratios)?;
        if let Some(q) = self.enforce_triplet_once_qtypes.iter().find(|q| **q > 6) {
            return bad(format!("qtype {q} in enforce_triplet_once_qtypes is out of range"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: GenerationConfig =
            toml::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn validate_ratios(ratios: &[f64; 3]) -> Result<(), ModelError> {
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(ModelError::InvalidConfig(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ModelError::InvalidConfig(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intern_normalizes_case() {
        let interner = Interner::new();
        let a = interner.intern("Bicycle.n.01").unwrap();
        let b = interner.intern("bicycle.n.01").unwrap();
        assert_eq!(a, b);
        assert_eq!(interner.len(), 1);
    }

    #[test]
    fn intern_rejects_empty() {
        let interner = Interner::new();
        assert_eq!(interner.intern(""), Err(ModelError::EmptyLabel));
        assert_eq!(interner.intern("  \t "), Err(ModelError::EmptyLabel));
    }

    #[test]
    fn intern_is_idempotent() {
        let interner = Interner::new();
        let a = interner.intern("umbrella").unwrap();
        let b = interner.intern("umbrella").unwrap();
        assert_eq!(a, b);
        assert!(Arc::ptr_eq(&a.0, &b.0));
    }

    #[test]
    fn lemma_strips_sense_suffix() {
        assert_eq!(Label::new("bicycle.n.01").unwrap().lemma().as_str(), "bicycle");
        assert_eq!(Label::new("hot_dog.n.01").unwrap().lemma().as_str(), "hot dog");
        assert_eq!(Label::new("st.louis").unwrap().lemma().as_str(), "st.louis");
        assert_eq!(Label::new("umbrella").unwrap().lemma().as_str(), "umbrella");
        assert_eq!(Label::new("a.b.c.n.12").unwrap().lemma().as_str(), "a.b.c");
    }

    #[test]
    fn fact_serializes_as_tuple() {
        let f = Fact {
            head: Label::new("girl").unwrap(),
            relation: Label::new("holds").unwrap(),
            tail: Label::new("hotdog").unwrap(),
            origin: Origin::Image,
        };
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"["girl","holds","hotdog","IMAGE"]"#);
        let back: Fact = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn config_defaults_and_toml() {
        let cfg = GenerationConfig::default();
        cfg.validate().unwrap();
        let parsed = GenerationConfig::from_toml("seed = 7\nanswer_cap = 5\n").unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.answer_cap, 5);
        assert_eq!(parsed.max_route_len, 2);
        assert!(GenerationConfig::from_toml("max_route_len = 3").is_err());
        assert!(GenerationConfig::from_toml("split_ratios = [0.5, 0.5, 0.5]").is_err());
        assert!(GenerationConfig::from_toml("bogus = 1").is_err());
    }

    fn pair(qtype: u8, program: &str, reason: Vec<Fact>, kb_related: bool) -> QAPair {
        QAPair {
            id: "x".into(),
            image_id: "img".into(),
            question: "q?".into(),
            answer: "a".into(),
            qtype,
            step: reason.len() as u8,
            kb_related,
            program: program.parse().unwrap(),
            reason,
            split: Split::Train,
        }
    }

    fn fact(h: &str, r: &str, t: &str, origin: Origin) -> Fact {
        Fact {
            head: Label::new(h).unwrap(),
            relation: Label::new(r).unwrap(),
            tail: Label::new(t).unwrap(),
            origin,
        }
    }

    #[test]
    fn validate_accepts_two_step_qtype5() {
        let p = pair(
            5,
            "(Qar_K (Qar_I girl holds) usedfor)",
            vec![
                fact("girl", "holds", "hotdog", Origin::Image),
                fact("hotdog", "usedfor", "eat", Origin::Kb),
            ],
            true,
        );
        assert!(validate_qa(&p).is_empty(), "{:?}", validate_qa(&p));
    }

    #[test]
    fn validate_flags_step_qtype_mismatch() {
        let mut p = pair(
            0,
            "(Qab_I girl hotdog)",
            vec![
                fact("girl", "holds", "hotdog", Origin::Image),
                fact("hotdog", "on", "plate", Origin::Image),
            ],
            false,
        );
        p.step = 2;
        let v = validate_qa(&p);
        assert!(v.iter().any(|x| x.to_string().starts_with("step/qtype mismatch")), "{v:?}");
    }

    #[test]
    fn validate_flags_kb_flag() {
        let p = pair(
            2,
            "(Qrb_K faster bicycle)",
            vec![fact("car", "faster", "bicycle", Origin::Kb)],
            false,
        );
        assert_eq!(
            validate_qa(&p),
            vec![Violation::KbFlagMismatch { kb_related: false }]
        );
    }

    proptest! {
        #[test]
        fn intern_round_trip(raw in "[ \t]{0,2}[A-Za-z0-9_.]{1,12}( [A-Za-z]{1,5})?[ \t]{0,2}") {
            let interner = Interner::new();
            let label = interner.intern(&raw).unwrap();
            prop_assert_eq!(interner.resolve(&label), raw.trim().to_lowercase());
            prop_assert_eq!(interner.intern(&raw).unwrap(), label);
        }
    }
}
