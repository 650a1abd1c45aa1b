use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::executor::{AnswerSet, Oracle};
use crate::graph::{ImageKnowledgeGraph, KnowledgeBase};
use crate::model::{Fact, GenerationConfig, Label, Origin, TripletKey};
use crate::program::{Domain, Nesting, Program, Query, QueryKind, Slot};

/// An executed program waiting for admission.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub program: Program,
    pub qtype: u8,
    pub answers: AnswerSet,
    /// Supporting facts in route order.
    pub reason: Vec<Fact>,
}

impl Candidate {
    pub fn kb_related(&self) -> bool {
        self.reason.iter().any(|f| f.origin == Origin::Kb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    NoAnswer,
    Ambiguous,
    AnswerCap,
    KnowledgeReused,
    Ungrounded,
    Duplicate,
    IncompatibleKinds,
    Execution,
    MissingSurfaceForm,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NoAnswer => "no_answer",
            RejectReason::Ambiguous => "ambiguous",
            RejectReason::AnswerCap => "answer_cap",
            RejectReason::KnowledgeReused => "knowledge_reused",
            RejectReason::Ungrounded => "ungrounded",
            RejectReason::Duplicate => "duplicate",
            RejectReason::IncompatibleKinds => "incompatible_kinds",
            RejectReason::Execution => "execution_error",
            RejectReason::MissingSurfaceForm => "missing_surface_form",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Accept,
    Reject(RejectReason),
}

/// Global constraint state shared by every image of a generation run.
#[derive(Debug, Clone, Default)]
pub struct ConstraintLedger {
    answer_counts: BTreeMap<(u8, Label), usize>,
    used_knowledge: BTreeSet<TripletKey>,
}

impl ConstraintLedger {
    pub fn answer_count(&self, qtype: u8, answer: &Label) -> usize {
        self.answer_counts.get(&(qtype, answer.clone())).copied().unwrap_or(0)
    }

    pub fn is_used(&self, key: &TripletKey) -> bool {
        self.used_knowledge.contains(key)
    }

    pub fn used_knowledge(&self) -> &BTreeSet<TripletKey> {
        &self.used_knowledge
    }

    /// Checks every admission rule and, on acceptance, records the answer
    /// and the knowledge the candidate used.
    pub fn admit(&mut self, c: &Candidate, oracle: &Oracle<'_>, cfg: &GenerationConfig) -> Admission {
        let answer = match c.answers.len() {
            0 => return Admission::Reject(RejectReason::NoAnswer),
            1 => c.answers.unique().expect("one answer").clone(),
            _ => return Admission::Reject(RejectReason::Ambiguous),
        };
        let kb_related = c.kb_related();
        if kb_related && self.answer_count(c.qtype, &answer) >= cfg.answer_cap {
            return Admission::Reject(RejectReason::AnswerCap);
        }
        let once = cfg.enforce_triplet_once_qtypes.contains(&c.qtype);
        let kb_keys: Vec<TripletKey> = c
            .reason
            .iter()
            .filter(|f| f.origin == Origin::Kb)
            .map(Fact::key)
            .collect();
        if once && kb_keys.iter().any(|k| self.used_knowledge.contains(k)) {
            return Admission::Reject(RejectReason::KnowledgeReused);
        }
        if matches!(c.qtype, 2 | 5)
            && oracle.scene_lemmas().contains(&answer)
            && c.program.consults(Domain::Kb)
            && !grounded(c, oracle)
        {
            return Admission::Reject(RejectReason::Ungrounded);
        }
        if kb_related {
            *self.answer_counts.entry((c.qtype, answer)).or_default() += 1;
        }
        if once {
            self.used_knowledge.extend(kb_keys);
        }
        Admission::Accept
    }
}

/// Pairs each query of the program with the reason fact it reads.
fn query_facts(c: &Candidate) -> Vec<(&Query, &Fact)> {
    match c.program.inner() {
        None => c.reason.first().map(|f| vec![(c.program.root(), f)]).unwrap_or_default(),
        Some((inner, nesting)) => {
            let (Some(first), Some(second)) = (c.reason.first(), c.reason.get(1)) else {
                return Vec::new();
            };
            match nesting {
                Nesting::Head => vec![(inner, first), (c.program.root(), second)],
                Nesting::Tail => vec![(c.program.root(), first), (inner, second)],
            }
        }
    }
}

fn slot_value(f: &crate::model::KnowledgeTriplet, slot: Slot) -> &Label {
    match slot {
        Slot::Head => &f.head,
        Slot::Relation => &f.relation,
        Slot::Tail => &f.tail,
    }
}

/// An image-side answer reached through the knowledge base must be the only
/// one of several knowledge candidates that is present in the image: every
/// knowledge query needs at least two satisfying triplets, exactly one of
/// which yields a scene object.
fn grounded(c: &Candidate, oracle: &Oracle<'_>) -> bool {
    let kb = oracle.kb();
    let lemmas = oracle.scene_lemmas();
    query_facts(c)
        .into_iter()
        .filter(|(q, _)| q.op.domain == Domain::Kb)
        .all(|(q, fact)| {
            let known: Vec<_> = match q.op.kind {
                QueryKind::Ab => kb.with_head(&fact.head).filter(|t| t.tail == fact.tail).collect(),
                QueryKind::Ar => kb.with_head(&fact.head).filter(|t| t.relation == fact.relation).collect(),
                QueryKind::Rb => kb.with_tail(&fact.tail).filter(|t| t.relation == fact.relation).collect(),
            };
            let answer_slot = q.op.kind.answer_slot();
            let in_scene = known
                .iter()
                .filter(|t| lemmas.contains(slot_value(t, answer_slot)))
                .count();
            known.len() >= 2 && in_scene == 1
        })
}

/// Free-function form of [`ConstraintLedger::admit`].
pub fn admit(
    candidate: &Candidate,
    ledger: &mut ConstraintLedger,
    g: &ImageKnowledgeGraph,
    kb: &KnowledgeBase,
    cfg: &GenerationConfig,
) -> Admission {
    ledger.admit(candidate, &Oracle::new(g, kb), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::execute;
    use crate::generator::tests::{girl_graph, kb_fixture};

    fn candidate(g: &ImageKnowledgeGraph, kb: &KnowledgeBase, program: &str, reason: Vec<Fact>) -> Candidate {
        let program: Program = program.parse().unwrap();
        Candidate {
            qtype: program.qtype(),
            answers: execute(&program, g, kb).unwrap(),
            program,
            reason,
        }
    }

    fn fact(h: &str, r: &str, t: &str, origin: Origin) -> Fact {
        Fact {
            head: h.parse().unwrap(),
            relation: r.parse().unwrap(),
            tail: t.parse().unwrap(),
            origin,
        }
    }

    #[test]
    fn ambiguous_relation_rejected() {
        let kb = kb_fixture(&[]);
        let g = girl_graph(&["man", "umbrella"], &[(0, "holds", 1), (0, "near", 1)], &kb);
        let c = candidate(&g, &kb, "(Qab_I man umbrella)", vec![fact("man", "holds", "umbrella", Origin::Image)]);
        let mut ledger = ConstraintLedger::default();
        assert_eq!(
            admit(&c, &mut ledger, &g, &kb, &GenerationConfig::default()),
            Admission::Reject(RejectReason::Ambiguous)
        );
        let c = candidate(&g, &kb, "(Qar_I umbrella holds)", vec![]);
        assert_eq!(
            admit(&c, &mut ledger, &g, &kb, &GenerationConfig::default()),
            Admission::Reject(RejectReason::NoAnswer)
        );
    }

    #[test]
    fn answer_cap_applies_to_kb_questions() {
        let kb = kb_fixture(&[("hotdog", "usedfor", "eat")]);
        let g = girl_graph(&["girl", "hotdog"], &[(0, "holds", 1)], &kb);
        let reason = vec![
            fact("girl", "holds", "hotdog", Origin::Image),
            fact("hotdog", "usedfor", "eat", Origin::Kb),
        ];
        let c = candidate(&g, &kb, "(Qar_K (Qar_I girl holds) usedfor)", reason);
        let cfg = GenerationConfig {
            enforce_triplet_once_qtypes: BTreeSet::new(),
            ..Default::default()
        };
        let mut ledger = ConstraintLedger::default();
        for _ in 0..100 {
            assert_eq!(admit(&c, &mut ledger, &g, &kb, &cfg), Admission::Accept);
        }
        assert_eq!(ledger.answer_count(5, &"eat".parse().unwrap()), 100);
        assert_eq!(admit(&c, &mut ledger, &g, &kb, &cfg), Admission::Reject(RejectReason::AnswerCap));
    }

    #[test]
    fn image_only_answers_are_uncapped() {
        let kb = kb_fixture(&[]);
        let g = girl_graph(&["girl", "hotdog"], &[(0, "holds", 1)], &kb);
        let c = candidate(&g, &kb, "(Qar_I girl holds)", vec![fact("girl", "holds", "hotdog", Origin::Image)]);
        let cfg = GenerationConfig {
            answer_cap: 1,
            ..Default::default()
        };
        let mut ledger = ConstraintLedger::default();
        for _ in 0..5 {
            assert_eq!(admit(&c, &mut ledger, &g, &kb, &cfg), Admission::Accept);
        }
    }

    #[test]
    fn knowledge_used_once_for_enforced_qtypes() {
        let kb = kb_fixture(&[("hotdog", "usedfor", "eat")]);
        let g = girl_graph(&["girl", "hotdog"], &[(0, "holds", 1)], &kb);
        let reason = vec![
            fact("girl", "holds", "hotdog", Origin::Image),
            fact("hotdog", "usedfor", "eat", Origin::Kb),
        ];
        let c5 = candidate(&g, &kb, "(Qar_K (Qar_I girl holds) usedfor)", reason.clone());
        let c4 = candidate(&g, &kb, "(Qab_I girl (Qrb_K usedfor eat))", reason.clone());
        let c3 = candidate(&g, &kb, "(Qab_K (Qar_I girl holds) eat)", reason);
        let cfg = GenerationConfig::default();
        let mut ledger = ConstraintLedger::default();
        assert_eq!(admit(&c5, &mut ledger, &g, &kb, &cfg), Admission::Accept);
        // qtype 4 is outside the enforced set
        assert_eq!(admit(&c4, &mut ledger, &g, &kb, &cfg), Admission::Accept);
        assert_eq!(admit(&c3, &mut ledger, &g, &kb, &cfg), Admission::Reject(RejectReason::KnowledgeReused));
    }

    #[test]
    fn grounded_image_answer_through_kb() {
        // only the car is in the image; the plane is a second KB candidate
        let kb = kb_fixture(&[("car", "faster", "bicycle"), ("plane", "faster", "bicycle"), ("man", "faster", "snail")]);
        let g = girl_graph(&["man", "car"], &[(0, "near", 1)], &kb);
        let reason = vec![
            fact("man", "near", "car", Origin::Image),
            fact("car", "faster", "bicycle", Origin::Kb),
        ];
        let c = candidate(&g, &kb, "(Qrb_I near (Qrb_K faster bicycle))", reason);
        assert_eq!(c.answers.unique().unwrap().as_str(), "man");
        let cfg = GenerationConfig::default();
        assert_eq!(admit(&c, &mut ConstraintLedger::default(), &g, &kb, &cfg), Admission::Accept);
    }

    #[test]
    fn qtype5_image_answer_needs_grounding() {
        // (Qar_I (Qar_K bone desires) near): the dog is the only desirer in the scene
        let grounded_kb = kb_fixture(&[("bone", "desiredby", "dog"), ("bone", "desiredby", "wolf")]);
        let g = girl_graph(&["dog", "bowl"], &[(0, "near", 1)], &grounded_kb);
        let reason = vec![
            fact("bone", "desiredby", "dog", Origin::Kb),
            fact("dog", "near", "bowl", Origin::Image),
        ];
        let c = candidate(&g, &grounded_kb, "(Qar_I (Qar_K bone desiredby) near)", reason.clone());
        assert_eq!(c.qtype, 5);
        assert_eq!(c.answers.unique().unwrap().as_str(), "bowl");
        let cfg = GenerationConfig::default();
        assert_eq!(admit(&c, &mut ConstraintLedger::default(), &g, &grounded_kb, &cfg), Admission::Accept);

        let lone_kb = kb_fixture(&[("bone", "desiredby", "dog")]);
        let g = girl_graph(&["dog", "bowl"], &[(0, "near", 1)], &lone_kb);
        let c = candidate(&g, &lone_kb, "(Qar_I (Qar_K bone desiredby) near)", reason);
        assert_eq!(
            admit(&c, &mut ConstraintLedger::default(), &g, &lone_kb, &cfg),
            Admission::Reject(RejectReason::Ungrounded)
        );
    }

    #[test]
    fn rejection_leaves_ledger_untouched() {
        let kb = kb_fixture(&[("hotdog", "usedfor", "eat")]);
        let g = girl_graph(&["girl", "hotdog"], &[(0, "holds", 1)], &kb);
        let reason = vec![
            fact("girl", "holds", "hotdog", Origin::Image),
            fact("hotdog", "usedfor", "eat", Origin::Kb),
        ];
        let c = candidate(&g, &kb, "(Qar_K (Qar_I girl holds) usedfor)", reason);
        let cfg = GenerationConfig {
            answer_cap: 1,
            ..Default::default()
        };
        let mut ledger = ConstraintLedger::default();
        assert_eq!(admit(&c, &mut ledger, &g, &kb, &cfg), Admission::Accept);
        let before = ledger.used_knowledge().len();
        assert_eq!(admit(&c, &mut ledger, &g, &kb, &cfg), Admission::Reject(RejectReason::AnswerCap));
        assert_eq!(ledger.used_knowledge().len(), before);
    }
}
