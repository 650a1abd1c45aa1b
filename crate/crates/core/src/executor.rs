//! Symbolic program execution over an image-specific knowledge graph and the
//! global knowledge base.
//!
//! Image queries range over the scene edges and answer at the label level;
//! knowledge queries range over the whole knowledge base. In a two-step
//! program whose two queries both read the image, the middle entity must be
//! the same object instance.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{ImageKnowledgeGraph, KnowledgeBase};
use crate::model::{Fact, Label, Origin};
use crate::program::{Domain, Nesting, Program, Query, QueryKind, QueryOp, Slot};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("unknown entity `{0}`: not in the image graph or the knowledge base")]
    UnknownEntity(String),
    #[error("unknown relation `{0}`: not in the image graph or the knowledge base")]
    UnknownRelation(String),
    #[error("execute_query takes a depth-1 query")]
    NestedQuery,
}

/// Distinct answers with the fact chains that support each one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSet {
    values: BTreeMap<Label, BTreeSet<Vec<Fact>>>,
}

impl AnswerSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.values.keys()
    }

    pub fn contains(&self, answer: &str) -> bool {
        Label::new(answer).is_ok_and(|l| self.values.contains_key(&l))
    }

    /// The single answer, if there is exactly one.
    pub fn unique(&self) -> Option<&Label> {
        match self.values.len() {
            1 => self.values.keys().next(),
            _ => None,
        }
    }

    pub fn provenance(&self, answer: &Label) -> Option<&BTreeSet<Vec<Fact>>> {
        self.values.get(answer)
    }

    fn insert(&mut self, answer: Label, chain: Vec<Fact>) {
        self.values.entry(answer).or_default().insert(chain);
    }

    pub fn union(&mut self, other: AnswerSet) {
        for (k, chains) in other.values {
            self.values.entry(k).or_default().extend(chains);
        }
    }
}

/// One satisfying edge. Instance ids are set for scene edges.
#[derive(Debug, Clone)]
struct Hit {
    answer: Label,
    fact: Fact,
    head_instance: Option<u32>,
    tail_instance: Option<u32>,
}

impl Hit {
    fn instance(&self, slot: Slot) -> Option<u32> {
        match slot {
            Slot::Head => self.head_instance,
            Slot::Tail => self.tail_instance,
            Slot::Relation => None,
        }
    }
}

/// Execution context for one image. Build once and reuse across programs.
pub struct Oracle<'a> {
    graph: &'a ImageKnowledgeGraph,
    kb: &'a KnowledgeBase,
    lemmas: BTreeSet<Label>,
    predicates: BTreeSet<Label>,
}

impl<'a> Oracle<'a> {
    pub fn new(graph: &'a ImageKnowledgeGraph, kb: &'a KnowledgeBase) -> Self {
        Self {
            graph,
            kb,
            lemmas: graph.lemmas(),
            predicates: graph.scene_edges.iter().map(|t| t.predicate.clone()).collect(),
        }
    }

    pub fn graph(&self) -> &ImageKnowledgeGraph {
        self.graph
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.kb
    }

    pub fn scene_lemmas(&self) -> &BTreeSet<Label> {
        &self.lemmas
    }

    fn check_operand(&self, slot: Slot, value: &Label) -> Result<(), ExecError> {
        match slot {
            Slot::Relation => {
                if self.predicates.contains(value) || self.kb.has_relation(value) {
                    Ok(())
                } else {
                    Err(ExecError::UnknownRelation(value.to_string()))
                }
            }
            Slot::Head | Slot::Tail => {
                if self.lemmas.contains(value) || self.kb.has_entity(value) {
                    Ok(())
                } else {
                    Err(ExecError::UnknownEntity(value.to_string()))
                }
            }
        }
    }

    fn check_atoms(&self, q: &Query) -> Result<(), ExecError> {
        let (s1, s2) = q.op.kind.operand_slots();
        if let Some(a) = q.first.atom() {
            self.check_operand(s1, a)?;
        }
        if let Some(b) = q.second.atom() {
            self.check_operand(s2, b)?;
        }
        Ok(())
    }

    fn hits(&self, op: QueryOp, first: &Label, second: &Label) -> Vec<Hit> {
        match op.domain {
            Domain::Image => self.image_hits(op.kind, first, second),
            Domain::Kb => self.kb_hits(op.kind, first, second),
        }
    }

    fn image_hits(&self, kind: QueryKind, first: &Label, second: &Label) -> Vec<Hit> {
        let g = self.graph;
        g.scene_edges
            .iter()
            .filter_map(|t| {
                let head = g.lemma_of(t.subject);
                let tail = g.lemma_of(t.object);
                let (ok, answer) = match kind {
                    QueryKind::Ab => (head == first && tail == second, &t.predicate),
                    QueryKind::Ar => (head == first && &t.predicate == second, tail),
                    QueryKind::Rb => (&t.predicate == first && tail == second, head),
                };
                ok.then(|| Hit {
                    answer: answer.clone(),
                    fact: g.scene_fact(t),
                    head_instance: Some(t.subject),
                    tail_instance: Some(t.object),
                })
            })
            .collect()
    }

    fn kb_hits(&self, kind: QueryKind, first: &Label, second: &Label) -> Vec<Hit> {
        let hit = |answer: &Label, t: &crate::model::KnowledgeTriplet| Hit {
            answer: answer.clone(),
            fact: t.fact(),
            head_instance: None,
            tail_instance: None,
        };
        match kind {
            QueryKind::Ab => self
                .kb
                .with_head(first)
                .filter(|t| &t.tail == second)
                .map(|t| hit(&t.relation, t))
                .collect(),
            QueryKind::Ar => self
                .kb
                .with_head(first)
                .filter(|t| &t.relation == second)
                .map(|t| hit(&t.tail, t))
                .collect(),
            QueryKind::Rb => self
                .kb
                .with_tail(second)
                .filter(|t| &t.relation == first)
                .map(|t| hit(&t.head, t))
                .collect(),
        }
    }

    /// Runs a single elementary query.
    pub fn execute_query(&self, q: &Query) -> Result<AnswerSet, ExecError> {
        let (a, b) = q.atoms().ok_or(ExecError::NestedQuery)?;
        self.check_atoms(q)?;
        let mut out = AnswerSet::default();
        for h in self.hits(q.op, a, b) {
            out.insert(h.answer, vec![h.fact]);
        }
        Ok(out)
    }

    /// Runs a program. Two-step programs evaluate the inner query, then the
    /// outer query once per inner answer, and union the results; each
    /// provenance chain lists its facts in route order.
    pub fn execute(&self, p: &Program) -> Result<AnswerSet, ExecError> {
        let Some((inner, nesting)) = p.inner() else {
            return self.execute_query(p.root());
        };
        let outer = p.root();
        self.check_atoms(outer)?;
        self.check_atoms(inner)?;
        let (ia, ib) = inner.atoms().ok_or(ExecError::NestedQuery)?;
        let inner_hits = self.hits(inner.op, ia, ib);
        let inner_yield = inner.op.kind.answer_slot();
        let outer_slot = match nesting {
            Nesting::Head => Slot::Head,
            Nesting::Tail => Slot::Tail,
        };
        let same_instance = inner.op.domain == Domain::Image && outer.op.domain == Domain::Image;

        let mut by_label: BTreeMap<&Label, Vec<&Hit>> = BTreeMap::new();
        for h in &inner_hits {
            by_label.entry(&h.answer).or_default().push(h);
        }
        let mut out = AnswerSet::default();
        for (middle, supports) in by_label {
            let outer_hits = match nesting {
                Nesting::Head => self.hits(outer.op, middle, outer.second.atom().expect("validated")),
                Nesting::Tail => self.hits(outer.op, outer.first.atom().expect("validated"), middle),
            };
            for oh in outer_hits {
                for ih in &supports {
                    if same_instance && ih.instance(inner_yield) != oh.instance(outer_slot) {
                        continue;
                    }
                    let chain = match nesting {
                        Nesting::Head => vec![ih.fact.clone(), oh.fact.clone()],
                        Nesting::Tail => vec![oh.fact.clone(), ih.fact.clone()],
                    };
                    out.insert(oh.answer.clone(), chain);
                }
            }
        }
        Ok(out)
    }

    /// Whether a value came from the image side of the graph.
    pub fn is_scene_label(&self, value: &Label) -> bool {
        self.lemmas.contains(value) || self.predicates.contains(value)
    }
}

pub fn execute_query(q: &Query, g: &ImageKnowledgeGraph, kb: &KnowledgeBase) -> Result<AnswerSet, ExecError> {
    Oracle::new(g, kb).execute_query(q)
}

pub fn execute(p: &Program, g: &ImageKnowledgeGraph, kb: &KnowledgeBase) -> Result<AnswerSet, ExecError> {
    Oracle::new(g, kb).execute(p)
}

/// Origins of a provenance chain, in route order.
pub fn chain_origins(chain: &[Fact]) -> Vec<Origin> {
    chain.iter().map(|f| f.origin).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{clean_scene_graph, merge_knowledge, RawObject, RawRelation, RawSceneGraph};
    use crate::model::{KbSource, KnowledgeTriplet};

    fn kt(h: &str, r: &str, t: &str) -> KnowledgeTriplet {
        KnowledgeTriplet {
            head: Label::new(h).unwrap(),
            relation: Label::new(r).unwrap(),
            tail: Label::new(t).unwrap(),
            surface_text: format!("{h} {r} {t}"),
            source: KbSource::Synthetic,
            reflexive: false,
        }
    }

    fn scene(objects: &[&str], rels: &[(usize, &str, usize)]) -> RawSceneGraph {
        RawSceneGraph {
            image_id: "img1".into(),
            objects: objects
                .iter()
                .map(|n| RawObject {
                    name: n.to_string(),
                    synsets: vec![format!("{n}.n.01")],
                    bbox: None,
                })
                .collect(),
            relations: rels
                .iter()
                .map(|(s, p, o)| RawRelation {
                    subject: *s,
                    predicate: p.to_string(),
                    synset: Some(format!("{p}.v.01")),
                    object: *o,
                })
                .collect(),
        }
    }

    fn fixture() -> (ImageKnowledgeGraph, KnowledgeBase) {
        let kb = KnowledgeBase::new(vec![
            kt("hotdog", "usedfor", "eat"),
            kt("car", "faster", "bicycle"),
            kt("plane", "faster", "bicycle"),
        ]);
        let raw = scene(
            &["girl", "hotdog", "car", "plate", "hotdog"],
            &[(0, "holds", 1), (1, "on", 3), (0, "near", 2)],
        );
        let g = merge_knowledge(&clean_scene_graph(&raw), &kb);
        (g, kb)
    }

    fn run(p: &str) -> Result<Vec<String>, ExecError> {
        let (g, kb) = fixture();
        let p: Program = p.parse().unwrap();
        execute(&p, &g, &kb).map(|a| a.labels().map(|l| l.to_string()).collect())
    }

    #[test]
    fn image_ar() {
        assert_eq!(run("(Qar_I girl holds)").unwrap(), ["hotdog"]);
    }

    #[test]
    fn kb_rb_returns_all_heads() {
        assert_eq!(run("(Qrb_K faster bicycle)").unwrap(), ["car", "plane"]);
    }

    #[test]
    fn image_ab_without_edge_is_empty() {
        assert!(run("(Qab_I car plate)").unwrap().is_empty());
    }

    #[test]
    fn two_step_worked_example() {
        let (g, kb) = fixture();
        let p: Program = "(Qar_K (Qar_I girl holds) UsedFor)".parse().unwrap();
        let a = execute(&p, &g, &kb).unwrap();
        assert_eq!(a.unique().unwrap().as_str(), "eat");
        let chains = a.provenance(a.unique().unwrap()).unwrap();
        let chain = chains.iter().next().unwrap();
        assert_eq!(chain_origins(chain), [Origin::Image, Origin::Kb]);
        assert_eq!(chain[0].tail, chain[1].head);
    }

    #[test]
    fn empty_inner_gives_empty_outer() {
        assert!(run("(Qar_K (Qar_I car holds) usedfor)").unwrap().is_empty());
    }

    #[test]
    fn nested_kb_filtered_by_image() {
        // plane is a KB entity absent from the scene, so it drops out
        assert_eq!(run("(Qrb_I near (Qrb_K faster bicycle))").unwrap(), ["girl"]);
    }

    #[test]
    fn image_chain_shares_instance() {
        // the held hotdog (instance 1) is on the plate; the other one is not
        assert_eq!(run("(Qar_I (Qar_I girl holds) on)").unwrap(), ["plate"]);
        let kb = fixture().1;
        let raw = scene(&["girl", "hotdog", "hotdog", "plate"], &[(0, "holds", 1), (2, "on", 3)]);
        let g2 = merge_knowledge(&clean_scene_graph(&raw), &kb);
        let p: Program = "(Qar_I (Qar_I girl holds) on)".parse().unwrap();
        assert!(execute(&p, &g2, &kb).unwrap().is_empty());
    }

    #[test]
    fn unknown_operands_are_errors() {
        assert_eq!(run("(Qar_I unicorn holds)"), Err(ExecError::UnknownEntity("unicorn".into())));
        assert_eq!(run("(Qar_I girl juggles)"), Err(ExecError::UnknownRelation("juggles".into())));
        // known to the KB but not in the image: a valid, unsatisfied query
        assert!(run("(Qar_I plane holds)").unwrap().is_empty());
    }

    #[test]
    fn duplicate_instances_answer_once() {
        let kb = KnowledgeBase::default();
        let raw = scene(&["girl", "hotdog", "hotdog"], &[(0, "holds", 1), (0, "holds", 2)]);
        let g = merge_knowledge(&clean_scene_graph(&raw), &kb);
        let a = execute(&"(Qar_I girl holds)".parse().unwrap(), &g, &kb).unwrap();
        assert_eq!(a.len(), 1);
    }
}
