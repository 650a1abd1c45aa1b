use rand::seq::SliceRandom;
use rand::Rng;

use super::GenError;
use crate::graph::ImageKnowledgeGraph;
use crate::model::{Fact, Origin};
use crate::program::{Domain, Operand, Program, Query, QueryKind, QueryOp};

/// One edge of a sampled route. Scene edges keep their instance ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLink {
    pub fact: Fact,
    pub head_instance: Option<u32>,
    pub tail_instance: Option<u32>,
}

impl ChainLink {
    fn follows(&self, prev: &ChainLink) -> bool {
        if self == prev || prev.fact.tail != self.fact.head {
            return false;
        }
        match (prev.tail_instance, self.head_instance) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
}

/// One or two linked triplets `(a, r1, b)-(b, r2, c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletChain {
    pub links: Vec<ChainLink>,
}

impl TripletChain {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn facts(&self) -> Vec<Fact> {
        self.links.iter().map(|l| l.fact.clone()).collect()
    }

    /// Shared middle label for two-link chains.
    pub fn middle(&self) -> Option<&crate::model::Label> {
        (self.links.len() == 2).then(|| &self.links[0].fact.tail)
    }
}

fn all_links(g: &ImageKnowledgeGraph) -> Vec<ChainLink> {
    let scene = g.scene_edges.iter().map(|t| ChainLink {
        fact: g.scene_fact(t),
        head_instance: Some(t.subject),
        tail_instance: Some(t.object),
    });
    let kb = g.kb_edges.iter().map(|t| ChainLink {
        fact: t.fact(),
        head_instance: None,
        tail_instance: None,
    });
    scene.chain(kb).collect()
}

/// Picks a start edge uniformly, then picks uniformly among the routes that
/// start there: the edge alone, or the edge followed by any linked edge.
pub fn sample_route<R: Rng>(g: &ImageKnowledgeGraph, rng: &mut R, max_len: usize) -> Result<TripletChain, GenError> {
    let links = all_links(g);
    let start = links.choose(rng).ok_or(GenError::NoRoute)?;
    let continuations: Vec<&ChainLink> = if max_len >= 2 {
        links.iter().filter(|l| l.follows(start)).collect()
    } else {
        Vec::new()
    };
    let pick = rng.gen_range(0..=continuations.len());
    let mut chain = vec![start.clone()];
    if pick > 0 {
        chain.push(continuations[pick - 1].clone());
    }
    Ok(TripletChain { links: chain })
}

/// Every route of length 1..=max_len in the graph, for exhaustive checks.
pub fn enumerate_routes(g: &ImageKnowledgeGraph, max_len: usize) -> Vec<TripletChain> {
    let links = all_links(g);
    let mut out = Vec::new();
    for a in &links {
        out.push(TripletChain { links: vec![a.clone()] });
        if max_len >= 2 {
            for b in links.iter().filter(|b| b.follows(a)) {
                out.push(TripletChain {
                    links: vec![a.clone(), b.clone()],
                });
            }
        }
    }
    out
}

/// Query-kind pairs `(first triplet, second triplet)` that compose into a
/// linked two-step program.
pub const TWO_STEP_KINDS: [(QueryKind, QueryKind); 4] = [
    (QueryKind::Ar, QueryKind::Ab),
    (QueryKind::Ab, QueryKind::Rb),
    (QueryKind::Ar, QueryKind::Ar),
    (QueryKind::Rb, QueryKind::Rb),
];

/// Query kinds a chain may be asked with. One-step knowledge questions only
/// ask for the head entity.
pub fn kind_options(chain: &TripletChain) -> Vec<Vec<QueryOp>> {
    let dom = |l: &ChainLink| Domain::for_origin(l.fact.origin);
    match chain.links.as_slice() {
        [only] => {
            let kinds: &[QueryKind] = match only.fact.origin {
                Origin::Image => &[QueryKind::Ab, QueryKind::Ar, QueryKind::Rb],
                Origin::Kb => &[QueryKind::Rb],
            };
            kinds.iter().map(|&k| vec![QueryOp::new(k, dom(only))]).collect()
        }
        [a, b] => TWO_STEP_KINDS
            .iter()
            .map(|&(ka, kb)| vec![QueryOp::new(ka, dom(a)), QueryOp::new(kb, dom(b))])
            .collect(),
        _ => Vec::new(),
    }
}

pub fn sample_kinds<R: Rng>(chain: &TripletChain, rng: &mut R) -> Option<Vec<QueryOp>> {
    kind_options(chain).choose(rng).cloned()
}

fn query_for(op: QueryOp, f: &Fact) -> Query {
    match op.kind {
        QueryKind::Ab => Query::flat(op, f.head.clone(), f.tail.clone()),
        QueryKind::Ar => Query::flat(op, f.head.clone(), f.relation.clone()),
        QueryKind::Rb => Query::flat(op, f.relation.clone(), f.tail.clone()),
    }
}

/// Builds the program for a chain. Image edges take `_I` queries and
/// knowledge edges `_K` queries; in two-step programs the inner query's
/// unknown is the shared middle entity.
pub fn compose_program(chain: &TripletChain, kinds: &[QueryOp]) -> Result<Program, GenError> {
    if kinds.len() != chain.len() || chain.is_empty() {
        return Err(GenError::IncompatibleKinds(format!(
            "{} kinds for a {}-triplet chain",
            kinds.len(),
            chain.len()
        )));
    }
    for (op, link) in kinds.iter().zip(&chain.links) {
        if op.domain.origin() != link.fact.origin {
            return Err(GenError::IncompatibleKinds(format!(
                "{op} on a {} edge",
                link.fact.origin
            )));
        }
    }
    if let [only] = chain.links.as_slice() {
        return Ok(Program::new(query_for(kinds[0], &only.fact)).expect("flat query is valid"));
    }
    let (first, second) = (&chain.links[0].fact, &chain.links[1].fact);
    let (k1, k2) = (kinds[0], kinds[1]);
    let root = match (k1.kind, k2.kind) {
        (QueryKind::Ar, QueryKind::Ab | QueryKind::Ar) => {
            let inner = Operand::Nested(Box::new(query_for(k1, first)));
            let other = match k2.kind {
                QueryKind::Ab => &second.tail,
                _ => &second.relation,
            };
            Query {
                op: k2,
                first: inner,
                second: Operand::Atom(other.clone()),
            }
        }
        (QueryKind::Ab | QueryKind::Rb, QueryKind::Rb) => {
            let inner = Operand::Nested(Box::new(query_for(k2, second)));
            let other = match k1.kind {
                QueryKind::Ab => &first.head,
                _ => &first.relation,
            };
            Query {
                op: k1,
                first: Operand::Atom(other.clone()),
                second: inner,
            }
        }
        _ => {
            return Err(GenError::IncompatibleKinds(format!(
                "{k1} then {k2} does not link through the middle entity"
            )))
        }
    };
    Program::new(root).map_err(|e| GenError::IncompatibleKinds(e.to_string()))
}

/// The chain entry a program over this chain asks for.
pub fn expected_answer(chain: &TripletChain, qtype: u8) -> Option<&crate::model::Label> {
    let f = |i: usize| chain.links.get(i).map(|l| &l.fact);
    Some(match qtype {
        0 => &f(0)?.relation,
        1 => &f(0)?.tail,
        2 => &f(0)?.head,
        3 => &f(1)?.relation,
        4 => &f(0)?.relation,
        5 => &f(1)?.tail,
        6 => &f(0)?.head,
        _ => return None,
    })
}
