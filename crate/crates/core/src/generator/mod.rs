//! Question generation: route sampling, program composition, constraint
//! admission and template rendering.
//!
//! Candidates for each image are drawn from an rng derived from the master
//! seed and the image id, so enumeration can run in parallel. Admission runs
//! afterwards as one sequential pass in `(image_id, candidate index)` order,
//! which keeps the answer cap and the knowledge-once rule deterministic.

mod ledger;
mod route;
mod template;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use ledger::{admit, Admission, Candidate, ConstraintLedger, RejectReason};
pub use route::{
    compose_program, enumerate_routes, expected_answer, kind_options, sample_kinds, sample_route, ChainLink,
    TripletChain, TWO_STEP_KINDS,
};
pub use template::{render_question, template_pattern, Renderer};

use crate::dataset::{self, Dataset};
use crate::executor::Oracle;
use crate::graph::{ImageKnowledgeGraph, KnowledgeBase};
use crate::model::{qtype_step, GenerationConfig, ModelError, Origin, QAPair, Split};
use crate::program::Program;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("graph has no edges to sample")]
    NoRoute,
    #[error("incompatible query kinds: {0}")]
    IncompatibleKinds(String),
    #[error("no surface form for relation `{0}`")]
    MissingSurfaceForm(String),
    #[error("qtype does not match program {0}")]
    QtypeMismatch(String),
    #[error("relation phrase table: {0}")]
    PhraseTable(String),
}

pub fn determine_qtype(p: &Program) -> u8 {
    p.qtype()
}

/// Counters for one generation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenerationReport {
    pub images: usize,
    pub images_without_edges: usize,
    pub attempts: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub accepted_by_qtype: [usize; 7],
}

impl GenerationReport {
    fn reject(&mut self, reason: RejectReason) {
        *self.rejected.entry(reason.as_str().to_string()).or_default() += 1;
    }
}

enum Draw {
    Candidate(Box<Candidate>, String),
    Rejected(RejectReason),
}

/// Splits the master seed per image with FNV-1a over the id and a splitmix
/// finalizer, so per-image streams do not depend on processing order.
fn image_seed(seed: u64, image_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_candidates(
    g: &ImageKnowledgeGraph,
    kb: &KnowledgeBase,
    cfg: &GenerationConfig,
    renderer: &Renderer,
) -> Vec<Draw> {
    if g.edge_count() == 0 {
        return Vec::new();
    }
    let oracle = Oracle::new(g, kb);
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, &g.image_id));
    let mut out = Vec::with_capacity(cfg.max_attempts_per_image);
    for _ in 0..cfg.max_attempts_per_image {
        let chain = match sample_route(g, &mut rng, cfg.max_route_len) {
            Ok(c) => c,
            Err(_) => break,
        };
        let Some(kinds) = sample_kinds(&chain, &mut rng) else {
            out.push(Draw::Rejected(RejectReason::IncompatibleKinds));
            continue;
        };
        let program = match compose_program(&chain, &kinds) {
            Ok(p) => p,
            Err(_) => {
                out.push(Draw::Rejected(RejectReason::IncompatibleKinds));
                continue;
            }
        };
        let qtype = program.qtype();
        let answers = match oracle.execute(&program) {
            Ok(a) => a,
            Err(_) => {
                out.push(Draw::Rejected(RejectReason::Execution));
                continue;
            }
        };
        let question = match renderer.render(&program, qtype) {
            Ok(q) => q,
            Err(_) => {
                out.push(Draw::Rejected(RejectReason::MissingSurfaceForm));
                continue;
            }
        };
        let candidate = Candidate {
            program,
            qtype,
            answers,
            reason: chain.facts(),
        };
        out.push(Draw::Candidate(Box::new(candidate), question));
    }
    out
}

/// Generates a dataset from merged image graphs.
///
/// Images are handled in sorted `image_id` order and the output is fully
/// determined by `(corpus, kb, cfg)`. Splits are assigned per image once
/// generation finishes; with fewer than three images every pair is `train`.
pub fn generate(
    corpus: &[ImageKnowledgeGraph],
    kb: &KnowledgeBase,
    cfg: &GenerationConfig,
    renderer: &Renderer,
) -> Result<(Dataset, GenerationReport), ModelError> {
    cfg.validate()?;
    let mut images: Vec<&ImageKnowledgeGraph> = corpus.iter().collect();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let draws: Vec<Vec<Draw>> = images
        .par_iter()
        .map(|g| draw_candidates(g, kb, cfg, renderer))
        .collect();

    let mut report = GenerationReport {
        images: images.len(),
        ..Default::default()
    };
    let mut ledger = ConstraintLedger::default();
    let mut pairs = Vec::new();
    for (g, image_draws) in images.iter().zip(draws) {
        if g.edge_count() == 0 {
            report.images_without_edges += 1;
            continue;
        }
        let oracle = Oracle::new(g, kb);
        let mut seen: HashSet<String> = HashSet::new();
        let mut accepted_here = 0usize;
        for draw in image_draws {
            report.attempts += 1;
            let (candidate, question) = match draw {
                Draw::Rejected(r) => {
                    report.reject(r);
                    continue;
                }
                Draw::Candidate(c, q) => (c, q),
            };
            let key = candidate.program.to_string();
            if seen.contains(&key) {
                report.reject(RejectReason::Duplicate);
                continue;
            }
            match ledger.admit(&candidate, &oracle, cfg) {
                Admission::Reject(r) => {
                    report.reject(r);
                    continue;
                }
                Admission::Accept => {}
            }
            seen.insert(key);
            let answer = candidate.answers.unique().expect("admitted answers are unique").to_string();
            let step = candidate.reason.len() as u8;
            debug_assert_eq!(qtype_step(candidate.qtype), Some(step));
            report.accepted += 1;
            report.accepted_by_qtype[candidate.qtype as usize] += 1;
            pairs.push(QAPair {
                id: format!("{}_{}", g.image_id, accepted_here),
                image_id: g.image_id.clone(),
                question,
                answer,
                qtype: candidate.qtype,
                step,
                kb_related: candidate.reason.iter().any(|f| f.origin == Origin::Kb),
                program: candidate.program,
                reason: candidate.reason,
                split: Split::Train,
            });
            accepted_here += 1;
        }
    }
    let mut data = Dataset { pairs };
    let distinct: BTreeSet<&str> = data.pairs.iter().map(|p| p.image_id.as_str()).collect();
    if distinct.len() >= 3 {
        data = dataset::split(&data, &cfg.split_ratios, cfg.seed).expect("three images and validated ratios");
    }
    Ok((data, report))
}
