use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbedError, KgEmbedding};
use crate::graph::KnowledgeBase;
use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 500,
            epochs: 50,
            lr: 0.05,
            negatives: 4,
            margin: 6.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidHyperparameter(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be a positive finite number");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad("margin must be a positive finite number");
        }
        Ok(())
    }
}

/// SGD state. Parameters live in one flat vector laid out as
/// `[entity real (n*d) | entity imaginary (n*d) | relation phase (m*d)]`.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    entities: Vec<Label>,
    relations: Vec<Label>,
    triplets: Vec<(usize, usize, usize)>,
    params: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(kb: &KnowledgeBase, cfg: &TrainConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        if kb.is_empty() {
            return Err(EmbedError::InvalidHyperparameter("knowledge base is empty".into()));
        }
        let entities: Vec<Label> = kb.entities().iter().cloned().collect();
        let relations: Vec<Label> = kb
            .triplets()
            .iter()
            .map(|t| t.relation.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let e_idx = |l: &Label| entities.binary_search(l).expect("kb entity");
        let triplets = kb
            .triplets()
            .iter()
            .map(|t| (e_idx(&t.head), relations.binary_search(&t.relation).expect("kb relation"), e_idx(&t.tail)))
            .collect();
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 0.5 / d as f64;
        let mut params = Vec::with_capacity((2 * entities.len() + relations.len()) * d);
        for _ in 0..2 * entities.len() * d {
            params.push(rng.gen_range(-bound..bound));
        }
        for _ in 0..relations.len() * d {
            params.push(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        }
        Ok(Self {
            cfg: cfg.clone(),
            entities,
            relations,
            triplets,
            params,
            rng,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Training triplets as `(head, relation, tail)` indices.
    pub fn triplets(&self) -> &[(usize, usize, usize)] {
        &self.triplets
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    fn d(&self) -> usize {
        self.cfg.dim
    }

    fn re(&self, e: usize) -> usize {
        e * self.d()
    }

    fn im(&self, e: usize) -> usize {
        (self.entities.len() + e) * self.d()
    }

    fn phase(&self, r: usize) -> usize {
        (2 * self.entities.len() + r) * self.d()
    }

    pub fn score(&self, (h, r, t): (usize, usize, usize)) -> f64 {
        let p = &self.params;
        let (hr, hi, th, tr, ti) = (self.re(h), self.im(h), self.phase(r), self.re(t), self.im(t));
        let mut acc = 0.0;
        for k in 0..self.d() {
            let (s, c) = p[th + k].sin_cos();
            let u = p[hr + k] * c - p[hi + k] * s - p[tr + k];
            let v = p[hr + k] * s + p[hi + k] * c - p[ti + k];
            acc += u * u + v * v;
        }
        acc
    }

    /// `max(0, margin + score(pos) - score(neg))`.
    pub fn loss(&self, pos: (usize, usize, usize), neg: (usize, usize, usize)) -> f64 {
        (self.cfg.margin + self.score(pos) - self.score(neg)).max(0.0)
    }

    /// Adds `sign * d score / d param` for each touched parameter.
    fn score_grad(&self, (h, r, t): (usize, usize, usize), sign: f64, out: &mut Vec<(usize, f64)>) {
        let p = &self.params;
        let (hr, hi, th, tr, ti) = (self.re(h), self.im(h), self.phase(r), self.re(t), self.im(t));
        for k in 0..self.d() {
            let (s, c) = p[th + k].sin_cos();
            let (a, b) = (p[hr + k], p[hi + k]);
            let u = a * c - b * s - p[tr + k];
            let v = a * s + b * c - p[ti + k];
            out.push((hr + k, sign * (2.0 * u * c + 2.0 * v * s)));
            out.push((hi + k, sign * (-2.0 * u * s + 2.0 * v * c)));
            out.push((tr + k, sign * (-2.0 * u)));
            out.push((ti + k, sign * (-2.0 * v)));
            out.push((th + k, sign * (2.0 * u * (-a * s - b * c) + 2.0 * v * (a * c - b * s))));
        }
    }

    fn sparse_loss_grad(&self, pos: (usize, usize, usize), neg: (usize, usize, usize), out: &mut Vec<(usize, f64)>) -> f64 {
        out.clear();
        let l = self.loss(pos, neg);
        if l > 0.0 {
            self.score_grad(pos, 1.0, out);
            self.score_grad(neg, -1.0, out);
        }
        l
    }

    /// Dense gradient of [`Trainer::loss`] over all parameters.
    pub fn loss_grad(&self, pos: (usize, usize, usize), neg: (usize, usize, usize)) -> Vec<f64> {
        let mut sparse = Vec::new();
        self.sparse_loss_grad(pos, neg, &mut sparse);
        let mut g = vec![0.0; self.params.len()];
        for (i, x) in sparse {
            g[i] += x;
        }
        g
    }

    fn corrupt(&mut self, (h, r, t): (usize, usize, usize)) -> (usize, usize, usize) {
        let n = self.entities.len();
        let head = self.rng.gen_bool(0.5);
        let keep = if head { h } else { t };
        let mut e = if n > 1 { self.rng.gen_range(0..n - 1) } else { 0 };
        if n > 1 && e >= keep {
            e += 1;
        }
        if head {
            (e, r, t)
        } else {
            (h, r, e)
        }
    }

    /// One pass over the shuffled training triplets; returns the mean loss.
    pub fn epoch(&mut self) -> f64 {
        let mut order = self.triplets.clone();
        order.shuffle(&mut self.rng);
        let mut grad = Vec::new();
        let mut total = 0.0;
        let lr = self.cfg.lr;
        for pos in order {
            for _ in 0..self.cfg.negatives {
                let neg = self.corrupt(pos);
                total += self.sparse_loss_grad(pos, neg, &mut grad);
                for &(i, g) in &grad {
                    self.params[i] -= lr * g;
                }
            }
        }
        total / (self.triplets.len() * self.cfg.negatives) as f64
    }

    pub fn embedding(&self) -> KgEmbedding {
        let d = self.d();
        let n = self.entities.len();
        let phases = &self.params[2 * n * d..];
        KgEmbedding::from_parts(
            d,
            self.entities.clone(),
            self.relations.clone(),
            self.params[..n * d].to_vec(),
            self.params[n * d..2 * n * d].to_vec(),
            phases.iter().map(|a| a.cos()).collect(),
            phases.iter().map(|a| a.sin()).collect(),
        )
        .expect("trainer shapes are consistent")
    }
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch(epoch, mean_loss)`.
pub fn train_with(
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<KgEmbedding, EmbedError> {
    let mut t = Trainer::new(kb, cfg)?;
    for e in 0..cfg.epochs {
        let l = t.epoch();
        on_epoch(e, l);
    }
    Ok(t.embedding())
}

pub fn train(kb: &KnowledgeBase, cfg: &TrainConfig) -> Result<KgEmbedding, EmbedError> {
    train_with(kb, cfg, |_, _| {})
}
