//! Rotation embeddings for knowledge graphs: closed-form inference, SGD
//! training with a margin ranking loss, link prediction and a text format.

mod rotation;
mod train;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{EntityId, Label, RelationId};

pub use rotation::{infer_head, infer_relation, infer_tail, score, MODULUS_EPS};
pub use train::{train, train_with, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {component} of the head has (near) zero modulus")]
    ZeroModulus { component: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("entity `{0}` is not embedded")]
    UnknownEntity(String),
    #[error("relation `{0}` is not embedded")]
    UnknownRelation(String),
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Tolerance on `cos² + sin²` for every relation component.
pub const UNIT_MODULUS_TOL: f64 = 1e-6;

/// Entity vectors split into real and imaginary parts, relations as
/// componentwise unit rotations. Vectors are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KgEmbedding {
    dim: usize,
    entities: Vec<EntityId>,
    relations: Vec<RelationId>,
    entity_index: HashMap<EntityId, usize>,
    relation_index: HashMap<RelationId, usize>,
    ent_re: Vec<f64>,
    ent_im: Vec<f64>,
    rel_cos: Vec<f64>,
    rel_sin: Vec<f64>,
}

fn index_of(labels: &[Label]) -> HashMap<Label, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect()
}

impl KgEmbedding {
    /// Builds an embedding from raw parts. Relation rows are checked against
    /// the unit-modulus tolerance.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        entities: Vec<EntityId>,
        relations: Vec<RelationId>,
        ent_re: Vec<f64>,
        ent_im: Vec<f64>,
        rel_cos: Vec<f64>,
        rel_sin: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        for (v, rows) in [(&ent_re, entities.len()), (&ent_im, entities.len()), (&rel_cos, relations.len()), (&rel_sin, relations.len())] {
            if v.len() != rows * dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: rows * dim,
                    got: v.len(),
                });
            }
        }
        for (k, (c, s)) in rel_cos.iter().zip(&rel_sin).enumerate() {
            if (c * c + s * s - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(EmbedError::Format {
                    line: 0,
                    message: format!(
                        "relation `{}` component {} has modulus {}",
                        relations[k / dim.max(1)],
                        k % dim.max(1),
                        (c * c + s * s).sqrt()
                    ),
                });
            }
        }
        Ok(Self {
            dim,
            entity_index: index_of(&entities),
            relation_index: index_of(&relations),
            entities,
            relations,
            ent_re,
            ent_im,
            rel_cos,
            rel_sin,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn entity_idx(&self, e: &Label) -> Result<usize, EmbedError> {
        self.entity_index.get(e).copied().ok_or_else(|| EmbedError::UnknownEntity(e.to_string()))
    }

    pub fn relation_idx(&self, r: &Label) -> Result<usize, EmbedError> {
        self.relation_index
            .get(r)
            .copied()
            .ok_or_else(|| EmbedError::UnknownRelation(r.to_string()))
    }

    fn row(v: &[f64], i: usize, d: usize) -> &[f64] {
        &v[i * d..(i + 1) * d]
    }

    /// Real and imaginary parts of entity `i`.
    pub fn entity_parts(&self, i: usize) -> (&[f64], &[f64]) {
        (Self::row(&self.ent_re, i, self.dim), Self::row(&self.ent_im, i, self.dim))
    }

    /// `(cos, sin)` of relation `i`.
    pub fn relation_parts(&self, i: usize) -> (&[f64], &[f64]) {
        (Self::row(&self.rel_cos, i, self.dim), Self::row(&self.rel_sin, i, self.dim))
    }

    /// Real parts followed by imaginary parts, `2 * dim` values.
    pub fn entity_vector(&self, e: &Label) -> Result<Vec<f64>, EmbedError> {
        let (re, im) = self.entity_parts(self.entity_idx(e)?);
        Ok(re.iter().chain(im).copied().collect())
    }

    /// Cosines followed by sines, `2 * dim` values.
    pub fn relation_vector(&self, r: &Label) -> Result<Vec<f64>, EmbedError> {
        let (c, s) = self.relation_parts(self.relation_idx(r)?);
        Ok(c.iter().chain(s).copied().collect())
    }

    pub fn score_idx(&self, h: usize, r: usize, t: usize) -> f64 {
        let (hr, hi) = self.entity_parts(h);
        let (c, s) = self.relation_parts(r);
        let (tr, ti) = self.entity_parts(t);
        rotation::score_unchecked(hr, hi, c, s, tr, ti)
    }

    pub fn score(&self, h: &Label, r: &Label, t: &Label) -> Result<f64, EmbedError> {
        Ok(self.score_idx(self.entity_idx(h)?, self.relation_idx(r)?, self.entity_idx(t)?))
    }

    /// 1-based rank of the true tail among all entities by ascending score.
    /// Entities scoring equal to the true tail are ranked ahead of it.
    pub fn tail_rank(&self, h: usize, r: usize, t: usize) -> usize {
        let truth = self.score_idx(h, r, t);
        let mut rank = 1;
        for e in 0..self.entities.len() {
            if e == t {
                continue;
            }
            if self.score_idx(h, r, e) <= truth {
                rank += 1;
            }
        }
        rank
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.entities.len(), self.relations.len(), self.dim);
        let mut row = |tag: &str, name: &Label, a: &[f64], b: &[f64]| {
            out.push_str(tag);
            out.push('\t');
            out.push_str(name.as_str());
            for x in a.iter().chain(b) {
                write!(out, "\t{x:.16e}").unwrap();
            }
            out.push('\n');
        };
        for (i, e) in self.entities.iter().enumerate() {
            let (re, im) = self.entity_parts(i);
            row("E", e, re, im);
        }
        for (i, r) in self.relations.iter().enumerate() {
            let (c, s) = self.relation_parts(i);
            row("R", r, c, s);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EmbedError> {
        let fmt = |line: usize, message: String| EmbedError::Format { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| fmt(1, "missing header".into()))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| fmt(1, format!("bad header: {e}")))?;
        let [n_e, n_r, dim] = counts[..] else {
            return Err(fmt(1, "header must be `<entities> <relations> <dim>`".into()));
        };
        let (mut entities, mut relations) = (Vec::with_capacity(n_e), Vec::with_capacity(n_r));
        let (mut ent_re, mut ent_im, mut rel_cos, mut rel_sin) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let tag = cols.next().unwrap_or_default();
            let name = Label::new(cols.next().unwrap_or_default()).map_err(|e| fmt(n, e.to_string()))?;
            let values: Vec<f64> = cols
                .map(|x| x.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| fmt(n, format!("bad value: {e}")))?;
            if values.len() != 2 * dim {
                return Err(fmt(n, format!("expected {} values, got {}", 2 * dim, values.len())));
            }
            let (a, b) = values.split_at(dim);
            match tag {
                "E" => {
                    entities.push(name);
                    ent_re.extend_from_slice(a);
                    ent_im.extend_from_slice(b);
                }
                "R" => {
                    if let Some(k) = (0..dim).find(|&k| (a[k] * a[k] + b[k] * b[k] - 1.0).abs() > UNIT_MODULUS_TOL) {
                        return Err(fmt(n, format!("relation component {k} is not unit modulus")));
                    }
                    relations.push(name);
                    rel_cos.extend_from_slice(a);
                    rel_sin.extend_from_slice(b);
                }
                other => return Err(fmt(n, format!("unknown row tag `{other}`"))),
            }
        }
        if entities.len() != n_e || relations.len() != n_r {
            return Err(fmt(
                1,
                format!("header promises {n_e}/{n_r} rows, found {}/{}", entities.len(), relations.len()),
            ));
        }
        Self::from_parts(dim, entities, relations, ent_re, ent_im, rel_cos, rel_sin)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        std::fs::write(path, self.to_text()).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkPrediction {
    pub triplets: usize,
    pub mean_rank: f64,
    pub hits_at_1: f64,
}

/// Tail prediction over `test`, ranking every embedded entity.
pub fn link_predict_eval(emb: &KgEmbedding, test: &[(Label, Label, Label)]) -> Result<LinkPrediction, EmbedError> {
    let mut rank_sum = 0usize;
    let mut hits = 0usize;
    for (h, r, t) in test {
        let rank = emb.tail_rank(emb.entity_idx(h)?, emb.relation_idx(r)?, emb.entity_idx(t)?);
        rank_sum += rank;
        hits += usize::from(rank == 1);
    }
    let n = test.len().max(1) as f64;
    Ok(LinkPrediction {
        triplets: test.len(),
        mean_rank: rank_sum as f64 / n,
        hits_at_1: hits as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::tests::kb_fixture;

    fn l(s: &str) -> Label {
        Label::new(s).unwrap()
    }

    fn small() -> KgEmbedding {
        let a = std::f64::consts::FRAC_PI_3;
        KgEmbedding::from_parts(
            2,
            vec![l("a"), l("b"), l("keep out rain")],
            vec![l("r")],
            vec![1.0, 0.5, -0.25, 2.0, 1e-300, 3.0],
            vec![0.0, 0.1, 0.75, -1.0, 0.0, 1.0 / 3.0],
            vec![a.cos(), 1.0],
            vec![a.sin(), 0.0],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let e = small();
        let back = KgEmbedding::from_text(&e.to_text()).unwrap();
        assert_eq!(back, e);
        assert!(e.to_text().starts_with("3 1 2\nE\ta\t"));
        assert_eq!(e.entity_vector(&l("b")).unwrap(), vec![-0.25, 2.0, 0.75, -1.0]);
    }

    #[test]
    fn load_rejects_bad_rows() {
        let bad = "1 1 1\nE\ta\t1\t0\nR\tr\t0.5\t0.5\n";
        assert!(matches!(KgEmbedding::from_text(bad), Err(EmbedError::Format { line: 3, .. })));
        assert!(KgEmbedding::from_text("1 0 1\nE\ta\t1\n").is_err());
        assert!(KgEmbedding::from_text("2 0 1\nE\ta\t1\t0\n").is_err());
    }

    #[test]
    fn exact_embedding_ranks_first() {
        // tails are built with the closed-form rotation, so each true tail scores 0
        let dim = 3;
        let names = ["h1", "h2", "t1", "t2"];
        let (c, s): (Vec<f64>, Vec<f64>) = [0.3f64, 1.1, -2.0].iter().map(|a| (a.cos(), a.sin())).unzip();
        let heads = [(vec![1.0, -0.5, 0.2], vec![0.3, 0.8, -1.0]), (vec![-0.7, 0.1, 0.9], vec![0.5, -0.6, 0.4])];
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (hr, hi) in &heads {
            re.extend_from_slice(hr);
            im.extend_from_slice(hi);
        }
        for (hr, hi) in &heads {
            let (tr, ti) = infer_tail(hr, hi, &c, &s).unwrap();
            re.extend(tr);
            im.extend(ti);
        }
        let emb = KgEmbedding::from_parts(dim, names.iter().map(|n| l(n)).collect(), vec![l("r")], re, im, c, s).unwrap();
        let test = vec![(l("h1"), l("r"), l("t1")), (l("h2"), l("r"), l("t2"))];
        let lp = link_predict_eval(&emb, &test).unwrap();
        assert_eq!((lp.mean_rank, lp.hits_at_1), (1.0, 1.0));
        assert!(matches!(
            link_predict_eval(&emb, &[(l("h1"), l("r"), l("zzz"))]),
            Err(EmbedError::UnknownEntity(_))
        ));
    }

    #[test]
    fn ties_count_against_the_true_tail() {
        let emb = KgEmbedding::from_parts(1, vec![l("a"), l("b"), l("c")], vec![l("r")], vec![1.0; 3], vec![0.0; 3], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(emb.tail_rank(0, 0, 0), 3);
    }

    #[test]
    fn random_embedding_mean_rank_is_middle() {
        let others: Vec<String> = (2..20).map(|i| format!("e{i}")).collect();
        let mut rows = vec![("e0", "r", "e1")];
        rows.extend(others.iter().map(|o| (o.as_str(), "s", "e0")));
        let kb = kb_fixture(&rows);
        let test = [(l("e0"), l("r"), l("e1"))];
        let trials = 1000;
        let mut total = 0.0;
        for seed in 0..trials {
            let emb = train(&kb, &TrainConfig { dim: 4, epochs: 0, seed, ..Default::default() }).unwrap();
            total += link_predict_eval(&emb, &test).unwrap().mean_rank;
        }
        let mean = total / trials as f64;
        let expected = (20.0 + 1.0) / 2.0;
        assert!((mean - expected).abs() / expected < 0.15, "{mean}");
    }
}
