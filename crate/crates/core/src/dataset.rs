//! Dataset I/O, image-level splitting and corpus statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{validate_ratios, ModelError, Origin, QAPair, Split, TripletKey};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("splitting needs at least 3 images, got {0}")]
    TooFewImages(usize),
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<QAPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn images(&self) -> BTreeSet<&str> {
        self.pairs.iter().map(|p| p.image_id.as_str()).collect()
    }

    pub fn filter_split(&self, split: Split) -> Dataset {
        Dataset {
            pairs: self.pairs.iter().filter(|p| p.split == split).cloned().collect(),
        }
    }

    /// One JSON object per line, keys in record order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("QA pairs serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(r: R, path: &Path) -> Result<Dataset, DatasetError> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|source| DatasetError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: QAPair = serde_json::from_str(&line).map_err(|e| DatasetError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            pairs.push(pair);
        }
        Ok(Dataset { pairs })
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        let f = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_jsonl(std::io::BufReader::new(f), path)
    }
}

/// Image counts per split for `n` images: largest-remainder rounding, then at
/// least one image per split.
fn split_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    sizes
}

/// Assigns splits by image: every question of one image shares a split.
/// Image ids are sorted, shuffled with `seed`, then cut by `ratios`.
pub fn split(d: &Dataset, ratios: &[f64; 3], seed: u64) -> Result<Dataset, DatasetError> {
    validate_ratios(ratios)?;
    let mut images: Vec<&str> = d.images().into_iter().collect();
    if images.len() < 3 {
        return Err(DatasetError::TooFewImages(images.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    images.shuffle(&mut rng);
    let sizes = split_sizes(images.len(), ratios);
    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    let mut cursor = 0;
    for (split, size) in Split::ALL.iter().zip(sizes) {
        for img in &images[cursor..cursor + size] {
            assignment.insert(img, *split);
        }
        cursor += size;
    }
    let pairs = d
        .pairs
        .iter()
        .map(|p| QAPair {
            split: assignment[p.image_id.as_str()],
            ..p.clone()
        })
        .collect();
    Ok(Dataset { pairs })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub total: usize,
}

impl SplitCounts {
    fn add(&mut self, s: Split) {
        match s {
            Split::Train => self.train += 1,
            Split::Val => self.val += 1,
            Split::Test => self.test += 1,
        }
        self.total += 1;
    }

    fn merge(&mut self, o: &SplitCounts) {
        self.train += o.train;
        self.val += o.val;
        self.test += o.test;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub total: usize,
    pub images: usize,
    /// Indexed by qtype 0..=6.
    pub per_qtype: Vec<SplitCounts>,
    pub one_step: usize,
    pub two_step: usize,
    pub kb_related: usize,
    pub kb_not_related: usize,
    pub answer_vocab_kb_related: usize,
    pub answer_vocab_kb_not_related: usize,
    /// Answer frequencies, most frequent first, ties alphabetical.
    pub answer_histogram_kb_related: Vec<(String, usize)>,
    pub answer_histogram_kb_not_related: Vec<(String, usize)>,
    pub question_length: LengthStats,
    pub distinct_knowledge_triplets: usize,
    /// Share of val/test answers that also occur as a train answer.
    pub heldout_answers_in_train: Option<f64>,
}

fn histogram(counts: BTreeMap<&str, usize>) -> Vec<(String, usize)> {
    let mut h: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    h.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    h
}

pub fn question_length(q: &str) -> usize {
    q.split_whitespace().count()
}

pub fn stats(d: &Dataset) -> StatsReport {
    let mut r = StatsReport {
        total: d.len(),
        images: d.images().len(),
        per_qtype: vec![SplitCounts::default(); 7],
        ..Default::default()
    };
    let mut kb_answers: BTreeMap<&str, usize> = BTreeMap::new();
    let mut img_answers: BTreeMap<&str, usize> = BTreeMap::new();
    let mut knowledge: BTreeSet<TripletKey> = BTreeSet::new();
    let mut train_answers: BTreeSet<&str> = BTreeSet::new();
    let mut len_sum = 0usize;
    let mut min = usize::MAX;
    let mut max = 0usize;
    for p in &d.pairs {
        if let Some(c) = r.per_qtype.get_mut(p.qtype as usize) {
            c.add(p.split);
        }
        match p.step {
            1 => r.one_step += 1,
            _ => r.two_step += 1,
        }
        if p.kb_related {
            r.kb_related += 1;
            *kb_answers.entry(&p.answer).or_default() += 1;
        } else {
            r.kb_not_related += 1;
            *img_answers.entry(&p.answer).or_default() += 1;
        }
        knowledge.extend(p.reason.iter().filter(|f| f.origin == Origin::Kb).map(|f| f.key()));
        if p.split == Split::Train {
            train_answers.insert(&p.answer);
        }
        let len = question_length(&p.question);
        len_sum += len;
        min = min.min(len);
        max = max.max(len);
    }
    if !d.is_empty() {
        r.question_length = LengthStats {
            min,
            max,
            mean: len_sum as f64 / d.len() as f64,
        };
    }
    let heldout: Vec<&QAPair> = d.pairs.iter().filter(|p| p.split != Split::Train).collect();
    if !heldout.is_empty() {
        let hit = heldout.iter().filter(|p| train_answers.contains(p.answer.as_str())).count();
        r.heldout_answers_in_train = Some(hit as f64 / heldout.len() as f64);
    }
    r.answer_vocab_kb_related = kb_answers.len();
    r.answer_vocab_kb_not_related = img_answers.len();
    r.answer_histogram_kb_related = histogram(kb_answers);
    r.answer_histogram_kb_not_related = histogram(img_answers);
    r.distinct_knowledge_triplets = knowledge.len();
    r
}

impl StatsReport {
    /// Adds the additive count fields of `other` (qtype/split table and
    /// step/knowledge totals).
    pub fn merge_counts(&mut self, other: &StatsReport) {
        self.total += other.total;
        if self.per_qtype.len() < 7 {
            self.per_qtype.resize(7, SplitCounts::default());
        }
        for (a, b) in self.per_qtype.iter_mut().zip(&other.per_qtype) {
            a.merge(b);
        }
        self.one_step += other.one_step;
        self.two_step += other.two_step;
        self.kb_related += other.kb_related;
        self.kb_not_related += other.kb_not_related;
    }

    /// Per-qtype counts as CSV with columns `step,qtype,train,val,test,total`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("step,qtype,train,val,test,total\n");
        for (q, c) in self.per_qtype.iter().enumerate() {
            let step = if q <= 2 { 1 } else { 2 };
            out.push_str(&format!("{step},{q},{},{},{},{}\n", c.train, c.val, c.test, c.total));
        }
        out
    }
}

/// Published per-qtype totals of the reference dataset, for side-by-side
/// comparison with a regenerated corpus.
pub const REFERENCE_QTYPE_TOTALS: [usize; 7] = [13_561, 13_390, 41_497, 15_539, 27_567, 17_291, 28_356];

/// Aligned text comparing generated per-qtype totals with the reference.
pub fn reference_comparison(r: &StatsReport) -> String {
    let mut out = format!("{:>5} {:>10} {:>10}\n", "qtype", "generated", "reference");
    for (q, reference) in REFERENCE_QTYPE_TOTALS.iter().enumerate() {
        let got = r.per_qtype.get(q).map(|c| c.total).unwrap_or(0);
        out.push_str(&format!("{q:>5} {got:>10} {reference:>10}\n"));
    }
    out
}
