//! Deterministic synthetic inputs: a small scene corpus with a matching
//! knowledge base, and functional knowledge graphs for embedding tests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{kb_to_jsonl, scenes_to_vg_json, KnowledgeBase, RawObject, RawRelation, RawSceneGraph};
use crate::model::{KbSource, KnowledgeTriplet, Label, TripletKey};

pub const OBJECTS: [&str; 20] = [
    "girl", "boy", "man", "woman", "dog", "cat", "hotdog", "pizza", "umbrella", "bicycle", "car", "table", "chair",
    "cup", "plate", "kite", "ball", "horse", "bench", "tree",
];

const PREDICATES: [&str; 10] = [
    "holds", "on", "near", "rides", "eats", "has", "behind", "under", "watches", "beside",
];

const KB_RELATIONS: [&str; 8] = [
    "usedfor", "capableof", "atlocation", "isa", "hasa", "madeof", "partof", "hasproperty",
];

const CONCEPTS: [&str; 40] = [
    "eat", "keep out rain", "transport", "sit", "play", "kitchen", "park", "wood", "metal", "animal", "food",
    "furniture", "vehicle", "person", "drink", "serve food", "fly", "run", "bark", "purr", "sky", "street",
    "restaurant", "cloth", "plastic", "glass", "wheel", "leg", "handle", "string", "bread", "cheese", "leaf",
    "trunk", "round", "soft", "fast", "young", "tall", "hot",
];

const KB_ONLY_HEADS: [&str; 30] = [
    "truck", "motorcycle", "puppy", "kitten", "sofa", "mug", "bowl", "scooter", "pony", "stool", "sandwich",
    "burger", "parasol", "balloon", "frisbee", "bus", "train", "desk", "bush", "toddler", "teenager", "lady",
    "gentleman", "wolf", "tiger", "donkey", "skateboard", "tray", "saucer", "glove",
];

const COMPARATIVES: [&str; 5] = ["faster", "smaller", "larger", "heavier", "relatedto"];

/// Number of knowledge triplets in the bundled fixture.
pub const FIXTURE_KB_SIZE: usize = 300;
pub const FIXTURE_IMAGES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub scenes: Vec<RawSceneGraph>,
    pub kb: Vec<KnowledgeTriplet>,
}

fn label(s: &str) -> Label {
    Label::new(s).expect("fixture labels are non-empty")
}

fn triplet(h: &str, r: &str, t: &str) -> KnowledgeTriplet {
    KnowledgeTriplet {
        head: label(h),
        relation: label(r),
        tail: label(t),
        surface_text: format!("{h} {r} {t}"),
        source: KbSource::Synthetic,
        reflexive: false,
    }
}

fn fixture_kb(rng: &mut ChaCha8Rng) -> Vec<KnowledgeTriplet> {
    let mut rows: BTreeMap<TripletKey, KnowledgeTriplet> = BTreeMap::new();
    let mut head_rel: BTreeSet<(String, String)> = BTreeSet::new();
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut add = |rows: &mut BTreeMap<TripletKey, KnowledgeTriplet>, h: &str, r: &str, t: &str| {
        // one tail per (head, relation) and one relation per (head, tail)
        if h == t || !head_rel.insert((h.into(), r.into())) {
            return;
        }
        if !pairs.insert((h.into(), t.into())) {
            return;
        }
        let k = triplet(h, r, t);
        rows.insert(k.key(), k);
    };
    // object facts
    for o in OBJECTS {
        let mut rels = KB_RELATIONS.to_vec();
        rels.shuffle(rng);
        for r in &rels[..7] {
            let c = CONCEPTS.choose(rng).unwrap();
            add(&mut rows, o, r, c);
        }
    }
    // comparisons from knowledge-only entities to scene objects
    while rows.len() < 240 {
        let h = KB_ONLY_HEADS.choose(rng).unwrap();
        let r = COMPARATIVES.choose(rng).unwrap();
        let t = OBJECTS.choose(rng).unwrap();
        add(&mut rows, h, r, t);
    }
    // comparisons between scene objects
    while rows.len() < FIXTURE_KB_SIZE {
        let h = OBJECTS.choose(rng).unwrap();
        let r = COMPARATIVES.choose(rng).unwrap();
        let t = OBJECTS.choose(rng).unwrap();
        add(&mut rows, h, r, t);
    }
    rows.into_values().collect()
}

fn object(name: &str, rng: &mut ChaCha8Rng) -> RawObject {
    let x = rng.gen_range(0.0..400.0f64).round();
    let y = rng.gen_range(0.0..300.0f64).round();
    RawObject {
        name: name.to_string(),
        synsets: vec![format!("{name}.n.01")],
        bbox: Some([x, y, rng.gen_range(10.0..200.0f64).round(), rng.gen_range(10.0..200.0f64).round()]),
    }
}

fn relation(s: usize, p: &str, o: usize) -> RawRelation {
    RawRelation {
        subject: s,
        predicate: p.to_string(),
        synset: Some(format!("{}.v.01", p.replace(' ', "_"))),
        object: o,
    }
}

fn scene(i: usize, rng: &mut ChaCha8Rng) -> RawSceneGraph {
    let image_id = format!("img{i}");
    if i == 1 {
        let objects = ["girl", "hotdog", "plate", "table", "dog"].map(|n| object(n, rng)).to_vec();
        return RawSceneGraph {
            image_id,
            objects,
            relations: vec![
                relation(0, "holds", 1),
                relation(1, "on", 2),
                relation(2, "on", 3),
                relation(4, "near", 0),
            ],
        };
    }
    let n = rng.gen_range(4..=7);
    let mut names = OBJECTS.to_vec();
    names.shuffle(rng);
    let objects: Vec<RawObject> = names[..n].iter().map(|n| object(n, rng)).collect();
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut relations = Vec::new();
    let m = rng.gen_range(4..=8);
    while relations.len() < m {
        let s = rng.gen_range(0..n);
        let o = rng.gen_range(0..n);
        if s == o || !used.insert((s, o)) {
            continue;
        }
        relations.push(relation(s, PREDICATES.choose(rng).unwrap(), o));
    }
    RawSceneGraph {
        image_id,
        objects,
        relations,
    }
}

/// The bundled fixture: 50 scenes over 20 object classes and a 300-triplet
/// knowledge base. Scene `img1` contains a girl holding a hotdog.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kb = fixture_kb(&mut rng);
    let scenes = (1..=FIXTURE_IMAGES).map(|i| scene(i, &mut rng)).collect();
    Fixture { scenes, kb }
}

pub const FIXTURE_SEED: u64 = 2020;

/// Default generation settings written next to the fixture.
pub const FIXTURE_CONFIG: &str = "seed = 7\nmax_route_len = 2\nanswer_cap = 100\nsplit_ratios = [0.6, 0.2, 0.2]\nmax_attempts_per_image = 200\nenforce_triplet_once_qtypes = [2, 3, 5]\n";

/// Writes `scenes.json`, `kb.jsonl` and `generate.toml` into `dir`.
pub fn write_fixture(dir: &Path) -> std::io::Result<()> {
    let f = fixture(FIXTURE_SEED);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("scenes.json"), scenes_to_vg_json(&f.scenes))?;
    std::fs::write(dir.join("kb.jsonl"), kb_to_jsonl(&f.kb))?;
    std::fs::write(dir.join("generate.toml"), FIXTURE_CONFIG)?;
    Ok(())
}

/// A knowledge base where every `(head, relation)` pair has exactly one tail.
/// Entities are `e000..`, relations `r00..`.
pub fn functional_kb(entities: usize, relations: usize, triplets: usize, seed: u64) -> KnowledgeBase {
    assert!(entities >= 2 && relations >= 1);
    assert!(triplets <= entities * relations, "not enough (head, relation) pairs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<(usize, usize)> = (0..entities).flat_map(|h| (0..relations).map(move |r| (h, r))).collect();
    slots.shuffle(&mut rng);
    let rows = slots[..triplets]
        .iter()
        .map(|&(h, r)| {
            let mut t = rng.gen_range(0..entities - 1);
            if t >= h {
                t += 1;
            }
            triplet(&format!("e{h:03}"), &format!("r{r:02}"), &format!("e{t:03}"))
        })
        .collect();
    KnowledgeBase::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let f = fixture(FIXTURE_SEED);
        assert_eq!(f.kb.len(), FIXTURE_KB_SIZE);
        assert_eq!(f.scenes.len(), FIXTURE_IMAGES);
        let img1 = &f.scenes[0];
        assert_eq!(img1.image_id, "img1");
        assert_eq!(img1.objects[img1.relations[0].subject].name, "girl");
        assert_eq!(img1.objects[img1.relations[0].object].name, "hotdog");
        let keys: BTreeSet<_> = f.kb.iter().map(|t| t.key()).collect();
        assert_eq!(keys.len(), FIXTURE_KB_SIZE);
        assert_eq!(fixture(FIXTURE_SEED), f);
    }

    #[test]
    fn functional_kb_has_unique_tails() {
        let kb = functional_kb(100, 10, 200, 1);
        assert_eq!(kb.len(), 200);
        let pairs: BTreeSet<_> = kb.triplets().iter().map(|t| (t.head.clone(), t.relation.clone())).collect();
        assert_eq!(pairs.len(), 200);
    }
}
