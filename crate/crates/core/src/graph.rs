//! Scene-graph cleaning, the indexed knowledge base, and the per-image merge
//! of the two into an image-specific knowledge graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    EntityId, Fact, KbSource, KnowledgeTriplet, Label, Origin, RelationId, SceneObject,
    SceneTriplet, TripletKey,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObject {
    pub name: String,
    #[serde(default)]
    pub synsets: Vec<String>,
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelation {
    pub subject: usize,
    pub predicate: String,
    #[serde(default)]
    pub synset: Option<String>,
    pub object: usize,
}

/// Uncleaned annotations for one image; relation endpoints index `objects`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawSceneGraph {
    pub image_id: String,
    pub objects: Vec<RawObject>,
    pub relations: Vec<RawRelation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: String,
    pub objects: Vec<SceneObject>,
    pub triplets: Vec<SceneTriplet>,
}

impl SceneGraph {
    pub fn object(&self, instance_id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    /// Inverse of cleaning for already-clean graphs; instance ids become indices.
    pub fn to_raw(&self) -> RawSceneGraph {
        let index: HashMap<u32, usize> = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.instance_id, i))
            .collect();
        RawSceneGraph {
            image_id: self.image_id.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| RawObject {
                    name: o.display_name.clone(),
                    synsets: vec![o.synset.to_string()],
                    bbox: o.bbox,
                })
                .collect(),
            relations: self
                .triplets
                .iter()
                .map(|t| RawRelation {
                    subject: index[&t.subject],
                    predicate: t.predicate.to_string(),
                    synset: Some(t.predicate_synset.to_string()),
                    object: index[&t.object],
                })
                .collect(),
        }
    }
}

/// Keeps the objects that carry a synset (the first listed becomes the class
/// label) and the relations whose predicate has a synset and whose endpoints
/// both survived. Duplicate relations collapse to one.
pub fn clean_scene_graph(raw: &RawSceneGraph) -> SceneGraph {
    let mut objects = Vec::new();
    let mut kept = vec![false; raw.objects.len()];
    for (idx, obj) in raw.objects.iter().enumerate() {
        let Some(synset) = obj.synsets.iter().find_map(|s| Label::new(s).ok()) else {
            continue;
        };
        kept[idx] = true;
        objects.push(SceneObject::new(idx as u32, synset, obj.name.clone(), obj.bbox));
    }
    let mut seen = BTreeSet::new();
    let mut triplets = Vec::new();
    for rel in &raw.relations {
        let Some(pred_synset) = rel.synset.as_deref().and_then(|s| Label::new(s).ok()) else {
            continue;
        };
        let Ok(predicate) = Label::new(&rel.predicate) else {
            continue;
        };
        if rel.subject == rel.object
            || !kept.get(rel.subject).copied().unwrap_or(false)
            || !kept.get(rel.object).copied().unwrap_or(false)
        {
            continue;
        }
        let t = SceneTriplet {
            subject: rel.subject as u32,
            predicate,
            predicate_synset: pred_synset,
            object: rel.object as u32,
        };
        if seen.insert((t.subject, t.predicate.clone(), t.object)) {
            triplets.push(t);
        }
    }
    // Instance ids are raw indices; renumber densely so cleaning is idempotent.
    let remap: HashMap<u32, u32> = objects
        .iter()
        .enumerate()
        .map(|(new, o)| (o.instance_id, new as u32))
        .collect();
    for o in &mut objects {
        o.instance_id = remap[&o.instance_id];
    }
    for t in &mut triplets {
        t.subject = remap[&t.subject];
        t.object = remap[&t.object];
    }
    SceneGraph {
        image_id: raw.image_id.clone(),
        objects,
        triplets,
    }
}

/// Read-only knowledge base with lookup indexes over normalized labels.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    triplets: Vec<KnowledgeTriplet>,
    by_head: HashMap<EntityId, Vec<usize>>,
    by_tail: HashMap<EntityId, Vec<usize>>,
    by_relation: HashMap<RelationId, Vec<usize>>,
    entities: BTreeSet<EntityId>,
}

impl KnowledgeBase {
    pub fn new(triplets: Vec<KnowledgeTriplet>) -> Self {
        let mut kb = KnowledgeBase {
            triplets,
            ..Default::default()
        };
        for (i, t) in kb.triplets.iter().enumerate() {
            kb.by_head.entry(t.head.clone()).or_default().push(i);
            kb.by_tail.entry(t.tail.clone()).or_default().push(i);
            kb.by_relation.entry(t.relation.clone()).or_default().push(i);
            kb.entities.insert(t.head.clone());
            kb.entities.insert(t.tail.clone());
        }
        kb
    }

    pub fn triplets(&self) -> &[KnowledgeTriplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn entities(&self) -> &BTreeSet<EntityId> {
        &self.entities
    }

    pub fn relation_count(&self) -> usize {
        self.by_relation.len()
    }

    pub fn has_entity(&self, e: &Label) -> bool {
        self.entities.contains(e)
    }

    pub fn has_relation(&self, r: &Label) -> bool {
        self.by_relation.contains_key(r)
    }

    fn indexed<'a>(&'a self, ids: Option<&'a Vec<usize>>) -> impl Iterator<Item = &'a KnowledgeTriplet> + 'a {
        ids.into_iter().flatten().map(move |&i| &self.triplets[i])
    }

    pub fn with_head<'a>(&'a self, head: &Label) -> impl Iterator<Item = &'a KnowledgeTriplet> + 'a {
        self.indexed(self.by_head.get(head))
    }

    pub fn with_tail<'a>(&'a self, tail: &Label) -> impl Iterator<Item = &'a KnowledgeTriplet> + 'a {
        self.indexed(self.by_tail.get(tail))
    }

    /// Triplets with `entity` as head or tail, each once.
    pub fn incident<'a>(&'a self, entity: &Label) -> impl Iterator<Item = &'a KnowledgeTriplet> + 'a {
        let e = entity.clone();
        self.with_head(entity)
            .chain(self.with_tail(entity).filter(move |t| t.head != e))
    }
}

/// A scene graph extended with every knowledge triplet that touches one of
/// its object lemmas. Scene edges carry origin IMAGE, knowledge edges KB.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageKnowledgeGraph {
    pub image_id: String,
    pub objects: Vec<SceneObject>,
    pub scene_edges: Vec<SceneTriplet>,
    pub kb_edges: Vec<KnowledgeTriplet>,
}

impl ImageKnowledgeGraph {
    pub fn object(&self, instance_id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn lemma_of(&self, instance_id: u32) -> &Label {
        &self
            .object(instance_id)
            .expect("scene edge endpoint missing from objects")
            .lemma
    }

    pub fn scene_fact(&self, t: &SceneTriplet) -> Fact {
        Fact {
            head: self.lemma_of(t.subject).clone(),
            relation: t.predicate.clone(),
            tail: self.lemma_of(t.object).clone(),
            origin: Origin::Image,
        }
    }

    /// Every edge as a label-level fact with its origin tag.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.scene_edges
            .iter()
            .map(|t| self.scene_fact(t))
            .chain(self.kb_edges.iter().map(KnowledgeTriplet::fact))
    }

    pub fn edge_count(&self) -> usize {
        self.scene_edges.len() + self.kb_edges.len()
    }

    pub fn lemmas(&self) -> BTreeSet<Label> {
        self.objects.iter().map(|o| o.lemma.clone()).collect()
    }
}

/// Attaches every KB triplet whose head or tail equals a scene-object lemma.
/// Output edges are deduplicated and sorted by `(head, relation, tail)`.
pub fn merge_knowledge(scene: &SceneGraph, kb: &KnowledgeBase) -> ImageKnowledgeGraph {
    let lemmas: BTreeSet<&Label> = scene.objects.iter().map(|o| &o.lemma).collect();
    let mut attached: BTreeMap<TripletKey, &KnowledgeTriplet> = BTreeMap::new();
    for lemma in &lemmas {
        for t in kb.with_head(lemma).chain(kb.with_tail(lemma)) {
            attached.entry(t.key()).or_insert(t);
        }
    }
    let mut scene_edges = scene.triplets.clone();
    scene_edges.sort_by(|a, b| {
        let fa = (scene_lemma(scene, a.subject), &a.predicate, scene_lemma(scene, a.object));
        let fb = (scene_lemma(scene, b.subject), &b.predicate, scene_lemma(scene, b.object));
        fa.cmp(&fb).then_with(|| (a.subject, a.object).cmp(&(b.subject, b.object)))
    });
    ImageKnowledgeGraph {
        image_id: scene.image_id.clone(),
        objects: scene.objects.clone(),
        scene_edges,
        kb_edges: attached.into_values().cloned().collect(),
    }
}

fn scene_lemma(scene: &SceneGraph, id: u32) -> Option<&Label> {
    scene.object(id).map(|o| &o.lemma)
}

/// Counts from an import, including records that could not be used.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImportReport {
    pub records: usize,
    pub imported: usize,
    pub skipped: usize,
    /// `(line or record number, reason)` for each skipped record.
    pub skip_details: Vec<(usize, String)>,
}

impl ImportReport {
    fn skip(&mut self, at: usize, why: impl Into<String>) {
        self.skipped += 1;
        self.skip_details.push((at, why.into()));
    }
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a Visual-Genome-style scene graph file: a JSON array of images, each
/// with `image_id`, `objects` (`object_id`, `names` or `name`, `synsets`,
/// optional `x`/`y`/`w`/`h`) and `relationships` (`predicate`, `synsets`, and
/// `subject_id`/`object_id` or embedded `subject`/`object` objects).
pub fn import_vg(path: &Path) -> Result<(Vec<RawSceneGraph>, ImportReport), GraphError> {
    let text = read(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| GraphError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Array(images) = value else {
        return Err(GraphError::Format {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "expected a JSON array of images".into(),
        });
    };
    let mut report = ImportReport::default();
    let mut out = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        report.records += 1;
        match parse_vg_image(img, &mut report, i) {
            Ok(g) => {
                report.imported += 1;
                out.push(g);
            }
            Err(why) => report.skip(i, why),
        }
    }
    Ok((out, report))
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn str_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|x| x.as_str().map(str::to_string))
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    }
}

fn parse_vg_object(o: &Value) -> Result<(Option<String>, RawObject), String> {
    let obj = o.as_object().ok_or("object is not a JSON object")?;
    let key = obj.get("object_id").or_else(|| obj.get("id")).and_then(id_string);
    let name = str_list(obj.get("names"))
        .into_iter()
        .next()
        .or_else(|| obj.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_default();
    let bbox = match (obj.get("x"), obj.get("y"), obj.get("w"), obj.get("h")) {
        (Some(x), Some(y), Some(w), Some(h)) => {
            match (x.as_f64(), y.as_f64(), w.as_f64(), h.as_f64()) {
                (Some(x), Some(y), Some(w), Some(h)) => Some([x, y, w, h]),
                _ => None,
            }
        }
        _ => None,
    };
    Ok((
        key,
        RawObject {
            name,
            synsets: str_list(obj.get("synsets")),
            bbox,
        },
    ))
}

fn parse_vg_image(img: &Value, report: &mut ImportReport, record: usize) -> Result<RawSceneGraph, String> {
    let obj = img.as_object().ok_or("image record is not a JSON object")?;
    let image_id = obj
        .get("image_id")
        .or_else(|| obj.get("id"))
        .and_then(id_string)
        .ok_or("missing image_id")?;
    let mut graph = RawSceneGraph {
        image_id,
        ..Default::default()
    };
    let mut index: HashMap<String, usize> = HashMap::new();
    let add = |o: &Value, graph: &mut RawSceneGraph, index: &mut HashMap<String, usize>| -> Result<usize, String> {
        let (key, raw) = parse_vg_object(o)?;
        if let Some(k) = &key {
            if let Some(&i) = index.get(k) {
                return Ok(i);
            }
        }
        graph.objects.push(raw);
        let i = graph.objects.len() - 1;
        if let Some(k) = key {
            index.insert(k, i);
        }
        Ok(i)
    };
    if let Some(objects) = obj.get("objects") {
        let list = objects.as_array().ok_or("`objects` is not an array")?;
        for o in list {
            add(o, &mut graph, &mut index)?;
        }
    }
    let rels = match obj.get("relationships").or_else(|| obj.get("relations")) {
        None => return Ok(graph),
        Some(r) => r.as_array().ok_or("`relationships` is not an array")?,
    };
    for (j, r) in rels.iter().enumerate() {
        let endpoint = |field: &str, graph: &mut RawSceneGraph, index: &mut HashMap<String, usize>| -> Result<usize, String> {
            if let Some(id) = r.get(format!("{field}_id")).and_then(id_string) {
                return index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| format!("relation {j}: unknown {field} id {id}"));
            }
            match r.get(field) {
                Some(o @ Value::Object(_)) => add(o, graph, index),
                _ => Err(format!("relation {j}: missing {field}")),
            }
        };
        let parsed = (|| {
            let subject = endpoint("subject", &mut graph, &mut index)?;
            let object = endpoint("object", &mut graph, &mut index)?;
            let predicate = r
                .get("predicate")
                .and_then(|p| p.as_str())
                .ok_or_else(|| format!("relation {j}: missing predicate"))?
                .to_string();
            let synset = str_list(r.get("synsets")).into_iter().next();
            Ok::<_, String>(RawRelation {
                subject,
                predicate,
                synset,
                object,
            })
        })();
        match parsed {
            Ok(rel) => graph.relations.push(rel),
            Err(why) => report.skip(record, why),
        }
    }
    Ok(graph)
}

#[derive(Debug, Deserialize)]
struct KbRow {
    head: String,
    relation: String,
    tail: String,
    #[serde(default)]
    surface: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    reflexive: bool,
}

fn kb_row_to_triplet(row: KbRow) -> Result<KnowledgeTriplet, String> {
    let head = Label::new(&row.head).map_err(|_| "empty head")?;
    let relation = Label::new(&row.relation).map_err(|_| "empty relation")?;
    let tail = Label::new(&row.tail).map_err(|_| "empty tail")?;
    if row.surface.trim().is_empty() {
        return Err("empty surface text".into());
    }
    if head == tail && !row.reflexive {
        return Err(format!("reflexive triplet on `{head}` without reflexive flag"));
    }
    let source = match row.source.as_deref() {
        None | Some("") => KbSource::Synthetic,
        Some(s) => s.parse().map_err(|e: crate::model::ModelError| e.to_string())?,
    };
    Ok(KnowledgeTriplet {
        head,
        relation,
        tail,
        surface_text: row.surface.trim().to_string(),
        source,
        reflexive: row.reflexive,
    })
}

/// Reads a knowledge base as JSONL (`head`, `relation`, `tail`, `surface`,
/// `source`) or, for `.tsv` files, tab-separated columns in the same order.
/// Malformed rows are skipped and listed in the report by line number.
pub fn import_kb(path: &Path) -> Result<(KnowledgeBase, ImportReport), GraphError> {
    let text = read(path)?;
    let tsv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    let (triplets, report) = parse_kb_text(&text, tsv);
    Ok((KnowledgeBase::new(triplets), report))
}

pub fn parse_kb_text(text: &str, tsv: bool) -> (Vec<KnowledgeTriplet>, ImportReport) {
    let mut report = ImportReport::default();
    let mut triplets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || (tsv && line.starts_with('#')) {
            continue;
        }
        report.records += 1;
        let row = if tsv {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                report.skip(lineno, format!("expected at least 4 tab-separated columns, got {}", cols.len()));
                continue;
            }
            if lineno == 1 && cols[0].eq_ignore_ascii_case("head") {
                report.records -= 1;
                continue;
            }
            Ok(KbRow {
                head: cols[0].into(),
                relation: cols[1].into(),
                tail: cols[2].into(),
                surface: cols[3].into(),
                source: cols.get(4).map(|s| s.to_string()),
                reflexive: cols.get(5).is_some_and(|s| s.trim() == "1" || s.trim().eq_ignore_ascii_case("true")),
            })
        } else {
            serde_json::from_str::<KbRow>(line).map_err(|e| format!("column {}: {e}", e.column()))
        };
        match row.and_then(kb_row_to_triplet) {
            Ok(t) => {
                report.imported += 1;
                triplets.push(t);
            }
            Err(why) => report.skip(lineno, why),
        }
    }
    (triplets, report)
}

/// Writes a knowledge base as JSONL in the importer's schema.
pub fn kb_to_jsonl(triplets: &[KnowledgeTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        let mut row = serde_json::json!({
            "head": t.head,
            "relation": t.relation,
            "tail": t.tail,
            "surface": t.surface_text,
            "source": t.source.to_string(),
        });
        if t.reflexive {
            row["reflexive"] = Value::Bool(true);
        }
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

/// Writes scene graphs in the layout `import_vg` reads.
pub fn scenes_to_vg_json(graphs: &[RawSceneGraph]) -> String {
    let images: Vec<Value> = graphs
        .iter()
        .map(|g| {
            let objects: Vec<Value> = g
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    let mut v = serde_json::json!({
                        "object_id": i,
                        "names": [o.name],
                        "synsets": o.synsets,
                    });
                    if let Some([x, y, w, h]) = o.bbox {
                        v["x"] = x.into();
                        v["y"] = y.into();
                        v["w"] = w.into();
                        v["h"] = h.into();
                    }
                    v
                })
                .collect();
            let relationships: Vec<Value> = g
                .relations
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "subject_id": r.subject,
                        "predicate": r.predicate,
                        "synsets": r.synset.iter().collect::<Vec<_>>(),
                        "object_id": r.object,
                    })
                })
                .collect();
            serde_json::json!({
                "image_id": g.image_id,
                "objects": objects,
                "relationships": relationships,
            })
        })
        .collect();
    serde_json::to_string_pretty(&images).expect("scene JSON serializes")
}
