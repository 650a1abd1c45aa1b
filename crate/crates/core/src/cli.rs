//! Command-line interface. Every subcommand reads and writes plain files;
//! results that are not written to a file go to the given writer.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::dataset::{self, Dataset};
use crate::evaluation;
use crate::executor::Oracle;
use crate::generator::{self, Renderer};
use crate::graph::{self, ImageKnowledgeGraph, KnowledgeBase, RawSceneGraph};
use crate::kgembed::{self, KgEmbedding, TrainConfig};
use crate::model::{GenerationConfig, Label, Split};
use crate::program::Program;
use crate::retrieval;
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "krvqr", version, about = "Knowledge-grounded visual question generation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Scene graph file (JSON array of images)
    #[arg(long, default_value = "scenes.json")]
    pub scenes: PathBuf,
    /// Knowledge base file (JSONL, or TSV when the name ends in .tsv)
    #[arg(long, default_value = "kb.jsonl")]
    pub kb: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import and clean raw scene graphs and a knowledge base
    Import {
        /// Raw scene graph file to clean
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Raw knowledge base (JSONL or TSV)
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Directory receiving scenes.json and kb.jsonl
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Attach knowledge triplets to every scene and write the graphs as JSONL
    Merge {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate question-answer pairs
    Generate {
        #[command(flatten)]
        inputs: Inputs,
        /// Generation settings (TOML)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config
        #[arg(long)]
        seed: Option<u64>,
        /// Relation phrase table (relation<TAB>phrase)
        #[arg(long)]
        phrases: Option<PathBuf>,
        /// Output dataset (JSONL)
        #[arg(long)]
        out: PathBuf,
        /// Write the generation counters here as JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dataset statistics as JSON
    Stats {
        #[arg(long)]
        data: PathBuf,
        /// Also write the per-qtype table as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print per-qtype totals next to the reference dataset's
        #[arg(long)]
        reference: bool,
    },
    /// Reassign splits by image
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated train,val,test ratios
        #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_ratios)]
        ratios: [f64; 3],
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute a program against one image, or re-check a whole dataset
    Oracle {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, requires = "image", conflicts_with = "dataset")]
        program: Option<String>,
        #[arg(long)]
        image: Option<String>,
        /// Re-execute every stored program and compare with its answer
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train rotation embeddings on a knowledge base
    EmbedTrain {
        #[arg(long, default_value = "kb.jsonl")]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        dim: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 4)]
        negatives: usize,
        #[arg(long, default_value_t = 6.0)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tail prediction mean rank and hits@1
    EmbedEval {
        #[arg(long)]
        embedding: PathBuf,
        /// Test triplets (knowledge base format)
        #[arg(long)]
        kb: PathBuf,
    },
    /// Rank question nouns and print the retrieved knowledge triplets
    Retrieve {
        #[arg(long, default_value = "kb.jsonl")]
        kb: PathBuf,
        #[arg(long)]
        question: String,
        /// Dataset whose questions provide document frequencies
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = retrieval::DEFAULT_K)]
        k: usize,
    },
    /// Predict the most frequent training answer of each qtype
    Baseline {
        #[arg(long)]
        data: PathBuf,
        /// Split to predict
        #[arg(long, default_value = "test")]
        split: Split,
        /// Predictions (JSONL of {id, answer})
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a dataset
    Score {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict the gold set to one split
        #[arg(long)]
        split: Option<Split>,
        /// Write the report as JSON here
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write the bundled synthetic scenes, knowledge base and config
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected three ratios, got {}", p.len()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn is_tsv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
}

fn load_kb(path: &Path) -> Result<(KnowledgeBase, graph::ImportReport)> {
    let text = read_text(path)?;
    let (rows, report) = graph::parse_kb_text(&text, is_tsv(path));
    if let Some((line, why)) = report.skip_details.first() {
        eprintln!("warning: {}: skipped {} records, first at line {line}: {why}", path.display(), report.skipped);
    }
    Ok((KnowledgeBase::new(rows), report))
}

fn load_scenes(path: &Path) -> Result<Vec<RawSceneGraph>> {
    let (scenes, report) = graph::import_vg(path)?;
    if let Some((rec, why)) = report.skip_details.first() {
        eprintln!("warning: {}: skipped {} images, first at record {rec}: {why}", path.display(), report.skipped);
    }
    Ok(scenes)
}

fn load_corpus(inputs: &Inputs) -> Result<(Vec<ImageKnowledgeGraph>, KnowledgeBase)> {
    let (kb, _) = load_kb(&inputs.kb)?;
    let corpus = load_scenes(&inputs.scenes)?
        .iter()
        .map(|raw| graph::merge_knowledge(&graph::clean_scene_graph(raw), &kb))
        .collect();
    Ok((corpus, kb))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

#[derive(serde::Serialize)]
struct ImportSummary {
    images: Option<graph::ImportReport>,
    kb: Option<graph::ImportReport>,
    kb_triplets: usize,
    kb_relations: usize,
    kb_entities: usize,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Import { scenes, kb, out_dir } => {
            if scenes.is_none() && kb.is_none() {
                bail!("nothing to import: pass --scenes and/or --kb");
            }
            let mut summary = ImportSummary {
                images: None,
                kb: None,
                kb_triplets: 0,
                kb_relations: 0,
                kb_entities: 0,
            };
            if let Some(path) = scenes {
                let (raw, report) = graph::import_vg(&path)?;
                let cleaned: Vec<RawSceneGraph> = raw.iter().map(|g| graph::clean_scene_graph(g).to_raw()).collect();
                write_file(&out_dir.join("scenes.json"), &graph::scenes_to_vg_json(&cleaned))?;
                summary.images = Some(report);
            }
            if let Some(path) = kb {
                let (kb, report) = load_kb(&path)?;
                write_file(&out_dir.join("kb.jsonl"), &graph::kb_to_jsonl(kb.triplets()))?;
                summary.kb_triplets = kb.len();
                summary.kb_relations = kb.relation_count();
                summary.kb_entities = kb.entities().len();
                summary.kb = Some(report);
            }
            out.write_all(to_json(&summary).as_bytes())?;
        }
        Command::Merge { inputs, out: path } => {
            let (corpus, _) = load_corpus(&inputs)?;
            let mut text = String::new();
            for g in &corpus {
                text.push_str(&serde_json::to_string(g)?);
                text.push('\n');
            }
            write_file(&path, &text)?;
            writeln!(out, "merged {} images", corpus.len())?;
        }
        Command::Generate {
            inputs,
            config,
            seed,
            phrases,
            out: path,
            report,
        } => {
            let mut cfg = match config {
                Some(p) => GenerationConfig::from_toml(&read_text(&p)?).with_context(|| format!("in {}", p.display()))?,
                None => GenerationConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let renderer = match phrases {
                Some(p) => Renderer::from_tsv(&read_text(&p)?).with_context(|| format!("in {}", p.display()))?,
                None => Renderer::builtin(),
            }
            .strict(cfg.strict_surface_forms);
            let (corpus, kb) = load_corpus(&inputs)?;
            let (data, rep) = generator::generate(&corpus, &kb, &cfg, &renderer)?;
            write_file(&path, &data.to_jsonl())?;
            if let Some(r) = report {
                write_file(&r, &to_json(&rep))?;
            }
            writeln!(out, "generated {} pairs from {} images ({} attempts)", rep.accepted, rep.images, rep.attempts)?;
        }
        Command::Stats { data, csv, reference } => {
            let d = Dataset::load(&data)?;
            let report = dataset::stats(&d);
            if let Some(p) = csv {
                write_file(&p, &report.table_csv())?;
            }
            out.write_all(to_json(&report).as_bytes())?;
            if reference {
                out.write_all(dataset::reference_comparison(&report).as_bytes())?;
            }
        }
        Command::Split { data, out: path, ratios, seed } => {
            let d = dataset::split(&Dataset::load(&data)?, &ratios, seed)?;
            write_file(&path, &d.to_jsonl())?;
            let per: Vec<usize> = Split::ALL.iter().map(|s| d.filter_split(*s).images().len()).collect();
            writeln!(out, "images per split: train {} val {} test {}", per[0], per[1], per[2])?;
        }
        Command::Oracle {
            inputs,
            program,
            image,
            dataset: data,
        } => {
            let (corpus, kb) = load_corpus(&inputs)?;
            let find = |id: &str| -> Result<&ImageKnowledgeGraph> {
                corpus.iter().find(|g| g.image_id == id).with_context(|| format!("image `{id}` not found"))
            };
            match (program, image, data) {
                (Some(p), Some(img), None) => {
                    let program: Program = p.parse().with_context(|| format!("parsing program `{p}`"))?;
                    let answers = Oracle::new(find(&img)?, &kb).execute(&program)?;
                    for a in answers.labels() {
                        writeln!(out, "{a}")?;
                    }
                }
                (None, _, Some(path)) => {
                    let d = Dataset::load(&path)?;
                    let mut wrong = 0usize;
                    for p in &d.pairs {
                        let got = Oracle::new(find(&p.image_id)?, &kb).execute(&p.program)?;
                        if got.unique().map(Label::as_str) != Some(p.answer.as_str()) {
                            wrong += 1;
                            eprintln!("{}: stored `{}`, executed {:?}", p.id, p.answer, got.labels().collect::<Vec<_>>());
                        }
                    }
                    writeln!(out, "{} of {} answers reproduced", d.len() - wrong, d.len())?;
                    if wrong > 0 {
                        bail!("{wrong} stored answers differ from execution");
                    }
                }
                _ => bail!("pass either --program with --image, or --dataset"),
            }
        }
        Command::EmbedTrain {
            kb,
            out: path,
            dim,
            epochs,
            lr,
            negatives,
            margin,
            seed,
        } => {
            let (kb, _) = load_kb(&kb)?;
            let cfg = TrainConfig {
                dim,
                epochs,
                lr,
                negatives,
                margin,
                seed,
            };
            let emb = kgembed::train_with(&kb, &cfg, |e, l| eprintln!("epoch {} loss {l:.6}", e + 1))?;
            emb.save(&path)?;
            writeln!(out, "embedded {} entities and {} relations", emb.entities().len(), emb.relations().len())?;
        }
        Command::EmbedEval { embedding, kb } => {
            let emb = KgEmbedding::load(&embedding)?;
            let (kb, _) = load_kb(&kb)?;
            let test: Vec<_> = kb.triplets().iter().map(|t| t.key()).collect();
            out.write_all(to_json(&kgembed::link_predict_eval(&emb, &test)?).as_bytes())?;
        }
        Command::Retrieve { kb, question, corpus, k } => {
            if k == 0 {
                bail!("--k must be at least 1");
            }
            let (kb, _) = load_kb(&kb)?;
            let questions: Vec<String> = match corpus {
                Some(p) => Dataset::load(&p)?.pairs.into_iter().map(|p| p.question).collect(),
                None => vec![question.clone()],
            };
            let index = retrieval::NounIndex::new(questions.iter().map(String::as_str));
            let nouns: Vec<String> = index.rank(&question).into_iter().map(|r| r.noun).collect();
            writeln!(out, "nouns: {}", nouns.join(", "))?;
            out.write_all(graph::kb_to_jsonl(&retrieval::retrieve_facts(&nouns, &kb, k)).as_bytes())?;
        }
        Command::Baseline { data, split, out: path } => {
            let d = Dataset::load(&data)?;
            let table = evaluation::qtype_baseline(&d.filter_split(Split::Train));
            let preds = evaluation::baseline_predictions(&table, &d.filter_split(split));
            write_file(&path, &evaluation::predictions_to_jsonl(&preds))?;
            let missing: BTreeSet<u8> = (0..7).filter(|q| !table.contains_key(q)).collect();
            if !missing.is_empty() {
                eprintln!("warning: no training answers for qtypes {missing:?}");
            }
            out.write_all(to_json(&table).as_bytes())?;
        }
        Command::Score {
            predictions,
            data,
            split,
            json,
        } => {
            let f = std::fs::File::open(&predictions).with_context(|| format!("reading {}", predictions.display()))?;
            let preds = evaluation::read_predictions(std::io::BufReader::new(f), &predictions)?;
            let mut gold = Dataset::load(&data)?;
            if let Some(s) = split {
                gold = gold.filter_split(s);
            }
            let report = evaluation::score_predictions(&preds, &gold);
            if let Some(p) = json {
                write_file(&p, &to_json(&report))?;
            }
            out.write_all(report.to_text().as_bytes())?;
        }
        Command::Fixture { out: dir } => {
            synth::write_fixture(&dir).with_context(|| format!("writing fixture to {}", dir.display()))?;
            writeln!(out, "wrote fixture to {}", dir.display())?;
        }
    }
    Ok(())
}

/// Caps the global thread pool from `KRVQR_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("KRVQR_THREADS") {
        let n: usize = v.parse().with_context(|| format!("KRVQR_THREADS=`{v}` is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ratios_parse() {
        assert_eq!(parse_ratios("0.6, 0.2,0.2").unwrap(), [0.6, 0.2, 0.2]);
        assert!(parse_ratios("0.5,0.5").is_err());
        assert!(parse_ratios("a,b,c").is_err());
    }
}
