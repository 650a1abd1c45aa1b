use std::collections::BTreeMap;

use super::GenError;
use crate::model::Label;
use crate::program::{Operand, Program, Query};

const BUILTIN_PHRASES: &str = include_str!("../../data/relation_phrases.tsv");

/// Turns programs into question text using per-qtype templates and a
/// relation phrase table.
#[derive(Debug, Clone)]
pub struct Renderer {
    phrases: BTreeMap<Label, String>,
    strict: bool,
}

impl Default for Renderer {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Renderer {
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN_PHRASES).expect("builtin phrase table parses")
    }

    /// Parses `relation<TAB>phrase` lines; `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self, GenError> {
        let mut phrases = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (rel, phrase) = line
                .split_once('\t')
                .ok_or_else(|| GenError::PhraseTable(format!("line {}: expected two tab-separated columns", i + 1)))?;
            let rel = Label::new(rel).map_err(|e| GenError::PhraseTable(format!("line {}: {e}", i + 1)))?;
            let phrase = phrase.trim().to_lowercase();
            if phrase.is_empty() {
                return Err(GenError::PhraseTable(format!("line {}: empty phrase", i + 1)));
            }
            phrases.insert(rel, phrase);
        }
        Ok(Self { phrases, strict: false })
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn insert(&mut self, relation: Label, phrase: &str) {
        self.phrases.insert(relation, phrase.trim().to_lowercase());
    }

    pub fn phrase(&self, relation: &Label) -> Result<String, GenError> {
        match self.phrases.get(relation) {
            Some(p) => Ok(p.clone()),
            None if self.strict => Err(GenError::MissingSurfaceForm(relation.to_string())),
            None => Ok(relation.as_str().replace('_', " ")),
        }
    }

    pub fn render(&self, p: &Program, qtype: u8) -> Result<String, GenError> {
        render_question(p, qtype, self)
    }
}

fn atom(o: &Operand) -> &Label {
    o.atom().expect("operand checked to be an atom")
}

fn the(entity: &Label) -> String {
    format!("the {entity}")
}

fn inner_of(p: &Program) -> Result<&Query, GenError> {
    p.inner()
        .map(|(q, _)| q)
        .ok_or_else(|| GenError::QtypeMismatch(p.to_string()))
}

/// Realizes the question for `p`. `qtype` must be the program's own qtype.
pub fn render_question(p: &Program, qtype: u8, renderer: &Renderer) -> Result<String, GenError> {
    if p.qtype() != qtype {
        return Err(GenError::QtypeMismatch(p.to_string()));
    }
    let root = p.root();
    let text = match qtype {
        0 => format!(
            "what is the relationship of {} and {}?",
            the(atom(&root.first)),
            the(atom(&root.second))
        ),
        1 => format!("what is {} {}?", the(atom(&root.first)), renderer.phrase(atom(&root.second))?),
        2 => format!("what is {} {}?", renderer.phrase(atom(&root.first))?, the(atom(&root.second))),
        3 => {
            let inner = inner_of(p)?;
            format!(
                "what is the relation of the object that {} is {} and {}?",
                the(atom(&inner.first)),
                renderer.phrase(atom(&inner.second))?,
                the(atom(&root.second))
            )
        }
        4 => {
            let inner = inner_of(p)?;
            format!(
                "what is the relation of {} and the object that is {} {}?",
                the(atom(&root.first)),
                renderer.phrase(atom(&inner.first))?,
                the(atom(&inner.second))
            )
        }
        5 => {
            let inner = inner_of(p)?;
            format!(
                "what is the object that {} is {} {}?",
                the(atom(&inner.first)),
                renderer.phrase(atom(&inner.second))?,
                renderer.phrase(atom(&root.second))?
            )
        }
        6 => {
            let inner = inner_of(p)?;
            format!(
                "what is {} the object that is {} {}?",
                renderer.phrase(atom(&root.first))?,
                renderer.phrase(atom(&inner.first))?,
                the(atom(&inner.second))
            )
        }
        _ => return Err(GenError::QtypeMismatch(p.to_string())),
    };
    Ok(text)
}

/// Regex each qtype's questions match, with template slots as `.+`.
pub fn template_pattern(qtype: u8) -> Option<&'static str> {
    Some(match qtype {
        0 => r"^what is the relationship of the .+ and the .+\?$",
        1 => r"^what is the .+ .+\?$",
        2 => r"^what is .+ the .+\?$",
        3 => r"^what is the relation of the object that the .+ is .+ and the .+\?$",
        4 => r"^what is the relation of the .+ and the object that is .+ the .+\?$",
        5 => r"^what is the object that the .+ is .+ .+\?$",
        6 => r"^what is .+ the object that is .+ the .+\?$",
        _ => return None,
    })
}
