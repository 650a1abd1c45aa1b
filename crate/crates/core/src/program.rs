//! Program layouts: one elementary query, or two nested ones linked through a
//! shared middle entity. Programs print as s-expressions such as
//! `(Qar_K (Qar_I girl holds) usedfor)` and parse back to the same value.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Label, ModelError, Origin};

/// Which two entries of `(head, relation, tail)` are given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryKind {
    /// head and tail given, asks the relation
    Ab,
    /// head and relation given, asks the tail
    Ar,
    /// relation and tail given, asks the head
    Rb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Image,
    Kb,
}

impl Domain {
    pub fn origin(self) -> Origin {
        match self {
            Domain::Image => Origin::Image,
            Domain::Kb => Origin::Kb,
        }
    }

    pub fn for_origin(origin: Origin) -> Self {
        match origin {
            Origin::Image => Domain::Image,
            Origin::Kb => Domain::Kb,
        }
    }
}

/// One of the six elementary queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryOp {
    pub kind: QueryKind,
    pub domain: Domain,
}

impl QueryOp {
    pub const fn new(kind: QueryKind, domain: Domain) -> Self {
        Self { kind, domain }
    }

    pub fn tag(self) -> &'static str {
        match (self.kind, self.domain) {
            (QueryKind::Ab, Domain::Image) => "Qab_I",
            (QueryKind::Ar, Domain::Image) => "Qar_I",
            (QueryKind::Rb, Domain::Image) => "Qrb_I",
            (QueryKind::Ab, Domain::Kb) => "Qab_K",
            (QueryKind::Ar, Domain::Kb) => "Qar_K",
            (QueryKind::Rb, Domain::Kb) => "Qrb_K",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        let (kind, domain) = match tag {
            "Qab_I" => (QueryKind::Ab, Domain::Image),
            "Qar_I" => (QueryKind::Ar, Domain::Image),
            "Qrb_I" => (QueryKind::Rb, Domain::Image),
            "Qab_K" => (QueryKind::Ab, Domain::Kb),
            "Qar_K" => (QueryKind::Ar, Domain::Kb),
            "Qrb_K" => (QueryKind::Rb, Domain::Kb),
            _ => return None,
        };
        Some(Self { kind, domain })
    }
}

impl fmt::Display for QueryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Role of an operand slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head,
    Relation,
    Tail,
}

impl QueryKind {
    /// Roles of the (first, second) operands.
    pub fn operand_slots(self) -> (Slot, Slot) {
        match self {
            QueryKind::Ab => (Slot::Head, Slot::Tail),
            QueryKind::Ar => (Slot::Head, Slot::Relation),
            QueryKind::Rb => (Slot::Relation, Slot::Tail),
        }
    }

    /// Role of the returned value.
    pub fn answer_slot(self) -> Slot {
        match self {
            QueryKind::Ab => Slot::Relation,
            QueryKind::Ar => Slot::Tail,
            QueryKind::Rb => Slot::Head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Atom(Label),
    Nested(Box<Query>),
}

impl Operand {
    pub fn atom(&self) -> Option<&Label> {
        match self {
            Operand::Atom(l) => Some(l),
            Operand::Nested(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub op: QueryOp,
    pub first: Operand,
    pub second: Operand,
}

impl Query {
    pub fn flat(op: QueryOp, first: Label, second: Label) -> Self {
        Self {
            op,
            first: Operand::Atom(first),
            second: Operand::Atom(second),
        }
    }

    pub fn depth(&self) -> usize {
        1 + [&self.first, &self.second]
            .iter()
            .map(|o| match o {
                Operand::Atom(_) => 0,
                Operand::Nested(q) => q.depth(),
            })
            .max()
            .unwrap_or(0)
    }

    /// Both operands as labels, for depth-1 queries.
    pub fn atoms(&self) -> Option<(&Label, &Label)> {
        Some((self.first.atom()?, self.second.atom()?))
    }
}

/// Where the nested query sits in a two-step program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nesting {
    /// Inner query resolves the outer head; the inner triplet comes first in
    /// the chain `(a, r1, b)-(b, r2, c)`.
    Head,
    /// Inner query resolves the outer tail; the inner triplet comes second.
    Tail,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("programs nest at most two queries, found depth {0}")]
    TooDeep(usize),
    #[error("both operands of {0} are nested")]
    BothNested(QueryOp),
    #[error("{outer} cannot take a nested query in its {slot:?} slot")]
    NestedSlot { outer: QueryOp, slot: Slot },
    #[error("{inner} yields a {yields:?} but feeds the {slot:?} slot of the outer query")]
    BrokenLinkage {
        inner: QueryOp,
        yields: Slot,
        slot: Slot,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// A validated program of depth 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    root: Query,
}

impl Program {
    pub fn new(root: Query) -> Result<Self, ProgramError> {
        let depth = root.depth();
        if depth > 2 {
            return Err(ProgramError::TooDeep(depth));
        }
        let first_nested = matches!(root.first, Operand::Nested(_));
        let second_nested = matches!(root.second, Operand::Nested(_));
        if first_nested && second_nested {
            return Err(ProgramError::BothNested(root.op));
        }
        let (first_slot, second_slot) = root.op.kind.operand_slots();
        let nested = match (&root.first, &root.second) {
            (Operand::Nested(q), _) => Some((q, first_slot)),
            (_, Operand::Nested(q)) => Some((q, second_slot)),
            _ => None,
        };
        if let Some((inner, slot)) = nested {
            // The inner answer is the shared middle entity b: it is the tail of
            // the first triplet (outer head) or the head of the second (outer tail).
            let needed = match slot {
                Slot::Head => Slot::Tail,
                Slot::Tail => Slot::Head,
                Slot::Relation => {
                    return Err(ProgramError::NestedSlot {
                        outer: root.op,
                        slot,
                    })
                }
            };
            let yields = inner.op.kind.answer_slot();
            if yields != needed {
                return Err(ProgramError::BrokenLinkage {
                    inner: inner.op,
                    yields,
                    slot,
                });
            }
        }
        Ok(Self { root })
    }

    pub fn single(op: QueryOp, first: Label, second: Label) -> Self {
        Self {
            root: Query::flat(op, first, second),
        }
    }

    pub fn root(&self) -> &Query {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// The nested query and its position, for two-step programs.
    pub fn inner(&self) -> Option<(&Query, Nesting)> {
        match (&self.root.first, &self.root.second) {
            (Operand::Nested(q), _) => Some((q, Nesting::Head)),
            (_, Operand::Nested(q)) => Some((q, Nesting::Tail)),
            _ => None,
        }
    }

    /// All queries, innermost first.
    pub fn queries(&self) -> Vec<&Query> {
        match self.inner() {
            Some((inner, _)) => vec![inner, &self.root],
            None => vec![&self.root],
        }
    }

    pub fn consults(&self, domain: Domain) -> bool {
        self.queries().iter().any(|q| q.op.domain == domain)
    }

    /// Question type derived from the program shape:
    /// one-step AB/AR/RB give 0/1/2; two-step asking the second relation 3,
    /// the first relation 4, the final tail 5 and the initial head 6.
    pub fn qtype(&self) -> u8 {
        match self.inner() {
            None => match self.root.op.kind {
                QueryKind::Ab => 0,
                QueryKind::Ar => 1,
                QueryKind::Rb => 2,
            },
            Some((_, nesting)) => match (self.root.op.kind, nesting) {
                (QueryKind::Ab, Nesting::Head) => 3,
                (QueryKind::Ab, Nesting::Tail) => 4,
                (QueryKind::Ar, _) => 5,
                (QueryKind::Rb, _) => 6,
            },
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_query(&self.root, f)
    }
}

fn write_query(q: &Query, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "({} ", q.op.tag())?;
    write_operand(&q.first, f)?;
    f.write_str(" ")?;
    write_operand(&q.second, f)?;
    f.write_str(")")
}

fn write_operand(o: &Operand, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match o {
        Operand::Nested(q) => write_query(q, f),
        Operand::Atom(l) => write_atom(l.as_str(), f),
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"' | '\\'))
}

fn write_atom(s: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if !needs_quotes(s) {
        return f.write_str(s);
    }
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl FromStr for Program {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = Parser { src: s, pos: 0 };
        parser.skip_ws();
        let root = parser.query()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.error("trailing input after program"));
        }
        Program::new(root)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ProgramError {
        ProgramError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn query(&mut self) -> Result<Query, ProgramError> {
        if self.bump() != Some('(') {
            return Err(self.error("expected `(`"));
        }
        self.skip_ws();
        let tag_start = self.pos;
        let tag = self.bare_atom();
        let op = QueryOp::from_tag(tag).ok_or_else(|| ProgramError::Parse {
            offset: tag_start,
            message: format!("unknown query `{tag}`"),
        })?;
        self.skip_ws();
        let first = self.operand()?;
        self.skip_ws();
        let second = self.operand()?;
        self.skip_ws();
        if self.bump() != Some(')') {
            return Err(self.error("expected `)` after two operands"));
        }
        Ok(Query { op, first, second })
    }

    fn operand(&mut self) -> Result<Operand, ProgramError> {
        match self.peek() {
            Some('(') => Ok(Operand::Nested(Box::new(self.query()?))),
            Some('"') => {
                let start = self.pos;
                let text = self.quoted()?;
                self.label(&text, start)
            }
            Some(')') | None => Err(self.error("expected operand")),
            Some(_) => {
                let start = self.pos;
                let text = self.bare_atom().to_string();
                self.label(&text, start)
            }
        }
    }

    fn label(&self, text: &str, offset: usize) -> Result<Operand, ProgramError> {
        Label::new(text)
            .map(Operand::Atom)
            .map_err(|e: ModelError| ProgramError::Parse {
                offset,
                message: e.to_string(),
            })
    }

    fn bare_atom(&mut self) -> &str {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | '"'))
        {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self) -> Result<String, ProgramError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('"' | '\\')) => out.push(c),
                    _ => return Err(self.error("bad escape")),
                },
                Some(c) => out.push(c),
            }
        }
    }
}
