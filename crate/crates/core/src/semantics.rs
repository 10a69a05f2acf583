//! Update expressions and semantic units.
//!
//! An update is a dotted slot path with operator brackets and `;` sequencing:
//!
//! ```text
//! travel.destination.([# place.town.leiden];[! place.town.abcoude])
//! ```
//!
//! `=` asserts, `#` retracts (denial) and `!` corrects. For concept accuracy
//! an update is flattened into `⟨function, slot, value⟩` units, where the
//! slot is the path with structural segments (see [`SlotTable`]) removed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::term::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Assert,
    Denial,
    Correction,
}

impl Operator {
    fn symbol(self) -> char {
        match self {
            Operator::Assert => '=',
            Operator::Denial => '#',
            Operator::Correction => '!',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum UpdateExpr {
    /// A slot name followed by the rest of the path.
    Path(String, Box<UpdateExpr>),
    Value(String),
    Op(Operator, Box<UpdateExpr>),
    /// Never directly contains another `Seq`.
    Seq(Vec<UpdateExpr>),
}

impl UpdateExpr {
    pub fn path(segments: &[&str], rest: UpdateExpr) -> UpdateExpr {
        segments
            .iter()
            .rev()
            .fold(rest, |acc, s| UpdateExpr::Path(s.to_string(), Box::new(acc)))
    }

    pub fn value(v: &str) -> UpdateExpr {
        UpdateExpr::Value(v.to_string())
    }

    pub fn op(op: Operator, e: UpdateExpr) -> UpdateExpr {
        UpdateExpr::Op(op, Box::new(e))
    }

    /// Sequence of `items`, collapsing a single item to itself.
    pub fn seq(items: Vec<UpdateExpr>) -> UpdateExpr {
        let mut flat = Vec::new();
        for it in items {
            match it {
                UpdateExpr::Seq(xs) => flat.extend(xs),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            UpdateExpr::Seq(flat)
        }
    }

    pub fn empty() -> UpdateExpr {
        UpdateExpr::Seq(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, UpdateExpr::Seq(xs) if xs.is_empty())
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, xs: &[UpdateExpr]) -> fmt::Result {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(";")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for UpdateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateExpr::Path(seg, rest) => {
                write!(f, "{seg}.")?;
                match &**rest {
                    UpdateExpr::Seq(xs) => {
                        f.write_str("(")?;
                        write_seq(f, xs)?;
                        f.write_str(")")
                    }
                    other => write!(f, "{other}"),
                }
            }
            UpdateExpr::Value(v) => f.write_str(v),
            UpdateExpr::Op(op, e) => {
                write!(f, "[{}", op.symbol())?;
                match &**e {
                    UpdateExpr::Seq(xs) => write_seq(f, xs)?,
                    other => write!(f, "{other}")?,
                }
                f.write_str("]")
            }
            UpdateExpr::Seq(xs) => write_seq(f, xs),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum UpdateSyntaxError {
    #[error("unbalanced brackets at offset {0}")]
    Unbalanced(usize),
    #[error("unknown operator {1:?} at offset {0}")]
    UnknownOperator(usize, char),
    #[error("empty operator scope at offset {0}")]
    EmptyScope(usize),
    #[error("unexpected {1:?} at offset {0}")]
    Unexpected(usize, char),
    #[error("unexpected end of update")]
    Eof,
}

struct UpdateReader<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    _src: &'a str,
}

fn is_slot_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

impl UpdateReader<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self._src.len(), |&(o, _)| o)
    }

    fn seq(&mut self) -> Result<Vec<UpdateExpr>, UpdateSyntaxError> {
        let mut items = Vec::new();
        match self.peek() {
            None | Some(')') | Some(']') => return Ok(items),
            _ => {}
        }
        items.push(self.item()?);
        while self.peek() == Some(';') {
            self.pos += 1;
            items.push(self.item()?);
        }
        Ok(items)
    }

    fn close(&mut self, c: char) -> Result<(), UpdateSyntaxError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(_) | None => Err(UpdateSyntaxError::Unbalanced(self.offset())),
        }
    }

    fn item(&mut self) -> Result<UpdateExpr, UpdateSyntaxError> {
        let at = self.offset();
        match self.peek().ok_or(UpdateSyntaxError::Eof)? {
            '[' => {
                self.pos += 1;
                let op = match self.peek() {
                    Some('=') => Operator::Assert,
                    Some('#') => Operator::Denial,
                    Some('!') => Operator::Correction,
                    Some(c) => return Err(UpdateSyntaxError::UnknownOperator(self.offset(), c)),
                    None => return Err(UpdateSyntaxError::Eof),
                };
                self.pos += 1;
                let inner = self.seq()?;
                self.close(']')?;
                if inner.is_empty() {
                    return Err(UpdateSyntaxError::EmptyScope(at));
                }
                Ok(UpdateExpr::op(op, UpdateExpr::seq(inner)))
            }
            '(' => {
                self.pos += 1;
                let inner = self.seq()?;
                self.close(')')?;
                Ok(UpdateExpr::seq(inner))
            }
            c if is_slot_char(c) => {
                let start = self.pos;
                while self.pos < self.chars.len() && is_slot_char(self.chars[self.pos].1) {
                    self.pos += 1;
                }
                let word: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                if self.peek() == Some('.') {
                    self.pos += 1;
                    Ok(UpdateExpr::Path(word, Box::new(self.item()?)))
                } else {
                    Ok(UpdateExpr::Value(word))
                }
            }
            c => Err(UpdateSyntaxError::Unexpected(at, c)),
        }
    }
}

impl std::str::FromStr for UpdateExpr {
    type Err = UpdateSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut r = UpdateReader {
            chars: s.char_indices().collect(),
            pos: 0,
            _src: s,
        };
        let items = r.seq()?;
        match r.peek() {
            None => Ok(UpdateExpr::seq(items)),
            Some(')') | Some(']') => Err(UpdateSyntaxError::Unbalanced(r.offset())),
            Some(c) => Err(UpdateSyntaxError::Unexpected(r.offset(), c)),
        }
    }
}

// ---------------------------------------------------------------------------
// Semantic units

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Assert,
    Denial,
    Correction,
    Yes,
    No,
}

impl From<Operator> for Function {
    fn from(op: Operator) -> Self {
        match op {
            Operator::Assert => Function::Assert,
            Operator::Denial => Function::Denial,
            Operator::Correction => Function::Correction,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Function::Assert => "assert",
            Function::Denial => "denial",
            Function::Correction => "correction",
            Function::Yes => "yes",
            Function::No => "no",
        })
    }
}

impl std::str::FromStr for Function {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "assert" => Function::Assert,
            "denial" => Function::Denial,
            "correction" => Function::Correction,
            "yes" => Function::Yes,
            "no" => Function::No,
            other => return Err(format!("unknown communicative function {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemanticUnit {
    pub function: Function,
    pub slot: String,
    pub value: String,
}

impl SemanticUnit {
    pub fn new(function: Function, slot: &str, value: &str) -> Self {
        SemanticUnit {
            function,
            slot: slot.to_string(),
            value: value.to_string(),
        }
    }
}

impl fmt::Display for SemanticUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UNIT {} {} {}", self.function, self.slot, self.value)
    }
}

/// Slot used for bare `yes` / `no` answers.
pub const CONFIRMATION_SLOT: &str = "confirmation";
/// Slot used for a value with no slot path at all.
pub const ROOT_SLOT: &str = "root";

/// Path segments removed when collapsing a path into a slot name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotTable {
    dropped: BTreeSet<String>,
}

pub const DEFAULT_SLOT_TABLE: &str = include_str!("../data/slots.cfg");

impl Default for SlotTable {
    fn default() -> Self {
        SlotTable::parse(DEFAULT_SLOT_TABLE).expect("shipped slot table is valid")
    }
}

impl SlotTable {
    /// Reads `drop <segment>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut dropped = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            match line.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["drop", seg] => {
                    dropped.insert(seg.to_string());
                }
                _ => return Err(format!("slot table line {}: expected `drop <segment>`", i + 1)),
            }
        }
        Ok(SlotTable { dropped })
    }

    pub fn collapse(&self, path: &[&str]) -> String {
        let kept: Vec<&str> = path.iter().copied().filter(|s| !self.dropped.contains(*s)).collect();
        if kept.is_empty() {
            ROOT_SLOT.to_string()
        } else {
            kept.join("_")
        }
    }
}

/// Flattens an update into its set of semantic units, sorted.
pub fn update_to_units(update: &UpdateExpr, table: &SlotTable) -> Vec<SemanticUnit> {
    fn walk<'a>(
        e: &'a UpdateExpr,
        path: &mut Vec<&'a str>,
        function: Function,
        table: &SlotTable,
        out: &mut BTreeSet<SemanticUnit>,
    ) {
        match e {
            UpdateExpr::Path(seg, rest) => {
                path.push(seg);
                walk(rest, path, function, table, out);
                path.pop();
            }
            UpdateExpr::Value(v) if path.is_empty() && (v == "yes" || v == "no") => {
                let f = if v == "yes" { Function::Yes } else { Function::No };
                out.insert(SemanticUnit::new(f, CONFIRMATION_SLOT, v));
            }
            UpdateExpr::Value(v) => {
                out.insert(SemanticUnit::new(function, &table.collapse(path), v));
            }
            UpdateExpr::Op(op, inner) => walk(inner, path, Function::from(*op), table, out),
            UpdateExpr::Seq(xs) => {
                for x in xs {
                    walk(x, path, function, table, out);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(update, &mut Vec::new(), Function::Assert, table, &mut out);
    out.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Information states

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InfoNode {
    Value(String),
    Slots(InfoState),
}

/// A hierarchical slot/value form that updates are applied to.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfoState {
    pub slots: BTreeMap<String, InfoNode>,
}

impl InfoState {
    pub fn get(&self, path: &[&str]) -> Option<&str> {
        let (last, init) = path.split_last()?;
        let mut cur = self;
        for seg in init {
            match cur.slots.get(*seg)? {
                InfoNode::Slots(s) => cur = s,
                InfoNode::Value(_) => return None,
            }
        }
        match cur.slots.get(*last)? {
            InfoNode::Value(v) => Some(v),
            InfoNode::Slots(_) => None,
        }
    }

    fn set(&mut self, path: &[&str], value: &str) {
        let (last, init) = path.split_last().expect("non-empty path");
        let mut cur = self;
        for seg in init {
            let node = cur
                .slots
                .entry(seg.to_string())
                .or_insert_with(|| InfoNode::Slots(InfoState::default()));
            if let InfoNode::Value(_) = node {
                *node = InfoNode::Slots(InfoState::default());
            }
            let InfoNode::Slots(next) = node else { unreachable!() };
            cur = next;
        }
        cur.slots.insert(last.to_string(), InfoNode::Value(value.to_string()));
    }

    fn retract(&mut self, path: &[&str], value: &str) {
        match path {
            [] => {}
            [last] => {
                if matches!(self.slots.get(*last), Some(InfoNode::Value(v)) if v == value) {
                    self.slots.remove(*last);
                }
            }
            [first, rest @ ..] => {
                if let Some(InfoNode::Slots(s)) = self.slots.get_mut(*first) {
                    s.retract(rest, value);
                    if s.slots.is_empty() {
                        self.slots.remove(*first);
                    }
                }
            }
        }
    }

    /// Applies an update left to right: asserted and corrected values are
    /// stored, denied values are removed if present.
    pub fn apply(&mut self, update: &UpdateExpr) {
        fn walk<'a>(state: &mut InfoState, e: &'a UpdateExpr, path: &mut Vec<&'a str>, op: Operator) {
            match e {
                UpdateExpr::Path(seg, rest) => {
                    path.push(seg);
                    walk(state, rest, path, op);
                    path.pop();
                }
                UpdateExpr::Value(v) if !path.is_empty() => match op {
                    Operator::Assert | Operator::Correction => state.set(path, v),
                    Operator::Denial => state.retract(path, v),
                },
                UpdateExpr::Value(_) => {}
                UpdateExpr::Op(o, inner) => walk(state, inner, path, *o),
                UpdateExpr::Seq(xs) => {
                    for x in xs {
                        walk(state, x, path, op);
                    }
                }
            }
        }
        walk(self, update, &mut Vec::new(), Operator::Assert);
    }
}

// ---------------------------------------------------------------------------
// Translation of analyses into updates

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Origin,
    Destination,
}

impl Role {
    fn slot(self) -> &'static str {
        match self {
            Role::Origin => "origin",
            Role::Destination => "destination",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Fragment {
    Particle(String),
    Place { role: Option<Role>, town: String },
    Time { role: Option<Role>, hour: String },
}

const PARTICLES: [&str; 4] = ["nee", "niet", "ja", "graag"];

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub update: UpdateExpr,
    /// Terms or particles that could not be used.
    pub diagnostics: Vec<String>,
}

/// Role a verb assigns to temporal modifiers.
fn verb_role(t: &Term) -> Option<Role> {
    match (t.functor()?.0.as_str(), t.args()) {
        ("with", [head, _]) => verb_role(head),
        ("leave", [_]) => Some(Role::Origin),
        ("arrive", [_]) => Some(Role::Destination),
        _ => None,
    }
}

fn value_text(t: &Term) -> Option<String> {
    match t {
        Term::Atom(a) => Some(a.to_string()),
        Term::Int(n) => Some(n.to_string()),
        _ => None,
    }
}

fn fragments(t: &Term, verb: Option<Role>, out: &mut Vec<Fragment>, diags: &mut Vec<String>) {
    let place = |role: Option<Role>, x: &Term, out: &mut Vec<Fragment>, diags: &mut Vec<String>| match x {
        Term::Atom(a) => out.push(Fragment::Place {
            role,
            town: a.to_string(),
        }),
        other => diags.push(format!("untranslatable locative {other}")),
    };
    match (t, t.args()) {
        (Term::Atom(a), _) if PARTICLES.contains(&&**a) => out.push(Fragment::Particle(a.to_string())),
        (Term::Atom(_), _) => place(None, t, out, diags),
        (Term::Compound(f, _), [x]) if &**f == "naar" => place(Some(Role::Destination), x, out, diags),
        (Term::Compound(f, _), [x]) if &**f == "van" || &**f == "vanuit" => place(Some(Role::Origin), x, out, diags),
        (Term::Compound(f, _), [x]) if &**f == "om" => fragments(x, verb, out, diags),
        (Term::Compound(f, _), [h]) if &**f == "hour" => match value_text(h) {
            Some(hour) => out.push(Fragment::Time { role: verb, hour }),
            None => diags.push(format!("untranslatable time {t}")),
        },
        (Term::Compound(f, _), [x]) if ["want", "go", "leave", "arrive"].contains(&&**f) => {
            fragments(x, verb.or(verb_role(t)), out, diags)
        }
        (Term::Compound(f, _), [a, b]) if &**f == "with" => {
            let role = verb.or(verb_role(a));
            fragments(a, role, out, diags);
            fragments(b, role, out, diags);
        }
        _ => diags.push(format!("untranslatable term {t}")),
    }
}

/// Translates the semantics of a best path into an update.
///
/// Rules: `naar(X)` is a destination, `van(X)` / `vanuit(X)` an origin; bare
/// locatives fill origin and then destination in utterance order, skipping
/// roles already given explicitly. `nee` before a phrase makes it a
/// correction, `niet` a denial. In isolation `nee` / `niet` mean no and
/// `ja` / `graag` mean yes; otherwise `ja` and `graag` are dropped. Clock
/// times go under `moment.at.time.clock_hour`, prefixed with the role given by
/// the verb when there is one.
pub fn sems_to_update(sems: &[Term]) -> Translation {
    let mut frags = Vec::new();
    let mut diagnostics = Vec::new();
    for s in sems {
        fragments(s, None, &mut frags, &mut diagnostics);
    }

    if let [Fragment::Particle(p)] = frags.as_slice() {
        let answer = if p == "nee" || p == "niet" { "no" } else { "yes" };
        return Translation {
            update: UpdateExpr::value(answer),
            diagnostics,
        };
    }

    let explicit: Vec<Role> = frags
        .iter()
        .filter_map(|f| match f {
            Fragment::Place { role: Some(r), .. } => Some(*r),
            _ => None,
        })
        .collect();
    let mut free = [Role::Origin, Role::Destination]
        .into_iter()
        .filter(|r| !explicit.contains(r));

    let mut items = Vec::new();
    let mut pending: Option<(Operator, String)> = None;
    for f in frags {
        match f {
            Fragment::Particle(p) => {
                if let Some((_, old)) = pending.take() {
                    diagnostics.push(format!("particle {old} not followed by a phrase"));
                }
                match p.as_str() {
                    "nee" => pending = Some((Operator::Correction, p)),
                    "niet" => pending = Some((Operator::Denial, p)),
                    _ => {}
                }
            }
            Fragment::Place { role, town } => {
                let Some(role) = role.or_else(|| free.next()) else {
                    diagnostics.push(format!("no slot left for locative {town}"));
                    continue;
                };
                let op = pending.take().map_or(Operator::Assert, |(op, _)| op);
                items.push(UpdateExpr::path(
                    &[role.slot()],
                    UpdateExpr::op(op, UpdateExpr::path(&["place", "town"], UpdateExpr::Value(town))),
                ));
            }
            Fragment::Time { role, hour } => {
                let op = pending.take().map_or(Operator::Assert, |(op, _)| op);
                let mut path: Vec<&str> = role.map(Role::slot).into_iter().collect();
                path.extend(["moment", "at"]);
                items.push(UpdateExpr::path(
                    &path,
                    UpdateExpr::op(op, UpdateExpr::path(&["time", "clock_hour"], UpdateExpr::Value(hour))),
                ));
            }
        }
    }
    if let Some((_, p)) = pending {
        diagnostics.push(format!("particle {p} not followed by a phrase"));
    }
    Translation {
        update: UpdateExpr::seq(items),
        diagnostics,
    }
}
