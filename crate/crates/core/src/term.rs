//! First-order terms, substitutions and unification.
//!
//! Terms are the only data structure the grammar formalism knows about:
//! categories, lexical entries and semantic representations are all terms,
//! and unification is the single constraint-solving mechanism.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub type VarId = u32;

/// Functor of the list constructor `[H|T]`.
pub const CONS: &str = ".";
/// The empty list atom.
pub const NIL: &str = "[]";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(VarId),
    Atom(Arc<str>),
    Int(i64),
    Compound(Arc<str>, Vec<Term>),
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(Arc::from(name))
    }

    /// Builds a compound term. A functor with no arguments collapses to an atom.
    pub fn compound(functor: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::atom(functor)
        } else {
            Term::Compound(Arc::from(functor), args)
        }
    }

    pub fn list(items: Vec<Term>, tail: Option<Term>) -> Term {
        let mut acc = tail.unwrap_or_else(|| Term::atom(NIL));
        for item in items.into_iter().rev() {
            acc = Term::Compound(Arc::from(CONS), vec![item, acc]);
        }
        acc
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Functor symbol and arity; `None` for variables.
    pub fn functor(&self) -> Option<(String, usize)> {
        match self {
            Term::Var(_) => None,
            Term::Atom(a) => Some((a.to_string(), 0)),
            Term::Int(i) => Some((i.to_string(), 0)),
            Term::Compound(f, args) => Some((f.to_string(), args.len())),
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Term::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Atom(_) | Term::Int(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Largest variable id occurring in the term.
    pub fn max_var(&self) -> Option<VarId> {
        match self {
            Term::Var(v) => Some(*v),
            Term::Atom(_) | Term::Int(_) => None,
            Term::Compound(_, args) => args.iter().filter_map(Term::max_var).max(),
        }
    }

    pub fn offset_vars(&self, offset: VarId) -> Term {
        self.map_vars(&mut |v| Term::Var(v + offset))
    }

    fn map_vars(&self, f: &mut impl FnMut(VarId) -> Term) -> Term {
        match self {
            Term::Var(v) => f(*v),
            Term::Atom(_) | Term::Int(_) => self.clone(),
            Term::Compound(func, args) => {
                Term::Compound(func.clone(), args.iter().map(|a| a.map_vars(f)).collect())
            }
        }
    }

    pub fn occurs(&self, var: VarId) -> bool {
        match self {
            Term::Var(v) => *v == var,
            Term::Atom(_) | Term::Int(_) => false,
            Term::Compound(_, args) => args.iter().any(|a| a.occurs(var)),
        }
    }

    /// Renames variables to `0, 1, ...` in order of first occurrence, so that
    /// variants of the same term compare equal.
    pub fn canonical(&self) -> Term {
        canonicalize(std::slice::from_ref(self)).pop().unwrap()
    }

    /// Items of a proper list; `None` for anything else.
    pub fn list_items(&self) -> Option<Vec<Term>> {
        let mut items = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Term::Atom(a) if &**a == NIL => return Some(items),
                Term::Compound(f, args) if &**f == CONS && args.len() == 2 => {
                    items.push(args[0].clone());
                    cur = &args[1];
                }
                _ => return None,
            }
        }
    }
}

/// Jointly renames the variables of several terms so that they share one
/// numbering, starting from 0 in order of first occurrence.
pub fn canonicalize(terms: &[Term]) -> Vec<Term> {
    let mut map: HashMap<VarId, VarId> = HashMap::new();
    terms
        .iter()
        .map(|t| {
            t.map_vars(&mut |v| {
                let next = map.len() as VarId;
                Term::Var(*map.entry(v).or_insert(next))
            })
        })
        .collect()
}

/// A substitution from variables to terms.
///
/// Bindings are kept in triangular form; [`Bindings::resolve`] applies them
/// fully.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    map: HashMap<VarId, Term>,
    occurs_check: bool,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_occurs_check(occurs_check: bool) -> Self {
        Bindings {
            map: HashMap::new(),
            occurs_check,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, var: VarId) -> Option<&Term> {
        self.map.get(&var)
    }

    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match self.map.get(v) {
                Some(bound) => t = bound,
                None => break,
            }
        }
        t
    }

    pub fn resolve(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(f, args) => {
                Term::Compound(f.clone(), args.iter().map(|a| self.resolve(a)).collect())
            }
            other => other.clone(),
        }
    }

    fn occurs_in(&self, var: VarId, t: &Term) -> bool {
        match self.walk(t) {
            Term::Var(v) => *v == var,
            Term::Compound(_, args) => args.iter().any(|a| self.occurs_in(var, a)),
            _ => false,
        }
    }

    /// Unifies in place. On failure the bindings may hold a partial result and
    /// should be discarded.
    pub fn unify_mut(&mut self, a: &Term, b: &Term) -> bool {
        let a = self.walk(a).clone();
        let b = self.walk(b).clone();
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) if x == y => true,
            (Term::Var(x), other) | (other, Term::Var(x)) => {
                if self.occurs_check && self.occurs_in(*x, other) {
                    return false;
                }
                self.map.insert(*x, other.clone());
                true
            }
            (Term::Atom(x), Term::Atom(y)) => x == y,
            (Term::Int(x), Term::Int(y)) => x == y,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys).all(|(x, y)| self.unify_mut(x, y))
            }
            _ => false,
        }
    }
}

/// Most general unifier of `a` and `b` extending `bindings`, or `None`.
pub fn unify(a: &Term, b: &Term, bindings: &Bindings) -> Option<Bindings> {
    let mut out = bindings.clone();
    out.unify_mut(a, b).then_some(out)
}

// ---------------------------------------------------------------------------
// Text syntax

#[derive(Debug, Error, PartialEq)]
pub enum SyntaxError {
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("unexpected end of input")]
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Name(String),
    Var(String),
    Int(i64),
    Quoted(String),
    Symbol(String),
    Punct(char),
    End,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:?@#&$";

/// Tokenizer shared by the term and grammar readers. `%` starts a comment
/// running to the end of the line; `.` followed by whitespace or end of
/// input terminates a clause.
pub(crate) fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '.' {
            if i + 1 == chars.len() || chars[i + 1].is_whitespace() || chars[i + 1] == '%' {
                out.push((Tok::End, line));
                i += 1;
            } else {
                return Err(SyntaxError::Invalid {
                    line,
                    msg: "unexpected '.'".into(),
                });
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s.parse().map_err(|_| SyntaxError::Invalid {
                line,
                msg: format!("integer out of range: {s}"),
            })?;
            out.push((Tok::Int(n), line));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            if c.is_uppercase() || c == '_' {
                out.push((Tok::Var(s), line));
            } else {
                out.push((Tok::Name(s), line));
            }
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(SyntaxError::Eof),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        if ch == '\n' {
                            line += 1;
                        }
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push((Tok::Quoted(s), line));
        } else if "()[],|".contains(c) {
            out.push((Tok::Punct(c), line));
            i += 1;
        } else if SYMBOL_CHARS.contains(c) {
            let start = i;
            while i < chars.len() && SYMBOL_CHARS.contains(chars[i]) {
                i += 1;
            }
            out.push((Tok::Symbol(chars[start..i].iter().collect()), line));
        } else {
            return Err(SyntaxError::Invalid {
                line,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

/// Reads terms from a token stream, allocating variable ids per clause.
pub(crate) struct TermReader<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    names: HashMap<String, VarId>,
    next_var: VarId,
}

impl<'a> TermReader<'a> {
    pub(crate) fn new(toks: &'a [(Tok, usize)]) -> Self {
        TermReader {
            toks,
            pos: 0,
            names: HashMap::new(),
            next_var: 0,
        }
    }

    /// Starts a fresh variable scope.
    pub(crate) fn reset_scope(&mut self) {
        self.names.clear();
        self.next_var = 0;
    }

    pub(crate) fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    pub(crate) fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |(_, l)| *l)
    }

    pub(crate) fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError::Invalid {
            line: self.line(),
            msg: msg.into(),
        }
    }

    pub(crate) fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(self.err(format!("expected {tok:?}, found {t:?}"))),
            None => Err(SyntaxError::Eof),
        }
    }

    fn var(&mut self, name: &str) -> Term {
        if name == "_" {
            let v = self.next_var;
            self.next_var += 1;
            return Term::Var(v);
        }
        if let Some(&v) = self.names.get(name) {
            return Term::Var(v);
        }
        let v = self.next_var;
        self.next_var += 1;
        self.names.insert(name.to_string(), v);
        Term::Var(v)
    }

    pub(crate) fn term(&mut self) -> Result<Term, SyntaxError> {
        match self.next().ok_or(SyntaxError::Eof)? {
            Tok::Var(name) => Ok(self.var(&name)),
            Tok::Int(n) => Ok(Term::Int(n)),
            Tok::Symbol(s) if s == "-" => match self.peek() {
                Some(Tok::Int(n)) => {
                    let n = -*n;
                    self.pos += 1;
                    Ok(Term::Int(n))
                }
                _ => self.after_functor(s),
            },
            Tok::Name(s) | Tok::Quoted(s) | Tok::Symbol(s) => self.after_functor(s),
            Tok::Punct('[') => self.list(),
            t => Err(self.err(format!("unexpected {t:?} in term"))),
        }
    }

    fn after_functor(&mut self, name: String) -> Result<Term, SyntaxError> {
        if self.peek() != Some(&Tok::Punct('(')) {
            return Ok(Term::atom(&name));
        }
        self.pos += 1;
        let mut args = vec![self.term()?];
        loop {
            match self.next().ok_or(SyntaxError::Eof)? {
                Tok::Punct(',') => args.push(self.term()?),
                Tok::Punct(')') => break,
                t => return Err(self.err(format!("expected ',' or ')', found {t:?}"))),
            }
        }
        Ok(Term::Compound(Arc::from(name.as_str()), args))
    }

    fn list(&mut self) -> Result<Term, SyntaxError> {
        if self.peek() == Some(&Tok::Punct(']')) {
            self.pos += 1;
            return Ok(Term::atom(NIL));
        }
        let mut items = vec![self.term()?];
        let mut tail = None;
        loop {
            match self.next().ok_or(SyntaxError::Eof)? {
                Tok::Punct(',') => items.push(self.term()?),
                Tok::Punct('|') => {
                    tail = Some(self.term()?);
                    self.expect(Tok::Punct(']'))?;
                    break;
                }
                Tok::Punct(']') => break,
                t => return Err(self.err(format!("expected ',', '|' or ']', found {t:?}"))),
            }
        }
        Ok(Term::list(items, tail))
    }
}

impl std::str::FromStr for Term {
    type Err = SyntaxError;

    /// Parses a single term; variables are numbered from 0 in order of first
    /// occurrence.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks = tokenize(s)?;
        let mut reader = TermReader::new(&toks);
        let t = reader.term()?;
        if !reader.at_end() {
            return Err(reader.err("trailing input after term"));
        }
        Ok(t)
    }
}

fn atom_needs_quotes(a: &str) -> bool {
    if a == NIL {
        return false;
    }
    let mut chars = a.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_lowercase() => !a.chars().all(|c| c.is_alphanumeric() || c == '_'),
        Some(_) => !a.chars().all(|c| SYMBOL_CHARS.contains(c)),
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, a: &str) -> fmt::Result {
    if atom_needs_quotes(a) {
        write!(f, "'{}'", a.replace('\'', "''"))
    } else {
        f.write_str(a)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "_{v}"),
            Term::Atom(a) => write_atom(f, a),
            Term::Int(n) => write!(f, "{n}"),
            Term::Compound(func, args) if &**func == CONS && args.len() == 2 => {
                write!(f, "[{}", args[0])?;
                let mut rest = &args[1];
                loop {
                    match rest {
                        Term::Compound(g, xs) if &**g == CONS && xs.len() == 2 => {
                            write!(f, ",{}", xs[0])?;
                            rest = &xs[1];
                        }
                        Term::Atom(a) if &**a == NIL => break,
                        other => {
                            write!(f, "|{other}")?;
                            break;
                        }
                    }
                }
                f.write_str("]")
            }
            Term::Compound(func, args) => {
                write_atom(f, func)?;
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        s.parse().unwrap()
    }

    #[test]
    fn unify_binds_both_sides() {
        let a = t("f(X,b)");
        let b = t("f(a,Y)").offset_vars(10);
        let s = unify(&a, &b, &Bindings::new()).unwrap();
        assert_eq!(s.resolve(&Term::Var(0)), t("a"));
        assert_eq!(s.resolve(&Term::Var(10)), t("b"));
        assert_eq!(s.resolve(&a), s.resolve(&b));
    }

    #[test]
    fn functor_clash_fails() {
        assert!(unify(&t("f(a)"), &t("g(a)"), &Bindings::new()).is_none());
        assert!(unify(&t("f(a)"), &t("f(a,b)"), &Bindings::new()).is_none());
        assert!(unify(&t("3"), &t("'3'"), &Bindings::new()).is_none());
    }

    #[test]
    fn shared_variable_fails() {
        let b = t("f(a,b)");
        assert!(unify(&t("f(X,X)"), &b, &Bindings::new()).is_none());
    }

    #[test]
    fn input_bindings_untouched() {
        let base = unify(&t("X"), &t("a"), &Bindings::new()).unwrap();
        assert!(unify(&t("X"), &t("b"), &base).is_none());
        assert_eq!(base.len(), 1);
        let ext = unify(&t("f(X,Y)").offset_vars(0), &t("f(a,c)"), &base).unwrap();
        assert_eq!(ext.len(), 2);
        assert_eq!(base.len(), 1);
    }

    #[test]
    fn occurs_check_is_optional() {
        let x = Term::Var(0);
        let fx = t("f(X)");
        assert!(unify(&x, &fx, &Bindings::new()).is_some());
        assert!(unify(&x, &fx, &Bindings::with_occurs_check(true)).is_none());
    }

    #[test]
    fn parse_and_print() {
        let src = "v(np,agr(3,sg),intrans,l(X,sleep(X)))";
        assert_eq!(t(src).to_string(), "v(np,agr(3,sg),intrans,l(_0,sleep(_0)))");
        assert_eq!(t("np(Agr,-)").to_string(), "np(_0,-)");
        assert_eq!(t("[a,b|T]").to_string(), "[a,b|_0]");
        assert_eq!(t("[]").to_string(), "[]");
        assert_eq!(t("'Hello world'").to_string(), "'Hello world'");
        assert_eq!(t("f(-3)"), Term::compound("f", vec![Term::Int(-3)]));
        assert_eq!(t("f(_,_)").to_string(), "f(_0,_1)");
    }

    #[test]
    fn list_items_roundtrip() {
        let l = t("[a,b,c]");
        assert_eq!(l.list_items().unwrap().len(), 3);
        assert!(t("[a|T]").list_items().is_none());
    }

    #[test]
    fn canonical_identifies_variants() {
        assert_eq!(t("f(X,Y,X)").offset_vars(7).canonical(), t("f(A,B,A)"));
        assert_ne!(t("f(X,Y)").canonical(), t("f(X,X)").canonical());
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            (0u32..4).prop_map(Term::Var),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::atom),
            (0i64..3).prop_map(Term::Int),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            (
                prop::sample::select(vec!["f", "g"]),
                prop::collection::vec(inner, 1..3),
            )
                .prop_map(|(f, args)| Term::compound(f, args))
        })
    }

    fn is_variant(a: &Term, b: &Term) -> bool {
        a.canonical() == b.canonical()
    }

    proptest! {
        #[test]
        fn unification_is_symmetric(a in arb_term(), b in arb_term()) {
            let b = b.offset_vars(100);
            let ab = unify(&a, &b, &Bindings::with_occurs_check(true));
            let ba = unify(&b, &a, &Bindings::with_occurs_check(true));
            prop_assert_eq!(ab.is_some(), ba.is_some());
            if let (Some(s1), Some(s2)) = (ab, ba) {
                prop_assert!(is_variant(&s1.resolve(&a), &s2.resolve(&a)));
            }
        }

        #[test]
        fn unifier_equates_terms(a in arb_term(), b in arb_term()) {
            if let Some(s) = unify(&a, &b, &Bindings::with_occurs_check(true)) {
                prop_assert_eq!(s.resolve(&a), s.resolve(&b));
            }
        }

        #[test]
        fn display_parses_back(a in arb_term()) {
            let back: Term = a.to_string().parse().unwrap();
            prop_assert!(is_variant(&a, &back));
        }
    }
}
