//! Grammar rules, lexicon and top category.
//!
//! Grammar file syntax, one clause per statement, each ending in `.`:
//!
//! ```text
//! rule vp_vpnp head=1 : vp(Subj,Agr,Sem) -> v(Subj,Agr,trans,l(Arg,Sem)), np(_,Arg).
//! lex sleeps : v(np,agr(3,sg),intrans,l(X,sleep(X))).
//! lex den haag : np(place,den_haag).
//! top : start(Sem).
//! ```
//!
//! `head=` is 1-based in the file; [`Rule::head`] is 0-based. Variables are
//! scoped to their clause. `%` starts a comment.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::term::{tokenize, SyntaxError, Term, TermReader, Tok};

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("line {line}: duplicate rule id {id}")]
    DuplicateRule { line: usize, id: String },
    #[error("line {line}: {what} must not be a variable")]
    VariableCategory { line: usize, what: String },
    #[error("line {line}: head index {head} out of range for {arity} daughters")]
    HeadOutOfRange {
        line: usize,
        head: usize,
        arity: usize,
    },
    #[error("no top category declared")]
    MissingTop,
    #[error("line {line}: top category declared twice")]
    DuplicateTop { line: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: String,
    pub mother: Term,
    pub daughters: Vec<Term>,
    /// 0-based index of the head daughter.
    pub head: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexEntry {
    pub words: Vec<String>,
    pub category: Term,
}

/// Context-free skeleton of a rule: functor symbols only.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Production {
    pub mother: String,
    pub daughters: Vec<String>,
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.mother, self.daughters.join(" "))
    }
}

pub fn skeleton(rule: &Rule) -> Production {
    let name = |t: &Term| t.functor().map(|(f, _)| f).unwrap_or_default();
    Production {
        mother: name(&rule.mother),
        daughters: rule.daughters.iter().map(name).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct Grammar {
    pub rules: Vec<Rule>,
    pub lexicon: Vec<LexEntry>,
    pub top: Term,
    by_first_word: HashMap<String, Vec<usize>>,
}

impl Grammar {
    /// Assembles a grammar, checking the same invariants as the loader.
    pub fn new(rules: Vec<Rule>, lexicon: Vec<LexEntry>, top: Term) -> Result<Self, GrammarError> {
        let mut seen = HashSet::new();
        for r in &rules {
            check_rule(r, 0)?;
            if !seen.insert(r.id.clone()) {
                return Err(GrammarError::DuplicateRule {
                    line: 0,
                    id: r.id.clone(),
                });
            }
        }
        for e in &lexicon {
            if e.category.is_var() {
                return Err(GrammarError::VariableCategory {
                    line: 0,
                    what: "lexical category".into(),
                });
            }
            assert!(!e.words.is_empty(), "lexical entry without words");
        }
        let mut by_first_word: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in lexicon.iter().enumerate() {
            by_first_word.entry(e.words[0].clone()).or_default().push(i);
        }
        Ok(Grammar {
            rules,
            lexicon,
            top,
            by_first_word,
        })
    }

    pub fn load(text: &str) -> Result<Self, GrammarError> {
        let toks = tokenize(text)?;
        let mut r = TermReader::new(&toks);
        let mut rules = Vec::new();
        let mut lexicon = Vec::new();
        let mut top = None;
        let mut ids = HashSet::new();
        while !r.at_end() {
            r.reset_scope();
            let line = r.line();
            match r.next() {
                Some(Tok::Name(kw)) if kw == "rule" => {
                    let rule = read_rule(&mut r)?;
                    check_rule(&rule, line)?;
                    if !ids.insert(rule.id.clone()) {
                        return Err(GrammarError::DuplicateRule { line, id: rule.id });
                    }
                    rules.push(rule);
                }
                Some(Tok::Name(kw)) if kw == "lex" => {
                    let mut words = Vec::new();
                    loop {
                        match r.next().ok_or(SyntaxError::Eof)? {
                            Tok::Symbol(s) if s == ":" => break,
                            Tok::Name(w) | Tok::Quoted(w) | Tok::Var(w) => words.push(w),
                            Tok::Int(n) => words.push(n.to_string()),
                            t => return Err(r.err(format!("bad word {t:?}")).into()),
                        }
                    }
                    if words.is_empty() {
                        return Err(r.err("lexical entry without words").into());
                    }
                    let category = r.term()?;
                    if category.is_var() {
                        return Err(GrammarError::VariableCategory {
                            line,
                            what: "lexical category".into(),
                        });
                    }
                    r.expect(Tok::End)?;
                    lexicon.push(LexEntry { words, category });
                }
                Some(Tok::Name(kw)) if kw == "top" => {
                    r.expect(Tok::Symbol(":".into()))?;
                    let t = r.term()?;
                    if t.is_var() {
                        return Err(GrammarError::VariableCategory {
                            line,
                            what: "top category".into(),
                        });
                    }
                    r.expect(Tok::End)?;
                    if top.replace(t).is_some() {
                        return Err(GrammarError::DuplicateTop { line });
                    }
                }
                Some(t) => return Err(r.err(format!("expected rule, lex or top, found {t:?}")).into()),
                None => break,
            }
        }
        Grammar::new(rules, lexicon, top.ok_or(GrammarError::MissingTop)?)
    }

    /// All lexical entries matching `tokens` starting at `at`, with the number
    /// of tokens each one covers.
    pub fn lex_lookup(&self, tokens: &[String], at: usize) -> Vec<(&LexEntry, usize)> {
        let Some(first) = tokens.get(at) else {
            return Vec::new();
        };
        self.entries_starting_with(first)
            .filter(|e| {
                tokens.len() >= at + e.words.len()
                    && e.words.iter().zip(&tokens[at..]).all(|(w, t)| w == t)
            })
            .map(|e| (e, e.words.len()))
            .collect()
    }

    pub fn entries_starting_with<'a>(&'a self, word: &str) -> impl Iterator<Item = &'a LexEntry> + 'a {
        self.by_first_word
            .get(word)
            .into_iter()
            .flatten()
            .map(move |&i| &self.lexicon[i])
    }

    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .lexicon
            .iter()
            .flat_map(|e| e.words.iter().cloned())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// Semantic argument of an instantiated top category: its last argument,
    /// or the whole term when it has none.
    pub fn top_semantics(top: &Term) -> Term {
        top.args().last().unwrap_or(top).clone()
    }
}

fn read_rule(r: &mut TermReader<'_>) -> Result<Rule, GrammarError> {
    let id = match r.next().ok_or(SyntaxError::Eof)? {
        Tok::Name(s) | Tok::Quoted(s) => s,
        Tok::Int(n) => n.to_string(),
        t => return Err(r.err(format!("bad rule id {t:?}")).into()),
    };
    let mut head = 1;
    if r.peek() == Some(&Tok::Name("head".into())) {
        r.next();
        r.expect(Tok::Symbol("=".into()))?;
        head = match r.next() {
            Some(Tok::Int(n)) if n >= 1 => n as usize,
            _ => return Err(r.err("head= expects a positive integer").into()),
        };
    }
    r.expect(Tok::Symbol(":".into()))?;
    let mother = r.term()?;
    r.expect(Tok::Symbol("->".into()))?;
    let mut daughters = vec![r.term()?];
    loop {
        match r.next().ok_or(SyntaxError::Eof)? {
            Tok::Punct(',') => daughters.push(r.term()?),
            Tok::End => break,
            t => return Err(r.err(format!("expected ',' or '.', found {t:?}")).into()),
        }
    }
    Ok(Rule {
        id,
        mother,
        daughters,
        head: head - 1,
    })
}

fn check_rule(rule: &Rule, line: usize) -> Result<(), GrammarError> {
    if rule.mother.is_var() {
        return Err(GrammarError::VariableCategory {
            line,
            what: format!("mother of rule {}", rule.id),
        });
    }
    if let Some(i) = rule.daughters.iter().position(Term::is_var) {
        return Err(GrammarError::VariableCategory {
            line,
            what: format!("daughter {} of rule {}", i + 1, rule.id),
        });
    }
    if rule.daughters.is_empty() || rule.head >= rule.daughters.len() {
        return Err(GrammarError::HeadOutOfRange {
            line,
            head: rule.head + 1,
            arity: rule.daughters.len(),
        });
    }
    Ok(())
}

fn write_word(f: &mut fmt::Formatter<'_>, w: &str) -> fmt::Result {
    // Words go through the term printer so that odd tokens get quoted.
    write!(f, "{}", Term::atom(w))
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "top : {}.", self.top)?;
        for r in &self.rules {
            write!(f, "rule ")?;
            write_word(f, &r.id)?;
            write!(f, " head={} : {} -> ", r.head + 1, r.mother)?;
            for (i, d) in r.daughters.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{d}")?;
            }
            writeln!(f, ".")?;
        }
        for e in &self.lexicon {
            f.write_str("lex")?;
            for w in &e.words {
                f.write_str(" ")?;
                write_word(f, w)?;
            }
            writeln!(f, " : {}.", e.category)?;
        }
        Ok(())
    }
}

/// The travel-domain grammar shipped with the crate.
pub const SAMPLE_GRAMMAR: &str = include_str!("../data/travel.grm");

pub fn sample_grammar() -> Grammar {
    Grammar::load(SAMPLE_GRAMMAR).expect("shipped grammar is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn loads_rule_and_lexical_entry() {
        let g = Grammar::load(
            "top : s(S).\n\
             rule vp_vpnp head=1 : vp(Subj,Agr,Sem) -> v(Subj,Agr,trans,l(Arg,Sem)), np(_,Arg).\n\
             lex sleeps : v(np,agr(3,sg),intrans,l(X,sleep(X))).",
        )
        .unwrap();
        assert_eq!(g.rules.len(), 1);
        assert_eq!(g.rules[0].daughters.len(), 2);
        assert_eq!(g.rules[0].head, 0);
        assert_eq!(
            g.lexicon[0].category.to_string(),
            "v(np,agr(3,sg),intrans,l(_0,sleep(_0)))"
        );
        let sk = skeleton(&g.rules[0]);
        assert_eq!(sk.to_string(), "vp -> v np");
    }

    #[test]
    fn unary_skeleton() {
        let g = Grammar::load("top : start(S).\nrule start_np : start(S) -> np(_,S).").unwrap();
        assert_eq!(
            skeleton(&g.rules[0]),
            Production {
                mother: "start".into(),
                daughters: vec!["np".into()]
            }
        );
    }

    #[test]
    fn rejects_variable_daughter() {
        let err = Grammar::load("top : s.\nrule r : s -> np, X.").unwrap_err();
        assert!(matches!(err, GrammarError::VariableCategory { line: 2, .. }));
        let err = Grammar::load("top : s.\nrule r : M -> np.").unwrap_err();
        assert!(matches!(err, GrammarError::VariableCategory { .. }));
    }

    #[test]
    fn rejects_duplicates_and_bad_head() {
        let err = Grammar::load("top : s.\nrule r : s -> a.\nrule r : s -> b.").unwrap_err();
        assert_eq!(
            err,
            GrammarError::DuplicateRule {
                line: 3,
                id: "r".into()
            }
        );
        let err = Grammar::load("top : s.\nrule r head=3 : s -> a, b.").unwrap_err();
        assert!(matches!(err, GrammarError::HeadOutOfRange { head: 3, arity: 2, .. }));
        assert_eq!(Grammar::load("rule r : s -> a.").unwrap_err(), GrammarError::MissingTop);
    }

    #[test]
    fn lookup_single_and_multi_word() {
        let g = Grammar::load(
            "top : s.\nlex naar : p(naar).\nlex den haag : np(place,den_haag).\nlex den : det.",
        )
        .unwrap();
        let hits = g.lex_lookup(&toks("naar assen"), 0);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].1, 1);
        let mut spans: Vec<usize> = g.lex_lookup(&toks("den haag"), 0).iter().map(|h| h.1).collect();
        spans.sort();
        assert_eq!(spans, vec![1, 2]);
        assert!(g.lex_lookup(&toks("assen"), 0).is_empty());
        assert!(g.lex_lookup(&toks("den"), 0).iter().all(|h| h.1 == 1));
        assert!(g.lex_lookup(&toks("naar"), 5).is_empty());
    }

    #[test]
    fn round_trip_through_display() {
        let g = sample_grammar();
        let again = Grammar::load(&g.to_string()).unwrap();
        assert_eq!(g.rules.len(), again.rules.len());
        for (a, b) in g.rules.iter().zip(&again.rules) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.head, b.head);
            let mut xs = vec![a.mother.clone()];
            xs.extend(a.daughters.iter().cloned());
            let mut ys = vec![b.mother.clone()];
            ys.extend(b.daughters.iter().cloned());
            assert_eq!(crate::term::canonicalize(&xs), crate::term::canonicalize(&ys));
        }
        assert_eq!(g.lexicon.len(), again.lexicon.len());
        for (a, b) in g.lexicon.iter().zip(&again.lexicon) {
            assert_eq!(a.words, b.words);
            assert_eq!(a.category.canonical(), b.category.canonical());
        }
        assert_eq!(g.top.canonical(), again.top.canonical());
    }
}
