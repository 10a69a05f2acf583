//! Finding every top-category analysis anywhere in a word-graph.
//!
//! The lattice parser is an agenda-driven bottom-up chart parser. Chart items
//! are anchored to word-graph states and remember the tokens they cover, so
//! two paths between the same states that spell different words give rise to
//! different items. Acoustic scores are not part of item identity: an item's
//! score is the cheapest transition path between its states spelling its
//! tokens.
//!
//! [`parse_string`] is a separate exhaustive span-based recognizer for plain
//! token sequences. It shares nothing with the chart except unification.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::grammar::Grammar;
use crate::term::{canonicalize, Bindings, Term, VarId};
use crate::wordgraph::{StateId, Transition, WordGraph};

pub const DEFAULT_MAX_ITEMS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("item limit of {limit} exceeded while building an item over states {from}..{to}")]
    TooManyItems {
        limit: usize,
        from: StateId,
        to: StateId,
    },
    #[error("cannot parse an empty token sequence")]
    EmptyInput,
}

#[derive(Clone, Copy, Debug)]
pub struct ParserConfig {
    /// Maximum number of chart items (active plus passive) per graph.
    pub max_items: usize,
    pub occurs_check: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            max_items: DEFAULT_MAX_ITEMS,
            occurs_check: false,
        }
    }
}

/// A top-category analysis between two word-graph states.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedItem {
    pub from: StateId,
    pub to: StateId,
    pub tokens: Vec<String>,
    pub acoustic: f64,
    pub sem: Term,
}

impl fmt::Display for ParsedItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ITEM {} {} {} {} :: {}", self.from, self.to, self.acoustic, self.tokens.join(" "), self.sem)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub passive: usize,
    pub active: usize,
}

impl ParseStats {
    pub fn total(&self) -> usize {
        self.passive + self.active
    }
}

type FunctorKey = (String, usize);

fn key_of(t: &Term) -> FunctorKey {
    t.functor().expect("categories are non-variable")
}

struct Passive {
    from: StateId,
    to: StateId,
    tokens: Vec<u32>,
    cat: Term,
}

struct Active {
    rule: usize,
    from: StateId,
    to: StateId,
    tokens: Vec<u32>,
    /// Instantiated mother followed by the daughters still to be found.
    terms: Vec<Term>,
}

#[derive(Clone, Copy)]
enum Agenda {
    Passive(usize),
    Active(usize),
}

struct Chart<'g> {
    grammar: &'g Grammar,
    cfg: ParserConfig,
    words: Vec<String>,
    word_ids: HashMap<String, u32>,
    by_first_daughter: HashMap<FunctorKey, Vec<usize>>,
    passive: Vec<Passive>,
    active: Vec<Active>,
    passive_seen: HashSet<(StateId, StateId, Vec<u32>, Term)>,
    active_seen: HashSet<(usize, StateId, StateId, Vec<u32>, Vec<Term>)>,
    passive_at: HashMap<(StateId, FunctorKey), Vec<usize>>,
    active_at: HashMap<(StateId, FunctorKey), Vec<usize>>,
    agenda: VecDeque<Agenda>,
}

fn max_var(terms: &[Term]) -> Option<VarId> {
    terms.iter().filter_map(Term::max_var).max()
}

impl<'g> Chart<'g> {
    fn new(grammar: &'g Grammar, cfg: ParserConfig) -> Self {
        let mut by_first_daughter: HashMap<FunctorKey, Vec<usize>> = HashMap::new();
        for (i, r) in grammar.rules.iter().enumerate() {
            by_first_daughter.entry(key_of(&r.daughters[0])).or_default().push(i);
        }
        Chart {
            grammar,
            cfg,
            words: Vec::new(),
            word_ids: HashMap::new(),
            by_first_daughter,
            passive: Vec::new(),
            active: Vec::new(),
            passive_seen: HashSet::new(),
            active_seen: HashSet::new(),
            passive_at: HashMap::new(),
            active_at: HashMap::new(),
            agenda: VecDeque::new(),
        }
    }

    fn bindings(&self) -> Bindings {
        Bindings::with_occurs_check(self.cfg.occurs_check)
    }

    fn word(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.word_ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.word_ids.insert(w.to_string(), id);
        id
    }

    fn check_limit(&self, from: StateId, to: StateId) -> Result<(), ParseError> {
        if self.passive.len() + self.active.len() >= self.cfg.max_items {
            return Err(ParseError::TooManyItems {
                limit: self.cfg.max_items,
                from,
                to,
            });
        }
        Ok(())
    }

    fn add_passive(&mut self, from: StateId, to: StateId, tokens: Vec<u32>, cat: Term) -> Result<(), ParseError> {
        let cat = cat.canonical();
        if !self.passive_seen.insert((from, to, tokens.clone(), cat.clone())) {
            return Ok(());
        }
        self.check_limit(from, to)?;
        let idx = self.passive.len();
        self.passive_at.entry((from, key_of(&cat))).or_default().push(idx);
        self.passive.push(Passive { from, to, tokens, cat });
        self.agenda.push_back(Agenda::Passive(idx));
        Ok(())
    }

    fn add_active(
        &mut self,
        rule: usize,
        from: StateId,
        to: StateId,
        tokens: Vec<u32>,
        terms: Vec<Term>,
    ) -> Result<(), ParseError> {
        let terms = canonicalize(&terms);
        if !self
            .active_seen
            .insert((rule, from, to, tokens.clone(), terms.clone()))
        {
            return Ok(());
        }
        self.check_limit(from, to)?;
        let idx = self.active.len();
        self.active_at.entry((to, key_of(&terms[1]))).or_default().push(idx);
        self.active.push(Active {
            rule,
            from,
            to,
            tokens,
            terms,
        });
        self.agenda.push_back(Agenda::Active(idx));
        Ok(())
    }

    /// Seeds the chart with every lexical entry matching a transition path.
    fn lexical(&mut self, wg: &WordGraph) -> Result<(), ParseError> {
        let out = wg.outgoing();
        let grammar = self.grammar;
        for t in &wg.transitions {
            for entry in grammar.entries_starting_with(&t.label) {
                let mut ends = Vec::new();
                match_words(&out, t, &entry.words[1..], &mut ends);
                for end in ends {
                    let tokens = entry.words.iter().map(|w| self.word(w)).collect();
                    self.add_passive(t.from, end, tokens, entry.category.clone())?;
                }
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), ParseError> {
        while let Some(item) = self.agenda.pop_front() {
            match item {
                Agenda::Passive(p) => {
                    self.predict(p)?;
                    let from = self.passive[p].from;
                    let key = key_of(&self.passive[p].cat);
                    let waiting = self.active_at.get(&(from, key)).cloned().unwrap_or_default();
                    for a in waiting {
                        self.combine(a, p)?;
                    }
                }
                Agenda::Active(a) => {
                    let to = self.active[a].to;
                    let key = key_of(&self.active[a].terms[1]);
                    let ready = self.passive_at.get(&(to, key)).cloned().unwrap_or_default();
                    for p in ready {
                        self.combine(a, p)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Starts every rule whose first daughter matches the passive item.
    fn predict(&mut self, p: usize) -> Result<(), ParseError> {
        let key = key_of(&self.passive[p].cat);
        let Some(rules) = self.by_first_daughter.get(&key).cloned() else {
            return Ok(());
        };
        let grammar = self.grammar;
        for r in rules {
            let rule = &grammar.rules[r];
            let cat = &self.passive[p].cat;
            let offset = cat.max_var().map_or(0, |v| v + 1);
            let mut b = self.bindings();
            if !b.unify_mut(&rule.daughters[0].offset_vars(offset), cat) {
                continue;
            }
            let (from, to, tokens) = (self.passive[p].from, self.passive[p].to, self.passive[p].tokens.clone());
            let mother = b.resolve(&rule.mother.offset_vars(offset));
            if rule.daughters.len() == 1 {
                self.add_passive(from, to, tokens, mother)?;
            } else {
                let mut terms = vec![mother];
                terms.extend(rule.daughters[1..].iter().map(|d| b.resolve(&d.offset_vars(offset))));
                self.add_active(r, from, to, tokens, terms)?;
            }
        }
        Ok(())
    }

    fn combine(&mut self, a: usize, p: usize) -> Result<(), ParseError> {
        let act = &self.active[a];
        let pas = &self.passive[p];
        let offset = max_var(&act.terms).map_or(0, |v| v + 1);
        let cat = pas.cat.offset_vars(offset);
        let mut b = self.bindings();
        if !b.unify_mut(&act.terms[1], &cat) {
            return Ok(());
        }
        let (rule, from, to) = (act.rule, act.from, pas.to);
        let mut tokens = act.tokens.clone();
        tokens.extend_from_slice(&pas.tokens);
        if act.terms.len() == 2 {
            let mother = b.resolve(&act.terms[0]);
            self.add_passive(from, to, tokens, mother)
        } else {
            let mut terms = vec![b.resolve(&act.terms[0])];
            terms.extend(act.terms[2..].iter().map(|t| b.resolve(t)));
            self.add_active(rule, from, to, tokens, terms)
        }
    }

    fn stats(&self) -> ParseStats {
        ParseStats {
            passive: self.passive.len(),
            active: self.active.len(),
        }
    }
}

fn match_words(
    out: &BTreeMap<StateId, Vec<&Transition>>,
    t: &Transition,
    rest: &[String],
    ends: &mut Vec<StateId>,
) {
    match rest.split_first() {
        None => {
            if !ends.contains(&t.to) {
                ends.push(t.to);
            }
        }
        Some((w, more)) => {
            for next in out.get(&t.to).into_iter().flatten() {
                if &next.label == w {
                    match_words(out, next, more, ends);
                }
            }
        }
    }
}

/// Cheapest score of a transition path from `from` to `to` spelling `tokens`.
pub fn path_score(wg: &WordGraph, from: StateId, to: StateId, tokens: &[String]) -> Option<f64> {
    let out = wg.outgoing();
    let mut frontier: BTreeMap<StateId, f64> = BTreeMap::from([(from, 0.0)]);
    for tok in tokens {
        let mut next: BTreeMap<StateId, f64> = BTreeMap::new();
        for (&s, &cost) in &frontier {
            for t in out.get(&s).into_iter().flatten() {
                if &t.label == tok && t.to <= to {
                    let c = cost + t.acoustic;
                    next.entry(t.to)
                        .and_modify(|old| {
                            if c < *old {
                                *old = c
                            }
                        })
                        .or_insert(c);
                }
            }
        }
        frontier = next;
    }
    frontier.get(&to).copied()
}

/// All top-category analyses anywhere in the word-graph, with default limits.
pub fn parse_all(grammar: &Grammar, wg: &WordGraph) -> Result<Vec<ParsedItem>, ParseError> {
    parse_all_with(grammar, wg, ParserConfig::default()).map(|(items, _)| items)
}

pub fn parse_all_with(
    grammar: &Grammar,
    wg: &WordGraph,
    cfg: ParserConfig,
) -> Result<(Vec<ParsedItem>, ParseStats), ParseError> {
    let mut chart = Chart::new(grammar, cfg);
    chart.lexical(wg)?;
    chart.run()?;

    let offset = grammar.top.max_var().map_or(0, |v| v + 1);
    let top = grammar.top.offset_vars(offset);
    let mut best: BTreeMap<(StateId, StateId, Vec<String>, String), ParsedItem> = BTreeMap::new();
    for p in &chart.passive {
        let mut b = Bindings::with_occurs_check(cfg.occurs_check);
        if !b.unify_mut(&p.cat, &top) {
            continue;
        }
        let sem = Grammar::top_semantics(&b.resolve(&top)).canonical();
        let tokens: Vec<String> = p.tokens.iter().map(|&i| chart.words[i as usize].clone()).collect();
        let key = (p.from, p.to, tokens.clone(), sem.to_string());
        if best.contains_key(&key) {
            continue;
        }
        let acoustic = path_score(wg, p.from, p.to, &tokens).expect("item spans a transition path");
        best.insert(
            key,
            ParsedItem {
                from: p.from,
                to: p.to,
                tokens,
                acoustic,
                sem,
            },
        );
    }
    Ok((best.into_values().collect(), chart.stats()))
}

/// Chart statistics for parsing only the part of the graph between two
/// states, as if that span were the whole input.
pub fn parse_span_stats(
    grammar: &Grammar,
    wg: &WordGraph,
    from: StateId,
    to: StateId,
    cfg: ParserConfig,
) -> Result<ParseStats, ParseError> {
    let mut forward = HashSet::from([from]);
    for t in &wg.transitions {
        if forward.contains(&t.from) && t.to <= to {
            forward.insert(t.to);
        }
    }
    let mut backward = HashSet::from([to]);
    for t in wg.transitions.iter().rev() {
        if backward.contains(&t.to) && t.from >= from {
            backward.insert(t.from);
        }
    }
    let mut transitions: Vec<Transition> = wg
        .transitions
        .iter()
        .filter(|t| forward.contains(&t.from) && backward.contains(&t.to) && forward.contains(&t.to))
        .cloned()
        .collect();
    transitions.sort_by_key(|t| (t.from, t.to));
    let sub = WordGraph {
        start: from,
        transitions,
        finals: Vec::new(),
    };
    let mut chart = Chart::new(grammar, cfg);
    chart.lexical(&sub)?;
    chart.run()?;
    Ok(chart.stats())
}

/// Largest number of distinct categories the string recognizer keeps per span.
const MAX_CATS_PER_SPAN: usize = 10_000;

/// Semantics of every top-category analysis of exactly `tokens`.
///
/// Categories are computed for every span in order of increasing length: a
/// rule with `k >= 2` daughters is tried on every split of the span into `k`
/// non-empty parts, and unary rules are closed under within the span.
pub fn parse_string<S: AsRef<str>>(grammar: &Grammar, tokens: &[S]) -> Result<Vec<Term>, ParseError> {
    let n = tokens.len();
    if n == 0 {
        return Err(ParseError::EmptyInput);
    }
    let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let mut cats: HashMap<(usize, usize), Vec<Term>> = HashMap::new();
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let mut span: Vec<Term> = Vec::new();
            let mut seen: HashSet<Term> = HashSet::new();
            let mut push = |t: Term, span: &mut Vec<Term>| -> Result<bool, ParseError> {
                let t = t.canonical();
                if seen.insert(t.clone()) {
                    if span.len() >= MAX_CATS_PER_SPAN {
                        return Err(ParseError::TooManyItems {
                            limit: MAX_CATS_PER_SPAN,
                            from: i as StateId,
                            to: j as StateId,
                        });
                    }
                    span.push(t);
                    return Ok(true);
                }
                Ok(false)
            };
            for e in &grammar.lexicon {
                if e.words.as_slice() == &tokens[i..j] {
                    push(e.category.clone(), &mut span)?;
                }
            }
            for rule in grammar.rules.iter().filter(|r| r.daughters.len() >= 2) {
                for cuts in splits(i, j, rule.daughters.len()) {
                    let mut results = Vec::new();
                    derive(&cats, rule, &cuts, 0, Bindings::new(), &mut results);
                    for m in results {
                        push(m, &mut span)?;
                    }
                }
            }
            let unary: Vec<_> = grammar.rules.iter().filter(|r| r.daughters.len() == 1).collect();
            let mut frontier = 0;
            while frontier < span.len() {
                let end = span.len();
                for k in frontier..end {
                    let cat = span[k].clone();
                    let offset = cat.max_var().map_or(0, |v| v + 1);
                    for rule in &unary {
                        let mut b = Bindings::new();
                        if b.unify_mut(&rule.daughters[0].offset_vars(offset), &cat) {
                            push(b.resolve(&rule.mother.offset_vars(offset)), &mut span)?;
                        }
                    }
                }
                frontier = end;
            }
            cats.insert((i, j), span);
        }
    }
    let top = &grammar.top;
    let mut sems: Vec<Term> = Vec::new();
    for cat in &cats[&(0, n)] {
        let offset = cat.max_var().map_or(0, |v| v + 1);
        let t = top.offset_vars(offset);
        let mut b = Bindings::new();
        if b.unify_mut(cat, &t) {
            let sem = Grammar::top_semantics(&b.resolve(&t)).canonical();
            if !sems.contains(&sem) {
                sems.push(sem);
            }
        }
    }
    sems.sort_by_key(|t| t.to_string());
    Ok(sems)
}

/// Boundaries `[i, c1, ..., j]` of every split of `i..j` into `k` non-empty parts.
fn splits(i: usize, j: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(pos: usize, j: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            if pos < j {
                cur.push(j);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for c in pos + 1..j {
            cur.push(c);
            go(c, j, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(i, j, k, &mut vec![i], &mut out);
    out
}

fn derive(
    cats: &HashMap<(usize, usize), Vec<Term>>,
    rule: &crate::grammar::Rule,
    cuts: &[usize],
    d: usize,
    b: Bindings,
    out: &mut Vec<Term>,
) {
    // Rule variables live below 10_000; each daughter's category is moved
    // into its own range above that.
    const BASE: VarId = 10_000;
    if d == rule.daughters.len() {
        out.push(b.resolve(&rule.mother));
        return;
    }
    let offset = BASE * (d as VarId + 1);
    for cat in &cats[&(cuts[d], cuts[d + 1])] {
        let mut b2 = b.clone();
        if b2.unify_mut(&rule.daughters[d], &cat.offset_vars(offset)) {
            derive(cats, rule, cuts, d + 1, b2, out);
        }
    }
}
