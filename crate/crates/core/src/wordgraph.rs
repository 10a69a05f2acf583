//! Speech-recognizer word-graphs.
//!
//! File format, one item per line:
//!
//! ```text
//! TRANS <from> <to> <label> <acoustic>
//! FINAL <state> <acoustic>
//! ```
//!
//! Lines starting with `#` are comments. In a batch file, blank lines
//! separate graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub type StateId = u32;

pub const PAUSE: &str = "#";

#[derive(Debug, Error, PartialEq)]
pub enum WordGraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: transition {from} -> {to} does not go to a larger state")]
    BackwardEdge {
        line: usize,
        from: StateId,
        to: StateId,
    },
    #[error("expected exactly one start state, found {0:?}")]
    StartState(Vec<StateId>),
    #[error("empty word-graph")]
    Empty,
    #[error("more than {0} paths")]
    TooManyPaths(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub label: String,
    pub acoustic: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Final {
    pub state: StateId,
    pub acoustic: f64,
}

/// A word-graph. States are integers and every transition goes from a
/// smaller to a larger state, so increasing id order is a topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct WordGraph {
    pub start: StateId,
    pub transitions: Vec<Transition>,
    pub finals: Vec<Final>,
}

impl WordGraph {
    /// Builds a graph, checking edge direction and that exactly one state has
    /// no incoming transitions.
    pub fn new(transitions: Vec<Transition>, finals: Vec<Final>) -> Result<Self, WordGraphError> {
        if let Some(t) = transitions.iter().find(|t| t.from >= t.to) {
            return Err(WordGraphError::BackwardEdge {
                line: 0,
                from: t.from,
                to: t.to,
            });
        }
        let states: BTreeSet<StateId> = transitions
            .iter()
            .flat_map(|t| [t.from, t.to])
            .chain(finals.iter().map(|f| f.state))
            .collect();
        if states.is_empty() {
            return Err(WordGraphError::Empty);
        }
        let targets: BTreeSet<StateId> = transitions.iter().map(|t| t.to).collect();
        let starts: Vec<StateId> = states.difference(&targets).copied().collect();
        if starts.len() != 1 {
            return Err(WordGraphError::StartState(starts));
        }
        Ok(WordGraph {
            start: starts[0],
            transitions,
            finals,
        })
    }

    /// A single path spelling `tokens`, with zero scores.
    pub fn linear<S: AsRef<str>>(tokens: &[S]) -> Self {
        let transitions = tokens
            .iter()
            .enumerate()
            .map(|(i, w)| Transition {
                from: i as StateId,
                to: i as StateId + 1,
                label: w.as_ref().to_string(),
                acoustic: 0.0,
            })
            .collect();
        WordGraph {
            start: 0,
            transitions,
            finals: vec![Final {
                state: tokens.len() as StateId,
                acoustic: 0.0,
            }],
        }
    }

    pub fn states(&self) -> BTreeSet<StateId> {
        self.transitions
            .iter()
            .flat_map(|t| [t.from, t.to])
            .chain(self.finals.iter().map(|f| f.state))
            .chain([self.start])
            .collect()
    }

    pub fn max_state(&self) -> StateId {
        self.states().into_iter().next_back().unwrap_or(self.start)
    }

    /// Outgoing transitions per state.
    pub fn outgoing(&self) -> BTreeMap<StateId, Vec<&Transition>> {
        let mut out: BTreeMap<StateId, Vec<&Transition>> = BTreeMap::new();
        for t in &self.transitions {
            out.entry(t.from).or_default().push(t);
        }
        out
    }

    /// Every complete path with its total score (transitions plus final), in
    /// depth-first order over the sorted transition list.
    pub fn enumerate_paths(&self, limit: usize) -> Result<Vec<(Vec<String>, f64)>, WordGraphError> {
        let out = self.outgoing();
        let mut finals: BTreeMap<StateId, Vec<f64>> = BTreeMap::new();
        for f in &self.finals {
            finals.entry(f.state).or_default().push(f.acoustic);
        }
        let mut paths = Vec::new();
        let mut tokens = Vec::new();
        walk(self.start, 0.0, &out, &finals, &mut tokens, &mut paths, limit)?;
        Ok(paths)
    }

    pub fn parse(text: &str) -> Result<Self, WordGraphError> {
        let mut graphs = parse_batch(text)?;
        match graphs.len() {
            0 => Err(WordGraphError::Empty),
            1 => Ok(graphs.pop().unwrap()),
            n => Err(WordGraphError::Parse {
                line: 0,
                msg: format!("expected one graph, found {n}"),
            }),
        }
    }
}

fn walk(
    state: StateId,
    acc: f64,
    out: &BTreeMap<StateId, Vec<&Transition>>,
    finals: &BTreeMap<StateId, Vec<f64>>,
    tokens: &mut Vec<String>,
    paths: &mut Vec<(Vec<String>, f64)>,
    limit: usize,
) -> Result<(), WordGraphError> {
    for a in finals.get(&state).into_iter().flatten() {
        if paths.len() == limit {
            return Err(WordGraphError::TooManyPaths(limit));
        }
        paths.push((tokens.clone(), acc + a));
    }
    for t in out.get(&state).into_iter().flatten() {
        tokens.push(t.label.clone());
        walk(t.to, acc + t.acoustic, out, finals, tokens, paths, limit)?;
        tokens.pop();
    }
    Ok(())
}

/// Parses a batch file: graphs separated by blank lines.
pub fn parse_batch(text: &str) -> Result<Vec<WordGraph>, WordGraphError> {
    let mut graphs = Vec::new();
    let mut trans = Vec::new();
    let mut finals = Vec::new();
    let mut first_line = 0;
    let flush = |trans: &mut Vec<Transition>,
                 finals: &mut Vec<Final>,
                 first_line: usize,
                 graphs: &mut Vec<WordGraph>|
     -> Result<(), WordGraphError> {
        if trans.is_empty() && finals.is_empty() {
            return Ok(());
        }
        let g = WordGraph::new(std::mem::take(trans), std::mem::take(finals)).map_err(|e| match e {
            WordGraphError::StartState(s) => WordGraphError::Parse {
                line: first_line,
                msg: format!("expected exactly one start state, found {s:?}"),
            },
            other => other,
        })?;
        graphs.push(g);
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            flush(&mut trans, &mut finals, first_line, &mut graphs)?;
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        if trans.is_empty() && finals.is_empty() {
            first_line = line;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        let bad = |msg: &str| WordGraphError::Parse {
            line,
            msg: format!("{msg}: {l:?}"),
        };
        let state = |s: &str| s.parse::<StateId>().map_err(|_| bad("bad state id"));
        let score = |s: &str| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(bad("bad score")),
        };
        match fields.as_slice() {
            ["TRANS", from, to, label, a] => {
                let (from, to) = (state(from)?, state(to)?);
                if from >= to {
                    return Err(WordGraphError::BackwardEdge { line, from, to });
                }
                trans.push(Transition {
                    from,
                    to,
                    label: label.to_string(),
                    acoustic: score(a)?,
                });
            }
            ["FINAL", s, a] => finals.push(Final {
                state: state(s)?,
                acoustic: score(a)?,
            }),
            _ => return Err(bad("expected TRANS or FINAL line")),
        }
    }
    flush(&mut trans, &mut finals, first_line, &mut graphs)?;
    Ok(graphs)
}

impl fmt::Display for WordGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.transitions {
            writeln!(f, "TRANS {} {} {} {}", t.from, t.to, t.label, t.acoustic)?;
        }
        for fin in &self.finals {
            writeln!(f, "FINAL {} {}", fin.state, fin.acoustic)?;
        }
        Ok(())
    }
}

/// Removes pause transitions with the default `#` label.
pub fn normalize(g: &WordGraph) -> WordGraph {
    normalize_with(g, PAUSE)
}

/// Removes pause transitions by forward bypass: a pause `(vi, vj, a)` gives
/// `vi` a copy of every outgoing transition and final score of `vj`, with `a`
/// added. Afterwards states not on a complete path are pruned and the result
/// is sorted, so normalization is idempotent.
pub fn normalize_with(g: &WordGraph, pause: &str) -> WordGraph {
    let mut out: BTreeMap<StateId, Vec<Transition>> = BTreeMap::new();
    let mut fin: BTreeMap<StateId, Vec<f64>> = BTreeMap::new();
    let mut pauses: BTreeMap<StateId, Vec<(StateId, f64)>> = BTreeMap::new();
    for t in &g.transitions {
        if t.label == pause {
            pauses.entry(t.from).or_default().push((t.to, t.acoustic));
        } else {
            out.entry(t.from).or_default().push(t.clone());
        }
    }
    for f in &g.finals {
        fin.entry(f.state).or_default().push(f.acoustic);
    }
    // Targets are larger than sources, so handling states from the largest
    // down means every pause target is already pause-free.
    for (&from, targets) in pauses.iter().rev() {
        for &(to, a) in targets {
            let copied: Vec<Transition> = out
                .get(&to)
                .into_iter()
                .flatten()
                .map(|t| Transition {
                    from,
                    to: t.to,
                    label: t.label.clone(),
                    acoustic: a + t.acoustic,
                })
                .collect();
            out.entry(from).or_default().extend(copied);
            let finals: Vec<f64> = fin.get(&to).into_iter().flatten().map(|b| a + b).collect();
            if !finals.is_empty() {
                fin.entry(from).or_default().extend(finals);
            }
        }
    }

    let mut reachable = BTreeSet::from([g.start]);
    for (from, ts) in &out {
        if reachable.contains(from) {
            reachable.extend(ts.iter().map(|t| t.to));
        }
    }
    let mut live: BTreeSet<StateId> = fin.keys().copied().collect();
    for (from, ts) in out.iter().rev() {
        if ts.iter().any(|t| live.contains(&t.to)) {
            live.insert(*from);
        }
    }
    let keep = |s: &StateId| reachable.contains(s) && live.contains(s);

    let mut transitions: Vec<Transition> = out
        .into_values()
        .flatten()
        .filter(|t| keep(&t.from) && keep(&t.to))
        .collect();
    transitions.sort_by(|x, y| {
        (x.from, x.to, &x.label)
            .cmp(&(y.from, y.to, &y.label))
            .then(x.acoustic.total_cmp(&y.acoustic))
    });
    let mut finals: Vec<Final> = fin
        .into_iter()
        .filter(|(s, _)| keep(s))
        .flat_map(|(state, scores)| scores.into_iter().map(move |acoustic| Final { state, acoustic }))
        .collect();
    finals.sort_by(|x, y| x.state.cmp(&y.state).then(x.acoustic.total_cmp(&y.acoustic)));
    WordGraph {
        start: g.start,
        transitions,
        finals,
    }
}
