//! Best-path search through an annotated word-graph.
//!
//! The annotated graph has three kinds of edges: skips (one per word-graph
//! transition), categories (one per parsed item) and stoppings (one per final
//! state, leading to a fresh final vertex). A [`WeightMethod`] says how a
//! path's weight grows along an edge and how weights compare. Since state ids
//! are already a topological order, a single forward sweep with relaxation
//! finds the optimum, even when some increments are negative.
//!
//! Methods with a non-zero [`WeightMethod::context_size`] see the last few
//! tokens of the path at every vertex. The search then runs over
//! `(state, context)` pairs, created on first relaxation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::lattice_parser::ParsedItem;
use crate::ngram::NgramModel;
use crate::term::Term;
use crate::wordgraph::{StateId, WordGraph};

pub type VertexId = StateId;

/// Default weight of one skip or category against ngram and acoustic costs.
pub const DEFAULT_K_NLP: f64 = 100.0;
pub const DEFAULT_K_WG: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("item {from}..{to} refers to a state outside the word-graph")]
    UnknownState { from: StateId, to: StateId },
    #[error("invalid edge {from} -> {to}: {msg}")]
    InvalidEdge {
        from: VertexId,
        to: VertexId,
        msg: String,
    },
    #[error("no complete path with finite weight")]
    NoPath,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Skip,
    Category,
    Stopping,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub tokens: Vec<String>,
    pub acoustic: f64,
    pub sem: Option<Term>,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug)]
pub struct AnnotatedGraph {
    start: VertexId,
    final_vertex: VertexId,
    edges: Vec<Edge>,
    out: BTreeMap<VertexId, std::ops::Range<usize>>,
}

impl AnnotatedGraph {
    pub fn build(wg: &WordGraph, items: &[ParsedItem]) -> Result<Self, SearchError> {
        let states = wg.states();
        let final_vertex = wg.max_state() + 1;
        let mut edges = Vec::with_capacity(wg.transitions.len() + items.len() + wg.finals.len());
        for t in &wg.transitions {
            edges.push(Edge {
                from: t.from,
                to: t.to,
                tokens: vec![t.label.clone()],
                acoustic: t.acoustic,
                sem: None,
                kind: EdgeKind::Skip,
            });
        }
        for it in items {
            if !states.contains(&it.from) || !states.contains(&it.to) {
                return Err(SearchError::UnknownState {
                    from: it.from,
                    to: it.to,
                });
            }
            edges.push(Edge {
                from: it.from,
                to: it.to,
                tokens: it.tokens.clone(),
                acoustic: it.acoustic,
                sem: Some(it.sem.clone()),
                kind: EdgeKind::Category,
            });
        }
        for f in &wg.finals {
            edges.push(Edge {
                from: f.state,
                to: final_vertex,
                tokens: Vec::new(),
                acoustic: f.acoustic,
                sem: None,
                kind: EdgeKind::Stopping,
            });
        }
        Self::from_edges(wg.start, final_vertex, edges)
    }

    /// Builds a graph from raw edges, checking edge shapes and direction.
    pub fn from_edges(start: VertexId, final_vertex: VertexId, mut edges: Vec<Edge>) -> Result<Self, SearchError> {
        for e in &edges {
            let bad = |msg: &str| SearchError::InvalidEdge {
                from: e.from,
                to: e.to,
                msg: msg.to_string(),
            };
            if e.from >= e.to {
                return Err(bad("edges must go to a larger vertex"));
            }
            match e.kind {
                EdgeKind::Skip if e.tokens.len() != 1 || e.sem.is_some() => {
                    return Err(bad("skip edges carry one token and no semantics"))
                }
                EdgeKind::Category if e.tokens.is_empty() || e.sem.is_none() => {
                    return Err(bad("category edges carry tokens and semantics"))
                }
                EdgeKind::Stopping if !e.tokens.is_empty() || e.sem.is_some() || e.to != final_vertex => {
                    return Err(bad("stopping edges are empty and end in the final vertex"))
                }
                EdgeKind::Skip | EdgeKind::Category if e.to >= final_vertex => {
                    return Err(bad("only stopping edges reach the final vertex"))
                }
                _ => {}
            }
        }
        edges.sort_by(|a, b| {
            (a.from, a.to, a.kind, &a.tokens)
                .cmp(&(b.from, b.to, b.kind, &b.tokens))
                .then(a.acoustic.total_cmp(&b.acoustic))
                .then_with(|| a.sem.as_ref().map(Term::to_string).cmp(&b.sem.as_ref().map(Term::to_string)))
        });
        let mut out = BTreeMap::new();
        let mut i = 0;
        while i < edges.len() {
            let from = edges[i].from;
            let j = i + edges[i..].iter().take_while(|e| e.from == from).count();
            out.insert(from, i..j);
            i = j;
        }
        Ok(AnnotatedGraph {
            start,
            final_vertex,
            edges,
            out,
        })
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn final_vertex(&self) -> VertexId {
        self.final_vertex
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, v: VertexId) -> &[Edge] {
        self.out.get(&v).map_or(&[], |r| &self.edges[r.clone()])
    }

    fn out_range(&self, v: VertexId) -> std::ops::Range<usize> {
        self.out.get(&v).cloned().unwrap_or(0..0)
    }
}

/// Accumulated cost components. Methods use the ones they need.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cost {
    pub skips: u32,
    pub categories: u32,
    pub acoustic: f64,
    pub ngram: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Finite(Cost),
    /// Absorbing infinite weight.
    Top,
}

impl Weight {
    pub fn cost(&self) -> Option<&Cost> {
        match self {
            Weight::Finite(c) => Some(c),
            Weight::Top => None,
        }
    }
}

/// A weight method: initial weight, update function and ordering.
///
/// `extend` must depend only on the accumulated cost, the edge, and the
/// context tokens at the edge's source vertex.
pub trait WeightMethod {
    fn name(&self) -> String;

    /// Number of preceding tokens the method needs at each vertex.
    fn context_size(&self) -> usize {
        0
    }

    /// Context at the start vertex; must have `context_size` tokens.
    fn start_context(&self) -> Vec<String> {
        Vec::new()
    }

    fn initial(&self) -> Weight {
        Weight::Finite(Cost::default())
    }

    fn extend(&self, cost: &Cost, edge: &Edge, context: &[String]) -> Weight;

    /// Strict order on finite costs.
    fn cost_less(&self, a: &Cost, b: &Cost) -> bool;

    /// Scalar summary used in reports, when the method has one.
    fn total(&self, _cost: &Cost) -> Option<f64> {
        None
    }

    /// Cost components shown in reports.
    fn components(&self, cost: &Cost) -> Vec<String>;

    fn update(&self, w: &Weight, edge: &Edge, context: &[String]) -> Weight {
        match w {
            Weight::Finite(c) => self.extend(c, edge, context),
            Weight::Top => Weight::Top,
        }
    }

    fn less(&self, a: &Weight, b: &Weight) -> bool {
        match (a, b) {
            (Weight::Finite(x), Weight::Finite(y)) => self.cost_less(x, y),
            (Weight::Finite(_), Weight::Top) => true,
            (Weight::Top, _) => false,
        }
    }

    /// `⟨c1,...;total⟩`, or `⟨c1,...⟩` for methods without a total.
    fn format(&self, w: &Weight) -> String {
        match w {
            Weight::Top => "⟨∞⟩".to_string(),
            Weight::Finite(c) => {
                let parts = self.components(c).join(",");
                match self.total(c) {
                    Some(t) => format!("⟨{parts};{t}⟩"),
                    None => format!("⟨{parts}⟩"),
                }
            }
        }
    }
}

/// Acoustic scores only; parser output is ignored.
#[derive(Clone, Copy, Debug, Default)]
pub struct Speech;

pub fn method_speech() -> Speech {
    Speech
}

impl WeightMethod for Speech {
    fn name(&self) -> String {
        "speech".into()
    }

    fn extend(&self, c: &Cost, edge: &Edge, _: &[String]) -> Weight {
        match edge.kind {
            EdgeKind::Category => Weight::Top,
            EdgeKind::Skip | EdgeKind::Stopping => Weight::Finite(Cost {
                acoustic: c.acoustic + edge.acoustic,
                ..*c
            }),
        }
    }

    fn cost_less(&self, a: &Cost, b: &Cost) -> bool {
        a.acoustic < b.acoustic
    }

    fn total(&self, c: &Cost) -> Option<f64> {
        Some(c.acoustic)
    }

    fn components(&self, c: &Cost) -> Vec<String> {
        vec![c.acoustic.to_string()]
    }
}

fn count_edge(c: &Cost, edge: &Edge) -> Cost {
    let mut next = Cost {
        acoustic: c.acoustic + edge.acoustic,
        ..*c
    };
    match edge.kind {
        EdgeKind::Skip => next.skips += 1,
        EdgeKind::Category => next.categories += 1,
        EdgeKind::Stopping => {}
    }
    next
}

/// Fewest skips, then fewest categories, then lowest acoustic score.
#[derive(Clone, Copy, Debug, Default)]
pub struct NlpSpeech;

pub fn method_nlp_speech() -> NlpSpeech {
    NlpSpeech
}

impl WeightMethod for NlpSpeech {
    fn name(&self) -> String {
        "nlp_speech".into()
    }

    fn extend(&self, c: &Cost, edge: &Edge, _: &[String]) -> Weight {
        Weight::Finite(count_edge(c, edge))
    }

    fn cost_less(&self, a: &Cost, b: &Cost) -> bool {
        (a.skips, a.categories) < (b.skips, b.categories)
            || ((a.skips, a.categories) == (b.skips, b.categories) && a.acoustic < b.acoustic)
    }

    fn components(&self, c: &Cost) -> Vec<String> {
        vec![c.skips.to_string(), c.categories.to_string(), c.acoustic.to_string()]
    }
}

/// Skips, categories, acoustic and ngram costs folded into one total:
/// `ngram + k_nlp * (skips + categories) + k_wg * acoustic`, ties broken by
/// fewer skips.
#[derive(Clone, Copy, Debug)]
pub struct NlpSpeechNgram<'m> {
    pub model: &'m NgramModel,
    pub k_nlp: f64,
    pub k_wg: f64,
}

pub fn method_nlp_speech_ngram(model: &NgramModel, k_nlp: f64, k_wg: f64) -> NlpSpeechNgram<'_> {
    NlpSpeechNgram { model, k_nlp, k_wg }
}

impl NlpSpeechNgram<'_> {
    pub fn total_of(&self, c: &Cost) -> f64 {
        c.ngram + self.k_nlp * f64::from(c.skips + c.categories) + self.k_wg * c.acoustic
    }
}

fn lm_cost(model: &NgramModel, context: &[String], tokens: &[String]) -> f64 {
    model
        .score_seq(context, tokens)
        .expect("search contexts have the model's history length")
}

impl WeightMethod for NlpSpeechNgram<'_> {
    fn name(&self) -> String {
        match self.model.order() {
            2 => "nlp_speech_bigram".into(),
            3 => "nlp_speech_trigram".into(),
            n => format!("nlp_speech_{n}gram"),
        }
    }

    fn context_size(&self) -> usize {
        self.model.order() - 1
    }

    fn start_context(&self) -> Vec<String> {
        self.model.start_context()
    }

    fn extend(&self, c: &Cost, edge: &Edge, context: &[String]) -> Weight {
        let mut next = count_edge(c, edge);
        if edge.kind != EdgeKind::Stopping {
            next.ngram += lm_cost(self.model, context, &edge.tokens);
        }
        Weight::Finite(next)
    }

    /// Equal totals go to the path with fewer skips.
    fn cost_less(&self, a: &Cost, b: &Cost) -> bool {
        let (ta, tb) = (self.total_of(a), self.total_of(b));
        ta < tb || (ta == tb && a.skips < b.skips)
    }

    fn total(&self, c: &Cost) -> Option<f64> {
        Some(self.total_of(c))
    }

    fn components(&self, c: &Cost) -> Vec<String> {
        vec![
            c.skips.to_string(),
            c.categories.to_string(),
            c.acoustic.to_string(),
            c.ngram.to_string(),
        ]
    }
}

/// Acoustic and ngram scores over the raw word-graph; parser output is
/// ignored. Total is `ngram + k_wg * acoustic`, where every token's ngram
/// score is reduced by `bias`. With `k_wg = 0` this is a pure language-model
/// method.
#[derive(Clone, Copy, Debug)]
pub struct SpeechNgram<'m> {
    pub model: &'m NgramModel,
    pub k_wg: f64,
    pub bias: f64,
}

pub fn method_speech_ngram(model: &NgramModel, k_wg: f64, bias: f64) -> SpeechNgram<'_> {
    SpeechNgram { model, k_wg, bias }
}

impl SpeechNgram<'_> {
    pub fn total_of(&self, c: &Cost) -> f64 {
        c.ngram + self.k_wg * c.acoustic
    }
}

impl WeightMethod for SpeechNgram<'_> {
    fn name(&self) -> String {
        let n = match self.model.order() {
            2 => "bigram".to_string(),
            3 => "trigram".to_string(),
            n => format!("{n}gram"),
        };
        if self.k_wg == 0.0 {
            n
        } else {
            format!("speech_{n}")
        }
    }

    fn context_size(&self) -> usize {
        self.model.order() - 1
    }

    fn start_context(&self) -> Vec<String> {
        self.model.start_context()
    }

    fn extend(&self, c: &Cost, edge: &Edge, context: &[String]) -> Weight {
        match edge.kind {
            EdgeKind::Category => Weight::Top,
            EdgeKind::Skip => {
                let mut next = count_edge(c, edge);
                next.ngram += lm_cost(self.model, context, &edge.tokens) - self.bias * edge.tokens.len() as f64;
                Weight::Finite(next)
            }
            EdgeKind::Stopping => Weight::Finite(count_edge(c, edge)),
        }
    }

    fn cost_less(&self, a: &Cost, b: &Cost) -> bool {
        self.total_of(a) < self.total_of(b)
    }

    fn total(&self, c: &Cost) -> Option<f64> {
        Some(self.total_of(c))
    }

    fn components(&self, c: &Cost) -> Vec<String> {
        vec![c.acoustic.to_string(), c.ngram.to_string()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Semantics of the category edges on the path, in order.
    pub sems: Vec<Term>,
    pub tokens: Vec<String>,
    pub weight: Weight,
    pub edges: Vec<Edge>,
}

impl SearchResult {
    fn from_edges(edges: Vec<Edge>, weight: Weight) -> Self {
        SearchResult {
            sems: edges.iter().filter_map(|e| e.sem.clone()).collect(),
            tokens: edges.iter().flat_map(|e| e.tokens.iter().cloned()).collect(),
            weight,
            edges,
        }
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub vertices: usize,
    pub relaxations: usize,
}

struct Node {
    state: VertexId,
    context: Vec<String>,
    weight: Weight,
    back: Option<(usize, usize)>,
}

/// Arrays of a finished single-best sweep over (possibly expanded) vertices.
pub struct Sweep<'g> {
    graph: &'g AnnotatedGraph,
    nodes: Vec<Node>,
    format: Box<dyn Fn(&Weight) -> String + 'g>,
    stats: SearchStats,
}

fn next_context(context: &[String], edge: &Edge, size: usize) -> Vec<String> {
    if size == 0 || edge.kind == EdgeKind::Stopping {
        return Vec::new();
    }
    let mut all: Vec<String> = context.iter().chain(&edge.tokens).cloned().collect();
    all.split_off(all.len() - size)
}

/// Visits vertices in topological order: by state, then by creation order
/// within a state. `visit` may only create vertices at larger states.
fn sweep_states(
    by_state: &mut BTreeMap<VertexId, Vec<usize>>,
    mut visit: impl FnMut(usize, &mut BTreeMap<VertexId, Vec<usize>>),
) {
    let mut cursor = 0;
    loop {
        let Some((&state, ids)) = by_state.range(cursor..).next() else {
            break;
        };
        let ids = ids.clone();
        for id in ids {
            visit(id, by_state);
        }
        cursor = state + 1;
    }
}

pub fn sweep<'g, M: WeightMethod + ?Sized>(graph: &'g AnnotatedGraph, method: &'g M) -> Sweep<'g> {
    let size = method.context_size();
    let start_ctx = method.start_context();
    assert_eq!(start_ctx.len(), size, "start context must match the context size");
    let mut nodes = vec![Node {
        state: graph.start,
        context: start_ctx.clone(),
        weight: method.initial(),
        back: None,
    }];
    let mut index: HashMap<(VertexId, Vec<String>), usize> = HashMap::from([((graph.start, start_ctx), 0)]);
    let mut by_state = BTreeMap::from([(graph.start, vec![0])]);
    let mut stats = SearchStats::default();
    sweep_states(&mut by_state, |id, by_state| {
        for ei in graph.out_range(nodes[id].state) {
            let edge = &graph.edges[ei];
            stats.relaxations += 1;
            let w = method.update(&nodes[id].weight, edge, &nodes[id].context);
            let ctx = next_context(&nodes[id].context, edge, size);
            match index.get(&(edge.to, ctx.clone())) {
                Some(&t) => {
                    if method.less(&w, &nodes[t].weight) {
                        nodes[t].weight = w;
                        nodes[t].back = Some((id, ei));
                    }
                }
                None => {
                    if method.less(&w, &Weight::Top) {
                        let t = nodes.len();
                        index.insert((edge.to, ctx.clone()), t);
                        by_state.entry(edge.to).or_default().push(t);
                        nodes.push(Node {
                            state: edge.to,
                            context: ctx,
                            weight: w,
                            back: Some((id, ei)),
                        });
                    }
                }
            }
        }
    });
    stats.vertices = nodes.len();
    Sweep {
        graph,
        nodes,
        format: Box::new(move |w| method.format(w)),
        stats,
    }
}

impl Sweep<'_> {
    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn best(&self) -> Result<SearchResult, SearchError> {
        let goal = self
            .nodes
            .iter()
            .position(|n| n.state == self.graph.final_vertex)
            .ok_or(SearchError::NoPath)?;
        let mut edges = Vec::new();
        let mut cur = goal;
        while let Some((prev, ei)) = self.nodes[cur].back {
            edges.push(self.graph.edges[ei].clone());
            cur = prev;
        }
        edges.reverse();
        Ok(SearchResult::from_edges(edges, self.nodes[goal].weight))
    }

    /// Text dump of the weight and back-pointer arrays.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let back = match n.back {
                Some((p, e)) => {
                    let edge = &self.graph.edges[e];
                    format!("{p} via {:?} {}", edge.kind, edge.tokens.join(" "))
                }
                None => "-".to_string(),
            };
            writeln!(
                s,
                "VERTEX {i} state={} ctx=[{}] A={} P={}",
                n.state,
                n.context.join(" "),
                (self.format)(&n.weight),
                back
            )
            .unwrap();
        }
        s
    }
}

pub fn shortest_path<M: WeightMethod + ?Sized>(graph: &AnnotatedGraph, method: &M) -> Result<SearchResult, SearchError> {
    sweep(graph, method).best()
}

/// The `n` best complete paths, best first. Ties keep the path found first.
pub fn n_best<M: WeightMethod + ?Sized>(graph: &AnnotatedGraph, method: &M, n: usize) -> Vec<SearchResult> {
    assert!(n >= 1, "n_best needs n >= 1");
    struct Entry {
        weight: Weight,
        back: Option<(usize, usize, usize)>,
    }
    struct NNode {
        state: VertexId,
        context: Vec<String>,
        entries: Vec<Entry>,
    }
    let size = method.context_size();
    let start_ctx = method.start_context();
    let mut nodes = vec![NNode {
        state: graph.start,
        context: start_ctx.clone(),
        entries: vec![Entry {
            weight: method.initial(),
            back: None,
        }],
    }];
    let mut index: HashMap<(VertexId, Vec<String>), usize> = HashMap::from([((graph.start, start_ctx), 0)]);
    let mut by_state = BTreeMap::from([(graph.start, vec![0])]);
    sweep_states(&mut by_state, |id, by_state| {
        for ei in graph.out_range(nodes[id].state) {
            let edge = &graph.edges[ei];
            let ctx = next_context(&nodes[id].context, edge, size);
            for rank in 0..nodes[id].entries.len() {
                let w = method.update(&nodes[id].entries[rank].weight, edge, &nodes[id].context);
                if !method.less(&w, &Weight::Top) {
                    continue;
                }
                let t = match index.get(&(edge.to, ctx.clone())) {
                    Some(&t) => t,
                    None => {
                        let t = nodes.len();
                        index.insert((edge.to, ctx.clone()), t);
                        by_state.entry(edge.to).or_default().push(t);
                        nodes.push(NNode {
                            state: edge.to,
                            context: ctx.clone(),
                            entries: Vec::new(),
                        });
                        t
                    }
                };
                let list = &mut nodes[t].entries;
                let pos = list
                    .iter()
                    .position(|e| method.less(&w, &e.weight))
                    .unwrap_or(list.len());
                if pos < n {
                    list.insert(
                        pos,
                        Entry {
                            weight: w,
                            back: Some((id, rank, ei)),
                        },
                    );
                    list.truncate(n);
                }
            }
        }
    });
    let Some(goal) = nodes.iter().position(|n| n.state == graph.final_vertex) else {
        return Vec::new();
    };
    (0..nodes[goal].entries.len())
        .map(|rank| {
            let mut edges = Vec::new();
            let (mut node, mut r) = (goal, rank);
            while let Some((prev, prev_rank, ei)) = nodes[node].entries[r].back {
                edges.push(graph.edges[ei].clone());
                node = prev;
                r = prev_rank;
            }
            edges.reverse();
            SearchResult::from_edges(edges, nodes[goal].entries[rank].weight)
        })
        .collect()
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Skip => "skip",
            EdgeKind::Category => "category",
            EdgeKind::Stopping => "stopping",
        })
    }
}
