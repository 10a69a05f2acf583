//! Accuracy metrics: word and sentence accuracy, concept accuracy over
//! semantic units, the best-possible path of a word-graph, and batch reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::semantics::{SemanticUnit, UpdateExpr, UpdateSyntaxError};
use crate::wordgraph::{StateId, WordGraph};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("word-graph has no complete path")]
    NoPath,
    #[error("annotation line {line}: {msg}")]
    Annotation { line: usize, msg: String },
    #[error("annotation line {line}: {source}")]
    Update {
        line: usize,
        #[source]
        source: UpdateSyntaxError,
    },
}

/// Edit distance with its decomposition. `insertions` counts reference
/// tokens missing from the hypothesis, `deletions` hypothesis tokens absent
/// from the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Unit-cost alignment of `hyp` against `reference`. Among minimal
/// alignments, substitutions are preferred over insertions and insertions
/// over deletions when tracing back.
pub fn levenshtein<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> EditCounts {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1].as_ref() != reference[j - 1].as_ref());
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut out = EditCounts {
        distance: d[n * w + m],
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let differ = hyp[i - 1].as_ref() != reference[j - 1].as_ref();
            if d[(i - 1) * w + j - 1] + usize::from(differ) == here {
                out.substitutions += usize::from(differ);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            out.insertions += 1;
            j -= 1;
        } else {
            out.deletions += 1;
            i -= 1;
        }
    }
    out
}

/// `1 - d/n`; negative when the hypothesis is much longer than the reference.
pub fn word_accuracy<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(1.0 - levenshtein(hyp, reference).distance as f64 / reference.len() as f64)
}

/// Fraction of pairs recognised exactly. Zero for an empty batch.
pub fn sentence_accuracy<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let exact = pairs.iter().filter(|(h, r)| levenshtein(h, r).distance == 0).count();
    exact as f64 / pairs.len() as f64
}

/// `100 (1 - (S+I+D)/SU)`, undefined when there are no reference units.
pub fn concept_accuracy(su: usize, s: usize, i: usize, d: usize) -> Option<f64> {
    (su > 0).then(|| 100.0 * (1.0 - (s + i + d) as f64 / su as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConceptCounts {
    pub correct: usize,
    pub hyp: usize,
    pub reference: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl ConceptCounts {
    fn add(&mut self, o: &ConceptCounts) {
        self.correct += o.correct;
        self.hyp += o.hyp;
        self.reference += o.reference;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.hyp, self.reference == 0)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.reference, self.hyp == 0)
    }

    pub fn concept_accuracy(&self) -> Option<f64> {
        concept_accuracy(self.reference, self.substitutions, self.insertions, self.deletions)
    }
}

fn ratio(num: usize, den: usize, other_empty: bool) -> f64 {
    match (den, other_empty) {
        (0, true) => 1.0,
        (0, false) => 0.0,
        _ => num as f64 / den as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptScores {
    pub matched: bool,
    pub precision: f64,
    pub recall: f64,
    pub ca: Option<f64>,
    pub counts: ConceptCounts,
}

type UnitKey<'a> = (crate::semantics::Function, &'a str);

/// Scores hypothesis units against reference units, both as multisets.
/// Leftover units with the same function and slot pair up as
/// substitutions; any remaining hypothesis units are insertions and
/// remaining reference units deletions.
pub fn concept_scores(hyp: &[SemanticUnit], reference: &[SemanticUnit]) -> ConceptScores {
    let mut bag: BTreeMap<&SemanticUnit, isize> = BTreeMap::new();
    for u in reference {
        *bag.entry(u).or_default() += 1;
    }
    for u in hyp {
        *bag.entry(u).or_default() -= 1;
    }
    // Positive counts are unmatched reference units, negative unmatched hyp.
    let mut groups: BTreeMap<UnitKey<'_>, (usize, usize)> = BTreeMap::new();
    for (u, &c) in &bag {
        let g = groups.entry((u.function, u.slot.as_str())).or_default();
        if c > 0 {
            g.1 += c as usize;
        } else {
            g.0 += (-c) as usize;
        }
    }
    let (mut s, mut i, mut d) = (0, 0, 0);
    for &(h, r) in groups.values() {
        let paired = h.min(r);
        s += paired;
        i += h - paired;
        d += r - paired;
    }
    let counts = ConceptCounts {
        correct: hyp.len() - (i + s),
        hyp: hyp.len(),
        reference: reference.len(),
        substitutions: s,
        insertions: i,
        deletions: d,
    };
    ConceptScores {
        matched: i + s + d == 0,
        precision: counts.precision(),
        recall: counts.recall(),
        ca: counts.concept_accuracy(),
        counts,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OraclePath {
    pub tokens: Vec<String>,
    pub distance: usize,
    /// Acoustic score of the chosen path including its final weight.
    pub acoustic: f64,
}

#[derive(Clone, Copy)]
enum Back {
    Start,
    Insert,
    Edge { from: StateId, j: usize, transition: usize },
}

#[derive(Clone, Copy)]
struct Cell {
    d: usize,
    acoustic: f64,
    back: Back,
}

fn better(new: (usize, f64), old: Option<&Cell>) -> bool {
    match old {
        None => true,
        Some(c) => new.0 < c.d || (new.0 == c.d && new.1 < c.acoustic),
    }
}

/// The complete path closest to `reference` in edit distance, found by
/// dynamic programming over (state, reference position). Ties go to the
/// lower acoustic score.
pub fn oracle_best_path<T: AsRef<str>>(wg: &WordGraph, reference: &[T]) -> Result<OraclePath, EvalError> {
    let m = reference.len();
    let mut table: BTreeMap<StateId, Vec<Option<Cell>>> = BTreeMap::new();
    for s in wg.states() {
        table.insert(s, vec![None; m + 1]);
    }
    table.get_mut(&wg.start).unwrap()[0] = Some(Cell {
        d: 0,
        acoustic: 0.0,
        back: Back::Start,
    });
    let mut outgoing: BTreeMap<StateId, Vec<usize>> = BTreeMap::new();
    for (k, t) in wg.transitions.iter().enumerate() {
        outgoing.entry(t.from).or_default().push(k);
    }
    let states: Vec<StateId> = table.keys().copied().collect();
    for &v in &states {
        let row = table.get_mut(&v).unwrap();
        for j in 0..m {
            if let Some(c) = row[j] {
                let cand = (c.d + 1, c.acoustic);
                if better(cand, row[j + 1].as_ref()) {
                    row[j + 1] = Some(Cell {
                        d: cand.0,
                        acoustic: cand.1,
                        back: Back::Insert,
                    });
                }
            }
        }
        let row = table[&v].clone();
        for &k in outgoing.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            let t = &wg.transitions[k];
            let target = table.get_mut(&t.to).unwrap();
            for (j, c) in row.iter().enumerate() {
                let Some(c) = c else { continue };
                let back = Back::Edge { from: v, j, transition: k };
                if j < m {
                    let cost = usize::from(t.label != reference[j].as_ref());
                    let cand = (c.d + cost, c.acoustic + t.acoustic);
                    if better(cand, target[j + 1].as_ref()) {
                        target[j + 1] = Some(Cell {
                            d: cand.0,
                            acoustic: cand.1,
                            back,
                        });
                    }
                }
                let cand = (c.d + 1, c.acoustic + t.acoustic);
                if better(cand, target[j].as_ref()) {
                    target[j] = Some(Cell {
                        d: cand.0,
                        acoustic: cand.1,
                        back,
                    });
                }
            }
        }
    }

    let mut best: Option<(usize, f64, StateId)> = None;
    for f in &wg.finals {
        if let Some(c) = table[&f.state][m] {
            let cand = (c.d, c.acoustic + f.acoustic);
            if best.map_or(true, |(d, a, _)| cand.0 < d || (cand.0 == d && cand.1 < a)) {
                best = Some((cand.0, cand.1, f.state));
            }
        }
    }
    let (distance, acoustic, mut v) = best.ok_or(EvalError::NoPath)?;
    let mut j = m;
    let mut tokens = Vec::new();
    loop {
        let c = table[&v][j].unwrap();
        match c.back {
            Back::Start => break,
            Back::Insert => j -= 1,
            Back::Edge { from, j: pj, transition } => {
                tokens.push(wg.transitions[transition].label.clone());
                v = from;
                j = pj;
            }
        }
    }
    tokens.reverse();
    Ok(OraclePath {
        tokens,
        distance,
        acoustic,
    })
}

// ---------------------------------------------------------------------------
// Annotations and reports

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub reference: Vec<String>,
    pub update: UpdateExpr,
}

/// Reads blank-line separated blocks of a `REF <tokens>` line and an
/// `UPDATE <expression>` line. Lines starting with `#` are comments.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, EvalError> {
    let mut out = Vec::new();
    let mut reference: Option<(usize, Vec<String>)> = None;
    let mut update: Option<(usize, UpdateExpr)> = None;
    let flush = |reference: &mut Option<(usize, Vec<String>)>,
                 update: &mut Option<(usize, UpdateExpr)>,
                 out: &mut Vec<Annotation>|
     -> Result<(), EvalError> {
        match (reference.take(), update.take()) {
            (None, None) => Ok(()),
            (Some((_, r)), Some((_, u))) => {
                out.push(Annotation { reference: r, update: u });
                Ok(())
            }
            (Some((line, _)), None) => Err(EvalError::Annotation {
                line,
                msg: "REF without UPDATE".into(),
            }),
            (None, Some((line, _))) => Err(EvalError::Annotation {
                line,
                msg: "UPDATE without REF".into(),
            }),
        }
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut reference, &mut update, &mut out)?;
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match key {
            "REF" if reference.is_none() => {
                reference = Some((line_no, rest.split_whitespace().map(String::from).collect()));
            }
            "UPDATE" if update.is_none() => {
                let u = rest
                    .parse()
                    .map_err(|source| EvalError::Update { line: line_no, source })?;
                update = Some((line_no, u));
            }
            "REF" | "UPDATE" => {
                return Err(EvalError::Annotation {
                    line: line_no,
                    msg: format!("second {key} line in one block"),
                })
            }
            other => {
                return Err(EvalError::Annotation {
                    line: line_no,
                    msg: format!("unknown keyword {other:?}"),
                })
            }
        }
    }
    flush(&mut reference, &mut update, &mut out)?;
    Ok(out)
}

/// Scores of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceScore {
    pub words: EditCounts,
    pub reference_len: usize,
    pub concepts: ConceptScores,
}

impl UtteranceScore {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(
        hyp_tokens: &[S],
        ref_tokens: &[T],
        hyp_units: &[SemanticUnit],
        ref_units: &[SemanticUnit],
    ) -> Self {
        UtteranceScore {
            words: levenshtein(hyp_tokens, ref_tokens),
            reference_len: ref_tokens.len(),
            concepts: concept_scores(hyp_units, ref_units),
        }
    }

    pub fn word_accuracy(&self) -> Option<f64> {
        (self.reference_len > 0).then(|| 1.0 - self.words.distance as f64 / self.reference_len as f64)
    }
}

/// Batch summary for one method. All rates are percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub method: String,
    pub utterances: usize,
    /// Mean per-utterance word accuracy over utterances with a reference.
    pub wa: Option<f64>,
    pub sa: Option<f64>,
    pub matched: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ca: Option<f64>,
    pub concepts: ConceptCounts,
}

/// Word and sentence accuracy are per-utterance means; precision, recall
/// and concept accuracy pool the unit counts over the batch.
pub fn aggregate_report(method: &str, rows: &[UtteranceScore]) -> Report {
    let n = rows.len();
    let was: Vec<f64> = rows.iter().filter_map(UtteranceScore::word_accuracy).collect();
    let mut pooled = ConceptCounts::default();
    for r in rows {
        pooled.add(&r.concepts.counts);
    }
    let pct = |k: usize| (n > 0).then(|| 100.0 * k as f64 / n as f64);
    Report {
        method: method.to_string(),
        utterances: n,
        wa: (!was.is_empty()).then(|| 100.0 * was.iter().sum::<f64>() / was.len() as f64),
        sa: pct(rows.iter().filter(|r| r.words.distance == 0).count()),
        matched: pct(rows.iter().filter(|r| r.concepts.matched).count()),
        precision: (n > 0).then(|| 100.0 * pooled.precision()),
        recall: (n > 0).then(|| 100.0 * pooled.recall()),
        ca: pooled.concept_accuracy(),
        concepts: pooled,
    }
}

pub const REPORT_COLUMNS: [&str; 6] = ["WA", "SA", "match", "precision", "recall", "CA"];

fn cells(r: &Report) -> [Option<f64>; 6] {
    [r.wa, r.sa, r.matched, r.precision, r.recall, r.ca]
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Aligned plain-text table, one line per report.
pub fn format_reports(reports: &[Report]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .chain(["method".len()])
        .max()
        .unwrap();
    let mut s = format!("{:<width$} {:>6}", "method", "n");
    for c in REPORT_COLUMNS {
        let _ = write!(s, " {c:>9}");
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{:<width$} {:>6}", r.method, r.utterances);
        for v in cells(r) {
            let _ = write!(s, " {:>9}", fmt_cell(v));
        }
        s.push('\n');
    }
    s
}

/// Tab-separated version of [`format_reports`] with a header line.
pub fn reports_tsv(reports: &[Report]) -> String {
    let mut s = String::from("method\tn");
    for c in REPORT_COLUMNS {
        s.push('\t');
        s.push_str(c);
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{}\t{}", r.method, r.utterances);
        for v in cells(r) {
            s.push('\t');
            s.push_str(&fmt_cell(v));
        }
        s.push('\n');
    }
    s
}

/// Reads tables written by [`reports_tsv`]. Pooled unit counts are not
/// stored in the table and come back as zero.
pub fn parse_reports_tsv(text: &str) -> Result<Vec<Report>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split('\t').skip(2).eq(REPORT_COLUMNS) => {}
        _ => return Err("missing report header".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 + REPORT_COLUMNS.len() || f[0] == "method" {
            return Err(format!("line {}: expected {} fields", i + 1, 2 + REPORT_COLUMNS.len()));
        }
        let mut v = [None; 6];
        for (k, cell) in f[2..].iter().enumerate() {
            v[k] = match *cell {
                "-" => None,
                x => Some(x.parse().map_err(|_| format!("line {}: bad number {x:?}", i + 1))?),
            };
        }
        out.push(Report {
            method: f[0].to_string(),
            utterances: f[1].parse().map_err(|_| format!("line {}: bad count {:?}", i + 1, f[1]))?,
            wa: v[0],
            sa: v[1],
            matched: v[2],
            precision: v[3],
            recall: v[4],
            ca: v[5],
            concepts: ConceptCounts::default(),
        });
    }
    Ok(out)
}
