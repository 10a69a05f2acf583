//! Add-k smoothed N-gram language models.
//!
//! `P(w | h) = (c(h w) + k) / (c(h) + k (|V| + 1))`, where `V` is the
//! training vocabulary and the extra outcome is the end-of-sentence marker.
//! Every sentence is padded with `N - 1` beginning-of-sentence markers
//! `<s{N-1}> ... <s1>` and one `</s>`. Tokens outside the vocabulary score as
//! an unseen vocabulary word would. Scores are natural-log negative
//! log-probabilities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
const FORMAT: &str = "ngram-model";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("order must be at least 2, got {0}")]
    Order(usize),
    #[error("smoothing constant must be positive, got {0}")]
    Smoothing(f64),
    #[error("history has {got} tokens, model needs {want}")]
    HistoryLength { got: usize, want: usize },
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported model version {0}")]
    Version(String),
    #[error("model has an empty vocabulary")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Beginning-of-sentence marker `i` positions before the first word.
pub fn bos(i: usize) -> String {
    format!("<s{i}>")
}

/// The `N - 1` markers preceding a sentence, oldest first.
pub fn bos_context(order: usize) -> Vec<String> {
    (1..order).rev().map(bos).collect()
}

fn is_reserved(w: &str) -> bool {
    w == EOS || w == UNK || (w.starts_with("<s") && w.ends_with('>'))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    order: usize,
    k: f64,
    vocab: BTreeSet<String>,
    /// Event counts keyed by history, then by predicted token.
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    history_totals: BTreeMap<Vec<String>, u64>,
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, k: f64) -> Result<Self, NgramError> {
        if order < 2 {
            return Err(NgramError::Order(order));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(NgramError::Smoothing(k));
        }
        if corpus.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        let mut events: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
        for sentence in corpus {
            let mut padded = bos_context(order);
            padded.extend(sentence.iter().map(|w| w.as_ref().to_string()));
            padded.push(EOS.to_string());
            for window in padded.windows(order) {
                let (hist, w) = window.split_at(order - 1);
                *events
                    .entry(hist.to_vec())
                    .or_default()
                    .entry(w[0].clone())
                    .or_default() += 1;
            }
        }
        Self::from_counts(order, k, events)
    }

    fn from_counts(
        order: usize,
        k: f64,
        counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    ) -> Result<Self, NgramError> {
        let vocab: BTreeSet<String> = counts
            .values()
            .flat_map(|m| m.keys())
            .filter(|w| w.as_str() != EOS)
            .cloned()
            .collect();
        if vocab.is_empty() {
            return Err(NgramError::EmptyVocabulary);
        }
        let history_totals = counts
            .iter()
            .map(|(h, m)| (h.clone(), m.values().sum()))
            .collect();
        Ok(NgramModel {
            order,
            k,
            vocab,
            counts,
            history_totals,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// Beginning-of-sentence context for this model.
    pub fn start_context(&self) -> Vec<String> {
        bos_context(self.order)
    }

    fn map_token<'a>(&self, w: &'a str) -> &'a str {
        if w == EOS || self.vocab.contains(w) || (is_reserved(w) && w != UNK) {
            w
        } else {
            UNK
        }
    }

    pub fn probability<S: AsRef<str>>(&self, history: &[S], w: &str) -> Result<f64, NgramError> {
        if history.len() != self.order - 1 {
            return Err(NgramError::HistoryLength {
                got: history.len(),
                want: self.order - 1,
            });
        }
        let hist: Vec<String> = history.iter().map(|h| self.map_token(h.as_ref()).to_string()).collect();
        let w = self.map_token(w);
        let c_hw = self
            .counts
            .get(&hist)
            .and_then(|m| m.get(w))
            .copied()
            .unwrap_or(0);
        let c_h = self.history_totals.get(&hist).copied().unwrap_or(0);
        let outcomes = (self.vocab.len() + 1) as f64;
        Ok((c_hw as f64 + self.k) / (c_h as f64 + self.k * outcomes))
    }

    /// `-ln P(w | history)`.
    pub fn score<S: AsRef<str>>(&self, history: &[S], w: &str) -> Result<f64, NgramError> {
        Ok(-self.probability(history, w)?.ln())
    }

    /// Summed score of `tokens` following `context`, sliding the history one
    /// token at a time.
    pub fn score_seq<S: AsRef<str>, T: AsRef<str>>(&self, context: &[S], tokens: &[T]) -> Result<f64, NgramError> {
        if context.len() != self.order - 1 {
            return Err(NgramError::HistoryLength {
                got: context.len(),
                want: self.order - 1,
            });
        }
        let mut hist: Vec<&str> = context.iter().map(AsRef::as_ref).collect();
        let mut total = 0.0;
        for t in tokens {
            total += self.score(&hist, t.as_ref())?;
            hist.remove(0);
            hist.push(t.as_ref());
        }
        Ok(total)
    }

    /// The last `order - 1` tokens of `context` followed by `tokens`.
    pub fn slide<S: AsRef<str>>(&self, context: &[String], tokens: &[S]) -> Vec<String> {
        let mut all: Vec<String> = context.to_vec();
        all.extend(tokens.iter().map(|t| t.as_ref().to_string()));
        all.split_off(all.len().saturating_sub(self.order - 1))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT} {VERSION}\norder {}\nk {}\n", self.order, self.k);
        for (hist, m) in &self.counts {
            for (w, c) in m {
                writeln!(s, "SCORE {} {} {}", hist.join(" "), w, c).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NgramError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| NgramError::Format {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (n, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
        match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            [FORMAT, v] if *v == VERSION.to_string() => {}
            [FORMAT, v] => return Err(NgramError::Version(v.to_string())),
            _ => return Err(bad(n, "missing header")),
        }
        let mut field = |name: &str| -> Result<String, NgramError> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
            match l.split_whitespace().collect::<Vec<_>>().as_slice() {
                [key, value] if *key == name => Ok(value.to_string()),
                _ => Err(bad(n, &format!("expected {name}"))),
            }
        };
        let order: usize = field("order")?.parse().map_err(|_| bad(1, "bad order"))?;
        let k: f64 = field("k")?.parse().map_err(|_| bad(2, "bad k"))?;
        if order < 2 {
            return Err(NgramError::Order(order));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(NgramError::Smoothing(k));
        }
        let mut counts: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
        for (n, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != order + 2 || f[0] != "SCORE" {
                return Err(bad(n, "expected SCORE line"));
            }
            let c: u64 = f[order + 1].parse().map_err(|_| bad(n, "bad count"))?;
            let hist = f[1..order].iter().map(|s| s.to_string()).collect();
            *counts.entry(hist).or_default().entry(f[order].to_string()).or_default() += c;
        }
        Self::from_counts(order, k, counts)
    }

    pub fn save(&self, path: &Path) -> Result<(), NgramError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NgramError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Reads a corpus: one utterance per line, whitespace-separated.
pub fn read_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> NgramModel {
        NgramModel::train(&[vec!["a", "b"]], 2, 1.0).unwrap()
    }

    #[test]
    fn add_one_bigram_values() {
        let m = toy();
        let y1 = [bos(1)];
        // V = {a, b}; three outcomes with </s>.
        assert_eq!(m.probability(&y1, "a").unwrap(), 0.5);
        assert_eq!(m.score(&y1, "a").unwrap(), -(0.5f64).ln());
        assert_eq!(m.probability(&["a"], "b").unwrap(), 0.5);
        assert_eq!(m.probability(&["b"], "a").unwrap(), 0.25);
        assert_eq!(m.score(&["a"], "b").unwrap(), -(0.5f64).ln());
    }

    #[test]
    fn unknown_token_scores_as_unseen() {
        let m = toy();
        let s = m.score(&[bos(1)], "zebra").unwrap();
        assert_eq!(s, -(1.0f64 / (1.0 + 1.0 * 3.0)).ln());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(NgramModel::train(&[vec!["a"]], 1, 1.0), Err(NgramError::Order(1))));
        assert!(matches!(NgramModel::train::<&str>(&[], 2, 1.0), Err(NgramError::EmptyCorpus)));
        assert!(matches!(NgramModel::train(&[vec!["a"]], 2, 0.0), Err(NgramError::Smoothing(_))));
        assert!(matches!(toy().score(&["a", "b"], "a"), Err(NgramError::HistoryLength { got: 2, want: 1 })));
    }

    #[test]
    fn single_token_sequence_is_score() {
        let m = toy();
        assert_eq!(m.score_seq(&["a"], &["b"]).unwrap(), m.score(&["a"], "b").unwrap());
        assert_eq!(m.score_seq::<&str, &str>(&["a"], &[]).unwrap(), 0.0);
    }

    #[test]
    fn trigram_extension() {
        let corpus = read_corpus("a b c\nb c a\na a b c");
        let m = NgramModel::train(&corpus, 3, 0.5).unwrap();
        let (w0, w1, w2, x) = ("a", "b", "c", "a");
        let lhs = m.score_seq(&[w0, w1], &[w2, x]).unwrap();
        let rhs = m.score(&[w0, w1], w2).unwrap() + m.score(&[w1, w2], x).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(m.start_context(), vec!["<s2>".to_string(), "<s1>".to_string()]);
    }

    #[test]
    fn text_round_trip() {
        let corpus = read_corpus("ik wil naar assen\nnaar amsterdam\nik wil van assen naar amsterdam");
        let m = NgramModel::train(&corpus, 3, 1.0).unwrap();
        let back = NgramModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            NgramModel::from_text("ngram-model 1\norder 2\nk 1\n"),
            Err(NgramError::EmptyVocabulary)
        ));
        assert!(matches!(
            NgramModel::from_text("ngram-model 7\norder 2\nk 1\nSCORE <s1> a 1\n"),
            Err(NgramError::Version(_))
        ));
        assert!(matches!(
            NgramModel::from_text("ngram-model 1\norder 2\nk 1\nSCORE a\n"),
            Err(NgramError::Format { line: 4, .. })
        ));
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        let word = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from);
        prop::collection::vec(prop::collection::vec(word, 1..6), 1..6)
    }

    proptest! {
        #[test]
        fn distributions_are_proper(corpus in corpus_strategy(), order in 2usize..4, k in 0.1f64..2.0) {
            let m = NgramModel::train(&corpus, order, k).unwrap();
            let mut histories: Vec<Vec<String>> = m.counts.keys().cloned().collect();
            histories.push(vec!["zzz".to_string(); order - 1]);
            for h in histories {
                let mut total = 0.0;
                for w in m.vocab.iter().map(String::as_str).chain([EOS]) {
                    let s = m.score(&h, w).unwrap();
                    prop_assert!(s >= 0.0);
                    total += (-s).exp();
                }
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn score_seq_splits_exactly(
            corpus in corpus_strategy(),
            xs in prop::collection::vec(prop::sample::select(vec!["a", "b", "e"]), 0..5),
            ys in prop::collection::vec(prop::sample::select(vec!["a", "c", "f"]), 0..5),
        ) {
            let m = NgramModel::train(&corpus, 3, 1.0).unwrap();
            let ctx = m.start_context();
            let mut whole: Vec<&str> = xs.clone();
            whole.extend(&ys);
            let lhs = m.score_seq(&ctx, &whole).unwrap();
            let mid = m.slide(&ctx, &xs);
            let rhs = m.score_seq(&ctx, &xs).unwrap() + m.score_seq(&mid, &ys).unwrap();
            // The left side accumulates term by term, so compare against the
            // same association order.
            let mut acc = m.score_seq(&ctx, &xs).unwrap();
            let mut hist = mid.clone();
            for y in &ys {
                acc += m.score(&hist, y).unwrap();
                hist = m.slide(&hist, &[y]);
            }
            prop_assert_eq!(lhs, acc);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn training_is_deterministic(corpus in corpus_strategy()) {
            let a = NgramModel::train(&corpus, 2, 1.0).unwrap().to_text();
            let b = NgramModel::train(&corpus, 2, 1.0).unwrap().to_text();
            prop_assert_eq!(a, b);
        }
    }
}
