//! Per-graph processing: normalize, parse, search, translate, score.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use lattice_slu::eval::{oracle_best_path, Annotation, EvalError, UtteranceScore};
use lattice_slu::lattice_parser::{parse_all_with, ParseError, ParserConfig};
use lattice_slu::ngram::NgramModel;
use lattice_slu::search::{
    method_nlp_speech, method_nlp_speech_ngram, method_speech, method_speech_ngram, n_best, shortest_path,
    AnnotatedGraph, SearchError, SearchResult, WeightMethod,
};
use lattice_slu::semantics::{sems_to_update, update_to_units, SemanticUnit, SlotTable, UpdateExpr};
use lattice_slu::wordgraph::normalize_with;
use lattice_slu::{Grammar, Term, WordGraph};

use crate::config::{Config, ConfigError, Method};

#[derive(Debug)]
pub enum PipelineError {
    Search(SearchError),
    Parse(ParseError),
    Eval(EvalError),
    MissingReference,
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Search(e) => write!(f, "search: {e}"),
            PipelineError::Parse(e) => write!(f, "parse: {e}"),
            PipelineError::Eval(e) => write!(f, "oracle: {e}"),
            PipelineError::MissingReference => f.write_str("method possible needs a reference"),
        }
    }
}

impl std::error::Error for PipelineError {}

/// What the pipeline produced for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphOutput {
    /// The method actually used, which differs from the configured one after
    /// a fallback.
    pub route: Method,
    pub tokens: Vec<String>,
    /// Edges of the chosen path as `kind(tokens)`.
    pub path: Vec<String>,
    pub weight: String,
    pub sems: Vec<Term>,
    pub update: UpdateExpr,
    pub units: Vec<SemanticUnit>,
    pub alternatives: Vec<(String, Vec<String>)>,
    pub notes: Vec<String>,
    pub elapsed: Duration,
}

pub struct Pipeline {
    pub config: Config,
    pub grammar: Grammar,
    pub slots: SlotTable,
    bigram: Option<NgramModel>,
    trigram: Option<NgramModel>,
}

fn read(path: &std::path::Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

impl Pipeline {
    /// Checks that the configured method has the model it needs.
    pub fn new(
        config: Config,
        grammar: Grammar,
        slots: SlotTable,
        bigram: Option<NgramModel>,
        trigram: Option<NgramModel>,
    ) -> Result<Self, ConfigError> {
        for (want, model) in [(2, &bigram), (3, &trigram)] {
            if let Some(m) = model {
                if m.order() != want {
                    return Err(ConfigError(format!(
                        "{} model has order {}",
                        if want == 2 { "bigram" } else { "trigram" },
                        m.order()
                    )));
                }
            }
        }
        match config.method.ngram_order() {
            Some(2) if bigram.is_none() => {
                return Err(ConfigError(format!("method {} needs bigram_model", config.method)))
            }
            Some(3) if trigram.is_none() => {
                return Err(ConfigError(format!("method {} needs trigram_model", config.method)))
            }
            _ => {}
        }
        Ok(Pipeline {
            config,
            grammar,
            slots,
            bigram,
            trigram,
        })
    }

    /// Loads grammar, slot table and models named by the configuration.
    pub fn load(config: Config) -> Result<Self, ConfigError> {
        let grammar = match &config.grammar {
            Some(p) => Grammar::load(&read(p)?).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
            None => lattice_slu::grammar::sample_grammar(),
        };
        let slots = match &config.slots {
            Some(p) => SlotTable::parse(&read(p)?).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
            None => SlotTable::default(),
        };
        let model = |p: &Option<std::path::PathBuf>| -> Result<Option<NgramModel>, ConfigError> {
            p.as_ref()
                .map(|p| NgramModel::load(p).map_err(|e| ConfigError(format!("{}: {e}", p.display()))))
                .transpose()
        };
        let bigram = model(&config.bigram_model)?;
        let trigram = model(&config.trigram_model)?;
        Pipeline::new(config, grammar, slots, bigram, trigram)
    }

    fn model(&self, order: usize) -> &NgramModel {
        let m = if order == 2 { &self.bigram } else { &self.trigram };
        m.as_ref().expect("checked in Pipeline::new")
    }

    fn weight_method(&self, m: Method) -> Box<dyn WeightMethod + '_> {
        let c = &self.config;
        match m {
            Method::Speech | Method::Possible => Box::new(method_speech()),
            Method::NlpSpeech => Box::new(method_nlp_speech()),
            Method::Bigram | Method::Trigram => {
                Box::new(method_speech_ngram(self.model(m.ngram_order().unwrap()), 0.0, c.ngram_bias))
            }
            Method::SpeechBigram | Method::SpeechTrigram | Method::Best1Bigram | Method::Best1Trigram => Box::new(
                method_speech_ngram(self.model(m.ngram_order().unwrap()), c.k_wg, c.ngram_bias),
            ),
            Method::NlpSpeechBigram | Method::NlpSpeechTrigram => Box::new(method_nlp_speech_ngram(
                self.model(m.ngram_order().unwrap()),
                c.k_nlp,
                c.k_wg,
            )),
        }
    }

    fn parser_config(&self) -> ParserConfig {
        ParserConfig {
            max_items: self.config.derivation_cap,
            ..ParserConfig::default()
        }
    }

    /// Best-first route used when the graph is too large to parse.
    fn fallback(m: Method) -> Method {
        match m {
            Method::NlpSpeechBigram => Method::Best1Bigram,
            Method::NlpSpeechTrigram => Method::Best1Trigram,
            _ => Method::Speech,
        }
    }

    fn search(
        &self,
        graph: &AnnotatedGraph,
        method: &dyn WeightMethod,
    ) -> Result<(SearchResult, Vec<(String, Vec<String>)>), SearchError> {
        let best = shortest_path(graph, method)?;
        let alternatives = if self.config.nbest > 1 {
            n_best(graph, method, self.config.nbest)
                .into_iter()
                .map(|r| (method.format(&r.weight), r.tokens))
                .collect()
        } else {
            Vec::new()
        };
        Ok((best, alternatives))
    }

    /// Robust parse of a single token sequence, as for a one-path graph.
    fn interpret_tokens(&self, tokens: &[String], notes: &mut Vec<String>) -> Vec<Term> {
        let linear = WordGraph::linear(tokens);
        let items = match parse_all_with(&self.grammar, &linear, self.parser_config()) {
            Ok((items, _)) => items,
            Err(e) => {
                notes.push(format!("chosen path not parsed: {e}"));
                return Vec::new();
            }
        };
        let graph = AnnotatedGraph::build(&linear, &items).expect("linear graph is well formed");
        match shortest_path(&graph, &method_nlp_speech()) {
            Ok(r) => r.sems,
            Err(e) => {
                notes.push(format!("chosen path not parsed: {e}"));
                Vec::new()
            }
        }
    }

    /// Runs the configured method on one graph. `reference` is needed by the
    /// `possible` method only.
    pub fn process(&self, wg: &WordGraph, reference: Option<&[String]>) -> Result<GraphOutput, PipelineError> {
        let started = Instant::now();
        let wg = normalize_with(wg, &self.config.pause_label);
        let mut notes = Vec::new();
        let mut route = self.config.method;
        if route.uses_parser() && wg.transitions.len() > self.config.fallback_threshold {
            notes.push(format!(
                "{} transitions exceed fallback_threshold {}",
                wg.transitions.len(),
                self.config.fallback_threshold
            ));
            route = Self::fallback(route);
        }

        let mut items = Vec::new();
        if route.uses_parser() {
            match parse_all_with(&self.grammar, &wg, self.parser_config()) {
                Ok((found, _)) => items = found,
                Err(e @ ParseError::TooManyItems { .. }) => {
                    notes.push(format!("{e}"));
                    route = Self::fallback(route);
                }
                Err(e) => return Err(PipelineError::Parse(e)),
            }
        }

        let (tokens, path, weight, sems, alternatives) = if route == Method::Possible {
            let reference = reference.ok_or(PipelineError::MissingReference)?;
            let oracle = oracle_best_path(&wg, reference).map_err(PipelineError::Eval)?;
            let sems = self.interpret_tokens(&oracle.tokens, &mut notes);
            let path = oracle.tokens.iter().map(|t| format!("word({t})")).collect();
            let weight = format!("⟨{};{}⟩", oracle.distance, oracle.acoustic);
            (oracle.tokens, path, weight, sems, Vec::new())
        } else {
            let graph = AnnotatedGraph::build(&wg, &items).map_err(PipelineError::Search)?;
            let method = self.weight_method(route);
            let (best, alternatives) = self.search(&graph, method.as_ref()).map_err(PipelineError::Search)?;
            let sems = if route.uses_parser() {
                best.sems.clone()
            } else {
                self.interpret_tokens(&best.tokens, &mut notes)
            };
            let path = best
                .edges
                .iter()
                .map(|e| format!("{}({})", e.kind, e.tokens.join(" ")))
                .collect();
            (best.tokens, path, method.format(&best.weight), sems, alternatives)
        };

        let translation = sems_to_update(&sems);
        notes.extend(translation.diagnostics);
        let units = update_to_units(&translation.update, &self.slots);
        Ok(GraphOutput {
            route,
            tokens,
            path,
            weight,
            sems,
            update: translation.update,
            units,
            alternatives,
            notes,
            elapsed: started.elapsed(),
        })
    }

    /// Processes graphs in parallel; results keep the input order.
    pub fn run_batch(
        &self,
        graphs: &[WordGraph],
        annotations: Option<&[Annotation]>,
    ) -> Vec<Result<GraphOutput, PipelineError>> {
        graphs
            .par_iter()
            .enumerate()
            .map(|(i, g)| self.process(g, annotations.map(|a| a[i].reference.as_slice())))
            .collect()
    }

    /// Scores outputs against annotations; a failed graph counts as an empty
    /// hypothesis.
    pub fn score(&self, outputs: &[Result<GraphOutput, PipelineError>], annotations: &[Annotation]) -> Vec<UtteranceScore> {
        outputs
            .iter()
            .zip(annotations)
            .map(|(out, ann)| {
                let ref_units = update_to_units(&ann.update, &self.slots);
                match out {
                    Ok(o) => UtteranceScore::new(&o.tokens, &ann.reference, &o.units, &ref_units),
                    Err(_) => UtteranceScore::new::<String, String>(&[], &ann.reference, &[], &ref_units),
                }
            })
            .collect()
    }
}

/// Text block for one graph. `index` is 1-based.
pub fn format_output(index: usize, method: Method, out: &Result<GraphOutput, PipelineError>) -> String {
    let mut s = String::new();
    match out {
        Err(e) => {
            let _ = writeln!(s, "GRAPH {index} method={method}");
            let _ = writeln!(s, "ERROR {e}");
        }
        Ok(o) => {
            let _ = writeln!(s, "GRAPH {index} method={method} route={}", o.route);
            let _ = writeln!(s, "TOKENS {}", o.tokens.join(" "));
            let _ = writeln!(s, "PATH {}", o.path.join(" "));
            let _ = writeln!(s, "WEIGHT {}", o.weight);
            for sem in &o.sems {
                let _ = writeln!(s, "SEM {sem}");
            }
            let _ = writeln!(s, "UPDATE {}", o.update);
            for u in &o.units {
                let _ = writeln!(s, "{u}");
            }
            for (k, (w, toks)) in o.alternatives.iter().enumerate() {
                let _ = writeln!(s, "NBEST {} {w} {}", k + 1, toks.join(" "));
            }
            for n in &o.notes {
                let _ = writeln!(s, "NOTE {n}");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use lattice_slu::grammar::sample_grammar;
    use lattice_slu::semantics::Function;

    fn pipeline(method: Method) -> Pipeline {
        let config = Config {
            method,
            ..Config::default()
        };
        Pipeline::new(config, sample_grammar(), SlotTable::default(), None, None).unwrap()
    }

    #[test]
    fn vanvan_nlp_speech() {
        let p = pipeline(Method::NlpSpeech);
        let wg = WordGraph::linear(&["ik", "wil", "van", "van", "assen", "naar", "amsterdam"]);
        let out = p.process(&wg, None).unwrap();
        assert_eq!(out.tokens.join(" "), "ik wil van van assen naar amsterdam");
        assert_eq!(out.path.iter().filter(|e| e.starts_with("category")).count(), 2);
        assert_eq!(
            out.units,
            vec![
                SemanticUnit::new(Function::Assert, "destination_town", "amsterdam"),
                SemanticUnit::new(Function::Assert, "origin_town", "assen"),
            ]
        );
    }

    #[test]
    fn missing_model_is_a_config_error() {
        let config = Config {
            method: Method::Best1Trigram,
            ..Config::default()
        };
        assert!(Pipeline::new(config, sample_grammar(), SlotTable::default(), None, None).is_err());
    }

    #[test]
    fn large_graphs_fall_back() {
        let mut p = pipeline(Method::NlpSpeech);
        p.config.fallback_threshold = 3;
        let wg = WordGraph::linear(&["nee", "naar", "assen", "graag"]);
        let out = p.process(&wg, None).unwrap();
        assert_eq!(out.route, Method::Speech);
        assert_eq!(out.update.to_string(), "destination.[!place.town.assen]");
        assert!(out.notes[0].contains("fallback_threshold"));
    }

    #[test]
    fn possible_needs_reference() {
        let p = pipeline(Method::Possible);
        let wg = WordGraph::linear(&["ja"]);
        assert!(matches!(p.process(&wg, None), Err(PipelineError::MissingReference)));
        let out = p.process(&wg, Some(&["ja".to_string()])).unwrap();
        assert_eq!(out.update, UpdateExpr::value("yes"));
    }
}
