use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use lattice_slu::grammar::sample_grammar;
use lattice_slu::lattice_parser::{parse_all_with, parse_span_stats, ParserConfig};
use lattice_slu::wordgraph::{Final, Transition, WordGraph};

const SENTENCES: [&str; 6] = [
    "ik wil van assen naar amsterdam",
    "ik wil van van assen naar amsterdam",
    "nee niet naar leiden maar naar abcoude",
    "vanuit den haag naar utrecht om drie uur",
    "ik wil graag naar groningen",
    "ja graag de eerste trein",
];

fn lattice(rng: &mut StdRng, sentence: &str) -> WordGraph {
    let words: Vec<&str> = sentence.split(' ').collect();
    let n = words.len() as u32;
    let mut transitions = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let i = i as u32;
        transitions.push(Transition {
            from: i,
            to: i + 1,
            label: w.to_string(),
            acoustic: rng.gen_range(1.0..5.0),
        });
        for _ in 0..2 {
            transitions.push(Transition {
                from: i,
                to: (i + rng.gen_range(1..3)).min(n),
                label: words.choose(rng).unwrap().to_string(),
                acoustic: rng.gen_range(1.0..9.0),
            });
        }
    }
    WordGraph::new(transitions, vec![Final { state: n, acoustic: 0.0 }]).unwrap()
}

#[test]
fn one_chart_is_cheaper_than_parsing_every_span() {
    let grammar = sample_grammar();
    let cfg = ParserConfig::default();
    let mut rng = StdRng::seed_from_u64(7);
    for sentence in SENTENCES {
        let wg = lattice(&mut rng, sentence);
        let (_, whole) = parse_all_with(&grammar, &wg, cfg).unwrap();
        let states = wg.states();
        let mut separate = 0;
        for &a in &states {
            for &b in states.iter().filter(|&&b| b > a) {
                separate += parse_span_stats(&grammar, &wg, a, b, cfg).unwrap().total();
            }
        }
        assert!(
            2 * whole.total() < separate,
            "{sentence}: {} items in one chart, {separate} over all spans",
            whole.total()
        );
    }
}

#[test]
fn span_stats_of_the_whole_graph_match_the_full_chart() {
    let grammar = sample_grammar();
    let cfg = ParserConfig::default();
    let mut rng = StdRng::seed_from_u64(8);
    for sentence in SENTENCES {
        let wg = lattice(&mut rng, sentence);
        let (_, whole) = parse_all_with(&grammar, &wg, cfg).unwrap();
        let last = *wg.states().last().unwrap();
        assert_eq!(parse_span_stats(&grammar, &wg, 0, last, cfg).unwrap(), whole);
    }
}
