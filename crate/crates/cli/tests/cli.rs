use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lattice_slu::grammar::sample_grammar;
use lattice_slu::ngram::{read_corpus, NgramModel};
use lattice_slu::semantics::SlotTable;
use lattice_slu::WordGraph;
use lattice_slu_cli::{Config, Method, Pipeline};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lattice-slu"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const VANVAN: &str = "TRANS 0 1 ik 1\nTRANS 1 2 wil 1\nTRANS 2 3 van 1\nTRANS 3 4 van 1\nTRANS 4 5 assen 1\nTRANS 5 6 naar 1\nTRANS 6 7 amsterdam 1\nFINAL 7 0\n";

#[test]
fn vanvan_units_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.wg", VANVAN);
    let o = run(&["run", &g, "--method", "nlp_speech"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("TOKENS ik wil van van assen naar amsterdam"));
    let units: Vec<&str> = text.lines().filter(|l| l.starts_with("UNIT")).collect();
    assert_eq!(
        units,
        ["UNIT assert destination_town amsterdam", "UNIT assert origin_town assen"]
    );
    assert_eq!(text.matches("category(").count(), 2);
}

#[test]
fn possible_reaches_full_word_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.wg",
        "TRANS 0 1 ik 5\nTRANS 0 1 hik 1\nTRANS 1 2 wil 1\nTRANS 2 3 naar 1\nTRANS 2 3 na 1\nTRANS 3 4 leiden 1\nFINAL 4 0\n",
    );
    let a = write(
        dir.path(),
        "g.ann",
        "REF ik wil naar leiden\nUPDATE destination.[= place.town.leiden]\n",
    );
    let tsv = dir.path().join("r.tsv");
    let o = run(&[
        "run",
        &g,
        "--method",
        "possible",
        "--annotations",
        &a,
        "--report-tsv",
        tsv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("TOKENS ik wil naar leiden"));
    let report = std::fs::read_to_string(tsv).unwrap();
    assert_eq!(
        report.lines().nth(1).unwrap(),
        "possible\t1\t100.00\t100.00\t100.00\t100.00\t100.00\t100.00"
    );

    // Without annotations the method cannot run.
    assert_eq!(run(&["run", &g, "--method", "possible"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m2.txt");
    let corpus = data("corpus.txt");
    assert!(run(&["train-ngram", corpus.to_str().unwrap(), "--order", "2", "--out", m.to_str().unwrap()])
        .status
        .success());
    let graphs = data("graphs.wg");
    let mut batch = String::new();
    let one = std::fs::read_to_string(&graphs).unwrap();
    for _ in 0..10 {
        batch.push_str(&one);
        batch.push('\n');
    }
    let g = write(dir.path(), "many.wg", &batch);
    let cfg = data("run.cfg");
    let args = [
        "run",
        g.as_str(),
        "--config",
        cfg.to_str().unwrap(),
        "--bigram-model",
        m.to_str().unwrap(),
    ];
    let first = run(&args);
    assert!(first.status.success());
    for _ in 0..3 {
        assert_eq!(run(&args).stdout, first.stdout);
    }
    assert_eq!(stdout(&first).matches("GRAPH ").count(), 40);
}

#[test]
fn best_first_matches_grammar_search_on_single_path() {
    let corpus = read_corpus(&std::fs::read_to_string(data("corpus.txt")).unwrap());
    let model = NgramModel::train(&corpus, 3, 1.0).unwrap();
    for sentence in ["ik wil van assen naar amsterdam", "nee naar assen", "ja", "vanuit den haag naar leiden"] {
        let words: Vec<&str> = sentence.split(' ').collect();
        let wg = WordGraph::linear(&words);
        let tokens = |method| {
            let config = Config {
                method,
                ..Config::default()
            };
            Pipeline::new(config, sample_grammar(), SlotTable::default(), None, Some(model.clone()))
                .unwrap()
                .process(&wg, None)
                .unwrap()
        };
        let a = tokens(Method::Best1Trigram);
        let b = tokens(Method::NlpSpeechTrigram);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.units, b.units, "{sentence}");
    }
}

#[test]
fn train_ngram_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "a b\nb a b\n");
    let out = dir.path().join("m.txt");
    let o = run(&["train-ngram", &corpus, "--order", "2", "--k", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = NgramModel::load(&out).unwrap();
    let trained = NgramModel::train(&read_corpus("a b\nb a b\n"), 2, 0.5).unwrap();
    for h in ["<s1>", "a", "b"] {
        for w in ["a", "b", "</s>", "zzz"] {
            assert_eq!(loaded.score(&[h], w).unwrap(), trained.score(&[h], w).unwrap());
        }
    }

    let o = run(&["train-ngram", &corpus, "--order", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("nope.txt");
    let o = run(&["train-ngram", missing.to_str().unwrap(), "--order", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));
}

#[test]
fn failed_graph_does_not_stop_batch() {
    let dir = tempfile::tempdir().unwrap();
    // The second graph has no final state, so no complete path.
    let g = write(dir.path(), "g.wg", "TRANS 0 1 ja 1\nFINAL 1 0\n\nTRANS 0 1 nee 1\n\nTRANS 0 1 nee 1\nFINAL 1 0\n");
    let o = run(&["run", &g, "--method", "speech"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("GRAPH 2 method=speech\nERROR"));
    assert!(text.contains("GRAPH 3 method=speech route=speech\nTOKENS nee"));
}

#[test]
fn normalize_parse_eval_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.wg", "TRANS 0 1 naar 1\nTRANS 1 2 # 0.5\nTRANS 2 3 assen 1\nFINAL 3 0\n");
    let o = run(&["normalize", &g]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "TRANS 0 1 naar 1\nTRANS 1 3 assen 1.5\nFINAL 3 0\n");

    let o = run(&["parse", &g]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("ITEM 0 3 2.5 naar assen :: naar(assen)"));

    let hyp = write(dir.path(), "h.ann", "REF naar assen\nUPDATE destination.[= place.town.assen]\n");
    let reference = write(dir.path(), "r.ann", "REF nee naar assen\nUPDATE destination.[! place.town.assen]\n");
    let o = run(&["eval", "--hyp", &hyp, "--ref", &reference, "--tsv", "--name", "x"]);
    assert!(o.status.success());
    let tsv = stdout(&o);
    assert_eq!(tsv.lines().nth(1).unwrap(), "x\t1\t66.67\t0.00\t0.00\t0.00\t0.00\t-100.00");

    let t = write(dir.path(), "x.tsv", &tsv);
    let o = run(&["report", &t]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("method"));
    let bad = write(dir.path(), "bad.tsv", "nonsense\n");
    assert_eq!(run(&["report", &bad]).status.code(), Some(2));
}
