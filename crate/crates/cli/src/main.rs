use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lattice_slu::eval::{
    aggregate_report, format_reports, parse_annotations, parse_reports_tsv, reports_tsv, Annotation, UtteranceScore,
};
use lattice_slu::lattice_parser::{parse_all_with, ParserConfig};
use lattice_slu::ngram::{read_corpus, NgramModel};
use lattice_slu::semantics::{update_to_units, SlotTable};
use lattice_slu::wordgraph::{normalize_with, parse_batch, WordGraph, PAUSE};
use lattice_slu::Grammar;
use lattice_slu_cli::{format_output, Config, ConfigError, Method, Pipeline};

#[derive(Parser)]
#[command(name = "lattice-slu", version, about = "Robust understanding of speech-recognizer word-graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove pause transitions and print the graphs again.
    Normalize {
        graphs: PathBuf,
        #[arg(long, default_value = PAUSE)]
        pause_label: String,
    },
    /// Print every top-category analysis found in each graph.
    Parse {
        graphs: PathBuf,
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long, default_value_t = lattice_slu::lattice_parser::DEFAULT_MAX_ITEMS)]
        derivation_cap: usize,
        #[arg(long, default_value = PAUSE)]
        pause_label: String,
    },
    /// Choose a path through each graph and translate it into an update.
    Run {
        graphs: PathBuf,
        /// File of key=value settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        /// Extra key=value setting; overrides the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        bigram_model: Option<PathBuf>,
        #[arg(long)]
        trigram_model: Option<PathBuf>,
        /// REF/UPDATE blocks, one per graph, for scoring.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Write the aligned report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        report_tsv: Option<PathBuf>,
        /// Per-graph wall times in milliseconds.
        #[arg(long)]
        timings: Option<PathBuf>,
        /// Budget for the within-budget line of the timings file.
        #[arg(long, default_value_t = 1000.0)]
        budget_ms: f64,
        /// Print the effective configuration first.
        #[arg(long)]
        show_config: bool,
    },
    /// Train an n-gram model from a corpus with one utterance per line.
    TrainNgram {
        corpus: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score hypotheses against references. Both files hold REF/UPDATE blocks.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value = "hyp")]
        name: String,
        #[arg(long)]
        slots: Option<PathBuf>,
        #[arg(long)]
        tsv: bool,
    },
    /// Combine tab-separated reports into one table.
    Report {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        #[arg(long)]
        tsv: bool,
    },
}

enum Failure {
    Config(String),
    Graphs,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn read_graphs(path: &Path) -> Result<Vec<WordGraph>, Failure> {
    parse_batch(&read(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn read_annotations(path: &Path) -> Result<Vec<Annotation>, Failure> {
    parse_annotations(&read(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_slots(path: Option<&Path>) -> Result<SlotTable, Failure> {
    match path {
        Some(p) => SlotTable::parse(&read(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => Ok(SlotTable::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Graphs) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Normalize { graphs, pause_label } => {
            let mut out = String::new();
            for (i, g) in read_graphs(&graphs)?.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = write!(out, "{}", normalize_with(g, &pause_label));
            }
            print!("{out}");
            Ok(())
        }

        Command::Parse {
            graphs,
            grammar,
            derivation_cap,
            pause_label,
        } => {
            let grammar = match grammar {
                Some(p) => Grammar::load(&read(&p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
                None => lattice_slu::grammar::sample_grammar(),
            };
            let cfg = ParserConfig {
                max_items: derivation_cap,
                ..ParserConfig::default()
            };
            let mut failed = false;
            for (i, g) in read_graphs(&graphs)?.iter().enumerate() {
                println!("GRAPH {}", i + 1);
                match parse_all_with(&grammar, &normalize_with(g, &pause_label), cfg) {
                    Ok((items, stats)) => {
                        for it in items {
                            println!("{it}");
                        }
                        println!("STATS passive={} active={}", stats.passive, stats.active);
                    }
                    Err(e) => {
                        failed = true;
                        println!("ERROR {e}");
                    }
                }
            }
            if failed {
                Err(Failure::Graphs)
            } else {
                Ok(())
            }
        }

        Command::Run {
            graphs,
            config,
            method,
            overrides,
            bigram_model,
            trigram_model,
            annotations,
            report,
            report_tsv,
            timings,
            budget_ms,
            show_config,
        } => {
            let mut cfg = Config::default();
            if let Some(p) = &config {
                cfg.apply_text(&read(p)?)
                    .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            }
            if let Some(m) = method {
                cfg.set("method", &m)?;
            }
            if let Some(p) = bigram_model {
                cfg.bigram_model = Some(p);
            }
            if let Some(p) = trigram_model {
                cfg.trigram_model = Some(p);
            }
            for kv in &overrides {
                cfg.apply_override(kv)?;
            }
            let graphs = read_graphs(&graphs)?;
            let annotations = annotations.as_deref().map(read_annotations).transpose()?;
            if let Some(a) = &annotations {
                if a.len() != graphs.len() {
                    return Err(Failure::Config(format!(
                        "{} annotations for {} graphs",
                        a.len(),
                        graphs.len()
                    )));
                }
            } else if cfg.method == Method::Possible {
                return Err(Failure::Config("method possible needs --annotations".into()));
            }
            let pipeline = Pipeline::load(cfg)?;

            let outputs = pipeline.run_batch(&graphs, annotations.as_deref());
            let mut out = String::new();
            if show_config {
                for line in pipeline.config.to_text().lines() {
                    let _ = writeln!(out, "CONFIG {line}");
                }
                out.push('\n');
            }
            for (i, o) in outputs.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                out.push_str(&format_output(i + 1, pipeline.config.method, o));
            }
            if let Some(a) = &annotations {
                let rows = pipeline.score(&outputs, a);
                let r = [aggregate_report(pipeline.config.method.name(), &rows)];
                match &report {
                    Some(p) => write(p, &format_reports(&r))?,
                    None => {
                        out.push('\n');
                        out.push_str(&format_reports(&r));
                    }
                }
                if let Some(p) = &report_tsv {
                    write(p, &reports_tsv(&r))?;
                }
            }
            print!("{out}");

            if let Some(p) = &timings {
                let mut t = String::new();
                let mut within = 0;
                for (i, o) in outputs.iter().enumerate() {
                    if let Ok(o) = o {
                        let ms = o.elapsed.as_secs_f64() * 1e3;
                        within += usize::from(ms <= budget_ms);
                        let _ = writeln!(t, "GRAPH {} {ms:.3}", i + 1);
                    }
                }
                let _ = writeln!(
                    t,
                    "WITHIN {budget_ms} {:.2}",
                    100.0 * within as f64 / outputs.len().max(1) as f64
                );
                write(p, &t)?;
            }

            let failures = outputs.iter().filter(|o| o.is_err()).count();
            if failures > 0 {
                eprintln!("{failures} of {} graphs failed", outputs.len());
                return Err(Failure::Graphs);
            }
            Ok(())
        }

        Command::TrainNgram { corpus, order, k, out } => {
            let text = read(&corpus)?;
            let model = NgramModel::train(&read_corpus(&text), order, k).map_err(|e| Failure::Config(e.to_string()))?;
            model.save(&out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
            println!(
                "trained order {} model, {} word types, k={}",
                model.order(),
                model.vocabulary().len(),
                model.smoothing()
            );
            Ok(())
        }

        Command::Eval {
            hyp,
            reference,
            name,
            slots,
            tsv,
        } => {
            let slots = load_slots(slots.as_deref())?;
            let hyp = read_annotations(&hyp)?;
            let reference = read_annotations(&reference)?;
            if hyp.len() != reference.len() {
                return Err(Failure::Config(format!(
                    "{} hypotheses for {} references",
                    hyp.len(),
                    reference.len()
                )));
            }
            let rows: Vec<UtteranceScore> = hyp
                .iter()
                .zip(&reference)
                .map(|(h, r)| {
                    UtteranceScore::new(
                        &h.reference,
                        &r.reference,
                        &update_to_units(&h.update, &slots),
                        &update_to_units(&r.update, &slots),
                    )
                })
                .collect();
            let r = [aggregate_report(&name, &rows)];
            print!("{}", if tsv { reports_tsv(&r) } else { format_reports(&r) });
            Ok(())
        }

        Command::Report { tables, tsv } => {
            let mut all = Vec::new();
            for p in &tables {
                let rows = parse_reports_tsv(&read(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
                all.extend(rows);
            }
            print!("{}", if tsv { reports_tsv(&all) } else { format_reports(&all) });
            Ok(())
        }
    }
}
