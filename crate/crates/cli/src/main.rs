use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use commute_chart::commutativity::Verdict;
use commute_chart::explorer::DEFAULT_MAX_EXECUTIONS;
use commute_chart::graph_io::{emit_cypher, emit_dot, emit_json, load_json};
use commute_chart::statechart::{per_thread_slice, subgraph_by_trace, StateChart};
use commute_chart::trace_monoid::{enumerate_trace_class, IndependencyRelation, DEFAULT_MAX_LEN};
use commute_chart::{run_scenario, ExploreConfig, Scenario, ScenarioRun, TraceId};

const MAX_STATES_VAR: &str = "COMMUTE_CHART_MAX_STATES";
const FORMATS: [&str; 3] = ["cypher", "dot", "json"];

#[derive(Parser)]
#[command(name = "commute-chart", version, about = "Commutativity checking via state-chart graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore scenario files and report commutativity verdicts.
    Analyze {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Exit with status 2 unless every verdict matches.
        #[arg(long, value_enum)]
        expect: Option<Expectation>,
        /// Keep every raw interleaving as its own trace.
        #[arg(long)]
        no_quotient: bool,
        /// Directory for JSON artifacts, one per scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serialize the chart of a scenario file or JSON artifact.
    Export {
        input: PathBuf,
        /// cypher, dot or json.
        #[arg(long)]
        format: String,
        /// Restrict output to one trace.
        #[arg(long)]
        trace: Option<TraceId>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the actions of one trace, optionally per thread.
    Query {
        input: PathBuf,
        #[arg(long)]
        trace: TraceId,
        #[arg(long)]
        thread: Option<u32>,
    },
    /// Enumerate the trace class of a word.
    TraceClass {
        #[arg(long = "string")]
        word: String,
        /// Independent pairs, e.g. "b,c;c,b".
        #[arg(long, default_value = "")]
        independent: String,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expectation {
    Commute,
    NonCommute,
}

fn explore_config() -> Result<ExploreConfig> {
    let max_executions = match std::env::var(MAX_STATES_VAR) {
        Ok(text) => text
            .trim()
            .parse()
            .with_context(|| format!("{MAX_STATES_VAR}={text:?} is not a positive integer"))?,
        Err(_) => DEFAULT_MAX_EXECUTIONS,
    };
    Ok(ExploreConfig { max_executions })
}

fn load_scenario(path: &Path, no_quotient: bool) -> Result<Scenario> {
    let scenario = Scenario::load(path)?;
    Ok(if no_quotient { scenario.quotient(false) } else { scenario })
}

fn is_artifact(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Chart and verdict from a JSON artifact or by running a scenario file.
fn load_input(path: &Path) -> Result<(StateChart, Verdict)> {
    if is_artifact(path) {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(load_json(&text).with_context(|| format!("invalid artifact {}", path.display()))?)
    } else {
        let run = run_scenario(&load_scenario(path, false)?, &explore_config()?)?;
        Ok((run.chart, run.verdict))
    }
}

fn report(path: &Path, run: &ScenarioRun) -> String {
    let mut out = String::new();
    let verdict = &run.verdict;
    let _ = writeln!(out, "== {}", path.display());
    for line in run.scenario.to_toml_string().lines() {
        let _ = writeln!(out, "  | {line}");
    }
    let _ = writeln!(out, "raw executions: {}", run.traces.raw.len());
    let _ = writeln!(out, "traces: {}", run.traces.len());
    for e in &verdict.evidence {
        let responses: Vec<String> = e.responses.iter().map(|(op, v)| format!("{op} -> {v}")).collect();
        let _ = writeln!(out, "trace {}: probe {} {}", e.trace, e.footprint.summary(), e.footprint);
        let _ = writeln!(out, "  responses: {}", responses.join(", "));
    }
    for (op, ids) in &verdict.groups {
        let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "group {op} first: traces {}", ids.join(","));
    }
    if let Some(w) = &verdict.witness {
        let _ = writeln!(out, "witness: traces {} and {}", w.first, w.second);
        for reason in &w.reasons {
            let _ = writeln!(out, "  - {reason}");
        }
    }
    for note in &verdict.notes {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "verdict: {}",
        if verdict.commutes { "COMMUTES" } else { "DOES NOT COMMUTE" }
    );
    out
}

fn analyze_one(path: &Path, no_quotient: bool, out_dir: Option<&Path>, config: &ExploreConfig) -> Result<(String, bool)> {
    let scenario = load_scenario(path, no_quotient)?;
    let run = run_scenario(&scenario, config).with_context(|| format!("exploring {}", path.display()))?;
    let mut text = report(path, &run);
    if let Some(dir) = out_dir {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        let target = dir.join(format!("{stem}.json"));
        fs::write(&target, emit_json(&run.chart, &run.verdict))
            .with_context(|| format!("cannot write {}", target.display()))?;
        let _ = writeln!(text, "artifact: {}", target.display());
    }
    Ok((text, run.verdict.commutes))
}

fn analyze(scenarios: &[PathBuf], expect: Option<Expectation>, no_quotient: bool, out: Option<&Path>) -> Result<ExitCode> {
    let config = explore_config()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let results: Vec<Result<(String, bool)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|path| scope.spawn(move || analyze_one(path, no_quotient, out, &config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("analysis panicked"))))
            .collect()
    });
    let mut failed = false;
    let mut mismatched = false;
    for (path, result) in scenarios.iter().zip(results) {
        match result {
            Ok((text, commutes)) => {
                print!("{text}");
                if let Some(expected) = expect {
                    let wanted = expected == Expectation::Commute;
                    if commutes != wanted {
                        mismatched = true;
                        println!(
                            "expectation failed: expected {}, observed {}",
                            if wanted { "commute" } else { "non-commute" },
                            if commutes { "commute" } else { "non-commute" }
                        );
                    }
                }
            }
            Err(e) => {
                failed = true;
                eprintln!("error: {}: {e:#}", path.display());
            }
        }
    }
    Ok(if failed {
        ExitCode::from(1)
    } else if mismatched {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn export(input: &Path, format: &str, trace: Option<TraceId>, out: Option<&Path>) -> Result<()> {
    let format = format.to_ascii_lowercase();
    if !FORMATS.contains(&format.as_str()) {
        bail!("unsupported format {format:?}; supported formats: {}", FORMATS.join(", "));
    }
    let (chart, verdict) = load_input(input)?;
    let text = match format.as_str() {
        "dot" => emit_dot(&chart, trace)?,
        "cypher" => match trace {
            Some(t) => emit_cypher(&subgraph_by_trace(&chart, t)?),
            None => emit_cypher(&chart),
        },
        _ => match trace {
            Some(t) => emit_json(&subgraph_by_trace(&chart, t)?, &verdict),
            None => emit_json(&chart, &verdict),
        },
    };
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn query(input: &Path, trace: TraceId, thread: Option<u32>) -> Result<()> {
    let (chart, _) = load_input(input)?;
    let show = |id| {
        let node = &chart.nodes[&id];
        format!("n{id} T{} {}", node.key.thread, node.label())
    };
    match thread {
        None => {
            for node in chart.trace_nodes(trace)? {
                println!("{}", show(node.id));
            }
        }
        Some(thread) => {
            let slice = per_thread_slice(&chart, trace, thread)?;
            println!("consecutive:");
            for (a, b) in &slice.edges {
                println!("  {} -> {}", show(*a), show(*b));
            }
            println!("isolated:");
            for id in &slice.isolated {
                println!("  {}", show(*id));
            }
        }
    }
    Ok(())
}

fn parse_pairs(text: &str) -> Result<Vec<(char, char)>> {
    let single = |s: &str| -> Result<char> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(c),
            _ => bail!("letters must be single characters, got {s:?}"),
        }
    };
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("pair {pair:?} must be written as a,b"))?;
            Ok((single(a)?, single(b)?))
        })
        .collect()
}

fn trace_class(word: &str, independent: &str, max_len: usize) -> Result<()> {
    let pairs = parse_pairs(independent)?;
    let domain = word.chars().chain(pairs.iter().flat_map(|&(a, b)| [a, b]));
    let domain: Vec<char> = domain.collect();
    let relation = IndependencyRelation::new(domain, pairs)?;
    let class = enumerate_trace_class(word, &relation, max_len)?;
    for member in &class.members {
        println!("{member}");
    }
    println!("class size: {}", class.len());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            scenarios,
            expect,
            no_quotient,
            out,
        } => analyze(&scenarios, expect, no_quotient, out.as_deref()),
        Command::Export {
            input,
            format,
            trace,
            out,
        } => export(&input, &format, trace, out.as_deref()).map(|()| ExitCode::SUCCESS),
        Command::Query { input, trace, thread } => query(&input, trace, thread).map(|()| ExitCode::SUCCESS),
        Command::TraceClass {
            word,
            independent,
            max_len,
        } => trace_class(&word, &independent, max_len).map(|()| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
