use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use nsscale::descriptor::{load_catalog_from_paths, ns_il_delta, validate_catalog, Catalog, LoadError};
use nsscale::sim::{explain_at, run_scenario, Explanation, RunOutcome, Scenario, ScenarioError};

/// Like `println!`, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($fmt:literal ; no_newline) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $fmt);
    }};
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const OK: u8 = 0;
const INVALID: u8 = 1;
const IO: u8 = 2;
const OP_FAILED: u8 = 3;

/// Descriptor checks, scaling runs and decision explanations for NS scaling.
#[derive(Parser, Debug)]
#[command(name = "nsscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check descriptor files or directories; prints one line per issue.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Run a scenario and write its trace and final state.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        state: Option<PathBuf>,
        /// Skip resource reservation regardless of the scenario options.
        #[arg(long)]
        no_reservation: bool,
    },
    /// Print the scaling graph of an NS deployment flavor.
    Graph {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        flavor: String,
        /// NSD owning the flavor; needed only when several NSDs declare it.
        #[arg(long)]
        nsd: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the scaling decision the NFVO would take at a tick.
    Explain {
        scenario: PathBuf,
        #[arg(long)]
        at: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_io() { IO } else { INVALID };
        Self::new(code, e.to_string())
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let code = if matches!(e, LoadError::Io { .. }) { IO } else { INVALID };
        Self::new(code, e.to_string())
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(IO, format!("cannot write {}: {e}", path.display())))
}

fn load_valid(path: &Path) -> Result<Scenario, Failure> {
    let scenario = Scenario::load(path)?;
    scenario.validate()?;
    Ok(scenario)
}

fn validate(paths: &[PathBuf]) -> Result<u8, Failure> {
    let catalog = load_catalog_from_paths(paths)?;
    let report = validate_catalog(&catalog);
    say!("{report}" ; no_newline);
    Ok(if report.is_empty() { OK } else { INVALID })
}

fn run(
    path: &Path,
    seed: Option<u64>,
    trace: Option<&Path>,
    state: Option<&Path>,
    no_reservation: bool,
) -> Result<u8, Failure> {
    let mut scenario = load_valid(path)?;
    if no_reservation {
        scenario.doc.options.reservation_enabled = false;
    }
    let seed = seed.unwrap_or(scenario.doc.options.seed);
    let result = run_scenario::<f64>(&scenario, seed)?;
    if let Some(p) = trace {
        write(p, &result.trace.to_text())?;
    }
    if let Some(p) = state {
        write(p, &result.final_state.to_json())?;
    }
    let fs = &result.final_state;
    say!(
        "{}: {} records, {} NS operation(s), NS-IL {}",
        scenario.doc.name,
        result.trace.len(),
        fs.ns_operations.len(),
        fs.ns_info.current_ns_il
    );
    for op in &fs.ns_operations {
        say!(
            "  {} tick {}: {} -> {} ({}) {:?}",
            op.id, op.tick, op.from_ns_il, op.to_ns_il, op.classification, op.outcome
        );
    }
    Ok(match result.outcome() {
        RunOutcome::Completed => OK,
        RunOutcome::OperationFailed => {
            say!("operation failed");
            OP_FAILED
        }
    })
}

fn find_flavor<'a>(catalog: &'a Catalog, nsd: Option<&str>, flavor: &str) -> Result<&'a str, Failure> {
    let owners: Vec<&str> = catalog
        .nsds
        .values()
        .filter(|n| nsd.is_none_or(|id| n.id == id))
        .filter(|n| n.flavors.iter().any(|f| f.id == flavor))
        .map(|n| n.id.as_str())
        .collect();
    match owners.as_slice() {
        [one] => Ok(one),
        [] => Err(Failure::new(INVALID, format!("unknown NS flavor `{flavor}`"))),
        _ => Err(Failure::new(
            INVALID,
            format!("flavor `{flavor}` is declared by {}; pick one with --nsd", owners.join(", ")),
        )),
    }
}

/// Every ordered pair of NS-ILs with the procedure moving between them.
fn scaling_graph(catalog: &Catalog, nsd: &str, flavor: &str) -> Result<serde_json::Value, Failure> {
    let fl = catalog
        .ns_flavor(nsd, flavor)
        .map_err(|e| Failure::new(INVALID, e.to_string()))?;
    let nodes: Vec<&str> = fl.ns_ils.iter().map(|l| l.id.as_str()).collect();
    let mut edges = Vec::new();
    for from in &nodes {
        for to in &nodes {
            if from == to {
                continue;
            }
            let d = ns_il_delta::<f64>(catalog, fl, from, to).map_err(|e| Failure::new(INVALID, e.to_string()))?;
            let profiles: Vec<_> = d
                .profiles
                .iter()
                .map(|p| {
                    json!({
                        "profile": p.profile,
                        "from": p.from_il(),
                        "to": p.to_il(),
                        "rescaled": p.rescaled,
                        "added": p.added,
                        "removed": p.removed,
                    })
                })
                .collect();
            edges.push(json!({
                "from": from,
                "to": to,
                "classification": d.classification,
                "profiles": profiles,
                "vls": d.vls,
                "net": d.net,
            }));
        }
    }
    Ok(json!({ "nsd": nsd, "flavor": flavor, "nodes": nodes, "edges": edges }))
}

fn graph(paths: &[PathBuf], nsd: Option<&str>, flavor: &str, out: Option<&Path>) -> Result<u8, Failure> {
    let catalog = load_catalog_from_paths(paths)?;
    let nsd = find_flavor(&catalog, nsd, flavor)?;
    let doc = scaling_graph(&catalog, nsd, flavor)?;
    let edges = doc["edges"].as_array().map_or(0, Vec::len);
    say!("{nsd}/{flavor}: {} nodes, {edges} edges", doc["nodes"].as_array().map_or(0, Vec::len));
    for e in doc["edges"].as_array().into_iter().flatten() {
        say!(
            "  {} -> {}: {}",
            e["from"].as_str().unwrap_or_default(),
            e["to"].as_str().unwrap_or_default(),
            e["classification"].as_str().unwrap_or_default()
        );
    }
    if let Some(p) = out {
        write(p, &pretty(&doc))?;
    }
    Ok(OK)
}

fn pretty(doc: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json value serializes");
    s.push('\n');
    s
}

fn explanation_doc(x: &Explanation) -> serde_json::Value {
    let (decision, error, rationale) = match &x.decision {
        Ok(d) => (serde_json::to_value(d).expect("decision serializes"), None, d.rationale.clone()),
        Err(e) => (serde_json::Value::Null, Some(e.to_string()), e.rationale().to_vec()),
    };
    json!({
        "tick": x.tick,
        "current_ns_il": x.current_ns_il,
        "busy": x.busy,
        "verdicts": x.verdicts,
        "decision": decision,
        "error": error,
        "candidates": rationale,
    })
}

fn explain(path: &Path, at: u64, seed: Option<u64>, out: Option<&Path>) -> Result<u8, Failure> {
    let scenario = load_valid(path)?;
    let seed = seed.unwrap_or(scenario.doc.options.seed);
    let x = explain_at::<f64>(&scenario, seed, at)?;
    say!("tick {}: NS-IL {}{}", x.tick, x.current_ns_il, if x.busy { " (operation in progress)" } else { "" });
    for v in &x.verdicts {
        say!("  rule {}: {}", v.rule_id, if v.satisfied { "satisfied" } else { "violated" });
    }
    match &x.decision {
        Ok(d) => {
            match &d.target_ns_il {
                Some(t) => say!("action: scale to {t} ({})", d.classification),
                None => say!("action: none"),
            }
            for c in &d.rationale {
                say!("  {c}");
            }
            for (addition, pop) in &d.placement {
                say!("  place {addition} on {pop}");
            }
        }
        Err(e) => {
            say!("action: none ({e})");
            for c in e.rationale() {
                say!("  {c}");
            }
        }
    }
    if let Some(p) = out {
        write(p, &pretty(&explanation_doc(&x)))?;
    }
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { paths } => validate(paths),
        Command::Run { scenario, seed, trace, state, no_reservation } => {
            run(scenario, *seed, trace.as_deref(), state.as_deref(), *no_reservation)
        }
        Command::Graph { paths, flavor, nsd, out } => graph(paths, nsd.as_deref(), flavor, out.as_deref()),
        Command::Explain { scenario, at, seed, out } => explain(scenario, *at, *seed, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
