//! `igcheck`: build improvement graphs from instance files, check formulas
//! on them, compare against the brute-force oracles and time the evaluator.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use igcheck_core::bench::{run_bench, to_csv};
use igcheck_core::builders::{
    build_allocation_graph_with, build_game_graph_with, build_voting_graph_with, GameMode, Instance, Limits,
};
use igcheck_core::eval::{eval_with, EvalOptions, Verdict, VerdictValue};
use igcheck_core::graph::{ImprovementGraph, NodeId};
use igcheck_core::logic::{parse, parse_file, Formula};
use igcheck_core::oracle::{
    oracle_acyclic, oracle_cycle_free, oracle_envy_free, oracle_nash, oracle_reach_count, oracle_reach_sinks,
    oracle_sinks, oracle_weakly_acyclic, OracleReport,
};
use igcheck_core::properties::{self, PropertyArgs, PROPERTIES};

#[derive(Parser)]
#[command(name = "igcheck", version, about = "Model checking fixed-point properties of improvement graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an improvement graph from a game, voting or allocation instance.
    BuildGraph(BuildArgs),
    /// Evaluate a formula or named property on a graph.
    Check(CheckArgs),
    /// List or print the named properties.
    Props {
        #[command(subcommand)]
        action: PropsAction,
    },
    /// Compare evaluator verdicts with the brute-force oracles.
    OracleDiff(DiffArgs),
    /// Time a property on seeded random sparse graphs and print CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Instance JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Game edges: unilateral, best-response or coalition:K.
    #[arg(long, default_value = "unilateral")]
    mode: String,
    /// Largest trading coalition for allocations (defaults to all agents).
    #[arg(long)]
    k: Option<usize>,
    /// Write the graph here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the size guards.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone, Default)]
struct PropParams {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bound: Option<u64>,
    /// Agent count for literal forms and envy-freeness.
    #[arg(long)]
    n: Option<usize>,
    /// Target predicate for the reachability properties.
    #[arg(long)]
    phi: Option<String>,
    /// Spell bounded edge atoms out as coalition disjunctions.
    #[arg(long)]
    literal: bool,
}

impl PropParams {
    fn to_args(&self) -> Result<PropertyArgs> {
        let phi = match &self.phi {
            Some(text) => Some(parse(text).with_context(|| format!("in --phi `{text}`"))?),
            None => None,
        };
        Ok(PropertyArgs {
            k: self.k,
            bound: self.bound,
            n: self.n,
            phi,
            literal: self.literal,
        })
    }
}

#[derive(Args)]
#[group(id = "query", required = true, multiple = false, args = ["formula", "formula_file", "prop"])]
struct QueryArgs {
    /// Formula text.
    #[arg(long)]
    formula: Option<String>,
    /// File of definitions whose last line (or last closed definition) is checked.
    #[arg(long)]
    formula_file: Option<PathBuf>,
    /// Named property; see `igcheck props list`.
    #[arg(long)]
    prop: Option<String>,
    #[command(flatten)]
    params: PropParams,
}

impl QueryArgs {
    fn formula(&self) -> Result<Formula> {
        if let Some(text) = &self.formula {
            return Ok(parse(text)?);
        }
        if let Some(path) = &self.formula_file {
            let file = parse_file(&read(path)?).with_context(|| format!("in {}", path.display()))?;
            return file
                .main()
                .cloned()
                .ok_or_else(|| anyhow!("{} has no formula to check", path.display()));
        }
        let name = self.prop.as_deref().expect("clap enforces one query");
        Ok(properties::property(name, &self.params.to_args()?)?)
    }
}

#[derive(Args)]
struct CheckArgs {
    /// Graph JSON file.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    query: QueryArgs,
    /// Allow subformulas with more than three free variables.
    #[arg(long)]
    allow_wide: bool,
}

#[derive(Subcommand)]
enum PropsAction {
    /// Names, parameters and summaries.
    List,
    /// Print one property in the concrete syntax.
    Emit {
        name: String,
        #[command(flatten)]
        params: PropParams,
    },
}

#[derive(Args)]
struct DiffArgs {
    /// Graph JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Instance the graph was built from, enabling the Nash and envy-freeness checks.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Write the oracle report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Strictly ascending node counts.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "weakly-acyclic")]
    prop: String,
    #[command(flatten)]
    params: PropParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Runs per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<ImprovementGraph> {
    ImprovementGraph::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn build_graph(args: &BuildArgs) -> Result<ExitCode> {
    let instance = Instance::from_json(&read(&args.input)?).with_context(|| format!("in {}", args.input.display()))?;
    let mut limits = Limits::from_env();
    limits.force = args.force;
    let graph = match &instance {
        Instance::Game(game) => {
            let mode: GameMode = args.mode.parse().map_err(|e| anyhow!("--mode: {e}"))?;
            build_game_graph_with(game, mode, &limits)?
        }
        Instance::Voting(v) => build_voting_graph_with(v, &limits)?,
        Instance::Allocation(a) => build_allocation_graph_with(a, args.k.unwrap_or(a.agents()), &limits)?,
    };
    write_out(args.out.as_deref(), &(graph.to_json() + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn verdict_json(g: &ImprovementGraph, v: &Verdict) -> Value {
    let mut out = v.to_json();
    if let VerdictValue::NodeSet(set) = &v.value {
        out["labels"] = json!(set.iter().map(|&x| &g.label(x).0).collect::<Vec<_>>());
    }
    out
}

fn check(args: &CheckArgs) -> Result<ExitCode> {
    let g = load_graph(&args.input)?;
    let phi = args.query.formula()?;
    let opts = EvalOptions {
        allow_wide: args.allow_wide,
        ..EvalOptions::default()
    };
    let verdict = eval_with(&g, &phi, opts)?;
    println!("{}", serde_json::to_string_pretty(&verdict_json(&g, &verdict))?);
    Ok(if verdict.holds() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn props(action: &PropsAction) -> Result<ExitCode> {
    match action {
        PropsAction::List => {
            let width = PROPERTIES.iter().map(|p| p.name.len()).max().unwrap_or(0);
            for p in PROPERTIES {
                let params = if p.params.is_empty() { String::new() } else { format!(" [{}]", p.params) };
                println!("{:width$}  {}{params}", p.name, p.summary);
            }
        }
        PropsAction::Emit { name, params } => {
            println!("{}", properties::property(name, &params.to_args()?)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// One evaluator/oracle comparison over node sets.
struct Comparison {
    name: String,
    evaluated: BTreeSet<NodeId>,
    expected: BTreeSet<NodeId>,
}

fn node_set(g: &ImprovementGraph, phi: &Formula) -> Result<BTreeSet<NodeId>> {
    let v = eval_with(g, phi, EvalOptions::default())?;
    v.as_node_set().cloned().ok_or_else(|| anyhow!("`{phi}` is not a node query"))
}

fn truth(g: &ImprovementGraph, phi: &Formula) -> Result<bool> {
    let v = eval_with(g, phi, EvalOptions::default())?;
    v.as_bool().ok_or_else(|| anyhow!("`{phi}` is not a sentence"))
}

fn all_or_none(g: &ImprovementGraph, b: bool) -> BTreeSet<NodeId> {
    if b {
        g.node_ids().collect()
    } else {
        BTreeSet::new()
    }
}

fn by_labels(g: &ImprovementGraph, labels: &BTreeSet<igcheck_core::graph::NodeLabel>) -> BTreeSet<NodeId> {
    labels.iter().filter_map(|l| g.find(l)).collect()
}

fn comparisons(g: &ImprovementGraph, instance: Option<&Instance>) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    let mut push = |name: String, evaluated, expected| {
        out.push(Comparison {
            name,
            evaluated,
            expected,
        })
    };
    push("sink".into(), node_set(g, &properties::sink())?, oracle_sinks(g, 1));
    push("acyclic-nodes".into(), node_set(g, &properties::acyclic_nodes())?, oracle_cycle_free(g, 1));
    push("sink-reach-nodes".into(), node_set(g, &properties::sink_reach_nodes())?, oracle_reach_sinks(g, 1));
    // sentences are compared as all-or-nothing node sets
    push(
        "acyclic".into(),
        all_or_none(g, truth(g, &properties::acyclic())?),
        all_or_none(g, oracle_acyclic(g, 1)),
    );
    push(
        "weakly-acyclic".into(),
        all_or_none(g, truth(g, &properties::weakly_acyclic())?),
        all_or_none(g, oracle_weakly_acyclic(g, 1)),
    );
    let bound = g.node_count() as u64;
    push(
        format!("path-count({bound})"),
        all_or_none(g, truth(g, &properties::path_count(bound))?),
        all_or_none(g, (oracle_reach_count(g) as u64) < bound),
    );
    for k in 1..=g.agents() {
        let sink_k = properties::sink_k(k)?;
        push(format!("sink-k({k})"), node_set(g, &sink_k)?, oracle_sinks(g, k));
        push(format!("k-fip-nodes({k})"), node_set(g, &properties::k_fip_nodes(k)?)?, oracle_cycle_free(g, k));
        push(
            format!("sink-k-reach-nodes({k})"),
            node_set(g, &properties::phi_reach_nodes_within(&sink_k, Some(k))?)?,
            oracle_reach_sinks(g, k),
        );
        push(
            format!("k-fip({k})"),
            all_or_none(g, truth(g, &properties::k_fip(k)?)?),
            all_or_none(g, oracle_acyclic(g, k)),
        );
    }
    match instance {
        Some(Instance::Game(game)) => {
            let nash = oracle_nash(game);
            push("nash".into(), node_set(g, &properties::sink())?, by_labels(g, &nash));
        }
        Some(Instance::Allocation(a)) if g.atom("pref_1").is_some() => {
            let free = oracle_envy_free(a);
            push("envy-free".into(), node_set(g, &properties::envy_free(a.agents())?)?, by_labels(g, &free));
        }
        _ => {}
    }
    Ok(out)
}

fn oracle_diff(args: &DiffArgs) -> Result<ExitCode> {
    let g = load_graph(&args.input)?;
    let instance = match &args.instance {
        Some(path) => Some(Instance::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))?),
        None => None,
    };
    let mut report = OracleReport::new(&g);
    match &instance {
        Some(Instance::Game(game)) => report = report.with_nash(game),
        Some(Instance::Allocation(a)) => report = report.with_envy_free(a),
        _ => {}
    }
    report.check().map_err(|e| anyhow!("oracle report is inconsistent: {e}"))?;
    if let Some(path) = &args.report {
        write_out(Some(path), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    let mut disagreements = 0;
    for c in comparisons(&g, instance.as_ref())? {
        match c.evaluated.symmetric_difference(&c.expected).next() {
            None => println!("ok    {}", c.name),
            Some(&x) => {
                disagreements += 1;
                println!(
                    "DIFF  {}: node {} {:?} evaluator={} oracle={}",
                    c.name,
                    x.0,
                    g.label(x).0,
                    c.evaluated.contains(&x),
                    c.expected.contains(&x)
                );
            }
        }
    }
    if disagreements > 0 {
        println!("{disagreements} disagreement(s)");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &BenchArgs) -> Result<ExitCode> {
    let phi = properties::property(&args.prop, &args.params.to_args()?)?;
    let rows = run_bench(&args.sizes, &phi, args.seed, args.repeats)?;
    if rows.iter().any(|r| r.lfp_stages > r.nodes + 1) {
        bail!("a fixpoint took more than |V| + 1 stages");
    }
    write_out(args.out.as_deref(), &to_csv(&rows))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BuildGraph(a) => build_graph(a),
        Command::Check(a) => check(a),
        Command::Props { action } => props(action),
        Command::OracleDiff(a) => oracle_diff(a),
        Command::Bench(a) => bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
