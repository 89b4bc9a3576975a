use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lazydrd_bench::bootstrap::DEFAULT_RESAMPLES;
use lazydrd_bench::harness::{split_worlds, summarize, PolicyId, Runner, SplitSel};
use lazydrd_bench::report::{build_report, emit_report, emit_sweep, load_runs_dir, RunFile, TreeInfo, RUNS_FORMAT, SCHEMA_VERSION};
use lazydrd_bench::sweep::{sweep_training_size, training_order, SweepOptions};
use lazydrd_core::dataset::{load_dataset, save_dataset, Dataset};
use lazydrd_core::ec2::DrdProblem;
use lazydrd_core::scenario::{generate_dataset, GenParams, LibrarySource, ScenarioSpec, KINDS};
use lazydrd_core::tree::{compile, CompileOptions, DecisionTree, DEFAULT_ALPHA, DEFAULT_ETA, DEFAULT_MAX_NODES};
use lazydrd_core::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flags or values)
  3  data error (malformed or invalid input file)
  4  contract error (inputs that do not fit together, e.g. a tree compiled for another dataset)
  5  resource error (I/O failure, tree larger than --max-nodes)";

#[derive(Parser)]
#[command(name = "lazydrd", version, about = "Feasible-path identification benchmark", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads for world sampling, tree compilation and policy runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a world database and path library.
    #[command(after_help = EXIT_CODES)]
    Gen(GenArgs),
    /// Compile the offline decision tree on a dataset's training split.
    #[command(after_help = EXIT_CODES)]
    CompileTree(CompileArgs),
    /// Run policies over a dataset split and write one run file per policy.
    #[command(after_help = EXIT_CODES)]
    Run(RunArgs),
    /// Cost and failure rate against training-set size.
    #[command(after_help = EXIT_CODES)]
    Sweep(SweepArgs),
    /// Normalized-cost table with bootstrap intervals from run files.
    #[command(after_help = EXIT_CODES)]
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// One of forest, onewall, twowall, baffle.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(KINDS))]
    scenario: String,
    /// Grid size as ROWSxCOLS.
    #[arg(long, default_value = "11x11", value_parser = parse_grid)]
    grid: (u32, u32),
    #[arg(long, default_value_t = 1000)]
    worlds: usize,
    /// Library size m.
    #[arg(long, default_value_t = 100)]
    paths: usize,
    /// Candidate pool size before subsampling.
    #[arg(long, default_value_t = 500)]
    k: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Library source: shortest paths of training worlds, or of the free grid.
    #[arg(long, default_value = "worlds", value_parser = ["worlds", "free"])]
    library: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TreeFlags {
    /// Handoff threshold on the surviving training fraction.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Bias mixing weight.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    max_nodes: usize,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    tree: TreeFlags,
    /// Use only this many training worlds (a seeded subset); default all.
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Policy to run; repeat for several. Default: all.
    #[arg(long = "policy", value_parser = parse_policy)]
    policies: Vec<PolicyId>,
    /// Compiled tree, required by direct+bisect and direct-only.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// train, test or all.
    #[arg(long, default_value = "test", value_parser = ["train", "test", "all"])]
    split: String,
    /// Column label in reports; default the dataset file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Increasing training sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,300,1000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    tree: TreeFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of run files.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, default_value = "direct+bisect", value_parser = parse_policy)]
    reference: PolicyId,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV table path; the full report is written next to it as .json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    Ok((r.parse().map_err(|e| format!("{e}"))?, c.parse().map_err(|e| format!("{e}"))?))
}

fn parse_policy(s: &str) -> Result<PolicyId, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = PolicyId::ALL.iter().map(|p| p.name()).collect();
        format!("unknown policy {s:?}; expected one of {}", names.join(", "))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Structural(_) | Error::Invalid(_) | Error::Parse(_) | Error::SchemaVersion { .. } | Error::Oracle(_) => 3,
        Error::Split(_) | Error::Contract(_) => 4,
        Error::TreeTooLarge(_) | Error::Io(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(5);
        }
    };
    match pool.install(|| dispatch(cli.cmd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Cmd) -> lazydrd_core::Result<()> {
    match cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::CompileTree(a) => compile_tree(a),
        Cmd::Run(a) => run(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Report(a) => report(a),
    }
}

fn gen(a: GenArgs) -> lazydrd_core::Result<()> {
    let params = GenParams {
        spec: ScenarioSpec::preset(&a.scenario, a.grid.0, a.grid.1)?,
        worlds: a.worlds,
        k: a.k,
        m: a.paths,
        test_fraction: a.test_fraction,
        library: if a.library == "free" { LibrarySource::Free } else { LibrarySource::Worlds },
    };
    let ds = generate_dataset(&params, a.seed)?;
    save_dataset(&ds, &a.out)?;
    println!(
        "{}: {} worlds ({} train / {} test), {} edges, {} paths, coverage {:.3}, hash {}",
        a.out.display(),
        ds.num_worlds(),
        ds.split.train.len(),
        ds.split.test.len(),
        ds.num_edges(),
        ds.num_paths(),
        ds.provenance.coverage.unwrap_or(0.0),
        ds.content_hash()
    );
    Ok(())
}

fn training_subset(ds: &Dataset, size: Option<usize>, seed: u64) -> lazydrd_core::Result<Vec<usize>> {
    let Some(n) = size else { return Ok(ds.split.train.clone()) };
    if n == 0 || n > ds.split.train.len() {
        return Err(Error::Contract(format!("--train-size must lie in 1..={}", ds.split.train.len())));
    }
    let mut train = training_order(ds, seed, 0)[..n].to_vec();
    train.sort_unstable();
    Ok(train)
}

fn compile_tree(a: CompileArgs) -> lazydrd_core::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let train = training_subset(&ds, a.train_size, a.seed)?;
    let problem = DrdProblem::from_worlds(&ds, &train)?;
    let tree = compile(
        &problem,
        &CompileOptions {
            eta: a.tree.eta,
            alpha: a.tree.alpha,
            max_nodes: a.tree.max_nodes,
            seed: a.seed,
            dataset_hash: ds.content_hash(),
        },
    )?;
    tree.save(&a.out)?;
    let s = &tree.stats;
    println!(
        "{}: {} nodes, depth {}, {} solved / {} dead / {} handoff leaves",
        a.out.display(),
        s.nodes,
        s.depth,
        s.solved_leaves,
        s.dead_leaves,
        s.handoff_leaves
    );
    Ok(())
}

fn run(a: RunArgs) -> lazydrd_core::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let tree = a.tree.as_deref().map(DecisionTree::load).transpose()?;
    let policies = if a.policies.is_empty() { PolicyId::ALL.to_vec() } else { a.policies.clone() };
    let split: SplitSel = a.split.parse()?;
    let name = match &a.name {
        Some(n) => n.clone(),
        None => stem(&a.dataset)?,
    };
    let runner = Runner::new(&ds, tree.as_ref(), a.seed)?;
    let worlds = split_worlds(&ds, split);
    for policy in policies {
        let runs = runner.run_policy(policy, &worlds)?;
        let info = tree.as_ref().filter(|_| policy.needs_tree()).map(|t| TreeInfo {
            eta: t.params.eta,
            alpha: t.params.alpha,
            train_size: t.params.train_size,
            stats: t.stats.clone(),
        });
        let file = RunFile {
            format: RUNS_FORMAT.into(),
            schema_version: SCHEMA_VERSION,
            dataset: name.clone(),
            dataset_hash: ds.content_hash(),
            policy,
            split,
            seed: a.seed,
            config: json!({
                "command": "run",
                "policy": policy.name(),
                "split": a.split,
                "seed": a.seed,
                "tree_seed": tree.as_ref().map(|t| t.params.seed),
                "dataset_provenance": ds.provenance,
            }),
            tree: info,
            summary: summarize(&runs),
            runs,
        };
        let path = file.save_in(&a.out)?;
        let s = &file.summary;
        println!(
            "{}: mean cost {:.3} over {} feasible of {} worlds, failure rate {:.3}",
            path.display(),
            s.mean_cost,
            s.feasible,
            s.worlds,
            s.failure_rate
        );
    }
    Ok(())
}

fn stem(p: &Path) -> lazydrd_core::Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Contract(format!("cannot derive a dataset name from {}; pass --name", p.display())))
}

fn sweep(a: SweepArgs) -> lazydrd_core::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let opts = SweepOptions {
        eta: a.tree.eta,
        alpha: a.tree.alpha,
        max_nodes: a.tree.max_nodes,
        seed: a.seed,
        trials: a.trials,
    };
    let sweep = sweep_training_size(&ds, &a.sizes, &opts)?;
    let config = json!({
        "command": "sweep",
        "sizes": a.sizes,
        "trials": a.trials,
        "eta": a.tree.eta,
        "alpha": a.tree.alpha,
        "max_nodes": a.tree.max_nodes,
        "seed": a.seed,
        "dataset_provenance": ds.provenance,
    });
    emit_sweep(&sweep, &config, &a.out)?;
    for p in &sweep.points {
        println!(
            "n={}: mean cost {:.3} (var {:.3}), direct-only failure {:.3}, direct+bisect failure {:.3}",
            p.train_size, p.mean_cost, p.variance, p.direct_only_failure, p.direct_bisect_failure
        );
    }
    Ok(())
}

fn report(a: ReportArgs) -> lazydrd_core::Result<()> {
    let files = load_runs_dir(&a.runs)?;
    let report = build_report(&files, a.reference, a.bootstrap, a.seed)?;
    emit_report(&report, &a.out)?;
    print!("{}", String::from_utf8_lossy(&report.to_csv()?));
    Ok(())
}
