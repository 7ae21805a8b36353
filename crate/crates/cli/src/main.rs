use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tagplan::instance::Instance;
use tagplan::plan::{emit_stats, extract_plan, format_plan, validate, PlanHeader, StatsRow};
use tagplan::search::{anytime_loop, write_trace, QualityMode, SearchConfig};
use tagplan::{ground, parse_domain, parse_problem, ActionId, FactId};

#[derive(Debug, Parser)]
#[command(name = "tagplan", version, about = "Anytime temporal planner for a PDDL2.1 subset")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print mutex and reachability information for a task.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Stop at the first solution.
    Speed,
    /// Keep improving until the CPU limit.
    Quality,
    /// Stop after `--solutions` improving plans.
    NSolutions,
}

#[derive(Debug, Args)]
struct TaskArgs {
    /// Domain file.
    #[arg(short = 'o', long = "domain", value_name = "FILE")]
    domain: Option<PathBuf>,
    /// Problem file.
    #[arg(short = 'f', long = "problem", value_name = "FILE")]
    problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_enum, default_value = "speed")]
    mode: Mode,
    /// Number of plans to find in n-solutions mode.
    #[arg(long, default_value_t = 3)]
    solutions: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CPU limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    cpu: f64,
    /// Directory receiving plan files and statistics.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Initial noise probability.
    #[arg(long)]
    noise: Option<f64>,
    /// Search steps per restart before growth.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Restarts per search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Fraction of plan actions removed when restarting from a solution.
    #[arg(long)]
    removal_fraction: Option<f64>,
    /// Stop after this many search steps in total.
    #[arg(long)]
    max_total_steps: Option<u64>,
    /// Write a per-step search trace as CSV.
    #[arg(long, value_name = "FILE")]
    trace_csv: Option<PathBuf>,
    /// Print the final action graph to stderr.
    #[arg(long)]
    dump_graph: bool,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Number of mutex pairs listed per relation.
    #[arg(long, default_value_t = 10)]
    pairs: usize,
    /// Also print the reachability table from the initial state.
    #[arg(long)]
    reach: bool,
}

/// Failures that are the caller's fault, reported with exit status 2.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.run.verbose;
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    let result = match cli.command {
        Some(Command::Analyze(args)) => analyze(&args).map(|()| true),
        None => run(&cli.run),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(task: &TaskArgs) -> Result<Instance, InputError> {
    let (Some(domain), Some(problem)) = (&task.domain, &task.problem) else {
        return Err(anyhow::anyhow!("both a domain (-o) and a problem (-f) are required").into());
    };
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()));
    let d = read(domain)?;
    let p = read(problem)?;
    let dm = parse_domain(&d).with_context(|| format!("{}", domain.display()))?;
    let pm = parse_problem(&p, &dm).with_context(|| format!("{}", problem.display()))?;
    let task = ground(&dm, &pm).context("grounding failed")?;
    Ok(Instance::new(task))
}

fn search_config(args: &RunArgs) -> Result<SearchConfig, InputError> {
    if !(args.cpu > 0.0 && args.cpu.is_finite()) {
        return Err(anyhow::anyhow!("--cpu must be a positive number of seconds").into());
    }
    if args.mode == Mode::NSolutions && args.solutions == 0 {
        return Err(anyhow::anyhow!("--solutions must be positive").into());
    }
    let mut c = SearchConfig {
        seed: args.seed,
        cpu_budget: Duration::from_secs_f64(args.cpu),
        mode: if args.mode == Mode::Speed { QualityMode::FirstSolution } else { QualityMode::Anytime },
        max_solutions: (args.mode == Mode::NSolutions).then_some(args.solutions),
        max_total_steps: args.max_total_steps,
        record_trace: args.trace_csv.is_some(),
        ..SearchConfig::default()
    };
    if let Some(n) = args.noise {
        c.noise = n;
    }
    if let Some(n) = args.max_steps {
        c.max_steps = n;
    }
    if let Some(n) = args.restarts {
        c.max_restarts = n;
    }
    if let Some(f) = args.removal_fraction {
        c.removal_fraction = f;
    }
    Ok(c.validated()?)
}

fn file_stem(args: &RunArgs) -> String {
    args.task
        .problem
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "plan".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Returns whether at least one plan was found.
fn run(args: &RunArgs) -> Result<bool, InputError> {
    let started = Instant::now();
    let config = search_config(args)?;
    let inst = load(&args.task)?;
    let unreachable = inst.unreachable_goals();
    if !unreachable.is_empty() {
        let names: Vec<&str> = unreachable.iter().map(|g| inst.task.facts[g.0].as_str()).collect();
        eprintln!("goal unreachable: {}", names.join(" "));
        return Ok(false);
    }
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let stem = file_stem(args);
    let stats_path = args.out.join(format!("{stem}.stats.csv"));
    let header = PlanHeader { seed: Some(args.seed) };
    let mut rows: Vec<StatsRow> = Vec::new();
    let mut write_error: Option<anyhow::Error> = None;
    let outcome = anytime_loop(&inst, &config, |rec| {
        if write_error.is_some() {
            return;
        }
        let result = (|| -> anyhow::Result<()> {
            let plan = extract_plan(&inst, &rec.graph)?;
            let report = validate(&inst, &plan)?;
            if !report.valid {
                bail!("internal error: solution {} failed validation: {:?}", rows.len() + 1, report.violation);
            }
            let k = rows.len() + 1;
            let path = args.out.join(format!("{stem}.plan.{k}"));
            fs::write(&path, format_plan(&inst, &plan, &header))
                .with_context(|| format!("cannot write {}", path.display()))?;
            rows.push(StatsRow {
                solution_index: k,
                wall_ms: started.elapsed().as_millis(),
                steps: rec.steps,
                restarts: rec.restarts,
                metric: plan.metric,
                makespan: plan.makespan,
            });
            let file =
                fs::File::create(&stats_path).with_context(|| format!("cannot write {}", stats_path.display()))?;
            emit_stats(&rows, file)?;
            eprintln!("solution {k}: metric {:.4}, makespan {:.4} -> {}", plan.metric, plan.makespan, path.display());
            Ok(())
        })();
        if let Err(e) = result {
            write_error = Some(e);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    if rows.is_empty() {
        let file = fs::File::create(&stats_path).with_context(|| format!("cannot write {}", stats_path.display()))?;
        emit_stats(&rows, file)?;
    }
    if let Some(path) = &args.trace_csv {
        let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trace(&outcome.trace, file)?;
    }
    if args.dump_graph {
        if let Some(best) = outcome.best() {
            eprint!("{}", best.graph.dump(&inst));
        }
    }
    log::info!("{} steps, {} restarts, {:.3} s", outcome.steps, outcome.restarts, started.elapsed().as_secs_f64());
    if rows.is_empty() {
        eprintln!("no solution found");
        return Ok(false);
    }
    Ok(true)
}

fn analyze(args: &AnalyzeArgs) -> Result<(), InputError> {
    let inst = load(&args.task)?;
    print!("{}", analysis_report(&inst, args.pairs, args.reach));
    Ok(())
}

fn analysis_report(inst: &Instance, pairs: usize, reach: bool) -> String {
    use std::fmt::Write;
    let task = &inst.task;
    let fact = |f: FactId| task.facts[f.0].as_str();
    let mut s = String::new();
    let _ = writeln!(s, "domain: {}", task.domain_name);
    let _ = writeln!(s, "problem: {}", task.problem_name);
    let _ = writeln!(s, "facts: {}", task.n_facts());
    let _ = writeln!(s, "numeric variables: {}", task.vars.len());
    let _ = writeln!(s, "actions: {}", task.actions.len());
    let fact_pairs = inst.mutex.facts.pairs();
    let _ = writeln!(s, "fact mutex pairs: {}", fact_pairs.len());
    for (f, g) in fact_pairs.iter().take(pairs) {
        let _ = writeln!(s, "  {} | {}", fact(*f), fact(*g));
    }
    let n = task.actions.len();
    let action_pairs: Vec<(ActionId, ActionId)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (ActionId(a), ActionId(b))))
        .filter(|&(a, b)| inst.mutex.actions.is_mutex(a, b))
        .collect();
    let _ = writeln!(s, "action mutex pairs: {}", action_pairs.len());
    for &(a, b) in action_pairs.iter().take(pairs) {
        let why = inst.mutex.actions.justification(a, b).unwrap_or("?");
        let _ = writeln!(s, "  {} | {} ({why})", task.action(a).name(), task.action(b).name());
    }
    match inst.relaxed_depth() {
        Some(d) => {
            let _ = writeln!(s, "relaxed depth: {d}");
        }
        None => {
            let _ = writeln!(s, "relaxed depth: unreachable");
        }
    }
    for g in inst.unreachable_goals() {
        let _ = writeln!(s, "goal unreachable: {}", fact(g));
    }
    if reach {
        let _ = writeln!(s, "reachability (fact, actions, time):");
        for f in 0..task.n_facts() {
            let f = FactId(f);
            match (inst.init_reach.num_acts(f), inst.init_reach.time(f)) {
                (Some(k), Some(t)) => {
                    let _ = writeln!(s, "  {} {k} {t:.4}", fact(f));
                }
                _ => {
                    let _ = writeln!(s, "  {} unreachable", fact(f));
                }
            }
        }
    }
    s
}
