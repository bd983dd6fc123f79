//! Command line driver: split, group, train, score, rerank, eval, sweep.
//!
//! Exit codes: 0 success, 1 internal failure, 2 infeasible, 3 input or
//! configuration error, 4 solver timeout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ugf_rerank::grouping::{assign_groups, load_groups, save_groups, GroupingConfig};
use ugf_rerank::ingest::{
    load_candidates, parse_interactions, read_split, sample_candidates, save_candidates, split_dataset, write_split,
    EvalPart, LogStats, NegativeSamplingConfig, SplitConfig, SplitMode,
};
use ugf_rerank::metrics::baseline_lists;
use ugf_rerank::mf::{train_bpr_with_history, FactorModel, TrainConfig};
use ugf_rerank::pipeline::{
    evaluate_lists, parse_percent, rerank_candidates, sub_seed, sweep, sweep_svg, truncate_candidates,
    write_sweep, EpsilonSpec,
};
use ugf_rerank::rerank::{build_problem, read_solution_lists, write_solution, SolveOutcome, SolverConfig, SolverMode};
use ugf_rerank::{Error, GroupingMethod};

#[derive(Parser, Debug)]
#[command(name = "ugf-rerank", version, about = "Group-fair top-K re-ranking for recommender outputs")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key = value` file; each key is a long flag name. Flags given on
    /// the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Include wall-clock times in outputs (makes them run-dependent).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-user train/validation/test split of an interactions CSV.
    Split(SplitArgs),
    /// Advantaged/disadvantaged partition from the training part.
    Group(GroupArgs),
    /// Fit the BPR matrix factorization baseline.
    Train(TrainArgs),
    /// Sample negatives and score evaluation candidates with a model.
    Score(ScoreArgs),
    /// Fairness-constrained re-ranking of a candidate file.
    Rerank(RerankArgs),
    /// Group report of baseline or given lists.
    Eval(EvalArgs),
    /// Rerank over a grid of epsilons.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// `item_id,price` table joined by item.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "chronological")]
    mode: SplitMode,
    #[arg(long, default_value_t = 0.8)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    validation: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
}

#[derive(Args, Debug)]
struct GroupArgs {
    /// Directory written by `split`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, default_value = "interactions")]
    method: GroupingMethod,
    #[arg(long, default_value_t = 0.05)]
    top_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-5)]
    l2: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Keep the last epoch instead of the best on validation.
    #[arg(long)]
    no_early_stop: bool,
    /// Per-epoch loss and validation NDCG as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    negatives: usize,
    /// Which part supplies the relevance labels.
    #[arg(long, default_value = "test")]
    part: EvalPart,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Keep only each user's best N candidates.
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value = "exact")]
    solver: SolverMode,
    /// Seconds before the exact solver returns its incumbent.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    feasibility_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            feasibility_tol: self.feasibility_tol,
            gap_tol: self.gap_tol,
            time_limit: self.time_limit,
            ..SolverConfig::with_mode(self.solver)
        }
    }
}

#[derive(Args, Debug)]
struct RerankArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Bound on the F1 gap in percent, or `inf`. Takes precedence over
    /// `--epsilon-factor`.
    #[arg(long)]
    epsilon: Option<String>,
    /// Bound as a multiple of the baseline F1 gap [default: 0.5].
    #[arg(long)]
    epsilon_factor: Option<f64>,
    /// Output directory for solution.csv, diagnostics.json and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write the 0-1 program in LP format.
    #[arg(long)]
    lp: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Solution CSV to score; the baseline top-K when absent.
    #[arg(long)]
    lists: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated epsilons in percent (`inf` allowed). Takes precedence
    /// over `--factors`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<String>,
    /// Comma-separated multiples of the baseline F1 gap.
    #[arg(long, value_delimiter = ',')]
    factors: Vec<f64>,
    /// Output directory for sweep.csv and sweep.svg.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Error(Error),
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Timeout { .. } => 4,
        Error::Internal(_) | Error::Diverged { .. } => 1,
        _ => 3,
    }
}

/// Expands `--config FILE` into flags placed right after the subcommand, so
/// explicit flags later on the line override them.
fn expand_config(args: Vec<String>) -> std::result::Result<Vec<String>, Error> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::Config("--config needs a file".into()))?,
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone().into(),
        source: e,
    })?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.clone().into(),
            line: n as u64 + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => {
                extra.push(flag);
                extra.push(v.to_string());
            }
        }
    }
    // the subcommand is the first argument that is not a flag or a flag value
    let mut i = 1;
    let mut insert_at = args.len();
    while i < args.len() {
        let a = &args[i];
        if a.starts_with("--") {
            let takes_value = ["--config", "--threads", "--seed"].contains(&a.as_str());
            i += if takes_value { 2 } else { 1 };
            continue;
        }
        insert_at = i + 1;
        break;
    }
    let mut out = args[..insert_at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[insert_at..]);
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> ugf_rerank::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> ugf_rerank::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn create_file(path: &Path) -> ugf_rerank::Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json<T: Serialize>(value: &T) -> ugf_rerank::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn cmd_split(a: &SplitArgs, seed: u64) -> CmdResult {
    let log = parse_interactions(&a.input, a.prices.as_deref())?;
    let cfg = SplitConfig {
        train: a.train,
        validation: a.validation,
        test: a.test,
        mode: a.mode,
        seed: sub_seed(seed, "split"),
    };
    let split = split_dataset(&log, &cfg)?;
    write_split(&split, &a.out)?;
    let stats = LogStats::of(&log);
    write_json(&a.out.join("stats.json"), &stats)?;
    print_json(&stats)?;
    Ok(())
}

#[derive(Serialize)]
struct GroupSummary {
    method: GroupingMethod,
    top_fraction: f64,
    advantaged: usize,
    disadvantaged: usize,
}

fn cmd_group(a: &GroupArgs) -> CmdResult {
    let split = read_split(&a.split, a.prices.as_deref())?;
    let groups = assign_groups(
        &split.train,
        &GroupingConfig {
            method: a.method,
            top_fraction: a.top_fraction,
        },
    )?;
    save_groups(&a.out, &groups)?;
    print_json(&GroupSummary {
        method: a.method,
        top_fraction: a.top_fraction,
        advantaged: groups.advantaged().len(),
        disadvantaged: groups.disadvantaged().len(),
    })?;
    Ok(())
}

#[derive(Serialize)]
struct EpochJson {
    epoch: usize,
    mean_loss: f64,
    validation_ndcg: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_validation_ndcg: Option<f64>,
    history: Vec<EpochJson>,
}

fn cmd_train(a: &TrainArgs, seed: u64) -> CmdResult {
    let split = read_split(&a.split, None)?;
    let cfg = TrainConfig {
        dim: a.dim,
        learning_rate: a.learning_rate,
        l2: a.l2,
        epochs: a.epochs,
        seed: sub_seed(seed, "train"),
        early_stop: !a.no_early_stop,
        ..TrainConfig::default()
    };
    let out = train_bpr_with_history(&split.train, Some(&split.validation), &cfg)?;
    out.model.save(&a.out)?;
    let summary = TrainSummary {
        best_epoch: out.best_epoch,
        best_validation_ndcg: out.best_validation_ndcg,
        history: out
            .history
            .iter()
            .map(|e| EpochJson {
                epoch: e.epoch,
                mean_loss: e.mean_loss,
                validation_ndcg: e.validation_ndcg,
            })
            .collect(),
    };
    if let Some(path) = &a.history {
        write_json(path, &summary)?;
    }
    eprintln!(
        "kept epoch {} (validation NDCG@10 {})",
        summary.best_epoch,
        summary
            .best_validation_ndcg
            .map_or("n/a".to_string(), |v| format!("{:.4}", v))
    );
    Ok(())
}

fn cmd_score(a: &ScoreArgs, seed: u64) -> CmdResult {
    let split = read_split(&a.split, None)?;
    let model = FactorModel::load(&a.model)?;
    let cfg = NegativeSamplingConfig {
        n_negatives: a.negatives,
        seed: sub_seed(seed, "sampling"),
    };
    let cands = sample_candidates(&split, &model, &cfg, a.part)?;
    save_candidates(&a.out, &cands)?;
    Ok(())
}

fn load_problem_inputs(a: &ProblemArgs) -> ugf_rerank::Result<(Vec<ugf_rerank::CandidateSet>, ugf_rerank::GroupAssignment)> {
    let cands = truncate_candidates(&load_candidates(&a.candidates)?, a.top_n);
    let groups = load_groups(&a.groups)?;
    Ok((cands, groups))
}

fn cmd_rerank(a: &RerankArgs, timing: bool) -> CmdResult {
    let (cands, groups) = load_problem_inputs(&a.problem)?;
    let spec = match (&a.epsilon, a.epsilon_factor) {
        (Some(e), _) => EpsilonSpec::Absolute(parse_percent(e)?),
        (None, Some(f)) => EpsilonSpec::Factor(f),
        (None, None) => EpsilonSpec::Factor(0.5),
    };
    create_dir(&a.out)?;
    if let Some(lp) = &a.lp {
        let before = evaluate_lists(&cands, &baseline_lists(&cands, a.problem.k), &groups, a.problem.k)?;
        let p = build_problem(&cands, &groups, a.problem.k, spec.resolve(&before.f1)?)?;
        fs::write(lp, p.to_lp()).map_err(|e| Error::Io {
            path: lp.clone(),
            source: e,
        })?;
    }
    let run = match rerank_candidates(&cands, &groups, a.problem.k, spec, &a.solver.config()) {
        Ok(run) => run,
        Err(e @ Error::Timeout { .. }) => {
            let diag = serde_json::json!({ "status": "timeout", "message": e.to_string() });
            write_json(&a.out.join("diagnostics.json"), &diag)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&a.out.join("diagnostics.json"), &run.diagnostics(timing))?;
    write_json(&a.out.join("report.json"), &run.report_json())?;
    match &run.outcome {
        SolveOutcome::Solved(s) => {
            write_solution(create_file(&a.out.join("solution.csv"))?, s)?;
            Ok(())
        }
        SolveOutcome::Infeasible(_) => Err(Failure::Infeasible),
    }
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let (cands, groups) = load_problem_inputs(&a.problem)?;
    let lists = match &a.lists {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            read_solution_lists(f, path)?
        }
        None => baseline_lists(&cands, a.problem.k),
    };
    let reports = evaluate_lists(&cands, &lists, &groups, a.problem.k)?;
    let json = reports.json(a.problem.k);
    match &a.out {
        Some(path) => write_json(path, &json)?,
        None => print_json(&json)?,
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let (cands, groups) = load_problem_inputs(&a.problem)?;
    let grid: Vec<EpsilonSpec> = if !a.epsilons.is_empty() {
        a.epsilons
            .iter()
            .map(|e| parse_percent(e).map(EpsilonSpec::Absolute))
            .collect::<ugf_rerank::Result<_>>()?
    } else if !a.factors.is_empty() {
        a.factors.iter().map(|&f| EpsilonSpec::Factor(f)).collect()
    } else {
        [1.0, 0.75, 0.5, 0.25, 0.0].map(EpsilonSpec::Factor).to_vec()
    };
    let (_, rows) = sweep(&cands, &groups, a.problem.k, &grid, &a.solver.config())?;
    create_dir(&a.out)?;
    write_sweep(create_file(&a.out.join("sweep.csv"))?, &rows)?;
    let svg = sweep_svg(&rows, a.problem.k);
    let path = a.out.join("sweep.svg");
    fs::write(&path, svg).map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Split(a) => cmd_split(a, cli.seed),
        Command::Group(a) => cmd_group(a),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Score(a) => cmd_score(a, cli.seed),
        Command::Rerank(a) => cmd_rerank(a, cli.timing),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible) => {
            eprintln!("infeasible: no selection meets the fairness bound; see diagnostics.json");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_lines_land_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nepsilon_factor = 0.25\ntiming = true\nlp = false\n").unwrap();
        let p = path.to_str().unwrap();
        let args = strings(&["bin", "--seed", "3", "--config", p, "rerank", "--k", "5"]);
        let out = expand_config(args).unwrap();
        assert_eq!(
            out,
            strings(&["bin", "--seed", "3", "--config", p, "rerank", "--epsilon-factor", "0.25", "--timing", "--k", "5"])
        );
    }

    #[test]
    fn no_config_leaves_arguments_alone() {
        let args = strings(&["bin", "eval", "--k", "10"]);
        assert_eq!(expand_config(args.clone()).unwrap(), args);
    }

    #[test]
    fn malformed_config_line_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        fs::write(&path, "k 10\n").unwrap();
        let err = expand_config(strings(&["bin", "--config", path.to_str().unwrap(), "eval"])).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Timeout { seconds: 1.0 }), 4);
        assert_eq!(exit_code(&Error::Internal("x".into())), 1);
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
    }
}
