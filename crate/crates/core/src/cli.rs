//! The `relq` command-line tool.
//!
//! Exit codes: 0 success, 1 data or decode error, 2 usage error,
//! 3 selftest failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::codec::{deserialize, serialize};
use crate::params::{all_quantiles_adjust, eps_assumption_holds, Mode, Params};
use crate::sketch::Sketch;
use crate::verify::selftest;

pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relq", version, about = "Relative-error quantile sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a sketch from one decimal number per line on stdin.
    Build(BuildArgs),
    /// Answer rank or quantile queries.
    Query(QueryArgs),
    /// Print evenly spaced stored items with their estimated CDF.
    Cdf {
        file: PathBuf,
        #[arg(long)]
        points: usize,
    },
    /// Merge two sketch files.
    Merge {
        first: PathBuf,
        second: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Print parameters and per-level state.
    Inspect { file: PathBuf },
    /// Run the statistical self-test.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value = "mergeable")]
    mode: Mode,
    /// Stream length; required by `streaming` and `highconf`.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tighten ε and δ so that all ranks are accurate simultaneously.
    #[arg(long)]
    all_quantiles: bool,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct QueryArgs {
    file: PathBuf,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, required_unless_present = "quantile", conflicts_with = "quantile")]
    rank_of: Vec<f64>,
    #[arg(long, num_args = 1..)]
    quantile: Vec<u64>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Selftest,
}

type Outcome = Result<(), Failure>;

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

/// Runs the tool on `args` (including the program name).
pub fn run<I, S>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    let result = match cli.command {
        Command::Build(args) => build(args, stdin, stderr),
        Command::Query(args) => query(args, stdout),
        Command::Cdf { file, points } => cdf(&file, points, stdout),
        Command::Merge { first, second, output } => merge(&first, &second, &output),
        Command::Inspect { file } => inspect(&file, stdout),
        Command::Selftest(args) => run_selftest(args, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "relq: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(stderr, "relq: {msg}");
            EXIT_DATA
        }
        Err(Failure::Selftest) => {
            let _ = writeln!(stderr, "relq: selftest failed");
            EXIT_SELFTEST
        }
    }
}

/// Parses one item per line; blank lines are skipped.
pub fn read_items(input: &mut dyn BufRead) -> Result<Vec<f64>, String> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match text.parse::<f64>() {
            Ok(x) if !x.is_nan() => items.push(x),
            _ => return Err(format!("line {}: not a number: {text:?}", i + 1)),
        }
    }
    Ok(items)
}

fn load(path: &Path) -> Result<Sketch, Failure> {
    let bytes = std::fs::read(path).map_err(data(path.display()))?;
    deserialize(&bytes).map_err(data(path.display()))
}

fn store(path: &Path, sketch: &Sketch) -> Outcome {
    std::fs::write(path, serialize(sketch)).map_err(data(path.display()))
}

fn build(args: BuildArgs, stdin: &mut dyn BufRead, stderr: &mut dyn Write) -> Outcome {
    let n = match args.mode {
        Mode::Mergeable => None,
        _ => Some(args.n.ok_or_else(|| Failure::Usage(format!("--mode {} requires --n", args.mode)))?),
    };
    let (mut eps, mut delta) = (args.eps, args.delta);
    if args.all_quantiles {
        let len = args.n.ok_or_else(|| Failure::Usage("--all-quantiles requires --n".into()))?;
        (eps, delta) = all_quantiles_adjust(eps, delta, len).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let params = Params::derive(args.mode, eps, delta, n).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(len) = args.n {
        if !eps_assumption_holds(eps, len) {
            let _ = writeln!(stderr, "relq: warning: eps = {eps} is large for n = {len}; accuracy is not guaranteed");
        }
    }
    let items = read_items(stdin).map_err(Failure::Data)?;
    let mut sketch = Sketch::new(params, args.seed);
    sketch.extend_from(items).map_err(data("input"))?;
    store(&args.output, &sketch)
}

fn query(args: QueryArgs, out: &mut dyn Write) -> Outcome {
    let sketch = load(&args.file)?;
    let mut lines = Vec::new();
    for y in &args.rank_of {
        if y.is_nan() {
            return Err(Failure::Usage("--rank-of: NaN is not a valid item".into()));
        }
        lines.push(sketch.rank(y).to_string());
    }
    for &r in &args.quantile {
        lines.push(sketch.quantile(r).map_err(data(format!("--quantile {r}")))?.to_string());
    }
    emit(out, lines)
}

fn cdf(file: &Path, points: usize, out: &mut dyn Write) -> Outcome {
    let sketch = load(file)?;
    let stored: Vec<f64> = sketch.weighted_items().into_iter().map(|(x, _)| x).collect();
    let picked: Vec<f64> = if points == 0 || stored.is_empty() {
        Vec::new()
    } else if points >= stored.len() {
        stored
    } else if points == 1 {
        vec![stored[stored.len() - 1]]
    } else {
        (0..points).map(|i| stored[i * (stored.len() - 1) / (points - 1)]).collect()
    };
    if picked.is_empty() {
        return Ok(());
    }
    let pairs = sketch.cdf(&picked).map_err(data(file.display()))?;
    emit(out, pairs.into_iter().map(|(x, f)| format!("{x}\t{f}")))
}

fn merge(first: &Path, second: &Path, output: &Path) -> Outcome {
    let a = load(first)?;
    let b = load(second)?;
    let merged = a.merge(b).map_err(data("merge"))?;
    store(output, &merged)
}

fn inspect(file: &Path, out: &mut dyn Write) -> Outcome {
    let s = load(file)?;
    let p = s.params();
    let mut lines = vec![
        format!("mode={}", p.mode()),
        format!("eps={}", p.eps()),
        format!("delta={}", p.delta()),
        format!("k_hat={}", p.k_hat().unwrap_or(0.0)),
        format!("N={}", p.bound()),
        format!("n={}", s.n()),
        format!("k={}", p.k()),
        format!("B={}", p.b()),
        format!("H={}", s.height()),
        format!("seed={}", s.seed()),
        format!("coins={}", s.coins_consumed()),
        format!("stored_items={}", s.stored_items()),
    ];
    lines.extend(s.levels().iter().map(|l| format!("level={} count={} sigma={}", l.level(), l.len(), l.sigma())));
    emit(out, lines)
}

fn run_selftest(args: SelftestArgs, out: &mut dyn Write) -> Outcome {
    if args.trials < 100 {
        return Err(Failure::Usage("--trials must be at least 100".into()));
    }
    let report =
        selftest(args.eps, args.delta, args.n, args.trials, args.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut lines = Vec::new();
    for r in &report.failure.ranks {
        lines.push(serde_json::json!({
            "rank": r.rank,
            "trials": r.trials,
            "failures": r.failures,
            "failure_rate": r.failure_rate,
            "mean_err": r.mean_err,
            "std_err": r.std_err,
            "band": r.band,
            "pass": r.failure_ok && r.bias_ok,
        }));
    }
    lines.push(serde_json::json!({
        "schedule_ok": report.schedule_ok,
        "low_rank_mismatches": report.low_rank_mismatches,
        "passed": report.passed(),
    }));
    emit(out, lines)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}

fn emit<L: std::fmt::Display>(out: &mut dyn Write, lines: impl IntoIterator<Item = L>) -> Outcome {
    for line in lines {
        writeln!(out, "{line}").map_err(data("stdout"))?;
    }
    Ok(())
}
