use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corpm::bench::{run_bench, BenchConfig};
use corpm::declarative::{Bounds, DEFAULT_FUEL};
use corpm::differential::{run_check, CheckConfig};
use corpm::frontend::{compile_source, deserialize_ruleset, parse_term, serialize_ruleset};
use corpm::machine::{Machine, MachineConfig, Mutation, Outcome, TraceEvent, DEFAULT_STEP_BUDGET};
use corpm::rewrite::{rewrite_fixpoint, RewriteConfig, RewriteError, RuleSet, DEFAULT_PASS_LIMIT};
use corpm::term::{DefaultInterpreter, FunSubstitution, Substitution, Term};
use thiserror::Error;

const SEED_VAR: &str = "CORPM_SEED";

#[derive(Parser, Debug)]
#[command(name = "corpm", version, about = "Compile, match and rewrite with operator-term patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Args, Debug, Clone)]
struct Options {
    /// Output style; `machine` prints one key=value per line.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    /// Machine steps allowed per match.
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET, global = true)]
    step_budget: u64,
    /// Nested recursive-pattern unfoldings the oracle may use.
    #[arg(long, default_value_t = DEFAULT_FUEL, global = true)]
    fuel: usize,
    /// Rule fires allowed before a rewrite is reported as non-terminating.
    #[arg(long, default_value_t = DEFAULT_PASS_LIMIT, global = true)]
    pass_limit: u64,
    /// Print one line per machine transition to stderr.
    #[arg(long, global = true)]
    trace: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Human,
    Machine,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a `.pm` program to the portable `.pmb` format.
    Compile { input: PathBuf, output: PathBuf },
    /// Match one pattern against a term.
    Match {
        ruleset: PathBuf,
        term: PathBuf,
        #[arg(long)]
        pattern: String,
        /// Try every subterm in pre-order instead of only the root.
        #[arg(long)]
        all_subterms: bool,
    },
    /// Rewrite a term to a fixpoint.
    Rewrite { ruleset: PathBuf, term: PathBuf },
    /// Differential check of the matcher against the declarative oracle.
    Check {
        ruleset: PathBuf,
        #[arg(long, default_value_t = 1000)]
        cases: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
        #[arg(long)]
        threads: Option<usize>,
        /// Run a matcher that skips the choice point for alternates.
        #[arg(long)]
        mutant: bool,
    },
    /// Time rewriting on random terms.
    Bench {
        ruleset: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Diagnostic(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no match")]
    NoMatch,
    #[error("{0}")]
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Diagnostic(_) | Failure::Config(_) => 1,
            Failure::Io { .. } => 2,
            Failure::NoMatch => 3,
            Failure::Budget(_) => 4,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|source| Failure::Io { path: path.to_owned(), source })
}

fn load_ruleset(path: &Path) -> Result<RuleSet, Failure> {
    let bytes = read(path)?;
    let shown = path.display();
    if path.extension().is_some_and(|e| e == "pmb") {
        deserialize_ruleset(&bytes).map_err(|e| Failure::Diagnostic(format!("{shown}: {e}")))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Failure::Diagnostic(format!("{shown}: not UTF-8")))?;
        compile_source(&text).map_err(|e| Failure::Diagnostic(format!("{shown}:{e}")))
    }
}

fn load_term(rs: &RuleSet, path: &Path) -> Result<Term, Failure> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::Diagnostic(format!("{}: not UTF-8", path.display())))?;
    parse_term(rs.signature(), &text).map_err(|e| Failure::Diagnostic(format!("{}: {e}", path.display())))
}

fn seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{SEED_VAR}={v} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn validate(opts: &Options) -> Result<(), Failure> {
    if opts.step_budget == 0 {
        return Err(Failure::Config("--step-budget must be positive".into()));
    }
    if opts.fuel == 0 {
        return Err(Failure::Config("--fuel must be positive".into()));
    }
    if opts.pass_limit == 0 {
        return Err(Failure::Config("--pass-limit must be positive".into()));
    }
    Ok(())
}

fn witness_lines(out: &mut String, format: Format, prefix: &str, theta: &Substitution, phi: &FunSubstitution) {
    for (x, t) in theta.iter() {
        match format {
            Format::Human => writeln!(out, "{prefix}  {x} = {t}"),
            Format::Machine => writeln!(out, "{prefix}theta.{x}={t}"),
        }
        .unwrap();
    }
    for (f, op) in phi.iter() {
        match format {
            Format::Human => writeln!(out, "{prefix}  ${f} = {op}"),
            Format::Machine => writeln!(out, "{prefix}phi.{f}={op}"),
        }
        .unwrap();
    }
}

fn outcome_label(o: &Outcome) -> &'static str {
    match o {
        Outcome::Matched(..) => "matched",
        Outcome::NoMatch => "no-match",
        Outcome::BudgetExhausted => "budget-exhausted",
        Outcome::StuckState(_) => "stuck",
    }
}

fn cmd_compile(input: &Path, output: &Path) -> Result<String, Failure> {
    let bytes = read(input)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::Diagnostic(format!("{}: not UTF-8", input.display())))?;
    let rs = compile_source(&text).map_err(|e| Failure::Diagnostic(format!("{}:{e}", input.display())))?;
    let pmb = serialize_ruleset(&rs);
    fs::write(output, &pmb).map_err(|source| Failure::Io { path: output.to_owned(), source })?;
    Ok(String::new())
}

fn cmd_match(opts: &Options, ruleset: &Path, term: &Path, pattern: &str, all: bool) -> Result<String, Failure> {
    let rs = load_ruleset(ruleset)?;
    let t = load_term(&rs, term)?;
    let def = rs
        .pattern(pattern)
        .ok_or_else(|| Failure::Diagnostic(format!("unknown pattern `{pattern}`")))?;
    let machine = Machine::new(&DefaultInterpreter, MachineConfig { step_budget: opts.step_budget, mutation: None });
    let stderr = io::stderr();
    let mut log = |e: &TraceEvent| {
        let _ = writeln!(stderr.lock(), "{e}");
    };

    let mut sites = vec![(Vec::new(), t.clone())];
    if all {
        sites = preorder(&t);
    }
    let mut out = String::new();
    let (mut matched, mut exhausted) = (0usize, false);
    for (path, node) in &sites {
        let trace: Option<&mut dyn FnMut(&TraceEvent)> = if opts.trace { Some(&mut log) } else { None };
        let report = machine.run(&def.body, node, trace);
        let o = &report.outcome;
        matched += usize::from(o.is_matched());
        exhausted |= *o == Outcome::BudgetExhausted;
        if let Outcome::StuckState(desc) = o {
            return Err(Failure::Diagnostic(format!("matcher reached a stuck state: {desc}")));
        }
        if all && !o.is_matched() {
            continue;
        }
        let at: String = std::iter::once("root".to_string())
            .chain(path.iter().map(usize::to_string))
            .collect::<Vec<_>>()
            .join(".");
        match opts.format {
            Format::Human => {
                let label = match o {
                    Outcome::Matched(..) => "Matched",
                    Outcome::NoMatch => "NoMatch",
                    _ => "BudgetExhausted",
                };
                if all {
                    writeln!(out, "{label} at {at}: {node}").unwrap();
                } else {
                    writeln!(out, "{label}").unwrap();
                }
                if let Outcome::Matched(theta, phi) = o {
                    witness_lines(&mut out, Format::Human, "", theta, phi);
                }
            }
            Format::Machine => {
                let prefix = if all { format!("site.{at}.") } else { String::new() };
                writeln!(out, "{prefix}outcome={}", outcome_label(o)).unwrap();
                writeln!(out, "{prefix}steps={}", report.steps).unwrap();
                if let Outcome::Matched(theta, phi) = o {
                    witness_lines(&mut out, Format::Machine, &prefix, theta, phi);
                }
            }
        }
    }
    if all {
        match opts.format {
            Format::Human => writeln!(out, "{matched} of {} positions matched", sites.len()),
            Format::Machine => writeln!(out, "positions={}\nmatched={matched}", sites.len()),
        }
        .unwrap();
    }
    print!("{out}");
    if matched > 0 {
        Ok(String::new())
    } else if exhausted {
        Err(Failure::Budget(format!("pattern `{pattern}` exhausted the step budget of {}", opts.step_budget)))
    } else {
        Err(Failure::NoMatch)
    }
}

fn preorder(t: &Term) -> Vec<(Vec<usize>, Term)> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), t.clone())];
    while let Some((path, node)) = stack.pop() {
        for (i, c) in node.children().iter().enumerate().rev() {
            let mut p = path.clone();
            p.push(i);
            stack.push((p, c.clone()));
        }
        out.push((path, node));
    }
    out
}

fn cmd_rewrite(opts: &Options, ruleset: &Path, term: &Path) -> Result<String, Failure> {
    let rs = load_ruleset(ruleset)?;
    let t = load_term(&rs, term)?;
    let config = RewriteConfig {
        pass_limit: opts.pass_limit,
        step_budget: opts.step_budget,
    };
    let (result, stats) = rewrite_fixpoint(&rs, &DefaultInterpreter, &t, config).map_err(|e| match e {
        RewriteError::BudgetExhausted { .. } => Failure::Budget(e.to_string()),
        other => Failure::Diagnostic(other.to_string()),
    })?;
    let mut out = String::new();
    match opts.format {
        Format::Human => {
            writeln!(out, "{result}").unwrap();
            writeln!(out, "fires: {}", stats.total_fires()).unwrap();
            for (p, n) in &stats.fires {
                writeln!(out, "  {p}: {n}").unwrap();
            }
            writeln!(out, "traversals: {}", stats.traversals).unwrap();
            writeln!(out, "vm_steps: {}", stats.vm_steps).unwrap();
            writeln!(out, "non_terminating: {}", stats.non_terminating).unwrap();
        }
        Format::Machine => {
            writeln!(out, "term={result}").unwrap();
            writeln!(out, "fires={}", stats.total_fires()).unwrap();
            for (p, n) in &stats.fires {
                writeln!(out, "fires.{p}={n}").unwrap();
            }
            writeln!(out, "traversals={}", stats.traversals).unwrap();
            writeln!(out, "vm_steps={}", stats.vm_steps).unwrap();
            writeln!(out, "non_terminating={}", stats.non_terminating).unwrap();
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    opts: &Options,
    ruleset: &Path,
    cases: u64,
    seed: u64,
    max_depth: usize,
    threads: Option<usize>,
    mutant: bool,
) -> Result<String, Failure> {
    let rs = load_ruleset(ruleset)?;
    let mut config = CheckConfig {
        cases,
        seed,
        max_depth,
        step_budget: opts.step_budget,
        bounds: Bounds { fuel: opts.fuel, ..Bounds::default() },
        mutation: mutant.then_some(Mutation::SkipAltPush),
        ..CheckConfig::default()
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        config.threads = n;
    }
    let report = run_check(&rs, &DefaultInterpreter, &config).map_err(|e| Failure::Config(e.to_string()))?;
    let mut out = String::new();
    let fields = [
        ("cases", report.cases),
        ("seed", seed),
        ("matched", report.matched),
        ("no_match", report.no_match),
        ("budget_exhausted", report.budget_exhausted),
        ("inconclusive", report.inconclusive),
        ("violations", report.violations.len() as u64),
    ];
    for (k, v) in fields {
        match opts.format {
            Format::Human => writeln!(out, "{k:>16}: {v}"),
            Format::Machine => writeln!(out, "{k}={v}"),
        }
        .unwrap();
    }
    let excluded = report.excluded_patterns.join(",");
    match opts.format {
        Format::Human if !excluded.is_empty() => writeln!(out, "excluded patterns: {excluded}").unwrap(),
        Format::Machine => writeln!(out, "excluded={excluded}").unwrap(),
        _ => {}
    }
    for v in &report.violations {
        writeln!(out, "{}", v.bundle()).unwrap();
    }
    if report.violations.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(Failure::Diagnostic(format!("{} violation(s)", report.violations.len())))
    }
}

fn cmd_bench(opts: &Options, ruleset: &Path, nodes: usize, trials: usize, seed: u64) -> Result<String, Failure> {
    let rs = load_ruleset(ruleset)?;
    let config = BenchConfig {
        nodes,
        trials,
        seed,
        rewrite: RewriteConfig {
            pass_limit: opts.pass_limit,
            step_budget: opts.step_budget,
        },
    };
    let report = run_bench(&rs, &DefaultInterpreter, &config).map_err(|e| match e {
        corpm::bench::BenchError::Rewrite(RewriteError::BudgetExhausted { .. }) => Failure::Budget(e.to_string()),
        other => Failure::Config(other.to_string()),
    })?;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let mut out = String::new();
    match opts.format {
        Format::Human => {
            for (i, t) in report.trials.iter().enumerate() {
                writeln!(
                    out,
                    "trial {i}: {} nodes, {:.3} ms, {} fires, {} traversals",
                    t.nodes,
                    ms(t.elapsed),
                    t.fires,
                    t.traversals
                )
                .unwrap();
            }
            writeln!(
                out,
                "median {:.3} ms, mean {:.3} ms, {} fires",
                ms(report.median()),
                ms(report.mean()),
                report.fires()
            )
            .unwrap();
        }
        Format::Machine => {
            writeln!(out, "nodes={nodes}\ntrials={trials}\nseed={seed}").unwrap();
            for (i, t) in report.trials.iter().enumerate() {
                writeln!(out, "trial.{i}.ms={:.3}\ntrial.{i}.fires={}", ms(t.elapsed), t.fires).unwrap();
            }
            writeln!(out, "median_ms={:.3}", ms(report.median())).unwrap();
            writeln!(out, "mean_ms={:.3}", ms(report.mean())).unwrap();
            writeln!(out, "fires={}", report.fires()).unwrap();
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<String, Failure> {
    validate(&cli.opts)?;
    let opts = &cli.opts;
    match cli.command {
        Command::Compile { input, output } => cmd_compile(&input, &output),
        Command::Match {
            ruleset,
            term,
            pattern,
            all_subterms,
        } => cmd_match(opts, &ruleset, &term, &pattern, all_subterms),
        Command::Rewrite { ruleset, term } => cmd_rewrite(opts, &ruleset, &term),
        Command::Check {
            ruleset,
            cases,
            seed: s,
            max_depth,
            threads,
            mutant,
        } => cmd_check(opts, &ruleset, cases, seed(s)?, max_depth, threads, mutant),
        Command::Bench {
            ruleset,
            nodes,
            trials,
            seed: s,
        } => cmd_bench(opts, &ruleset, nodes, trials, seed(s)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if !matches!(e, Failure::NoMatch) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}
