//! `iccbf validate | simulate | sweep`.
//!
//! Exit codes: 0 success, 1 safety violation in a rollout, 2 a candidate
//! was refuted, 3 a candidate has an empty inner safe set on the grid,
//! 4 a rollout ended on an infeasible state, 5 the evaluation budget ran
//! out, 64 bad arguments or scenario.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adapt::CertifiedSet;
use crate::cascade::{AlphaVector, BarrierCascade};
use crate::error::Error;
use crate::scenario::{ConfigError, Scenario, SCHEMA};
use crate::sim::{self, Metrics, Shield, Terminal, TrajectoryLog};
use crate::validator::{validate, ValidationReport, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_REFUTED: i32 = 2;
pub const EXIT_VACUOUS: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_BUDGET: i32 = 5;
pub const EXIT_CONFIG: i32 = 64;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ICCBF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "iccbf",
    version,
    about = "Input-constrained discrete-time control barrier functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify or refute every candidate in the scenario
    Validate(CommonArgs),
    /// Run a closed-loop rollout with the safety filter
    Simulate(CommonArgs),
    /// Validate and roll out a grid of linear candidates
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (`validate` also accepts a `.json` file path)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "state-res")]
    state_res: Option<usize>,
    #[arg(long = "input-res")]
    input_res: Option<usize>,
    /// Also write a gnuplot script next to the trajectory CSV
    #[arg(long)]
    plot: bool,
    /// Simulate without certifying the candidates first
    #[arg(long = "skip-validation")]
    skip_validation: bool,
    #[arg(long = "max-evals")]
    max_evals: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(ConfigError {
            path: String::new(),
            message: e.to_string(),
        })
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    });
    match outcome {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn load(args: &CommonArgs) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(&args.scenario).map_err(|e| ConfigError {
        path: String::new(),
        message: format!("cannot read {}: {e}", args.scenario.display()),
    })?;
    let mut s = Scenario::from_json_str(&text)?;
    if let Some(n) = args.state_res {
        if n < 2 {
            return Err(ConfigError {
                path: "--state-res".into(),
                message: "must be at least 2".into(),
            }
            .into());
        }
        s.validator.state_res = n;
    }
    if let Some(n) = args.input_res {
        if n < 2 {
            return Err(ConfigError {
                path: "--input-res".into(),
                message: "must be at least 2".into(),
            }
            .into());
        }
        s.input_resolution = n;
        for c in &mut s.candidates {
            c.input_resolution = None;
        }
    }
    if let Some(n) = args.max_evals {
        s.validator.max_evals = Some(n);
    }
    Ok(s)
}

fn out_dir(args: &CommonArgs, s: &Scenario) -> Result<PathBuf, Failure> {
    let dir = args
        .out
        .clone()
        .or_else(|| s.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct CandidateEntry<'a> {
    candidate_id: &'a str,
    alpha: &'a AlphaVector<f64>,
    report: Option<&'a ValidationReport<f64>>,
    error: Option<String>,
}

type Validated = (
    AlphaVector<f64>,
    usize,
    Result<ValidationReport<f64>, Error>,
);

fn validate_all(s: &Scenario) -> Result<Vec<Validated>, Failure> {
    let model = s.model()?;
    let candidates = s.candidates()?;
    if candidates.is_empty() {
        return Err(ConfigError {
            path: "candidates".into(),
            message: "no candidates".into(),
        }
        .into());
    }
    Ok(candidates
        .par_iter()
        .map(|c| {
            let cfg = s.validation_config(c.input_resolution);
            (
                c.alpha.clone(),
                c.input_resolution,
                validate(&model, &c.alpha, &cfg),
            )
        })
        .collect())
}

fn batch_exit_code<'a>(
    results: impl IntoIterator<Item = &'a Result<ValidationReport<f64>, Error>>,
) -> i32 {
    let (mut refuted, mut vacuous, mut other) = (false, false, false);
    for r in results {
        match r {
            Ok(r) if r.verdict == Verdict::Refuted => refuted = true,
            Ok(r) if r.verdict == Verdict::VacuousEmptyCStar => vacuous = true,
            Ok(_) => {}
            Err(_) => other = true,
        }
    }
    if refuted {
        EXIT_REFUTED
    } else if vacuous {
        EXIT_VACUOUS
    } else if other {
        EXIT_BUDGET
    } else {
        EXIT_OK
    }
}

fn cmd_validate(args: &CommonArgs) -> Result<i32, Failure> {
    let s = load(args)?;
    let results = validate_all(&s)?;
    let entries: Vec<CandidateEntry> = results
        .iter()
        .map(|(a, _, r)| CandidateEntry {
            candidate_id: &a.id,
            alpha: a,
            report: r.as_ref().ok(),
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let path = match &args.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            p.clone()
        }
        _ => out_dir(args, &s)?.join("report.json"),
    };
    write_json(&path, &json!({ "schema": SCHEMA, "reports": entries }))?;
    for (a, _, r) in &results {
        match r {
            Ok(r) => println!(
                "{}: {:?} zeta*={} c*={} counterexamples={}",
                a.id,
                r.verdict,
                r.zeta_star.map_or("-".into(), |z| z.to_string()),
                r.c_star_count,
                r.counterexamples.len()
            ),
            Err(e) => println!("{}: error: {e}", a.id),
        }
    }
    Ok(batch_exit_code(results.iter().map(|(_, _, r)| r)))
}

fn terminal_code(log: &TrajectoryLog<f64>, m: Option<&Metrics<f64>>) -> i32 {
    if !log.terminal.is_completed() {
        EXIT_INFEASIBLE
    } else if m.is_some_and(|m| m.violation) {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

const PLOT_SCRIPT: &str = "\
# gnuplot script for trajectory.csv
set datafile separator ','
set key autotitle columnhead
set multiplot layout 3,1
set title 'barrier values'
plot for [c in '{B}'] 'trajectory.csv' using 't':c with lines
set title 'inputs'
plot for [c in '{U}'] 'trajectory.csv' using 't':c with lines
set title 'psi'
plot 'trajectory.csv' using 't':'psi' with lines
unset multiplot
";

fn plot_script(log: &TrajectoryLog<f64>, m: usize) -> String {
    let b: Vec<String> = (0..log.levels()).map(|i| format!("b{i}")).collect();
    let u: Vec<String> = (0..m)
        .flat_map(|i| [format!("u_nom{i}"), format!("u_safe{i}")])
        .collect();
    PLOT_SCRIPT
        .replace("{B}", &b.join(" "))
        .replace("{U}", &u.join(" "))
}

fn cmd_simulate(args: &CommonArgs) -> Result<i32, Failure> {
    let s = load(args)?;
    let model = s.model()?;
    let controller = s.nominal(&model)?;
    let rollout = s
        .rollout
        .as_ref()
        .expect("nominal() checked the rollout block");
    let dir = out_dir(args, &s)?;
    let options = s.rollout_options();

    let (log, validation) = if s.adapt.enabled {
        if args.skip_validation {
            return Err(ConfigError {
                path: "adapt.enabled".into(),
                message: "adaptation selects among certified candidates; --skip-validation is not allowed".into(),
            }
            .into());
        }
        let results = validate_all(&s)?;
        let reports = results.into_iter().map(|(a, _, r)| (a, r)).collect();
        let set = match CertifiedSet::from_reports(reports) {
            Ok(set) => set,
            Err(_) => {
                eprintln!("no certified candidate to adapt over");
                return Ok(EXIT_REFUTED);
            }
        };
        let adapter = s.adapter(set, &model)?;
        let log = sim::rollout(
            &model,
            Shield::Adaptive(&adapter),
            controller.as_ref(),
            &rollout.x0,
            rollout.horizon,
            options,
        )?;
        (log, "certified")
    } else {
        let candidate = s
            .candidates()?
            .into_iter()
            .next()
            .ok_or_else(|| ConfigError {
                path: "candidates".into(),
                message: "no candidates".into(),
            })?;
        let validation = if args.skip_validation {
            "skipped"
        } else {
            let cfg = s.validation_config(candidate.input_resolution);
            let r = validate(&model, &candidate.alpha, &cfg);
            let code = batch_exit_code([&r]);
            if code != EXIT_OK {
                eprintln!(
                    "candidate {} is not certified; pass --skip-validation to run anyway",
                    candidate.alpha.id
                );
                return Ok(code);
            }
            "certified"
        };
        let cascade =
            BarrierCascade::new(model.clone(), candidate.alpha, candidate.input_resolution)?;
        let log = sim::rollout(
            &model,
            Shield::Fixed(&cascade),
            controller.as_ref(),
            &rollout.x0,
            rollout.horizon,
            options,
        )?;
        (log, validation)
    };

    let n = model.state_dim();
    let m = model.input_dim();
    sim::write_csv(&log, n, m, fs::File::create(dir.join("trajectory.csv"))?)?;
    let metrics = sim::metrics(&log).ok();
    write_json(
        &dir.join("metrics.json"),
        &json!({
            "schema": SCHEMA,
            "validation": validation,
            "terminal": log.terminal,
            "steps": log.steps.len(),
            "metrics": metrics,
        }),
    )?;
    if args.plot {
        fs::write(dir.join("plot.gp"), plot_script(&log, m))?;
    }
    println!(
        "terminal={:?} steps={} min_h={}",
        log.terminal,
        log.steps.len(),
        metrics.as_ref().map_or("-".into(), |m| m.min_h.to_string())
    );
    Ok(terminal_code(&log, metrics.as_ref()))
}

struct SweepRow {
    alpha: AlphaVector<f64>,
    report: Result<ValidationReport<f64>, Error>,
    rollout: Option<(Terminal, Option<Metrics<f64>>)>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn cmd_sweep(args: &CommonArgs) -> Result<i32, Failure> {
    let s = load(args)?;
    let model = s.model()?;
    let candidates = s.sweep_candidates()?;
    let controller = match &s.rollout {
        Some(_) => Some(s.nominal(&model)?),
        None => None,
    };
    let dir = out_dir(args, &s)?;
    let cfg = s.validation_config(s.input_resolution);
    let options = s.rollout_options();

    let rows: Vec<SweepRow> = candidates
        .par_iter()
        .map(|alpha| {
            let report = validate(&model, alpha, &cfg);
            let certified = matches!(&report, Ok(r) if r.verdict == Verdict::Certified);
            let rollout = match (&controller, &s.rollout) {
                (Some(ctl), Some(r)) if certified => {
                    let cascade =
                        BarrierCascade::new(model.clone(), alpha.clone(), s.input_resolution)?;
                    let log = sim::rollout(
                        &model,
                        Shield::Fixed(&cascade),
                        ctl.as_ref(),
                        &r.x0,
                        r.horizon,
                        options,
                    )?;
                    Some((log.terminal, sim::metrics(&log).ok()))
                }
                _ => None,
            };
            Ok(SweepRow {
                alpha: alpha.clone(),
                report,
                rollout,
            })
        })
        .collect::<Result<_, Error>>()?;

    let depth = candidates.iter().map(|c| c.depth()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    let mut header = vec!["candidate".to_string()];
    header.extend((0..=depth).map(|i| format!("gamma{i}")));
    header.extend(
        [
            "verdict",
            "zeta_star",
            "c_star_count",
            "terminal",
            "min_h",
            "violation",
            "mean_deviation",
            "progress",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for row in &rows {
        let mut rec = vec![row.alpha.id.clone()];
        rec.extend(row.alpha.alphas().iter().map(|a| opt(a.gamma())));
        let (verdict, zeta, count) = match &row.report {
            Ok(r) => (
                format!("{:?}", r.verdict),
                opt(r.zeta_star),
                r.c_star_count.to_string(),
            ),
            Err(e) => (format!("Error({e})"), String::new(), String::new()),
        };
        rec.extend([verdict, zeta, count]);
        match &row.rollout {
            Some((terminal, m)) => {
                rec.push(terminal_label(terminal));
                rec.push(opt(m.as_ref().map(|m| m.min_h)));
                rec.push(
                    m.as_ref()
                        .map_or(String::new(), |m| m.violation.to_string()),
                );
                rec.push(opt(m.as_ref().map(|m| m.mean_deviation)));
                rec.push(opt(m.as_ref().and_then(|m| m.progress)));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let certified = rows
        .iter()
        .filter(|r| matches!(&r.report, Ok(r) if r.verdict == Verdict::Certified))
        .count();
    println!("{} candidates, {certified} certified", rows.len());
    Ok(EXIT_OK)
}

fn terminal_label(t: &Terminal) -> String {
    match t {
        Terminal::Completed => "Completed".into(),
        Terminal::InfeasibleAtState { t } => format!("InfeasibleAtState@{t}"),
        Terminal::NoAdmissibleCandidate { t } => format!("NoAdmissibleCandidate@{t}"),
    }
}
