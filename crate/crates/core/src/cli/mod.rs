//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 property violated, 2 configuration error,
//! 3 enumeration budget exceeded.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::mechanisms::RuleKind;
use crate::scalar::parse_list;
use crate::verify::CheckKind;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Budget { .. } | Error::TooManyBreakpoints { .. } => EXIT_BUDGET,
        Error::Consistency(_) => EXIT_VIOLATION,
        _ => EXIT_CONFIG,
    }
}

#[derive(Parser, Debug)]
#[command(name = "mabmech", version, about = "Pay-per-click bandit mechanisms: simulate, verify, sweep")]
pub struct Cli {
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Run one mechanism on one instance or realization.
    Simulate(SimulateArgs),
    /// Exhaustive structural and truthfulness checks.
    Check(CheckArgs),
    /// Regret and incentive experiments.
    Sweep(SweepArgs),
    /// Myerson payments for a fixed realization.
    Payments(PaymentsArgs),
    /// Polynomial identities and Monte-Carlo check of the monomial payment rule.
    MonomialVerify(MonomialArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output directory; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct Instance {
    #[arg(long, value_parser = parse_rule)]
    pub rule: RuleKind,
    #[arg(long)]
    pub k: usize,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: usize,
    #[arg(long)]
    pub bids: String,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub instance: Instance,
    /// True values; defaults to the bids.
    #[arg(long)]
    pub values: Option<String>,
    /// Click-through rates for Bernoulli clicks; 0.5 each by default.
    #[arg(long, conflicts_with = "realization_file")]
    pub ctrs: Option<String>,
    #[arg(long)]
    pub realization_file: Option<PathBuf>,
    /// Defaults to the largest bid or value.
    #[arg(long)]
    pub v_max: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct CheckList(pub Vec<CheckKind>);

fn parse_checks(s: &str) -> Result<CheckList, String> {
    let out: Vec<CheckKind> =
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_, Error>>().map_err(|e| e.to_string())?;
    if out.is_empty() {
        return Err(format!("no checks selected; valid checks: {}", CheckKind::valid_names()));
    }
    Ok(CheckList(out))
}

fn parse_rule(s: &str) -> Result<RuleKind, String> {
    s.parse::<RuleKind>().map_err(|e| e.to_string())
}

#[derive(Args, Debug, Serialize)]
pub struct CheckArgs {
    #[arg(long, value_parser = parse_rule)]
    pub rule: RuleKind,
    #[arg(long)]
    pub k: usize,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: usize,
    #[arg(long, value_parser = parse_checks, default_value = "pointwise,expsep,weaksep,truthful,normalized")]
    pub checks: CheckList,
    /// Bid and value grid shared by all agents.
    #[arg(long, default_value = "1,2,3,4")]
    pub grid: String,
    #[arg(long, default_value_t = 16)]
    pub max_kt: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_profiles: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Regret,
    DeltaGap,
    Underbid,
    PsimBench,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "regret")]
    pub experiment: Experiment,
    #[arg(long, default_value = "naive,ucb1")]
    pub rules: String,
    /// Strictly increasing horizons.
    #[serde(rename = "Ts")]
    #[arg(long = "Ts", default_value = "1000,3000,10000,30000,100000")]
    pub horizons: String,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v_max: f64,
    /// Underbidding: CTRs and values; agent 0 is the one shading.
    #[arg(long, default_value = "0.75,0.5")]
    pub ctrs: String,
    #[arg(long, default_value = "1,1")]
    pub values: String,
    #[arg(long, default_value = "0.6,0.7,0.8,0.9,0.95")]
    pub shades: String,
    #[arg(long, default_value = "constant_best,alternating,greedy_trap,all_zero")]
    pub fixtures: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct PaymentsArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[arg(long, conflicts_with = "realization_file")]
    pub ctrs: Option<String>,
    #[arg(long)]
    pub realization_file: Option<PathBuf>,
    /// Exact rational arithmetic; deterministic generic rules only.
    #[arg(long)]
    pub exact: bool,
    /// Bisection tolerance relative to the bid.
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct MonomialArgs {
    #[command(flatten)]
    pub instance: Instance,
    /// Probability of running the optimized rule; `1 - 1/T` by default.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub ctrs: String,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[command(flatten)]
    pub common: Common,
}

impl Command {
    /// Fills defaults that depend on other arguments so the logged config
    /// is complete.
    fn resolve(&mut self) {
        fn uniform_ctrs(k: usize) -> String {
            vec!["0.5"; k].join(",")
        }
        match self {
            Command::Simulate(a) => {
                a.values.get_or_insert_with(|| a.instance.bids.clone());
                if a.realization_file.is_none() {
                    a.ctrs.get_or_insert_with(|| uniform_ctrs(a.instance.k));
                }
                if a.v_max.is_none() {
                    let bids = parse_list::<f64>(&a.instance.bids).unwrap_or_default();
                    let values = parse_list::<f64>(a.values.as_deref().unwrap_or("")).unwrap_or_default();
                    a.v_max = Some(bids.iter().chain(&values).fold(0.0, |m, &x| f64::max(m, x)));
                }
            }
            Command::Payments(a) => {
                if a.realization_file.is_none() {
                    a.ctrs.get_or_insert_with(|| uniform_ctrs(a.instance.k));
                }
            }
            Command::MonomialVerify(a) => {
                let t = a.instance.horizon;
                a.gamma.get_or_insert_with(|| format!("{}/{}", t.saturating_sub(1), t));
            }
            Command::Check(_) | Command::Sweep(_) => {}
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Check(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Payments(a) => &a.common,
            Command::MonomialVerify(a) => &a.common,
        }
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    threads: usize,
    #[serde(flatten)]
    command: &'a Command,
}

/// Where tables go: files in `--out`, or standard output.
pub(crate) struct Sink<'a> {
    dir: Option<&'a Path>,
    format: Format,
    stdout: Vec<u8>,
    pub written: Vec<PathBuf>,
}

impl Sink<'_> {
    /// Writes a table as `<stem>.csv` or `<stem>.json`.
    pub fn table(&mut self, stem: &str, header: &[&str], rows: &[Vec<String>]) -> crate::Result<()> {
        let (ext, body) = match self.format {
            Format::Csv => ("csv", crate::experiments::csv_table(header, rows.iter().cloned())),
            Format::Json => ("json", json_table(header, rows)),
        };
        match self.dir {
            Some(dir) => {
                let path = dir.join(format!("{stem}.{ext}"));
                write_file(&path, &body)?;
                self.written.push(path);
            }
            None => {
                let _ = writeln!(self.stdout, "# {stem}");
                let _ = self.stdout.write_all(body.as_bytes());
            }
        }
        Ok(())
    }

    pub fn file(&mut self, name: &str, body: &str) -> crate::Result<PathBuf> {
        let path = self.dir.unwrap_or(Path::new(".")).join(name);
        write_file(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

fn write_file(path: &Path, body: &str) -> crate::Result<()> {
    fs::write(path, body).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// JSON array of objects with the CSV's field names; fields that read as
/// numbers or booleans keep that type.
pub fn json_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| {
            let obj = header
                .iter()
                .zip(row)
                .map(|(h, v)| (h.to_string(), json_field(v)))
                .collect::<serde_json::Map<_, _>>();
            serde_json::Value::Object(obj)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("serializable");
    s.push('\n');
    s
}

fn json_field(v: &str) -> serde_json::Value {
    if let Ok(n) = v.parse::<i64>() {
        return n.into();
    }
    if let Ok(n) = v.parse::<u64>() {
        return n.into();
    }
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => return serde_json::Number::from_f64(x).map(Into::into).unwrap_or(v.into()),
        _ => {}
    }
    match v {
        "true" => true.into(),
        "false" => false.into(),
        _ => v.into(),
    }
}

pub(crate) fn list<B: crate::Scalar>(what: &str, s: &str) -> crate::Result<Vec<B>> {
    parse_list(s).map_err(|e| Error::Config(format!("--{what}: {e}")))
}

pub(crate) fn usize_list(what: &str, s: &str) -> crate::Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("--{what}: bad integer {p:?}"))))
        .collect()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };
    cli.command.resolve();
    match execute(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> crate::Result<i32> {
    let threads = match cli.threads {
        Some(0) => return Err(Error::Config("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let common = cli.command.common();
    let config = serde_json::to_string_pretty(&RunConfig { threads, command: &cli.command }).expect("serializable");
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        write_file(&dir.join("run_config.json"), &(config + "\n"))?;
    } else {
        let _ = writeln!(stderr, "run_config: {config}");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let mut sink = Sink { dir: common.out.as_deref(), format: common.format, stdout: Vec::new(), written: Vec::new() };
    let result = pool.install(|| match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut sink),
        Command::Check(a) => commands::check(a, &mut sink),
        Command::Sweep(a) => commands::sweep(a, &mut sink),
        Command::Payments(a) => commands::payments(a, &mut sink),
        Command::MonomialVerify(a) => commands::monomial_verify(a, &mut sink),
    });
    let _ = stdout.write_all(&sink.stdout);
    result
}
