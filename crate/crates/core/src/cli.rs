//! `chainamp` command-line front end.
//!
//! [`dispatch`] never touches the process streams; it returns what should be
//! printed and the exit code, so it can be driven from tests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::amplify::{self, round_sig, ProtocolReport};
use crate::chain::{
    bell_value_raw, bell_value_weighted, box_output_bias, build_quantum_box, chain_pr_box, check_no_signaling,
    deterministic_box, quantum_raw_value, ChainBox, SettingsDistribution,
};
use crate::kyfan::{self, KyFanMode, KyFanResult};
use crate::simulate::{run_protocol, AdversaryStrategy, SimReport, StrategySpec};
use crate::sv::{decompose, is_permutation_of_bernoulli, verify_sv, ConvexDecomposition, Epsilon, ProbDist};
use crate::Error;

/// Exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const UNKNOWN_COMMAND: i32 = 2;
    pub const MALFORMED_FLAG: i32 = 3;
    pub const INVALID_INPUT: i32 = 4;
    pub const IO: i32 = 5;
    pub const PARSE: i32 = 6;
}

pub const THREADS_ENV: &str = "CHAINAMP_THREADS";

/// Tolerance used by `verify` when none is given.
const DEFAULT_VERIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
enum CliError {
    UnknownCommand(String),
    MalformedFlag(String),
    Invalid(Error),
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, message: String },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Invalid(e)
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::UnknownCommand(_) => exit::UNKNOWN_COMMAND,
            CliError::MalformedFlag(_) => exit::MALFORMED_FLAG,
            CliError::Invalid(_) => exit::INVALID_INPUT,
            CliError::Io { .. } => exit::IO,
            CliError::Parse { .. } => exit::PARSE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::UnknownCommand(_) => "unknown_command",
            CliError::MalformedFlag(_) => "malformed_flag",
            CliError::Invalid(_) => "invalid_input",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::UnknownCommand(m) | CliError::MalformedFlag(m) => m.clone(),
            CliError::Invalid(e) => e.to_string(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
            CliError::Parse { path, message } => format!("{}: {message}", path.display()),
        }
    }

    fn to_json(&self) -> String {
        let v = json!({"error": {"kind": self.kind(), "code": self.code(), "message": self.message()}});
        format!("{v}\n")
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "chainamp", version, about = "Randomness amplification with chained Bell inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convex decomposition of an SV distribution into extremal ones (n <= 4).
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an SV distribution or a stored decomposition.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Required for a plain distribution; overrides a decomposition's own eps.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_VERIFY_TOL)]
        tol: f64,
    },
    /// Ky Fan norm of order 2^(r+1)-1 of the 2r-bit Bernoulli law.
    Kyfan {
        #[arg(long)]
        r: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = KyFanArg::Exact)]
        mode: KyFanArg,
    },
    /// Build a chained-Bell box.
    Box(BoxArgs),
    /// Bell value of a built-in or stored box.
    Bell {
        #[command(flatten)]
        source: BoxSource,
        /// Settings distribution JSON {"N", "probs"} for the weighted value.
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Critical epsilon values.
    Threshold {
        #[arg(long, value_enum, default_value_t = ThresholdMode::Both)]
        mode: ThresholdMode,
    },
    /// Full bound pipeline at one (r, eps).
    Protocol {
        #[arg(long)]
        r: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Protocol pipeline over a range of r, as CSV.
    Curve {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        r_min: u32,
        #[arg(long)]
        r_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run against an adversary strategy file.
    Simulate {
        #[arg(long)]
        r: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Strategy JSON; honest uniform settings on the quantum box if omitted.
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KyFanArg {
    /// True top-k sum (alias of `closed`).
    Exact,
    Closed,
    Bruteforce,
    Layer,
    LowerBound,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ThresholdMode {
    Simple,
    Asymptotic,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoxKind {
    Quantum,
    ChainPr,
    Deterministic,
}

#[derive(Debug, Args)]
struct BoxArgs {
    #[arg(long, value_enum)]
    kind: BoxKind,
    #[arg(long = "N")]
    n: usize,
    /// Alice's outputs per setting, comma separated (deterministic boxes).
    #[arg(long, value_delimiter = ',')]
    alice: Vec<u8>,
    #[arg(long, value_delimiter = ',')]
    bob: Vec<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoxSource {
    #[arg(long = "box", value_enum, requires = "n", conflicts_with = "input", required_unless_present = "input")]
    kind: Option<BoxKind>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

/// Runs one command line (`argv[0]` is the program name), honouring `CHAINAMP_THREADS`.
pub fn dispatch<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match threads_from_env() {
        Ok(threads) => dispatch_with_threads(argv, threads),
        Err(e) => failure(&e),
    }
}

/// Same as [`dispatch`] with an explicit worker cap (0 = rayon default).
pub fn dispatch_with_threads<I, T>(argv: I, threads: usize) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => return clap_outcome(e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return failure(&CliError::MalformedFlag(format!("{THREADS_ENV}: {e}"))),
    };
    match pool.install(|| run(cli.command)) {
        Ok(stdout) => Outcome { code: exit::OK, stdout, stderr: String::new() },
        Err(e) => failure(&e),
    }
}

fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::MalformedFlag(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        _ => Ok(0),
    }
}

fn failure(e: &CliError) -> Outcome {
    Outcome { code: e.code(), stdout: String::new(), stderr: e.to_json() }
}

fn clap_outcome(e: clap::Error) -> Outcome {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            Outcome { code: exit::OK, stdout: e.render().to_string(), stderr: String::new() }
        }
        ErrorKind::InvalidSubcommand => failure(&CliError::UnknownCommand(first_line(&e))),
        _ => failure(&CliError::MalformedFlag(first_line(&e))),
    }
}

fn first_line(e: &clap::Error) -> String {
    let text = e.render().to_string();
    let line = text.lines().next().unwrap_or_default();
    line.trim_start_matches("error: ").to_string()
}

fn run(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Decompose { input, eps, out } => {
            let dist: ProbDist = read_json(&input)?;
            let dec = decompose(&dist, Epsilon::new(eps)?)?;
            emit(&dec, out.as_deref())
        }
        Command::Verify { input, eps, tol } => verify(&input, eps, tol),
        Command::Kyfan { r, eps, mode } => kyfan_cmd(r, Epsilon::new(eps)?, mode),
        Command::Box(args) => {
            let bx = build_box(args.kind, args.n, &args.alice, &args.bob)?;
            emit(&bx, args.out.as_deref())
        }
        Command::Bell { source, settings } => bell(source, settings),
        Command::Threshold { mode } => {
            let mut v = serde_json::Map::new();
            if mode != ThresholdMode::Asymptotic {
                v.insert("simple".into(), json!(amplify::threshold_simple()));
            }
            if mode != ThresholdMode::Simple {
                v.insert("asymptotic".into(), json!(amplify::threshold_asymptotic()));
                v.insert("c".into(), json!(kyfan::entropy_root()));
            }
            Ok(render(&Value::Object(v)))
        }
        Command::Protocol { r, eps, csv, .. } => {
            let rep = amplify::protocol_report(r, Epsilon::new(eps)?)?;
            if csv {
                Ok(format!("{}\n{}\n", ProtocolReport::CSV_HEADER, rep.csv_row()))
            } else {
                Ok(render(&rep))
            }
        }
        Command::Curve { eps, r_min, r_max, out } => {
            let rows = amplify::protocol_curve(Epsilon::new(eps)?, r_min, r_max)?;
            let csv = curve_csv(&rows);
            match out {
                Some(path) => {
                    write_file(&path, &csv)?;
                    Ok(render(&json!({"out": path.display().to_string(), "rows": rows.len()})))
                }
                None => Ok(csv),
            }
        }
        Command::Simulate { r, eps, trials, seed, strategy, json } => {
            let eps = Epsilon::new(eps)?;
            let strat = match strategy {
                Some(path) => {
                    let spec: StrategySpec = read_json(&path)?;
                    AdversaryStrategy::from_spec(r, eps, &spec)?
                }
                None => AdversaryStrategy::honest(r, eps)?,
            };
            let rep = run_protocol(&strat, trials, seed)?;
            Ok(if json { render(&rep) } else { sim_text(&rep) })
        }
    }
}

/// The `curve` CSV: fixed header, one row per `r`.
pub fn curve_csv(rows: &[ProtocolReport]) -> String {
    let mut s = String::from(ProtocolReport::CSV_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

fn verify(input: &Path, eps: Option<f64>, tol: f64) -> CliResult<String> {
    let text = read_text(input)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| parse_error(input, e))?;
    // a decomposition carries "terms"; anything else must be a distribution
    if value.get("terms").is_some() {
        let dec: ConvexDecomposition = serde_json::from_value(value).map_err(|e| parse_error(input, e))?;
        let eps = match eps {
            Some(e) => Epsilon::new(e)?,
            None => dec.eps,
        };
        let dist = dec.reconstruct()?;
        let terms_valid = dec.terms.iter().all(|t| {
            crate::sv::extremal_distribution(&t.labeling, eps).is_ok_and(|d| verify_sv(&d, eps, tol).pass)
        });
        let report = verify_sv(&dist, eps, tol);
        Ok(render(&json!({
            "input": "decomposition",
            "eps": eps.value(),
            "terms": dec.terms.len(),
            "total_weight": dec.total_weight(),
            "terms_valid": terms_valid,
            "pass": report.pass && terms_valid,
            "worst_prefix": report.worst_prefix,
            "worst_conditional": report.worst_conditional,
        })))
    } else {
        let dist: ProbDist = serde_json::from_value(value).map_err(|e| parse_error(input, e))?;
        let eps = eps.ok_or_else(|| CliError::MalformedFlag("--eps is required for a distribution".into()))?;
        let eps = Epsilon::new(eps)?;
        let report = verify_sv(&dist, eps, tol);
        Ok(render(&json!({
            "input": "distribution",
            "eps": eps.value(),
            "pass": report.pass,
            "worst_prefix": report.worst_prefix,
            "worst_conditional": report.worst_conditional,
            "permutation_of_bernoulli": is_permutation_of_bernoulli(&dist, eps, tol.max(DEFAULT_VERIFY_TOL)),
        })))
    }
}

fn kyfan_cmd(r: u32, eps: Epsilon, mode: KyFanArg) -> CliResult<String> {
    let result = match mode {
        KyFanArg::Exact | KyFanArg::Closed => kyfan::ky_fan_bernoulli_exact(r, eps)?,
        KyFanArg::Bruteforce => kyfan::ky_fan_bernoulli_bruteforce(r, eps)?,
        KyFanArg::Layer => kyfan::ky_fan_bernoulli_layer(r, eps)?,
        KyFanArg::LowerBound | KyFanArg::UpperBound => {
            let b = kyfan::lemma2_bounds(r, eps)?;
            let (mode, log) = match mode {
                KyFanArg::LowerBound => (KyFanMode::LowerBound, b.lower),
                _ => (KyFanMode::UpperBound, b.upper),
            };
            let v = log.value();
            let res = KyFanResult {
                r,
                eps: eps.value(),
                mode,
                k: kyfan::settings_top_k(r),
                log2_value: log.log2_value,
                value: v.is_normal().then_some(v),
            };
            let mut out = serde_json::to_value(&res).expect("plain data");
            out["c"] = json!(b.c);
            out["cr"] = json!(b.cr);
            out["asserted"] = json!(b.asserted);
            return Ok(render(&out));
        }
    };
    Ok(render(&result))
}

fn build_box(kind: BoxKind, n: usize, alice: &[u8], bob: &[u8]) -> CliResult<ChainBox> {
    let bx = match kind {
        BoxKind::Quantum => build_quantum_box(n)?,
        BoxKind::ChainPr => chain_pr_box(n)?,
        BoxKind::Deterministic => {
            let (alice, bob) = (defaulted(alice, n), defaulted(bob, n));
            deterministic_box(&alice, &bob)?
        }
    };
    if bx.n_settings() != n {
        return Err(Error::DimensionMismatch(format!("--N {n} but outputs given for {} settings", bx.n_settings())).into());
    }
    Ok(bx)
}

/// Empty output lists mean "always 0".
fn defaulted(v: &[u8], n: usize) -> Vec<u8> {
    if v.is_empty() {
        vec![0; n]
    } else {
        v.to_vec()
    }
}

fn bell(source: BoxSource, settings: Option<PathBuf>) -> CliResult<String> {
    let bx = match (source.input, source.kind, source.n) {
        (Some(path), _, _) => read_json::<ChainBox>(&path)?,
        (None, Some(kind), Some(n)) => build_box(kind, n, &[], &[])?,
        _ => return Err(CliError::MalformedFlag("give --in FILE or --box KIND --N N".into())),
    };
    let n = bx.n_settings();
    let mut out = json!({
        "N": n,
        "bell_value": bell_value_raw(&bx),
        "lhv_bound": 1.0,
        "quantum_value": quantum_raw_value(n),
        "no_signaling": check_no_signaling(&bx, 1e-12),
        "output_bias": box_output_bias(&bx),
    });
    if let Some(path) = settings {
        let sd: SettingsDistribution = read_json(&path)?;
        out["weighted_bell_value"] = json!(bell_value_weighted(&bx, &sd)?);
    }
    Ok(render(&out))
}

fn sim_text(rep: &SimReport) -> String {
    format!(
        "r = {}, eps = {}\n\
         kept {} of {} trials (rate {})\n\
         weighted Bell value ({}) = {} +/- {}\n\
         Alice bias P(a=0)-1/2 = {} +/- {}\n\
         min chain-pair frequency = {}\n",
        rep.r,
        amplify::fmt_sig(rep.eps),
        rep.kept,
        rep.trials,
        amplify::fmt_sig(rep.post_selection_rate),
        rep.estimator,
        amplify::fmt_sig(rep.weighted_bell_value),
        amplify::fmt_sig(rep.weighted_bell_se),
        amplify::fmt_sig(rep.alice_bias),
        amplify::fmt_sig(rep.alice_bias_se),
        amplify::fmt_sig(rep.settings_min_prob),
    )
}

/// Pretty JSON with every float rounded to 15 significant digits.
fn render<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("plain data");
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("plain data");
    s.push('\n');
    s
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<String> {
    let text = render(value);
    match out {
        Some(path) => {
            write_file(path, &text)?;
            Ok(render(&json!({"out": path.display().to_string()})))
        }
        None => Ok(text),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn parse_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(args: &[&str]) -> Value {
        let out = dispatch_with_threads(std::iter::once("chainamp").chain(args.iter().copied()), 1);
        assert_eq!(out.code, 0, "{}", out.stderr);
        serde_json::from_str(&out.stdout).unwrap()
    }

    fn code(args: &[&str]) -> i32 {
        let out = dispatch_with_threads(std::iter::once("chainamp").chain(args.iter().copied()), 1);
        if out.code != 0 {
            let err: Value = serde_json::from_str(&out.stderr).unwrap();
            assert_eq!(err["error"]["code"], out.code);
        }
        out.code
    }

    #[test]
    fn threshold_both() {
        let v = ok(&["threshold", "--mode", "both"]);
        assert!((v["simple"].as_f64().unwrap() - 0.085786).abs() < 1e-6);
        assert!((v["asymptotic"].as_f64().unwrap() - 0.0961).abs() < 5e-4);
        let s = ok(&["threshold", "--mode", "simple"]);
        assert!(s.get("asymptotic").is_none());
    }

    #[test]
    fn kyfan_exact_small() {
        let v = ok(&["kyfan", "--r", "2", "--eps", "0.1", "--mode", "exact"]);
        assert!((v["value"].as_f64().unwrap() - 0.5904).abs() < 1e-12);
        assert_eq!(v["mode"], "closed");
        assert_eq!(v["k"], "7");
        let b = ok(&["kyfan", "--r", "2", "--eps", "0.1", "--mode", "bruteforce"]);
        assert!((b["value"].as_f64().unwrap() - 0.5904).abs() < 1e-12);
        let lb = ok(&["kyfan", "--r", "60", "--eps", "0.1", "--mode", "lower-bound"]);
        assert_eq!(lb["asserted"], true);
    }

    #[test]
    fn bell_quantum_two_settings() {
        let v = ok(&["bell", "--box", "quantum", "--N", "2"]);
        assert!((v["bell_value"].as_f64().unwrap() - 0.585786).abs() < 1e-6);
        assert_eq!(v["no_signaling"], true);
    }

    #[test]
    fn floats_carry_fifteen_digits() {
        let v = ok(&["threshold"]);
        let s = v["asymptotic"].as_f64().unwrap();
        assert_eq!(s, round_sig(s));
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
    }

    #[test]
    fn error_codes_are_distinct() {
        assert_eq!(code(&["frobnicate"]), exit::UNKNOWN_COMMAND);
        assert_eq!(code(&["kyfan", "--r", "two", "--eps", "0.1"]), exit::MALFORMED_FLAG);
        assert_eq!(code(&["kyfan", "--r", "2", "--eps", "0.7"]), exit::INVALID_INPUT);
        assert_eq!(code(&["decompose", "--in", "/nonexistent/d.json", "--eps", "0.1"]), exit::IO);
        assert_eq!(code(&["bell", "--box", "quantum"]), exit::MALFORMED_FLAG);
    }

    #[test]
    fn protocol_csv_header() {
        let out = dispatch_with_threads(["chainamp", "protocol", "--r", "3", "--eps", "0.05", "--csv"], 1);
        let mut lines = out.stdout.lines();
        assert_eq!(lines.next(), Some(ProtocolReport::CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("3,"));
        let json = ok(&["protocol", "--r", "3", "--eps", "0.05"]);
        assert_eq!(json["N"].as_f64(), Some(8.0));
    }
}
