//! Command-line front end.

use crate::approx::{gen_sine_mix, gen_whitenoise, mse, reconstruct, reconstruction_frame, Score};
use crate::checks::{default_checks, CheckReport};
use crate::discretize::{run_stream, Coefs, CoefState, Method, Record, SchemeSpec, StepPolicy};
use crate::error::HippoError;
use crate::family::{Family, LegtScaling};
use crate::fastlegs::LegsStepper;
use crate::operators::{legs_matrices, Generator};
use crate::signal::Signal;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;
use thiserror::Error;

pub const MIN_BENCH_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{0}")]
    Semantics(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failed")]
    ChecksFailed,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Semantics(_) => 4,
            CliError::Numerical(_) => 5,
            CliError::ChecksFailed | CliError::Io(_) => 1,
        }
    }
}

impl From<HippoError> for CliError {
    fn from(e: HippoError) -> Self {
        let msg = e.to_string();
        match e.root() {
            HippoError::InvalidParameter(_) => CliError::Usage(msg),
            HippoError::NonIncreasingTimestamps { .. } | HippoError::LengthMismatch { .. } => CliError::Semantics(msg),
            HippoError::Empty => CliError::Parse { line: 0, msg },
            _ => CliError::Numerical(msg),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return CliError::Io(io);
            }
            unreachable!("checked above");
        }
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        CliError::Parse { line, msg: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hippo", version, about = "Online function approximation by orthogonal projection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the generator (F, G) and (A, B) of a family as JSON.
    GenMatrices(GenMatricesArgs),
    /// Stream a signal through a recurrence and write the coefficients as CSV.
    Compress(CompressArgs),
    /// Compress a signal and write `x,truth,approx,abs_err` rows.
    Reconstruct(ReconstructArgs),
    /// Run the property checks and print one JSON document.
    Validate(ValidateArgs),
    /// Time LegS steps per second.
    Bench(BenchArgs),
    /// Write a synthetic test signal as CSV.
    GenSignal(GenSignalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyName {
    Legt,
    Lagt,
    Legs,
    Fourt,
    Fru,
    Chebt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScalingArg {
    Lmu,
    Orthonormal,
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    /// Number of coefficients.
    #[arg(long)]
    pub n: usize,
    /// Window length for legt, fourt, fru and chebt.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, value_enum, default_value = "lmu")]
    pub scaling: ScalingArg,
    /// Laguerre parameter of lagt.
    #[arg(long = "lagt-alpha", allow_negative_numbers = true)]
    pub lagt_alpha: Option<f64>,
    /// Decay rate of lagt.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta: f64,
    /// Integer frequencies of fru (default 0..n).
    #[arg(long, value_delimiter = ',')]
    pub freqs: Option<Vec<u32>>,
}

impl FamilyArgs {
    fn family(&self, lagt_alpha: Option<f64>) -> CliResult<Family> {
        let fam = match self.family {
            FamilyName::Legt => Family::legt(
                self.theta,
                match self.scaling {
                    ScalingArg::Lmu => LegtScaling::Lmu,
                    ScalingArg::Orthonormal => LegtScaling::Orthonormal,
                },
            ),
            FamilyName::Lagt => Family::lagt(lagt_alpha.or(self.lagt_alpha).unwrap_or(0.0), self.beta),
            FamilyName::Legs => Ok(Family::Legs),
            FamilyName::Fourt => Family::fourt(self.theta),
            FamilyName::Fru => Family::fru(
                self.theta,
                self.freqs.clone().unwrap_or_else(|| (0..self.n as u32).collect()),
            ),
            FamilyName::Chebt => Family::chebt(self.theta),
        }?;
        if self.n == 0 {
            return Err(CliError::Usage("--n must be positive".into()));
        }
        Ok(fam)
    }
}

#[derive(Debug, Args)]
pub struct GenMatricesArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Laguerre parameter of lagt (same as --lagt-alpha).
    #[arg(long, conflicts_with = "lagt_alpha", allow_negative_numbers = true)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Euler,
    BackwardEuler,
    Bilinear,
    Gbt,
    Zoh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RecordArg {
    Final,
    All,
}

#[derive(Debug, Args)]
#[group(id = "step", required = true, multiple = false)]
pub struct StepArgs {
    /// Fixed step; the input has one `value` column.
    #[arg(long, group = "step", allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Use the input's `t` column.
    #[arg(long, group = "step")]
    pub timestamped: bool,
    /// Step index as time (LegS only).
    #[arg(long, group = "step")]
    pub indexed: bool,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_enum, default_value = "bilinear")]
    pub scheme: SchemeArg,
    /// GBT weight; only with `--scheme gbt`.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub step: StepArgs,
    /// Signal CSV: `value` or `t,value` columns; `-` reads stdin.
    #[arg(long)]
    pub input: PathBuf,
    /// Output path (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the score (MSE, timing) as JSON to this path.
    #[arg(long)]
    pub score: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    #[arg(long, value_enum, default_value = "final")]
    pub record: RecordArg,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    /// One-column CSV of evaluation points in the measure's time frame.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Run every check.
    #[arg(long, conflicts_with = "check")]
    pub all: bool,
    /// Run the named check (repeatable).
    #[arg(long)]
    pub check: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplArg {
    Fast,
    Dense,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    #[arg(long = "impl", value_enum, value_delimiter = ',', default_value = "fast")]
    pub implementation: Vec<ImplArg>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignalKind {
    Whitenoise,
    SineMix,
}

#[derive(Debug, Args)]
pub struct GenSignalArgs {
    #[arg(long, value_enum)]
    pub kind: SignalKind,
    #[arg(long)]
    pub length: usize,
    /// Sample spacing of white noise.
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    /// White-noise band limit in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub band: f64,
    /// Right end of the sine-mixture range.
    #[arg(long, default_value_t = 100.0)]
    pub x_max: f64,
    /// Write `t,value` instead of `value`.
    #[arg(long)]
    pub with_time: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenMatrices(a) => gen_matrices(a),
        Command::Compress(a) => compress(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Validate(a) => validate(a),
        Command::Bench(a) => bench(a),
        Command::GenSignal(a) => gen_signal(a),
    }
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("HIPPO_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("HIPPO_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn open_output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

fn gen_matrices(a: GenMatricesArgs) -> CliResult<()> {
    let fam = a.family.family(a.alpha)?;
    let gen = Generator::for_family(&fam, a.family.n)?;
    let mut out = open_output(&None)?;
    serde_json::to_writer_pretty(&mut out, &gen.export()).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    let mut s = String::new();
    if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut s)?;
    } else {
        s = std::fs::read_to_string(path)?;
    }
    Ok(s)
}

/// Numeric rows of a CSV with an optional header; `#` lines are comments.
/// Every row must have `width` columns.
pub fn parse_columns(text: &str, widths: &[usize]) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if i == 0 && rec.iter().all(|f| f.parse::<f64>().is_err()) => {
                width = Some(rec.len());
                continue;
            }
            Err(e) => return Err(CliError::Parse { line, msg: format!("not a number ({e})") }),
        };
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Parse { line, msg: format!("non-finite value {v}") });
        }
        let w = *width.get_or_insert(row.len());
        if row.len() != w {
            return Err(CliError::Parse { line, msg: format!("expected {w} columns, found {}", row.len()) });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse { line: 1, msg: "no data rows".into() });
    }
    let w = rows[0].len();
    if !widths.contains(&w) {
        return Err(CliError::Parse { line: 1, msg: format!("unexpected column count {w}") });
    }
    Ok(rows)
}

fn load_signal(path: &Path, step: &StepArgs) -> CliResult<Signal> {
    let rows = parse_columns(&read_text(path)?, &[1, 2])?;
    let two = rows[0].len() == 2;
    if let Some(dt) = step.dt {
        if two {
            return Err(CliError::Usage("--dt expects a single `value` column".into()));
        }
        return Ok(Signal::uniform(dt, rows.into_iter().map(|r| r[0]).collect())?);
    }
    if two {
        let (times, values) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Ok(Signal::timestamped(times, values)?)
    } else if step.timestamped {
        Err(CliError::Usage("--timestamped expects `t,value` columns".into()))
    } else {
        Ok(Signal::uniform(1.0, rows.into_iter().map(|r| r[0]).collect())?)
    }
}

fn scheme_of(a: &StreamArgs, signal: &Signal) -> CliResult<SchemeSpec> {
    let method = match (a.scheme, a.alpha) {
        (SchemeArg::Gbt, al) => Method::Gbt(al.unwrap_or(0.5)),
        (_, Some(_)) => return Err(CliError::Usage("--alpha is only used with --scheme gbt".into())),
        (SchemeArg::Euler, None) => Method::Gbt(0.0),
        (SchemeArg::BackwardEuler, None) => Method::Gbt(1.0),
        (SchemeArg::Bilinear, None) => Method::Gbt(0.5),
        (SchemeArg::Zoh, None) => Method::Zoh,
    };
    let step = if a.step.indexed {
        StepPolicy::IndexBased
    } else if let (Some(dt), Signal::Uniform { .. }) = (a.step.dt, signal) {
        StepPolicy::Fixed(dt)
    } else {
        StepPolicy::Timestamped
    };
    Ok(SchemeSpec::new(method, step)?)
}

struct Stream {
    family: Family,
    scheme: SchemeSpec,
    signal: Signal,
    states: Vec<CoefState>,
    seconds: f64,
}

fn stream(a: &StreamArgs, record: Record) -> CliResult<Stream> {
    let family = a.family.family(None)?;
    let signal = load_signal(&a.input, &a.step)?;
    let scheme = scheme_of(a, &signal)?;
    let gen = Generator::for_family(&family, a.family.n)?;
    let start = Instant::now();
    let run = run_stream(&gen, &scheme, &signal, record)?;
    let seconds = start.elapsed().as_secs_f64();
    let last = run.last();
    if !last.c.is_finite() {
        return Err(CliError::Numerical(format!("coefficients overflowed by step {}", last.k)));
    }
    eprintln!(
        "steps={} seconds={:.6} steps_per_second={:.1}",
        last.k,
        seconds,
        last.k as f64 / seconds.max(1e-12)
    );
    Ok(Stream {
        family,
        scheme,
        signal,
        states: run.states,
        seconds,
    })
}

fn write_score(path: &Path, s: &Stream, n: usize, grid: Vec<f64>, truth: Vec<f64>, recon: Vec<f64>) -> CliResult<()> {
    let last = s.states.last().expect("runs hold a state");
    let score = Score {
        family: s.family.name().to_string(),
        scheme: s.scheme.label(),
        n,
        length: s.signal.len(),
        mse: mse(&truth, &recon)?,
        wall_seconds: s.seconds,
        steps_per_second: last.k as f64 / s.seconds.max(1e-12),
        final_c: last.c.clone(),
        grid,
        truth,
        recon,
    };
    let text = serde_json::to_string_pretty(&score).map_err(std::io::Error::from)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn coef_header(n: usize, complex: bool) -> Vec<String> {
    let mut h = vec!["k".to_string(), "t".to_string()];
    for i in 0..n {
        if complex {
            h.push(format!("c{i}_re"));
            h.push(format!("c{i}_im"));
        } else {
            h.push(format!("c{i}"));
        }
    }
    h
}

fn coef_row(s: &CoefState) -> Vec<String> {
    let mut r = vec![s.k.to_string(), s.t.to_string()];
    match &s.c {
        Coefs::Real(c) => r.extend(c.iter().map(|v| v.to_string())),
        Coefs::Complex(c) => {
            for v in c.iter() {
                r.push(v.re.to_string());
                r.push(v.im.to_string());
            }
        }
    }
    r
}

fn compress(a: CompressArgs) -> CliResult<()> {
    let record = match a.record {
        RecordArg::Final => Record::Final,
        RecordArg::All => Record::All,
    };
    let s = stream(&a.stream, record)?;
    let complex = matches!(s.states[0].c, Coefs::Complex(_));
    let mut w = csv::Writer::from_writer(open_output(&a.stream.output)?);
    w.write_record(coef_header(a.stream.family.n, complex))?;
    for st in &s.states {
        w.write_record(coef_row(st))?;
    }
    w.flush()?;
    if let Some(p) = &a.stream.score {
        let (t, grid, truth) = reconstruction_frame(&s.family, &s.scheme, &s.signal);
        let recon = reconstruct(&s.family, &s.states.last().expect("state").c, t, &grid)?.values;
        write_score(p, &s, a.stream.family.n, grid, truth, recon)?;
    }
    Ok(())
}

/// The held sample at frame coordinate `x`, if any.
fn held_value(family: &Family, scheme: &SchemeSpec, signal: &Signal, x: f64) -> Option<f64> {
    let values = signal.values();
    let index = match (family, scheme.step, signal) {
        (Family::Legs, StepPolicy::IndexBased, Signal::Timestamped { .. }) => x.floor(),
        (_, _, Signal::Uniform { dt, .. }) => (x / dt).floor(),
        (fam, _, Signal::Timestamped { times, .. }) => {
            let time = if matches!(fam, Family::Legs) { x + signal.origin() } else { x };
            if time < times[0] {
                return None;
            }
            (times.partition_point(|t| *t <= time) - 1) as f64
        }
    };
    let last = match signal {
        Signal::Uniform { .. } => values.len(),
        Signal::Timestamped { .. } => values.len() - 1,
    };
    (index >= 0.0 && (index as usize) < last).then(|| values[index as usize])
}

fn reconstruct_cmd(a: ReconstructArgs) -> CliResult<()> {
    let s = stream(&a.stream, Record::Final)?;
    let last = s.states.last().expect("state");
    let (t, default_grid, default_truth) = reconstruction_frame(&s.family, &s.scheme, &s.signal);
    let (grid, truth): (Vec<f64>, Vec<f64>) = match &a.grid {
        Some(p) => {
            let xs: Vec<f64> = parse_columns(&read_text(p)?, &[1])?.into_iter().map(|r| r[0]).collect();
            let truth = xs
                .iter()
                .map(|x| held_value(&s.family, &s.scheme, &s.signal, *x).unwrap_or(f64::NAN))
                .collect();
            (xs, truth)
        }
        None => (default_grid, default_truth),
    };
    let rec = reconstruct(&s.family, &last.c, t, &grid)?;
    let mut w = csv::Writer::from_writer(open_output(&a.stream.output)?);
    w.write_record(["x", "truth", "approx", "abs_err"])?;
    for ((x, tr), ap) in grid.iter().zip(&truth).zip(&rec.values) {
        w.write_record([x.to_string(), tr.to_string(), ap.to_string(), (tr - ap).abs().to_string()])?;
    }
    w.flush()?;
    if let Some(p) = &a.stream.score {
        let keep: Vec<usize> = (0..grid.len()).filter(|i| truth[*i].is_finite()).collect();
        let pick = |v: &[f64]| keep.iter().map(|i| v[*i]).collect::<Vec<_>>();
        write_score(p, &s, a.stream.family.n, pick(&grid), pick(&truth), pick(&rec.values))?;
    }
    Ok(())
}

/// Runs `jobs` in order on up to `threads` scoped workers.
fn run_parallel<T: Send, F: Fn(usize) -> T + Sync>(count: usize, threads: usize, f: F) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let threads = threads.clamp(1, count.max(1));
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let parts: Vec<Vec<(usize, T)>> = std::thread::scope(|sc| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                sc.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= count {
                            break done;
                        }
                        done.push((i, f(i)));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, v) in parts.into_iter().flatten() {
        slots[i] = Some(v);
    }
    slots.into_iter().map(|s| s.expect("every job ran")).collect()
}

#[derive(Serialize)]
struct ValidateReport {
    seed: u64,
    pass: bool,
    reports: Vec<CheckReport>,
}

fn validate(a: ValidateArgs) -> CliResult<()> {
    let seed = resolve_seed(a.seed)?;
    let checks = default_checks(seed);
    let selected: Vec<usize> = if a.all || a.check.is_empty() {
        (0..checks.len()).collect()
    } else {
        a.check
            .iter()
            .map(|name| {
                checks
                    .iter()
                    .position(|(n, _)| n == name)
                    .ok_or_else(|| CliError::Usage(format!("unknown check {name:?}")))
            })
            .collect::<CliResult<_>>()?
    };
    let results = run_parallel(selected.len(), a.jobs, |i| (checks[selected[i]].1)());
    let mut reports = Vec::new();
    for r in results {
        let r = r?;
        eprintln!("{}", r.summary());
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass);
    let doc = ValidateReport { seed, pass, reports };
    let mut out = open_output(&None)?;
    serde_json::to_writer_pretty(&mut out, &doc).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    if pass {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "impl")]
    pub implementation: ImplArg,
    pub steps: usize,
    pub seconds: f64,
    pub seconds_per_step: f64,
    pub steps_per_second: f64,
}

#[derive(Serialize)]
struct BenchReport {
    seed: u64,
    alpha: f64,
    threads_per_config: usize,
    results: Vec<BenchResult>,
}

/// One GBT LegS step with the dense matrix: a full matrix-vector product and a
/// forward substitution against `I + delta A`. `a` is row-major.
#[allow(clippy::too_many_arguments)]
pub fn dense_legs_step(a: &[f64], b: &[f64], alpha: f64, k: usize, c: &[f64], f: f64, y: &mut [f64], out: &mut [f64]) {
    let n = b.len();
    if k == 0 {
        y.iter_mut().zip(b).for_each(|(y, b)| *y = b * f);
    } else {
        let kf = k as f64;
        let eps = (1.0 - alpha) / kf;
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            let ac: f64 = row.iter().zip(c).map(|(x, y)| x * y).sum();
            y[i] = c[i] - eps * ac + b[i] * f / kf;
        }
    }
    let delta = alpha / (k + 1) as f64;
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let s: f64 = row[..i].iter().zip(&out[..i]).map(|(x, y)| x * y).sum();
        out[i] = (y[i] - delta * s) / (1.0 + delta * row[i]);
    }
}

/// Times `steps` LegS steps (after a warm-up of a tenth as many).
pub fn bench_one(n: usize, implementation: ImplArg, steps: usize, alpha: f64, seed: u64) -> crate::Result<BenchResult> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let warm = (steps / 10).max(1);
    let seconds = match implementation {
        ImplArg::Fast => {
            let mut st = LegsStepper::new(n, alpha);
            for f in &inputs[..warm] {
                st.step(*f)?;
            }
            let mut st = LegsStepper::new(n, alpha);
            let start = Instant::now();
            for f in &inputs {
                st.step(*f)?;
            }
            let s = start.elapsed().as_secs_f64();
            std::hint::black_box(st.coefs());
            s
        }
        ImplArg::Dense => {
            let (am, bv) = legs_matrices(n);
            let a: Vec<f64> = am.transpose().as_slice().to_vec();
            let b = bv.as_slice().to_vec();
            let (mut c, mut y, mut out) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut pass = |fs: &[f64]| {
                c.iter_mut().for_each(|v| *v = 0.0);
                for (k, f) in fs.iter().enumerate() {
                    dense_legs_step(&a, &b, alpha, k, &c, *f, &mut y, &mut out);
                    std::mem::swap(&mut c, &mut out);
                }
                std::hint::black_box(&c);
            };
            pass(&inputs[..warm]);
            let start = Instant::now();
            pass(&inputs);
            start.elapsed().as_secs_f64()
        }
    };
    Ok(BenchResult {
        n,
        implementation,
        steps,
        seconds,
        seconds_per_step: seconds / steps as f64,
        steps_per_second: steps as f64 / seconds.max(1e-12),
    })
}

fn bench(a: BenchArgs) -> CliResult<()> {
    if a.steps < MIN_BENCH_STEPS {
        return Err(CliError::Usage(format!("--steps must be at least {MIN_BENCH_STEPS}")));
    }
    if a.n.contains(&0) {
        return Err(CliError::Usage("--n values must be positive".into()));
    }
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(CliError::Usage("--alpha must lie in [0, 1]".into()));
    }
    let seed = resolve_seed(a.seed)?;
    let configs: Vec<(usize, ImplArg)> = a
        .n
        .iter()
        .flat_map(|n| a.implementation.iter().map(move |i| (*n, *i)))
        .collect();
    let results = run_parallel(configs.len(), a.jobs, |i| bench_one(configs[i].0, configs[i].1, a.steps, a.alpha, seed));
    let results = results.into_iter().collect::<crate::Result<Vec<_>>>()?;
    let doc = BenchReport {
        seed,
        alpha: a.alpha,
        threads_per_config: 1,
        results,
    };
    let mut out = open_output(&None)?;
    serde_json::to_writer_pretty(&mut out, &doc).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn gen_signal(a: GenSignalArgs) -> CliResult<()> {
    let seed = resolve_seed(a.seed)?;
    let (signal, meta) = match a.kind {
        SignalKind::Whitenoise => (
            gen_whitenoise(a.length, a.dt, a.band, seed)?,
            format!("# kind=whitenoise seed={seed} dt={} band={}", a.dt, a.band),
        ),
        SignalKind::SineMix => {
            let s = gen_sine_mix(a.length, a.x_max)?;
            let dt = match &s {
                Signal::Uniform { dt, .. } => *dt,
                Signal::Timestamped { .. } => unreachable!("sine mixture is uniform"),
            };
            (s, format!("# kind=sine-mix seed={seed} dt={dt} x_max={}", a.x_max))
        }
    };
    let mut out = open_output(&a.output)?;
    writeln!(out, "{meta}")?;
    writeln!(out, "{}", if a.with_time { "t,value" } else { "value" })?;
    for (i, v) in signal.values().iter().enumerate() {
        if a.with_time {
            writeln!(out, "{},{v}", signal.time(i))?;
        } else {
            writeln!(out, "{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let rows = parse_columns("value\n1\n2.5\n", &[1, 2]).unwrap();
        assert_eq!(rows, vec![vec![1.0], vec![2.5]]);
        let rows = parse_columns("# meta\nt,value\n0,1\n1,2\n", &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        match parse_columns("value\n1\nx\n", &[1, 2]).unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        match parse_columns("0,1\n1\n", &[1, 2]).unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        assert_eq!(parse_columns("", &[1]).unwrap_err().exit_code(), 3);
        assert_eq!(parse_columns("1\nnan\n", &[1]).unwrap_err().exit_code(), 3);
        assert_eq!(parse_columns("1,2,3\n", &[1, 2]).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(HippoError::InvalidParameter("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(HippoError::NonIncreasingTimestamps { index: 1 }).exit_code(), 4);
        assert_eq!(CliError::from(HippoError::Singular { index: 3 }.at_step(7)).exit_code(), 5);
    }

    #[test]
    fn dense_bench_step_matches_library_step() {
        let n = 6;
        let (am, bv) = legs_matrices(n);
        let a: Vec<f64> = am.transpose().as_slice().to_vec();
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let (mut y, mut out) = (vec![0.0; n], vec![0.0; n]);
        for k in [0usize, 1, 5] {
            dense_legs_step(&a, bv.as_slice(), 0.5, k, &c, 0.3, &mut y, &mut out);
            let st = CoefState::real(nalgebra::DVector::from_vec(c.clone()), k, k as f64);
            let want = crate::discretize::legs_step(&am, &bv, 0.5, &st, 0.3).unwrap();
            let want = want.c.as_real().unwrap();
            for i in 0..n {
                assert!((out[i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_runner_keeps_order() {
        assert_eq!(run_parallel(10, 3, |i| i * i), (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(run_parallel(3, 1, |i| i), vec![0, 1, 2]);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
