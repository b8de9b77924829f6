//! `gumbelmark`: generate, edit, detect and calibrate watermarked token
//! sequences, and run the synthetic experiment suites.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use gumbelmark::calibrate::{clt_critical, mc_critical, CalibrationResult, DEFAULT_OUTER, DEFAULT_REPS};
use gumbelmark::detectors::{loglog_threshold, DetectorKind, DetectorSpec, ScoreKind};
use gumbelmark::edits::{apply_edit, EditKind, EditSpec};
use gumbelmark::efficiency::{rate_curve, rate_curve_csv, DEFAULT_TOLERANCE};
use gumbelmark::experiments::{
    boundary_csv, boundary_grid, entropy_gap_check, gap_csv, histogram_csv, histogram_study, linspace, tolerance_csv,
    tolerance_study, ExperimentGrid, MixtureConfig, NtpMode, ThresholdRule, ToleranceConfig,
};
use gumbelmark::pivotal::pivot_series;
use gumbelmark::prf::{Key, DEFAULT_WINDOW};
use gumbelmark::tokensource::{NtpDist, ToySource};
use gumbelmark::watermark::{generate, generate_null, GenConfig, TokenSeq};

use output::{read_json, write_artifact, CliError, Manifest};

#[derive(Parser, Debug)]
#[command(name = "gumbelmark", version, about = "Gumbel-max watermark toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a watermarked (or plain) sequence from the toy source.
    Generate(GenerateArgs),
    /// Apply random or adversarial edits to a sequence.
    Edit(EditArgs),
    /// Run a detector on a sequence and print a verdict.
    Detect(DetectArgs),
    /// Monte Carlo or CLT critical value for a detector.
    Calibrate(CalibrateArgs),
    /// Run a synthetic experiment suite.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Serialize)]
struct KeyArg {
    /// Secret key as hex.
    #[arg(long, env = "GUMBELMARK_KEY", hide_env_values = true)]
    #[serde(skip)]
    key: Option<String>,
}

impl KeyArg {
    fn resolve(&self) -> Result<Key, CliError> {
        let hex_key = self
            .key
            .as_deref()
            .ok_or_else(|| CliError::Usage("a key is required (--key or GUMBELMARK_KEY)".into()))?;
        let bytes = hex::decode(hex_key.trim()).map_err(|e| CliError::Usage(format!("key is not valid hex: {e}")))?;
        Key::new(bytes).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    key: KeyArg,
    /// Number of tokens to generate after the prompt.
    #[arg(long, default_value_t = 400)]
    n: usize,
    /// Context window length.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    /// Fixed regularity of the toy source (overrides --delta-min/--delta-max).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta_min: f64,
    #[arg(long, default_value_t = 0.5)]
    delta_max: f64,
    /// Comma-separated prompt token ids (default: m tokens drawn from the seed).
    #[arg(long, value_delimiter = ',')]
    prompt: Option<Vec<u32>>,
    /// Watermark every position, even when its context repeats.
    #[arg(long)]
    no_masking: bool,
    /// Plain multinomial sampling without a watermark.
    #[arg(long)]
    null: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EditArg {
    Sub,
    Ins,
    Del,
    Adv,
}

impl From<EditArg> for EditKind {
    fn from(e: EditArg) -> Self {
        match e {
            EditArg::Sub => EditKind::Substitute,
            EditArg::Ins => EditKind::Insert,
            EditArg::Del => EditKind::Delete,
            EditArg::Adv => EditKind::Adversarial,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EditArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    edit: EditArg,
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Needed for adversarial edits.
    #[command(flatten)]
    key: KeyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum DetectorArg {
    Trgof,
    Hc,
    Sum,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScoreArg {
    Ars,
    Log,
    Ind,
    Opt,
}

#[derive(Args, Debug, Serialize)]
struct DetectorArgs {
    #[arg(long, value_enum, default_value_t = DetectorArg::Trgof)]
    detector: DetectorArg,
    /// Tr-GoF divergence index in [-1, 2].
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    s: f64,
    /// Truncation level: a number in [0, 1] or "1/n".
    #[arg(long, default_value = "1/n")]
    c_plus: String,
    #[arg(long, value_enum, default_value_t = ScoreArg::Ars)]
    score: ScoreArg,
    /// Parameter of the ind and opt scores.
    #[arg(long)]
    delta0: Option<f64>,
}

impl DetectorArgs {
    fn spec(&self, n: usize) -> Result<DetectorSpec, CliError> {
        let c_plus = parse_c_plus(&self.c_plus, n)?;
        let spec = match self.detector {
            DetectorArg::Trgof => DetectorSpec::trgof(self.s, c_plus),
            DetectorArg::Hc => DetectorSpec::hc(c_plus),
            DetectorArg::Sum => {
                let name = match self.score {
                    ScoreArg::Ars => "ars",
                    ScoreArg::Log => "log",
                    ScoreArg::Ind => "ind",
                    ScoreArg::Opt => "opt",
                };
                ScoreKind::from_name(name, self.delta0).and_then(DetectorSpec::sum)
            }
        };
        spec.map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn parse_c_plus(raw: &str, n: usize) -> Result<f64, CliError> {
    let raw = raw.trim();
    if raw == "1/n" {
        return Ok(1.0 / n.max(1) as f64);
    }
    if raw == "1/n^2" {
        return Ok(1.0 / (n.max(1) as f64).powi(2));
    }
    raw.parse::<f64>()
        .map_err(|_| CliError::Usage(format!("--c-plus must be a number, '1/n' or '1/n^2', got '{raw}'")))
}

#[derive(Args, Debug, Serialize)]
struct CalibrationArgs {
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_OUTER)]
    outer: usize,
    /// Use the normal approximation instead of Monte Carlo (sum rules only).
    #[arg(long)]
    clt: bool,
    /// Directory for cached calibration results.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    key: KeyArg,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Critical value on the statistic's own scale.
    #[arg(long, allow_negative_numbers = true)]
    critical_value: Option<f64>,
    /// Use the (1 + delta) log log n rule (sqrt(2 (1 + delta) log log n) for HC).
    #[arg(long)]
    loglog_delta: Option<f64>,
    /// Calibrate the critical value for the scored length.
    #[arg(long)]
    calibrate: bool,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also score prompt positions.
    #[arg(long)]
    score_prompt: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Suite {
    Hist,
    Boundary,
    Sumboundary,
    Efficiency,
    Gapcheck,
    Tolerance,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    M1,
    M2,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::M2)]
    mode: ModeArg,
    /// Sparsity exponent (hist).
    #[arg(long, default_value_t = 0.2)]
    p: f64,
    /// Regularity exponent (hist).
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Points per axis of the (p, q) grid (boundary, sumboundary).
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Tr-GoF indices (hist, boundary).
    #[arg(long, value_delimiter = ',', default_value = "2", allow_negative_numbers = true)]
    s: Vec<f64>,
    #[arg(long, default_value = "1/n")]
    c_plus: String,
    /// Use HC instead of Tr-GoF (hist, boundary).
    #[arg(long)]
    hc: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Watermark fraction (efficiency).
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.005)]
    step: f64,
    /// MC samples per distribution (gapcheck).
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = EditArg::Sub)]
    edit: EditArg,
    #[command(flatten)]
    key: KeyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure worker pool: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Edit(a) => cmd_edit(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (lo, hi) = a.delta.map_or((a.delta_min, a.delta_max), |d| (d, d));
    let source = ToySource::new(a.vocab, lo, hi, a.seed)?;
    let prompt = match &a.prompt {
        Some(p) => p.clone(),
        None => default_prompt(a.m, a.vocab, a.seed),
    };
    let cfg = GenConfig {
        n: a.n,
        m: a.m,
        masking: !a.no_masking,
        seed: a.seed,
    };
    let seq = if a.null {
        generate_null(&source, &prompt, &cfg)?
    } else {
        generate(&source, &a.key.resolve()?, &prompt, &cfg)?
    };
    write_artifact(&a.out, &to_json(&seq)?)?;
    Manifest::new("generate", a, a.seed, started)
        .output(&a.out)
        .write_next_to(&a.out)
}

fn default_prompt(m: usize, vocab: usize, seed: u64) -> Vec<u32> {
    use rand::Rng;
    let mut rng = gumbelmark::rng::substream(seed, "prompt", &[]);
    (0..m).map(|_| rng.gen_range(0..vocab.max(1) as u32)).collect()
}

fn cmd_edit(a: &EditArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let seq: TokenSeq = read_json(&a.input)?;
    let spec = EditSpec {
        kind: a.edit.into(),
        fraction: a.fraction,
        seed: a.seed,
        vocab_size: a.vocab,
    };
    let key = match spec.kind {
        EditKind::Adversarial => Some(a.key.resolve()?),
        _ => None,
    };
    let edited = apply_edit(&seq, &spec, key.as_ref())?;
    write_artifact(&a.out, &to_json(&edited)?)?;
    Manifest::new("edit", a, a.seed, started)
        .input(&a.input)
        .output(&a.out)
        .write_next_to(&a.out)
}

#[derive(Debug, Serialize)]
struct Verdict {
    statistic: f64,
    n_scored: usize,
    critical_value: f64,
    reject: bool,
    detector: DetectorSpec,
}

fn cmd_detect(a: &DetectArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let modes = [a.critical_value.is_some(), a.loglog_delta.is_some(), a.calibrate]
        .iter()
        .filter(|&&x| x)
        .count();
    if modes != 1 {
        return Err(CliError::Usage(
            "give exactly one of --critical-value, --loglog-delta or --calibrate".into(),
        ));
    }
    let seq: TokenSeq = read_json(&a.input)?;
    let key = a.key.resolve()?;
    let series = pivot_series(&seq, &key, a.vocab)?;
    let skip = if a.score_prompt {
        0
    } else {
        seq.prompt_len().saturating_sub(series.first_position())
    };
    let y = &series.y()[skip.min(series.n())..];
    if y.is_empty() {
        return Err(CliError::Data("no positions to score".into()));
    }
    let n = y.len();
    let spec = a.detector.spec(n)?;
    let critical_value = if let Some(cv) = a.critical_value {
        cv
    } else if let Some(delta) = a.loglog_delta {
        let base = loglog_threshold(n, delta).map_err(|e| CliError::Usage(e.to_string()))?;
        match spec.kind {
            DetectorKind::TrGoF { .. } => base,
            DetectorKind::Hc { .. } => (2.0 * base).sqrt(),
            DetectorKind::Sum(_) => {
                return Err(CliError::Usage("--loglog-delta does not apply to sum rules".into()));
            }
        }
    } else {
        calibrated_value(&spec, n, &a.calibration, a.seed)?.critical_value
    };
    let statistic = spec.statistic(y)?;
    let verdict = Verdict {
        statistic,
        n_scored: n,
        critical_value,
        reject: statistic >= critical_value,
        detector: spec.with_critical_value(critical_value),
    };
    let body = to_json(&verdict)?;
    match &a.out {
        Some(out) => {
            write_artifact(out, &body)?;
            Manifest::new("detect", a, a.seed, started)
                .input(&a.input)
                .output(out)
                .write_next_to(out)?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn calibrated_value(spec: &DetectorSpec, n: usize, c: &CalibrationArgs, seed: u64) -> Result<CalibrationResult, CliError> {
    if c.clt {
        let DetectorKind::Sum(score) = spec.kind else {
            return Err(CliError::Usage("--clt applies to sum rules only".into()));
        };
        let cv = clt_critical(score, n, c.alpha)?;
        return Ok(CalibrationResult {
            detector: spec.with_critical_value(cv),
            n,
            alpha: c.alpha,
            critical_value: cv,
            reps: 0,
            outer: 0,
            seed,
        });
    }
    let cache_path = match &c.cache_dir {
        Some(dir) => Some(dir.join(format!("{}.json", output::cache_key(spec, n, c.alpha, c.reps, c.outer, seed)?))),
        None => None,
    };
    if let Some(path) = &cache_path {
        if path.exists() {
            return read_json(path);
        }
    }
    let result = mc_critical(spec, n, c.alpha, c.reps, c.outer, seed)?;
    if let Some(path) = &cache_path {
        write_artifact(path, &to_json(&result)?)?;
    }
    Ok(result)
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = a.detector.spec(a.n)?;
    let result = calibrated_value(&spec, a.n, &a.calibration, a.seed)?;
    write_artifact(&a.out, &to_json(&result)?)?;
    Manifest::new("calibrate", a, a.seed, started)
        .output(&a.out)
        .write_next_to(&a.out)
}

fn mode(m: ModeArg) -> NtpMode {
    match m {
        ModeArg::M1 => NtpMode::M1,
        ModeArg::M2 => NtpMode::M2,
    }
}

fn family(a: &ExperimentArgs, n: usize) -> Result<Vec<DetectorSpec>, CliError> {
    let c_plus = parse_c_plus(&a.c_plus, n)?;
    if a.hc {
        return Ok(vec![DetectorSpec::hc(c_plus)?]);
    }
    a.s.iter()
        .map(|&s| DetectorSpec::trgof(s, c_plus).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

fn pq_grid(a: &ExperimentArgs, vocab: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    // smallest q with 1 - n^-q >= 1/V, nudged so rounding keeps it valid
    let q_min = (vocab as f64 / (vocab as f64 - 1.0)).ln() / (a.n as f64).ln() * (1.0 + 1e-9);
    let p_values = linspace(0.01, 1.0, a.grid)?;
    let q_values = linspace(q_min, 1.0, a.grid)?;
    Ok((p_values, q_values))
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = Manifest::new("experiment", a, a.seed, started);
    let csv = match a.suite {
        Suite::Hist => {
            let cfg = MixtureConfig {
                n: a.n,
                p: a.p,
                q: a.q,
                vocab_size: a.vocab.unwrap_or(a.n),
                ntp_mode: mode(a.mode),
                trials: a.trials,
                seed: a.seed,
            };
            let results = histogram_study(&cfg, &family(a, a.n)?, a.alpha)?;
            let powers: Vec<_> = results
                .iter()
                .map(|r| json!({"detector": r.detector.label(), "critical_value": r.critical_value, "power": r.power}))
                .collect();
            manifest = manifest.extra("powers", json!(powers));
            histogram_csv(&results)
        }
        Suite::Boundary => {
            let vocab = a.vocab.unwrap_or(5);
            let (p_values, q_values) = pq_grid(a, vocab)?;
            let grid = ExperimentGrid {
                p_values,
                q_values,
                n: a.n,
                trials: a.trials,
                vocab_size: vocab,
                ntp_mode: mode(a.mode),
                seed: a.seed,
            };
            let mut out = String::new();
            for det in family(a, a.n)? {
                let rule = ThresholdRule::default_for(&det)?;
                let csv = boundary_csv(&boundary_grid(&grid, &det, &rule)?);
                out.push_str(&prefix_column(&csv, "detector", &det.label(), out.is_empty()));
            }
            out
        }
        Suite::Sumboundary => {
            let vocab = a.vocab.unwrap_or(5);
            let (p_values, q_values) = pq_grid(a, vocab)?;
            let grid = ExperimentGrid {
                p_values,
                q_values,
                n: a.n,
                trials: a.trials,
                vocab_size: vocab,
                ntp_mode: mode(a.mode),
                seed: a.seed,
            };
            let mut out = String::new();
            for score in [ScoreKind::Ars, ScoreKind::Log, ScoreKind::Ind(0.5), ScoreKind::Opt(0.1)] {
                let det = DetectorSpec::sum(score)?;
                let rule = ThresholdRule::default_for(&det)?;
                let csv = boundary_csv(&boundary_grid(&grid, &det, &rule)?);
                out.push_str(&prefix_column(&csv, "detector", &det.label(), out.is_empty()));
            }
            out
        }
        Suite::Efficiency => {
            if a.step.is_nan() || a.step <= 0.0 {
                return Err(CliError::Usage("--step must be positive".into()));
            }
            let count = ((0.9 - 0.01) / a.step).floor() as usize;
            let deltas: Vec<f64> = (0..=count).map(|i| 0.01 + a.step * i as f64).collect();
            rate_curve_csv(&rate_curve(&deltas, a.eps, DEFAULT_TOLERANCE)?, a.eps)
        }
        Suite::Gapcheck => {
            let dists = [
                NtpDist::new(vec![0.5, 0.5])?,
                NtpDist::new(vec![0.6, 0.4])?,
                NtpDist::new(vec![0.7, 0.2, 0.1])?,
            ];
            gap_csv(&entropy_gap_check(&dists, a.samples, 0.5, a.seed)?)
        }
        Suite::Tolerance => {
            let key = a.key.resolve()?;
            let vocab = a.vocab.unwrap_or(1000);
            let det = family(a, a.n)?.remove(0);
            let cal = mc_critical(&det, a.n, a.alpha, DEFAULT_REPS.min(a.trials.max(1000)), 1, a.seed)?;
            let cfg = ToleranceConfig {
                source: ToySource::new(vocab, 0.1, 0.5, a.seed)?,
                n: a.n,
                m: DEFAULT_WINDOW,
                kind: a.edit.into(),
                trials: a.trials,
                seed: a.seed,
            };
            manifest = manifest.extra("critical_value", json!(cal.critical_value));
            tolerance_csv(&tolerance_study(&cfg, &key, &cal.detector)?)
        }
    };
    write_artifact(&a.out, &csv)?;
    manifest.output(&a.out).write_next_to(&a.out)
}

// Adds a leading constant column; keeps the header only for the first block.
fn prefix_column(csv: &str, name: &str, value: &str, with_header: bool) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            if with_header {
                out.push_str(&format!("{name},{line}\n"));
            }
        } else {
            out.push_str(&format!("\"{value}\",{line}\n"));
        }
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))
}

