//! `msq`: build, detect and certify magic squares hidden in marked sets.
//!
//! Exit codes: 0 success, 2 when nothing of the requested form was found,
//! 1 on errors, 64 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use msq_core::detect::{self, AutocorrSignal, ExactSignal, HadamardSignal, SignalSource};
use msq_core::numbertheory;
use msq_core::protocol::{self, ProtocolError, ProtocolParams, Secret};
use msq_core::qsim;
use msq_core::squares::{construct_order_n, validate_square};
use msq_core::{MarkedSet, NoiseKind, NoiseSpec, Pattern3x3, ProgressionFamily};

const EXIT_NONE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "msq",
    version,
    about = "Magic squares as periodic patterns in marked sets"
)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "MSQ_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a magic square from n progressions of step k.
    Construct(ConstructArgs),
    /// Check whether a grid file is a magic square.
    Validate { file: PathBuf },
    /// Write a marked set (MSQSET01 format).
    Genset(GensetArgs),
    /// Exact QFT spectrum of a marked set, or sampled shot counts.
    Spectrum(SpectrumArgs),
    /// Sample QFT measurement outcomes.
    Sample {
        #[command(flatten)]
        input: SetInput,
        #[arg(long)]
        shots: u64,
    },
    /// QFT detection with continued fractions and verification.
    Detect(DetectArgs),
    /// Autocorrelation scan C(s).
    Autocorr(AutocorrArgs),
    /// Spacing recovery from the autocorrelation and verification.
    Recover(RecoverArgs),
    /// Threshold and bound for mixed-power 3×3 systems.
    Bound(BoundArgs),
    /// Absence certificate for magic squares of squares.
    Certify {
        #[command(flatten)]
        input: SetInput,
        #[arg(long)]
        n: usize,
    },
    /// Run the two-party reconstruction protocol.
    ProtocolDemo(ProtocolArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: i64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    starts: Vec<i64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<i64>,
    #[arg(long, value_delimiter = ',')]
    starts: Vec<i64>,
}

#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, value_enum)]
    noise: Option<NoiseChoice>,
    #[arg(long, default_value_t = 0.0)]
    density: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseChoice {
    Bernoulli,
    TargetDensity,
    SmallBias,
}

impl From<NoiseChoice> for NoiseKind {
    fn from(c: NoiseChoice) -> Self {
        match c {
            NoiseChoice::Bernoulli => NoiseKind::Bernoulli,
            NoiseChoice::TargetDensity => NoiseKind::TargetDensity,
            NoiseChoice::SmallBias => NoiseKind::SmallBias,
        }
    }
}

#[derive(Args)]
struct GensetArgs {
    #[arg(long)]
    q: Option<u32>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    preset: Preset,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Copy)]
#[group(multiple = false)]
struct Preset {
    /// 13 progressions of 13 terms, k = 5, starts 68i, q = 10, half the domain marked.
    #[arg(long)]
    fig_qftshots: bool,
    /// 6 progressions of 6 terms, k = 2, spacing 25, q = 8, Bernoulli noise 0.1.
    #[arg(long)]
    fig_autocorr: bool,
}

#[derive(Args)]
struct SetInput {
    /// Marked set file.
    #[arg(long)]
    set: Option<PathBuf>,
    #[command(flatten)]
    preset: Preset,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: SetInput,
    /// Sample this many shots instead of printing exact probabilities.
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    input: SetInput,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 10)]
    peaks: usize,
    #[arg(long, default_value_t = 64)]
    k_max: u64,
    #[arg(long, default_value_t = 32)]
    max_candidates: usize,
    /// One marked entry per progression.
    #[arg(long, value_delimiter = ',')]
    reps: Vec<i64>,
}

#[derive(Args)]
struct AutocorrArgs {
    #[command(flatten)]
    input: SetInput,
    #[arg(long, allow_hyphen_values = true)]
    s_min: Option<i64>,
    #[arg(long)]
    s_max: Option<i64>,
    /// Hadamard-test shots per shift; exact values when absent.
    #[arg(long)]
    shots: Option<u64>,
    /// Hill-climb the peak containing this shift instead of scanning.
    #[arg(long)]
    trace: Option<i64>,
    #[arg(long)]
    k: Option<i64>,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    input: SetInput,
    #[arg(long)]
    k: Option<i64>,
    #[arg(long)]
    n: Option<usize>,
    /// Hadamard-test shots per shift; 0 picks the default budget.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    s_max: Option<i64>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    z: u32,
    #[arg(long, default_value_t = numbertheory::DEFAULT_HORIZON)]
    horizon: u64,
    /// Also enumerate mixed-power squares with entries up to this cap.
    #[arg(long)]
    search_cap: Option<u64>,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long, default_value_t = 13)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: i64,
    /// Starts; defaults to 68i for the default order.
    #[arg(long, value_delimiter = ',')]
    starts: Vec<i64>,
    #[arg(long, default_value_t = 10)]
    q: u32,
    #[arg(long, default_value_t = 64)]
    bits: usize,
    #[arg(long, value_enum, default_value = "small-bias")]
    noise: NoiseChoice,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 40)]
    shots: u64,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long)]
    exact: bool,
    /// Withhold the representatives.
    #[arg(long)]
    no_reps: bool,
    /// Run over a loopback socket bound here, e.g. 127.0.0.1:0.
    #[arg(long)]
    tcp: Option<std::net::SocketAddr>,
    /// Write the JSON-lines transcript here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

fn qftshots_family() -> ProgressionFamily {
    ProgressionFamily::new(13, 5, (1..=13).map(|i| 68 * i).collect()).expect("preset family")
}

fn autocorr_family() -> ProgressionFamily {
    ProgressionFamily::equally_spaced(6, 2, 20, 25).expect("preset family")
}

/// Preset set plus its family, noise applied with `seed`.
fn preset_set(preset: Preset, seed: u64) -> Result<Option<(MarkedSet, ProgressionFamily)>> {
    let (family, q, kind, density) = if preset.fig_qftshots {
        (qftshots_family(), 10, NoiseKind::TargetDensity, 0.5)
    } else if preset.fig_autocorr {
        (autocorr_family(), 8, NoiseKind::Bernoulli, 0.1)
    } else {
        return Ok(None);
    };
    let set = MarkedSet::from_progressions(&family, q)?
        .apply_noise(&NoiseSpec::new(kind, density, seed)?)?;
    Ok(Some((set, family)))
}

fn load_set(input: &SetInput, seed: u64) -> Result<(MarkedSet, Option<ProgressionFamily>)> {
    if let Some((set, fam)) = preset_set(input.preset, seed)? {
        return Ok((set, Some(fam)));
    }
    let Some(path) = &input.set else {
        bail!("give --set FILE or a preset flag");
    };
    let set = MarkedSet::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((set, None))
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &Value) {
    emit(&(serde_json::to_string_pretty(v).expect("json values print") + "\n"));
}

fn parse_grid(text: &str) -> Result<Vec<Vec<i64>>> {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        let rows = match &v {
            Value::Array(_) => v.clone(),
            Value::Object(o) if o.contains_key("rows") => o["rows"].clone(),
            Value::Object(o) if o.contains_key("entries") => {
                let entries: Vec<i64> = serde_json::from_value(o["entries"].clone())?;
                let n = (entries.len() as f64).sqrt().round() as usize;
                return Ok(entries.chunks(n.max(1)).map(<[i64]>::to_vec).collect());
            }
            _ => bail!("JSON grid must be an array of rows or have \"rows\" or \"entries\""),
        };
        return Ok(serde_json::from_value(rows)?);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<i64>().with_context(|| format!("bad entry {t:?}")))
                .collect()
        })
        .collect()
}

fn family_from(args: &FamilyArgs) -> Result<ProgressionFamily> {
    let (Some(n), Some(k)) = (args.n, args.k) else {
        bail!("--n and --k are required without a preset");
    };
    Ok(ProgressionFamily::new(n, k, args.starts.clone())?)
}

fn construct(args: &ConstructArgs) -> Result<u8> {
    let square = if args.n == 3 {
        let fam = ProgressionFamily::new(3, args.k, args.starts.clone())?;
        let s = fam.starts();
        if s[2] - s[1] != s[1] - s[0] {
            bail!("order 3 needs equally spaced starts");
        }
        Pattern3x3::new(s[0], args.k, s[1] - s[0]).to_square()?
    } else {
        construct_order_n(&ProgressionFamily::new(
            args.n,
            args.k,
            args.starts.clone(),
        )?)?
    };
    match args.format {
        Format::Text => emit(&square.to_text()),
        Format::Csv => {
            for row in square.rows() {
                let cells: Vec<String> = row.iter().map(i64::to_string).collect();
                emit(&(cells.join(",") + "\n"));
            }
        }
        Format::Json => print_json(&json!({
            "order": square.order(),
            "magic_sum": square.magic_sum(),
            "rows": square.rows(),
        })),
    }
    Ok(0)
}

fn validate(path: &Path) -> Result<u8> {
    let grid = parse_grid(
        &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    let v = validate_square(&grid)?;
    print_json(&json!({ "is_magic": v.is_magic, "magic_sum": v.magic_sum }));
    Ok(if v.is_magic { 0 } else { EXIT_NONE })
}

fn genset(args: &GensetArgs, seed: u64) -> Result<u8> {
    let set = match preset_set(args.preset, seed)? {
        Some((set, _)) => set,
        None => {
            let q = args.q.context("--q is required without a preset")?;
            let fam = family_from(&args.family)?;
            let clean = MarkedSet::from_progressions(&fam, q)?;
            match args.noise.noise {
                Some(kind) => {
                    clean.apply_noise(&NoiseSpec::new(kind.into(), args.noise.density, seed)?)?
                }
                None => clean,
            }
        }
    };
    set.write_file(&args.out)?;
    print_json(&json!({
        "out": args.out,
        "q": set.q(),
        "marked": set.count(),
        "density": set.density(),
        "seed": seed,
    }));
    Ok(0)
}

fn spectrum(args: &SpectrumArgs, seed: u64) -> Result<u8> {
    let (set, _) = load_set(&args.input, seed)?;
    let spec = qsim::exact_spectrum(&set)?;
    eprintln!("seed={seed}");
    match args.shots {
        Some(shots) => emit(&qsim::sample(&spec, shots, seed)?.to_csv()),
        None => emit(&spec.to_csv()),
    }
    Ok(0)
}

fn sample(input: &SetInput, shots: u64, seed: u64) -> Result<u8> {
    let (set, _) = load_set(input, seed)?;
    let counts = qsim::sample(&qsim::exact_spectrum(&set)?, shots, seed)?;
    eprintln!("seed={seed}");
    emit(&counts.to_csv());
    Ok(0)
}

fn detect_cmd(args: &DetectArgs, seed: u64) -> Result<u8> {
    let (set, preset) = load_set(&args.input, seed)?;
    let n = args
        .n
        .or(preset.as_ref().map(|f| f.order()))
        .context("--n is required")?;
    let representatives = if !args.reps.is_empty() {
        Some(args.reps.clone())
    } else {
        preset.map(|f| {
            (0..f.order())
                .map(|j| f.progression(j).nth(f.order() / 2).expect("term"))
                .collect()
        })
    };
    let params = detect::Alg1Params {
        shots: args.shots,
        peaks: args.peaks,
        k_max: args.k_max,
        max_candidates: args.max_candidates,
        representatives,
        seed,
    };
    let report = detect::algorithm1(&set, n, &params)?;
    emit(&(report.to_json() + "\n"));
    Ok(if report.is_solution() { 0 } else { EXIT_NONE })
}

fn autocorr(args: &AutocorrArgs, seed: u64) -> Result<u8> {
    let (set, preset) = load_set(&args.input, seed)?;
    let b = set.domain_size();
    let mut exact = ExactSignal { set: &set };
    let mut estimated;
    let source: &mut dyn SignalSource = match args.shots {
        Some(shots) => {
            estimated = HadamardSignal {
                set: &set,
                shots,
                seed,
            };
            &mut estimated
        }
        None => &mut exact,
    };
    let k = args.k.or(preset.as_ref().map(|f| f.step())).unwrap_or(1);
    let n = preset.as_ref().map_or(0, |f| f.order());
    if let Some(start) = args.trace {
        return match detect::trace_peak(source, start, k) {
            Ok(t) => {
                print_json(
                    &json!({ "center": t.center, "evaluations": t.evaluations, "seed": seed }),
                );
                Ok(0)
            }
            Err(detect::DetectError::Ambiguous { points }) => {
                print_json(&json!({ "center": null, "evaluations": points, "seed": seed }));
                Ok(EXIT_NONE)
            }
            Err(e) => Err(e.into()),
        };
    }
    let lo = args.s_min.unwrap_or(-(b as i64 - 1));
    let hi = args.s_max.unwrap_or(b as i64 - 1);
    eprintln!("seed={seed}");
    emit(&AutocorrSignal::scan(source, n, k, b, lo..=hi).to_csv());
    Ok(0)
}

fn recover(args: &RecoverArgs, seed: u64) -> Result<u8> {
    let (set, preset) = load_set(&args.input, seed)?;
    let k = args
        .k
        .or(preset.as_ref().map(|f| f.step()))
        .context("--k is required")?;
    let n = args
        .n
        .or(preset.as_ref().map(|f| f.order()))
        .context("--n is required")?;
    let params = detect::Alg2Params {
        shots: args.shots,
        s_max: args.s_max,
        seed,
    };
    if n == 6 {
        // no order-6 construction: report the spacing alone
        return match detect::recover_spacing(&set, k, n, &params) {
            Ok(r) => {
                print_json(
                    &json!({ "spacing": r.d, "score": r.score, "square": null, "seed": seed }),
                );
                Ok(0)
            }
            Err(detect::DetectError::RecoveryFailed) => {
                print_json(
                    &json!({ "spacing": null, "message": detect::NO_STRUCTURED, "seed": seed }),
                );
                Ok(EXIT_NONE)
            }
            Err(e) => Err(e.into()),
        };
    }
    let report = detect::algorithm2(&set, k, n, &params)?;
    emit(&(report.to_json() + "\n"));
    Ok(if report.is_solution() { 0 } else { EXIT_NONE })
}

fn bound(args: &BoundArgs) -> Result<u8> {
    let b = numbertheory::compute_bound(args.z, args.horizon)?;
    let mut out = serde_json::to_value(&b)?;
    out["gap_at_t0"] = json!(numbertheory::gap(b.t0, b.z));
    if let Some(cap) = args.search_cap {
        let found = numbertheory::exhaustive_mixed_power_search(
            args.z,
            cap,
            numbertheory::DEFAULT_SEARCH_BUDGET,
        )?;
        out["search_cap"] = json!(cap);
        out["squares"] = json!(found.iter().map(|s| s.rows()).collect::<Vec<_>>());
    }
    print_json(&out);
    Ok(0)
}

fn certify(input: &SetInput, n: usize, seed: u64) -> Result<u8> {
    let (set, _) = load_set(input, seed)?;
    let cert = numbertheory::certify_absence_squares(&set, n)?;
    emit(&(serde_json::to_string_pretty(&cert)? + "\n"));
    Ok(0)
}

fn protocol_demo(args: &ProtocolArgs, seed: u64) -> Result<u8> {
    let starts = if args.starts.is_empty() {
        (1..=args.n as i64).map(|i| 68 * i).collect()
    } else {
        args.starts.clone()
    };
    let family = ProgressionFamily::new(args.n, args.k, starts)?;
    let bits: Vec<u8> = (0..args.bits as u64)
        .map(|i| (msq_core::rng::derive_seed(seed, 0x6d00 + i) & 1) as u8)
        .collect();
    let noise = (args.density > 0.0)
        .then(|| NoiseSpec::new(args.noise.into(), args.density, seed))
        .transpose()?;
    let secret = Secret::planted(family, args.q, noise.as_ref(), !args.no_reps, bits.clone())?;
    let params = ProtocolParams {
        shots_per_round: args.shots,
        max_rounds: args.rounds,
        exact_spectrum: args.exact,
        seed,
        ..ProtocolParams::default()
    };
    let result = match args.tcp {
        Some(addr) => protocol::run_protocol_tcp(&secret, &params, addr),
        None => protocol::run_protocol(&secret, &params),
    };
    match result {
        Ok(out) => {
            if let Some(path) = &args.transcript {
                fs::write(path, out.transcript.to_jsonl())?;
            }
            let matches = out.square == secret.square()?;
            print_json(&json!({
                "reconstructed": true,
                "square_matches_secret": matches,
                "bits_match": out.decoded == bits,
                "rounds": out.rounds,
                "frames": out.transcript.entries.len(),
                "autocorrelation_path": out.used_autocorrelation,
                "k": out.family.step(),
                "starts": out.family.starts(),
                "seed": seed,
            }));
            Ok(if matches && out.decoded == bits { 0 } else { 1 })
        }
        Err(ProtocolError::BudgetExhausted { rounds, transcript }) => {
            if let Some(path) = &args.transcript {
                fs::write(path, transcript.to_jsonl())?;
            }
            print_json(&json!({ "reconstructed": false, "rounds": rounds, "seed": seed }));
            Ok(EXIT_NONE)
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    match &cli.command {
        Command::Construct(a) => construct(a),
        Command::Validate { file } => validate(file),
        Command::Genset(a) => genset(a, seed),
        Command::Spectrum(a) => spectrum(a, seed),
        Command::Sample { input, shots } => sample(input, *shots, seed),
        Command::Detect(a) => detect_cmd(a, seed),
        Command::Autocorr(a) => autocorr(a, seed),
        Command::Recover(a) => recover(a, seed),
        Command::Bound(a) => bound(a),
        Command::Certify { input, n } => certify(input, *n, seed),
        Command::ProtocolDemo(a) => protocol_demo(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
