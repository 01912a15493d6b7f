//! Detection pipelines.
//!
//! [`algorithm1`] reads candidate steps `k` off the QFT spectrum of the
//! marked set with continued fractions, rebuilds the progressions by
//! membership probing and verifies the reconstructed square classically.
//! [`algorithm2`] recovers the spacing `D` of equally spaced progressions
//! from the autocorrelation `C(s) = |S ∩ (S − s)|`, exact or estimated by
//! Hadamard tests, then anchors the first start and rebuilds the square.
//!
//! For a clean equally spaced family, `C(qD + mk) = (n−|q|)(n−|m|)` and `C`
//! vanishes elsewhere, so the signal is a comb of triangular peaks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::markedset::{MarkedSet, MembershipOracle};
use crate::qsim::{self, QsimError};
use crate::rng;
use crate::squares::{
    construct_order_n, pattern3x3_scan, validate_square, MagicSquare, Pattern3x3,
    ProgressionFamily, SquareError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("order {0} is not supported")]
    UnsupportedOrder(usize),
    #[error("ambiguous peak neighbourhood: {points:?}")]
    Ambiguous { points: Vec<(i64, f64)> },
    #[error("no off-center autocorrelation peak found")]
    RecoveryFailed,
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Square(#[from] SquareError),
}

pub type Result<T> = std::result::Result<T, DetectError>;

pub const NONE_OF_FORM: &str = "No solution of the prescribed form found.";
pub const NO_STRUCTURED: &str = "No structured solution found.";

/// Convergents `(a, k)` of `r/Q`, in order. The leading `0/1` is dropped
/// unless `r = 0`.
pub fn convergents(r: u64, q_size: u64) -> Vec<(u64, u64)> {
    if r == 0 {
        return vec![(0, 1)];
    }
    let (mut num, mut den) = (r, q_size);
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut out = Vec::new();
    while den != 0 {
        let a = num / den;
        (num, den) = (den, num % den);
        let h = a * h1 + h0;
        let k = a * k1 + k0;
        (h0, h1, k0, k1) = (h1, h, k1, k);
        if h != 0 {
            out.push((h, k));
        }
    }
    out
}

/// Denominators of the convergents of `r/Q` that are at most `k_max`,
/// ascending and deduplicated.
pub fn continued_fraction_denominators(r: u64, q_size: u64, k_max: u64) -> Vec<u64> {
    convergents(r, q_size)
        .into_iter()
        .map(|(_, k)| k)
        .filter(|&k| k <= k_max)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// The `m` heaviest non-zero frequencies other than `0`; ties go to the
/// smaller frequency.
pub fn top_peaks(weights: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

fn marked<O: MembershipOracle + ?Sized>(set: &O, x: i64) -> bool {
    set.query(x)
}

fn full_progression<O: MembershipOracle + ?Sized>(set: &O, x: i64, k: i64, n: usize) -> bool {
    (0..n as i64).all(|i| set.query(x + i * k))
}

/// Rebuilds `n` marked progressions of step `k`.
///
/// With representatives, each one slides down along `±k` while the values
/// stay marked and the lowest start whose progression still contains the
/// representative is taken. Without, starts are scanned upwards and the
/// first `n` pairwise disjoint full progressions win.
pub fn verify_progressions<O: MembershipOracle + ?Sized>(
    set: &O,
    k: i64,
    n: usize,
    representatives: Option<&[i64]>,
) -> Option<ProgressionFamily> {
    if k < 1 || n == 0 {
        return None;
    }
    let span = (n as i64 - 1) * k;
    let mut starts = Vec::with_capacity(n);
    match representatives {
        Some(reps) => {
            for &r in reps {
                if !marked(set, r) {
                    return None;
                }
                let mut lo = r;
                while lo - k >= r - span && marked(set, lo - k) {
                    lo -= k;
                }
                let start = (0..)
                    .map(|i| lo + i * k)
                    .take_while(|&x| x <= r)
                    .find(|&x| full_progression(set, x, k, n))?;
                starts.push(start);
            }
        }
        None => {
            let b = set.domain_size() as i64;
            for x in 1..=b - span {
                let clash = starts
                    .iter()
                    .any(|&y: &i64| (x - y) % k == 0 && x - y <= span);
                if !clash && full_progression(set, x, k, n) {
                    starts.push(x);
                    if starts.len() == n {
                        break;
                    }
                }
            }
        }
    }
    starts.sort_unstable();
    ProgressionFamily::new(n, k, starts).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodCandidate {
    /// Spectral peak the candidate was read from (the heaviest one).
    pub frequency: usize,
    pub numerator: u64,
    pub denominator: u64,
    /// Summed weight of every peak yielding this denominator.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Solution,
    NoneOfForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub outcome: Outcome,
    pub message: String,
    pub k: Option<i64>,
    /// Spacing of the starts; set by the autocorrelation pipeline.
    pub spacing: Option<i64>,
    pub family: Option<ProgressionFamily>,
    pub square: Option<MagicSquare>,
    pub candidates: Vec<PeriodCandidate>,
    pub examined: usize,
    pub shots: Option<u64>,
    pub seed: u64,
}

impl DetectionReport {
    pub fn is_solution(&self) -> bool {
        self.outcome == Outcome::Solution
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alg1Params {
    /// `None` reads the exact spectrum.
    pub shots: Option<u64>,
    pub peaks: usize,
    pub k_max: u64,
    pub max_candidates: usize,
    pub representatives: Option<Vec<i64>>,
    pub seed: u64,
}

impl Default for Alg1Params {
    fn default() -> Self {
        Alg1Params {
            shots: None,
            peaks: 10,
            k_max: 64,
            max_candidates: 32,
            representatives: None,
            seed: 0,
        }
    }
}

fn check_order(n: usize) -> Result<()> {
    if n < 3 || n == 6 {
        return Err(DetectError::UnsupportedOrder(n));
    }
    Ok(())
}

/// Candidate steps from a weighted spectrum, best first.
pub fn period_candidates(weights: &[f64], m: usize, k_max: u64) -> Vec<PeriodCandidate> {
    let q_size = weights.len() as u64;
    let mut by_den: BTreeMap<u64, PeriodCandidate> = BTreeMap::new();
    for r in top_peaks(weights, m) {
        for (a, d) in convergents(r as u64, q_size) {
            if d > k_max {
                continue;
            }
            by_den
                .entry(d)
                .and_modify(|c| c.score += weights[r])
                .or_insert(PeriodCandidate {
                    frequency: r,
                    numerator: a,
                    denominator: d,
                    score: weights[r],
                });
        }
    }
    let mut out: Vec<PeriodCandidate> = by_den.into_values().collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.denominator.cmp(&b.denominator))
    });
    out
}

/// Every entry marked and the square magic.
pub fn verify_square<O: MembershipOracle + ?Sized>(set: &O, square: &MagicSquare) -> bool {
    square.entries().iter().all(|&x| marked(set, x))
        && validate_square(&square.rows()).is_ok_and(|v| v.is_magic)
}

fn reconstruct(
    set: &MarkedSet,
    k: i64,
    n: usize,
    reps: Option<&[i64]>,
) -> Option<(ProgressionFamily, MagicSquare)> {
    match reps {
        None if n == 3 => scan_order3(set, k),
        _ => reconstruct_with(set, k, n, reps),
    }
}

fn scan_order3(set: &MarkedSet, k: i64) -> Option<(ProgressionFamily, MagicSquare)> {
    pattern3x3_scan(set).into_iter().find_map(|p| {
        let other = if p.inner_step == k {
            p.outer_step
        } else if p.outer_step == k {
            p.inner_step
        } else {
            return None;
        };
        let fam = ProgressionFamily::equally_spaced(3, k, p.base, other).ok()?;
        Some((fam, p.to_square().ok()?))
    })
}

/// Reconstruction through membership queries alone.
pub fn reconstruct_with<O: MembershipOracle + ?Sized>(
    set: &O,
    k: i64,
    n: usize,
    reps: Option<&[i64]>,
) -> Option<(ProgressionFamily, MagicSquare)> {
    let fam = verify_progressions(set, k, n, reps)?;
    let square = if n == 3 {
        let s = fam.starts();
        let spacing = s[1] - s[0];
        if s[2] - s[1] != spacing {
            return None;
        }
        Pattern3x3::new(s[0], k, spacing).to_square().ok()?
    } else {
        construct_order_n(&fam).ok()?
    };
    Some((fam, square))
}

/// QFT detection, continued fractions, reconstruction and verification.
pub fn algorithm1(set: &MarkedSet, n: usize, params: &Alg1Params) -> Result<DetectionReport> {
    check_order(n)?;
    let spectrum = qsim::exact_spectrum(set)?;
    let weights: Vec<f64> = match params.shots {
        None => spectrum.probabilities().to_vec(),
        Some(shots) => qsim::sample(&spectrum, shots, params.seed)?
            .counts()
            .iter()
            .map(|&c| c as f64)
            .collect(),
    };
    let mut candidates = period_candidates(&weights, params.peaks, params.k_max);
    candidates.truncate(params.max_candidates);
    let reps = params.representatives.as_deref();
    let mut report = DetectionReport {
        outcome: Outcome::NoneOfForm,
        message: NONE_OF_FORM.into(),
        k: None,
        spacing: None,
        family: None,
        square: None,
        candidates: Vec::new(),
        examined: 0,
        shots: params.shots,
        seed: params.seed,
    };
    for cand in candidates {
        report.examined += 1;
        let k = cand.denominator as i64;
        report.candidates.push(cand);
        if let Some((family, square)) = reconstruct(set, k, n, reps) {
            if verify_square(set, &square) {
                report.outcome = Outcome::Solution;
                report.message = format!("solution with k = {k}");
                report.k = Some(k);
                report.family = Some(family);
                report.square = Some(square);
                break;
            }
        }
    }
    Ok(report)
}

/// `|S ∩ (S − s)|`: marked `x` with `x + s` also marked.
pub fn autocorrelation(set: &MarkedSet, s: i64) -> u64 {
    set.iter().filter(|&x| marked(set, x as i64 + s)).count() as u64
}

/// A source of autocorrelation values, exact or estimated.
pub trait SignalSource {
    fn eval(&mut self, s: i64) -> f64;
}

pub struct ExactSignal<'a> {
    pub set: &'a MarkedSet,
}

impl SignalSource for ExactSignal<'_> {
    fn eval(&mut self, s: i64) -> f64 {
        autocorrelation(self.set, s) as f64
    }
}

/// `C(s)` from a Hadamard-test estimate at `shots` shots per shift, using
/// `d(s) = B(1 − ⟨Z⟩)/2` and `C(s) = (|S| + |S_s| − d(s))/2`.
pub struct HadamardSignal<'a> {
    pub set: &'a MarkedSet,
    pub shots: u64,
    pub seed: u64,
}

impl SignalSource for HadamardSignal<'_> {
    fn eval(&mut self, s: i64) -> f64 {
        let b = self.set.domain_size() as f64;
        let seed = rng::derive_seed(self.seed, s as u64);
        let out =
            qsim::hadamard_test(self.set, s, self.shots, seed).expect("set fits the simulator");
        let z = out.estimate.unwrap_or(out.exact);
        let shifted = qsim::shifted_indicator(self.set, s).count() as f64;
        (self.set.count() as f64 + shifted - b * (1.0 - z) / 2.0) / 2.0
    }
}

/// Adds a bounded perturbation `Δ(s)` to another source.
pub struct PerturbedSignal<S, F> {
    pub inner: S,
    pub delta: F,
}

impl<S: SignalSource, F: FnMut(i64) -> f64> SignalSource for PerturbedSignal<S, F> {
    fn eval(&mut self, s: i64) -> f64 {
        self.inner.eval(s) + (self.delta)(s)
    }
}

/// Precomputed values; shifts outside the table read as zero.
impl SignalSource for BTreeMap<i64, f64> {
    fn eval(&mut self, s: i64) -> f64 {
        self.get(&s).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrSignal {
    pub n: usize,
    pub k: i64,
    pub b: u64,
    pub points: Vec<(i64, f64)>,
}

impl AutocorrSignal {
    pub fn scan(
        source: &mut dyn SignalSource,
        n: usize,
        k: i64,
        b: u64,
        shifts: impl IntoIterator<Item = i64>,
    ) -> Self {
        AutocorrSignal {
            n,
            k,
            b,
            points: shifts.into_iter().map(|s| (s, source.eval(s))).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,value\n");
        for (s, v) in &self.points {
            writeln!(out, "{s},{v}").expect("writing to a String");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakTrace {
    pub center: i64,
    pub evaluations: Vec<(i64, f64)>,
}

/// Hill-climbs a triangular peak in steps of `k` from `start`.
pub fn trace_peak(source: &mut dyn SignalSource, start: i64, k: i64) -> Result<PeakTrace> {
    let mut evaluations = Vec::new();
    let mut cache = BTreeMap::new();
    let mut at = |s: i64, evaluations: &mut Vec<(i64, f64)>| {
        *cache.entry(s).or_insert_with(|| {
            let v = source.eval(s);
            evaluations.push((s, v));
            v
        })
    };
    let mut x = start;
    loop {
        let here = at(x, &mut evaluations);
        let left = at(x - k, &mut evaluations);
        let right = at(x + k, &mut evaluations);
        if left < here && right < here {
            return Ok(PeakTrace {
                center: x,
                evaluations,
            });
        }
        if right > here && right >= left {
            x += k;
        } else if left > here {
            x -= k;
        } else {
            return Err(DetectError::Ambiguous {
                points: evaluations,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    pub d: i64,
    pub score: f64,
    pub signal: AutocorrSignal,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alg2Params {
    /// `None` evaluates `C(s)` exactly; `Some(0)` picks
    /// [`default_hadamard_shots`].
    pub shots: Option<u64>,
    /// Largest shift scanned; defaults to `B − 1`.
    pub s_max: Option<i64>,
    pub seed: u64,
}

/// `⌈9/ε²⌉` with `ε = 2(n−1)/B`, half the change of `⟨Z⟩` over one step
/// down the `q = 1` peak.
pub fn default_hadamard_shots(n: usize, b: u64) -> u64 {
    let eps = 2.0 * (n as f64 - 1.0) / b as f64;
    (9.0 / (eps * eps)).ceil() as u64
}

/// Recovers `D` from a scan of shifts `1..=s_max`: every candidate `D′`
/// beyond `2(n−1)k` is scored against the ideal comb
/// `Σ (n−q)(n−|m|)·C(qD′ + mk)` over `1 ≤ q < n`, `|m| < n`, with the
/// median off-center value subtracted as background.
pub fn recover_spacing_with(
    source: &mut dyn SignalSource,
    n: usize,
    k: i64,
    b: u64,
    s_max: i64,
) -> Result<Recovery> {
    let signal = AutocorrSignal::scan(source, n, k, b, 1..=s_max);
    let value = |s: i64| signal.points[(s - 1) as usize].1;
    let reach = (n as i64 - 1) * k;
    let mut off: Vec<f64> = (reach + 1..=s_max).map(value).collect();
    if off.is_empty() {
        return Err(DetectError::RecoveryFailed);
    }
    off.sort_by(f64::total_cmp);
    let baseline = off[off.len() / 2];
    let ni = n as i64;
    let mut best: Option<(i64, f64)> = None;
    for d in 2 * reach + 1..=s_max {
        let mut score = 0.0;
        for q in 1..ni {
            for m in -(ni - 1)..ni {
                let s = q * d + m * k;
                if (1..=s_max).contains(&s) {
                    score += ((ni - q) * (ni - m.abs())) as f64 * (value(s) - baseline);
                }
            }
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((d, score));
        }
    }
    match best {
        Some((d, score)) if score > 0.0 => Ok(Recovery { d, score, signal }),
        _ => Err(DetectError::RecoveryFailed),
    }
}

pub fn recover_spacing(set: &MarkedSet, k: i64, n: usize, params: &Alg2Params) -> Result<Recovery> {
    let b = set.domain_size();
    let s_max = params.s_max.unwrap_or(b as i64 - 1);
    match params.shots {
        None => recover_spacing_with(&mut ExactSignal { set }, n, k, b, s_max),
        Some(shots) => {
            let shots = if shots == 0 {
                default_hadamard_shots(n, b)
            } else {
                shots
            };
            let mut src = HadamardSignal {
                set,
                shots,
                seed: params.seed,
            };
            recover_spacing_with(&mut src, n, k, b, s_max)
        }
    }
}

/// Leftmost `x` with the whole grid `{x + jD + ik}` marked.
pub fn anchor_first_start(set: &MarkedSet, k: i64, d: i64, n: usize) -> Option<i64> {
    let b = set.domain_size() as i64;
    let ni = n as i64;
    (1..=b - (ni - 1) * (d + k)).find(|&x| (0..ni).all(|j| full_progression(set, x + j * d, k, n)))
}

/// Spacing recovery, anchoring, reconstruction and verification.
pub fn algorithm2(
    set: &MarkedSet,
    k: i64,
    n: usize,
    params: &Alg2Params,
) -> Result<DetectionReport> {
    check_order(n)?;
    let mut report = DetectionReport {
        outcome: Outcome::NoneOfForm,
        message: NO_STRUCTURED.into(),
        k: Some(k),
        spacing: None,
        family: None,
        square: None,
        candidates: Vec::new(),
        examined: 0,
        shots: params.shots,
        seed: params.seed,
    };
    let d = match recover_spacing(set, k, n, params) {
        Ok(r) => r.d,
        Err(DetectError::RecoveryFailed) => return Ok(report),
        Err(e) => return Err(e),
    };
    report.spacing = Some(d);
    report.examined = 1;
    let Some(first) = anchor_first_start(set, k, d, n) else {
        return Ok(report);
    };
    let Ok(family) = ProgressionFamily::equally_spaced(n, k, first, d) else {
        return Ok(report);
    };
    let square = if n == 3 {
        Pattern3x3::new(first, k, d).to_square()
    } else {
        construct_order_n(&family)
    };
    if let Ok(square) = square {
        if verify_square(set, &square) {
            report.outcome = Outcome::Solution;
            report.message = format!("solution with k = {k}, D = {d}");
            report.family = Some(family);
            report.square = Some(square);
        }
    }
    Ok(report)
}
