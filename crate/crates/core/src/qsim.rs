//! State-vector simulation of the detection circuits.
//!
//! The phase oracle is applied directly as `(−1)^{f(x)}`; compute/uncompute
//! through an ancilla leaves the same state, so the ancilla is never built.
//! The QFT uses `ω = e^{+2πi/Q}` with `Q^{−1/2}` scaling, evaluated by an
//! FFT in `O(Q log Q)`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Binomial;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::markedset::MarkedSet;
use crate::rng;

pub const DEFAULT_MAX_Q: u32 = 20;
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsimError {
    #[error("q = {q} outside 1..={max}")]
    Resource { q: u32, max: u32 },
    #[error("state has q = {state} but the set has q = {set}")]
    Shape { state: u32, set: u32 },
    #[error("amplitude count {0} is not a power of two")]
    Length(usize),
    #[error("state norm {0} differs from 1")]
    Norm(f64),
    #[error("at least one shot is required")]
    NoShots,
}

pub type Result<T> = std::result::Result<T, QsimError>;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    q: u32,
    amps: Vec<Complex64>,
}

/// `2^{−q/2}` on every basis state, for `1 ≤ q ≤` [`DEFAULT_MAX_Q`].
pub fn uniform_state(q: u32) -> Result<StateVector> {
    uniform_state_bounded(q, DEFAULT_MAX_Q)
}

pub fn uniform_state_bounded(q: u32, max_q: u32) -> Result<StateVector> {
    if q == 0 || q > max_q {
        return Err(QsimError::Resource { q, max: max_q });
    }
    let len = 1usize << q;
    let a = Complex64::new((len as f64).sqrt().recip(), 0.0);
    Ok(StateVector {
        q,
        amps: vec![a; len],
    })
}

impl StateVector {
    /// Computational basis state `|x⟩`, `x` 0-based.
    pub fn basis(q: u32, x: usize) -> Result<Self> {
        if q == 0 || q > DEFAULT_MAX_Q {
            return Err(QsimError::Resource {
                q,
                max: DEFAULT_MAX_Q,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << q];
        amps[x] = Complex64::new(1.0, 0.0);
        Ok(StateVector { q, amps })
    }

    /// Checks the length is a power of two and the norm is 1 within `tol`.
    pub fn from_amplitudes(amps: Vec<Complex64>, tol: f64) -> Result<Self> {
        if amps.len() < 2 || !amps.len().is_power_of_two() {
            return Err(QsimError::Length(amps.len()));
        }
        let s = StateVector {
            q: amps.len().trailing_zeros(),
            amps,
        };
        let norm = s.norm();
        if (norm - 1.0).abs() > tol {
            return Err(QsimError::Norm(norm));
        }
        Ok(s)
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps
            .iter()
            .map(Complex64::norm_sqr)
            .sum::<f64>()
            .sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(Complex64::norm_sqr).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// One computational-basis measurement, 0-based outcome.
    pub fn measure(&self, rng: &mut rng::SeededRng) -> usize {
        let dist = WeightedIndex::new(self.probabilities()).expect("normalised state");
        dist.sample(rng)
    }
}

/// Negates the amplitude of every marked basis state.
pub fn apply_phase_oracle(state: &StateVector, set: &MarkedSet) -> Result<StateVector> {
    if state.q != set.q() {
        return Err(QsimError::Shape {
            state: state.q,
            set: set.q(),
        });
    }
    let amps = state
        .amps
        .iter()
        .enumerate()
        .map(|(i, &a)| if set.bit(i) { -a } else { a })
        .collect();
    Ok(StateVector { q: state.q, amps })
}

/// `out_k = Q^{−1/2} Σ_x e^{2πi·xk/Q} amp_x`.
pub fn qft(state: &StateVector) -> StateVector {
    let len = state.amps.len();
    let mut buf = state.amps.clone();
    // rustfft's inverse transform carries the e^{+2πi xk/N} kernel, unscaled
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let scale = (len as f64).sqrt().recip();
    for a in &mut buf {
        *a *= scale;
    }
    StateVector {
        q: state.q,
        amps: buf,
    }
}

/// Exact outcome distribution after uniform state, phase oracle and QFT.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    q: u32,
    probs: Vec<f64>,
}

impl Spectrum {
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 || !probs.len().is_power_of_two() {
            return Err(QsimError::Length(probs.len()));
        }
        Ok(Spectrum {
            q: probs.len().trailing_zeros(),
            probs,
        })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,probability\n");
        for (k, p) in self.probs.iter().enumerate() {
            writeln!(out, "{k},{p:.12e}").expect("string write");
        }
        out
    }
}

/// `p_k = |Q^{−1} Σ_x (−1)^{f(x)} ω^{xk}|²`.
pub fn exact_spectrum(set: &MarkedSet) -> Result<Spectrum> {
    let state = apply_phase_oracle(&uniform_state(set.q())?, set)?;
    Ok(Spectrum {
        q: set.q(),
        probs: qft(&state).probabilities(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShotCounts {
    q: u32,
    counts: Vec<u64>,
    shots: u64,
    seed: u64,
}

impl ShotCounts {
    /// Tallies 0-based outcomes.
    pub fn from_outcomes(q: u32, outcomes: &[usize], seed: u64) -> Self {
        let mut counts = vec![0; 1 << q];
        for &k in outcomes {
            counts[k] += 1;
        }
        ShotCounts {
            q,
            counts,
            shots: outcomes.len() as u64,
            seed,
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rows for outcomes observed at least once.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,count\n");
        for (k, &c) in self.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
            writeln!(out, "{k},{c}").expect("string write");
        }
        out
    }
}

/// Independent categorical draws from the spectrum.
pub fn sample(spectrum: &Spectrum, shots: u64, seed: u64) -> Result<ShotCounts> {
    if shots == 0 {
        return Err(QsimError::NoShots);
    }
    let dist = WeightedIndex::new(&spectrum.probs).expect("non-negative spectrum with mass");
    let mut rng = rng::seeded(seed);
    let mut counts = vec![0; spectrum.size()];
    for _ in 0..shots {
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(ShotCounts {
        q: spectrum.q,
        counts,
        shots,
        seed,
    })
}

/// Out-of-range handling for shifted indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ShiftMode {
    /// `f_s(x) = 0` when `x + s` leaves `1..=B`.
    #[default]
    Truncate,
    /// Indices wrap modulo `B`.
    Cyclic,
}

/// `f_s(x) = f(x + s)`, truncated at the domain edges.
pub fn shifted_indicator(set: &MarkedSet, s: i64) -> MarkedSet {
    shifted_indicator_with(set, s, ShiftMode::Truncate)
}

pub fn shifted_indicator_with(set: &MarkedSet, s: i64, mode: ShiftMode) -> MarkedSet {
    let b = set.domain_size() as i64;
    let moved = set.iter().filter_map(|y| {
        let x = y as i64 - s;
        match mode {
            ShiftMode::Truncate => (1..=b).contains(&x).then_some(x),
            ShiftMode::Cyclic => Some((x - 1).rem_euclid(b) + 1),
        }
    });
    MarkedSet::empty(set.q())
        .and_then(|e| e.with_marked(moved))
        .expect("shifted indices stay in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HadamardOutcome {
    /// `Re⟨ψ|U_f U_f^{(s)}|ψ⟩`.
    pub exact: f64,
    /// `(#0 − #1)/shots`; `None` for zero shots.
    pub estimate: Option<f64>,
    pub shots: u64,
}

/// Hadamard test on the uniform state with `U = U_f U_{f_s}`.
pub fn hadamard_test(set: &MarkedSet, s: i64, shots: u64, seed: u64) -> Result<HadamardOutcome> {
    let psi = uniform_state(set.q())?;
    let shifted = shifted_indicator(set, s);
    let phi = apply_phase_oracle(&apply_phase_oracle(&psi, &shifted)?, set)?;
    let exact = psi.inner(&phi).re.clamp(-1.0, 1.0);
    Ok(HadamardOutcome {
        exact,
        estimate: estimate_from_exact(exact, shots, seed),
        shots,
    })
}

/// Samples the control-qubit outcomes: `P(0) = (1 + exact)/2`.
pub fn estimate_from_exact(exact: f64, shots: u64, seed: u64) -> Option<f64> {
    if shots == 0 {
        return None;
    }
    let p0 = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
    let zeros = Binomial::new(shots, p0)
        .expect("probability in [0, 1]")
        .sample(&mut rng::seeded(seed));
    Some((2.0 * zeros as f64 - shots as f64) / shots as f64)
}
