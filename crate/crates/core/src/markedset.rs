//! Marked sets over the domain `{1..B}`, `B = 2^q`.
//!
//! Indices are 1-based at every public boundary and stored 0-based in a
//! packed word array. The on-disk format is the 8-byte magic `MSQSET01`,
//! one byte `q`, then `ceil(B/8)` payload bytes where index `x` lives in
//! byte `(x−1)/8`, bit `(x−1) mod 8`.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::squares::ProgressionFamily;

pub const MAGIC: &[u8; 8] = b"MSQSET01";
/// Largest supported `q`.
pub const MAX_Q: u32 = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkedSetError {
    #[error("q = {0} outside 1..={MAX_Q}")]
    QOutOfRange(u32),
    #[error("index {x} outside 1..={domain}")]
    Range { x: i64, domain: u64 },
    #[error("density {0} outside [0, 1]")]
    Density(f64),
    #[error("target count {target} is below the current count {current}")]
    DensityBelowCurrent { target: u64, current: u64 },
    #[error("bad set file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MarkedSetError>;

/// Black-box membership access to `f: {1..B} → {0,1}`.
pub trait MembershipOracle {
    fn domain_size(&self) -> u64;

    /// `f(x)`; false outside `1..=B`.
    fn query(&self, x: i64) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarkedSet {
    q: u32,
    words: Vec<u64>,
    seed: Option<u64>,
}

impl MarkedSet {
    pub fn empty(q: u32) -> Result<Self> {
        if q == 0 || q > MAX_Q {
            return Err(MarkedSetError::QOutOfRange(q));
        }
        let bits = 1usize << q;
        Ok(MarkedSet {
            q,
            words: vec![0; bits.div_ceil(64)],
            seed: None,
        })
    }

    pub fn from_indices(q: u32, xs: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut set = Self::empty(q)?;
        for x in xs {
            set.mark(x as i64)?;
        }
        Ok(set)
    }

    /// Marks exactly the `n²` elements of the family.
    pub fn from_progressions(family: &ProgressionFamily, q: u32) -> Result<Self> {
        let mut set = Self::empty(q)?;
        for x in family.elements() {
            set.mark(x)?;
        }
        Ok(set)
    }

    fn check(&self, x: i64) -> Result<usize> {
        if x < 1 || x as u64 > self.domain_size() {
            return Err(MarkedSetError::Range {
                x,
                domain: self.domain_size(),
            });
        }
        Ok(x as usize - 1)
    }

    fn mark(&mut self, x: i64) -> Result<()> {
        let i = self.check(x)?;
        self.words[i / 64] |= 1 << (i % 64);
        Ok(())
    }

    pub fn with_marked(mut self, xs: impl IntoIterator<Item = i64>) -> Result<Self> {
        for x in xs {
            self.mark(x)?;
        }
        Ok(self)
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn domain_size(&self) -> u64 {
        1 << self.q
    }

    /// Seed of the last noise pass, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Membership with range checking.
    pub fn membership(&self, x: i64) -> Result<bool> {
        let i = self.check(x)?;
        Ok(self.words[i / 64] >> (i % 64) & 1 == 1)
    }

    /// Membership that treats out-of-range indices as unmarked.
    pub fn contains(&self, x: u64) -> bool {
        self.membership(x as i64).unwrap_or(false)
    }

    /// Bit at 0-based position `i`.
    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.domain_size() as f64
    }

    /// Marked indices, ascending, 1-based.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as u64;
                w &= w - 1;
                Some(wi as u64 * 64 + b + 1)
            })
        })
    }

    /// ±1 phase pattern `(−1)^{f(x)}` over 0-based positions.
    pub fn phases(&self) -> Vec<f64> {
        (0..self.domain_size() as usize)
            .map(|i| if self.bit(i) { -1.0 } else { 1.0 })
            .collect()
    }

    /// Additionally marks every unmarked `x` for which `source(x)` is true.
    /// Any bias generator can be plugged in here; the built-in noise kinds
    /// use seeded Bernoulli draws.
    pub fn apply_bias_source(&self, mut source: impl FnMut(u64) -> bool) -> MarkedSet {
        let mut out = self.clone();
        for x in 1..=self.domain_size() {
            if !self.contains(x) && source(x) {
                out.words[(x as usize - 1) / 64] |= 1 << ((x - 1) % 64);
            }
        }
        out
    }

    /// Adds noise. Never clears a marked bit.
    pub fn apply_noise(&self, spec: &NoiseSpec) -> Result<MarkedSet> {
        spec.validate()?;
        let mut rng = rng::seeded(spec.seed);
        let mut out = match spec.kind {
            NoiseKind::TargetDensity => {
                let b = self.domain_size();
                let target = (spec.density * b as f64).round() as u64;
                let current = self.count();
                if target < current {
                    return Err(MarkedSetError::DensityBelowCurrent { target, current });
                }
                let zeros: Vec<u64> = (1..=b).filter(|&x| !self.contains(x)).collect();
                let mut out = self.clone();
                for pick in index::sample(&mut rng, zeros.len(), (target - current) as usize) {
                    let x = zeros[pick];
                    out.words[(x as usize - 1) / 64] |= 1 << ((x - 1) % 64);
                }
                out
            }
            NoiseKind::Bernoulli => self.apply_bias_source(|_| rng.random_bool(spec.density)),
            NoiseKind::SmallBias => {
                let mut stream = rng::seeded(rng::derive_seed(spec.seed, SMALL_BIAS_STREAM));
                self.apply_bias_source(|_| stream.random_bool(spec.density))
            }
        };
        out.seed = Some(spec.seed);
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = (self.domain_size() as usize).div_ceil(8);
        let mut out = Vec::with_capacity(9 + payload);
        out.extend_from_slice(MAGIC);
        out.push(self.q as u8);
        out.extend(
            self.words
                .iter()
                .flat_map(|w| w.to_le_bytes())
                .take(payload),
        );
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..8] != MAGIC {
            return Err(MarkedSetError::Format("missing MSQSET01 header".into()));
        }
        let q = u32::from(bytes[8]);
        let mut set = Self::empty(q)?;
        let payload = &bytes[9..];
        let want = (set.domain_size() as usize).div_ceil(8);
        if payload.len() != want {
            return Err(MarkedSetError::Format(format!(
                "expected {want} payload bytes for q={q}, found {}",
                payload.len()
            )));
        }
        if set.domain_size() < 8 && payload[0] >> set.domain_size() != 0 {
            return Err(MarkedSetError::Format("bits set beyond the domain".into()));
        }
        for (wi, chunk) in payload.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            set.words[wi] = u64::from_le_bytes(buf);
        }
        Ok(set)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| MarkedSetError::Io(e.to_string()))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| MarkedSetError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl MembershipOracle for MarkedSet {
    fn domain_size(&self) -> u64 {
        MarkedSet::domain_size(self)
    }

    fn query(&self, x: i64) -> bool {
        x >= 1 && self.contains(x as u64)
    }
}

/// Wraps an oracle and counts queries.
#[derive(Debug)]
pub struct CountingOracle<'a, O: ?Sized> {
    inner: &'a O,
    queries: AtomicU64,
}

impl<'a, O: MembershipOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        CountingOracle {
            inner,
            queries: AtomicU64::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl<O: MembershipOracle + ?Sized> MembershipOracle for CountingOracle<'_, O> {
    fn domain_size(&self) -> u64 {
        self.inner.domain_size()
    }

    fn query(&self, x: i64) -> bool {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.query(x)
    }
}

const SMALL_BIAS_STREAM: u64 = 0x5b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Mark each unmarked index independently with probability `density`.
    Bernoulli,
    /// Mark uniformly chosen zeros until exactly `round(density·B)` are set.
    TargetDensity,
    /// Low-density seeded noise on its own generator stream.
    SmallBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub density: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, density: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec {
            kind,
            density,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.density) {
            return Err(MarkedSetError::Density(self.density));
        }
        Ok(())
    }
}
