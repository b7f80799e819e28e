//! Synthetic byte sources whose entropy rate is known in closed form.
//!
//! All randomness comes from xoshiro256** seeded through splitmix64
//! (`Xoshiro256StarStar::seed_from_u64`), and every draw is specified down to the
//! bit so that another implementation can regenerate identical corpora:
//!
//! * bounded integers in `[0, n)`: rejection sampling, accepting `x < n * floor(2^64 / n)`
//!   and returning `x % n`;
//! * unit floats: `(x >> 11) * 2^-53`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serialize::SymbolStream;

pub const STATES: usize = 256;
pub const POWER_ITERATION_TOL: f64 = 1e-12;
pub const POWER_ITERATION_MAX: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("phase {phase}: base value {base} with offset {offset} leaves [0, 255]")]
    Clipping { phase: usize, base: u8, offset: i16 },
    #[error("invalid noise distribution: {0}")]
    InvalidNoise(String),
    #[error("invalid Markov specification: {0}")]
    InvalidMarkov(String),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("requested stream length must be at least 1")]
    ZeroLength,
}

fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

fn bounded(rng: &mut Xoshiro256StarStar, n: u64) -> u64 {
    debug_assert!(n > 0);
    let limit = n * (u64::MAX / n);
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % n;
        }
    }
}

fn unit(rng: &mut Xoshiro256StarStar) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// How an [`EntropyOracle`] value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Derivation {
    RowEntropyCirculant,
    NoiseEntropyPeriodic,
    PowerIterationGeneral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyOracle {
    /// Bits per symbol.
    pub entropy_rate_bpb: f64,
    pub derivation: Derivation,
}

/// One atom of the additive noise distribution: `offset` with probability `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseTerm {
    pub offset: i16,
    pub num: u32,
    pub den: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseDistribution {
    terms: Vec<NoiseTerm>,
}

impl NoiseDistribution {
    /// Probabilities must be positive and sum to exactly one; offsets must be distinct.
    pub fn new(terms: Vec<NoiseTerm>) -> Result<Self, SyntheticError> {
        if terms.is_empty() {
            return Err(SyntheticError::InvalidNoise("no terms".into()));
        }
        let mut offsets: Vec<i16> = terms.iter().map(|t| t.offset).collect();
        offsets.sort_unstable();
        offsets.dedup();
        if offsets.len() != terms.len() {
            return Err(SyntheticError::InvalidNoise("duplicate offset".into()));
        }
        if terms.iter().any(|t| t.num == 0 || t.den == 0 || t.num > t.den) {
            return Err(SyntheticError::InvalidNoise(
                "probabilities must be in (0, 1]".into(),
            ));
        }
        let dist = Self { terms };
        let (weights, denom) = dist.integer_weights()?;
        if weights.iter().sum::<u128>() != denom {
            return Err(SyntheticError::InvalidNoise(
                "probabilities do not sum to 1".into(),
            ));
        }
        Ok(dist)
    }

    /// The noiseless distribution (offset 0 with certainty).
    pub fn none() -> Self {
        Self {
            terms: vec![NoiseTerm {
                offset: 0,
                num: 1,
                den: 1,
            }],
        }
    }

    /// `{-1: 1/5, 0: 7/10, +1: 1/10}`, the distribution used by the bundled benchmarks.
    pub fn reference() -> Self {
        Self::new(vec![
            NoiseTerm { offset: -1, num: 1, den: 5 },
            NoiseTerm { offset: 0, num: 7, den: 10 },
            NoiseTerm { offset: 1, num: 1, den: 10 },
        ])
        .expect("reference noise is valid")
    }

    pub fn terms(&self) -> &[NoiseTerm] {
        &self.terms
    }

    /// Probabilities over a common denominator.
    fn integer_weights(&self) -> Result<(Vec<u128>, u128), SyntheticError> {
        fn gcd(a: u128, b: u128) -> u128 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let mut denom: u128 = 1;
        for t in &self.terms {
            let d = t.den as u128;
            denom = denom / gcd(denom, d) * d;
            if denom > u64::MAX as u128 {
                return Err(SyntheticError::InvalidNoise(
                    "common denominator too large".into(),
                ));
            }
        }
        let weights = self
            .terms
            .iter()
            .map(|t| t.num as u128 * (denom / t.den as u128))
            .collect();
        Ok((weights, denom))
    }

    fn min_offset(&self) -> i16 {
        self.terms.iter().map(|t| t.offset).min().unwrap_or(0)
    }

    fn max_offset(&self) -> i16 {
        self.terms.iter().map(|t| t.offset).max().unwrap_or(0)
    }

    /// `-sum q log2 q`.
    pub fn entropy(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| plogp(t.num as f64 / t.den as f64))
            .sum()
    }
}

/// `s_t = base[t mod period] + noise_t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicSpec {
    pub base: Vec<u8>,
    pub noise: NoiseDistribution,
}

impl PeriodicSpec {
    pub const DEFAULT_PERIOD: usize = 1000;

    pub fn new(base: Vec<u8>, noise: NoiseDistribution) -> Result<Self, SyntheticError> {
        let spec = Self { base, noise };
        spec.validate()?;
        Ok(spec)
    }

    /// A waveform of `period` bytes drawn uniformly from `[lo, hi]` with its own seed.
    pub fn random_base(
        period: usize,
        lo: u8,
        hi: u8,
        base_seed: u64,
        noise: NoiseDistribution,
    ) -> Result<Self, SyntheticError> {
        let mut r = rng(base_seed);
        let span = (hi as u64).saturating_sub(lo as u64) + 1;
        let base = (0..period).map(|_| lo + bounded(&mut r, span) as u8).collect();
        Self::new(base, noise)
    }

    /// Reference benchmark source: period 1000, base in `[8, 247]`, reference noise.
    pub fn reference() -> Self {
        Self::random_base(
            Self::DEFAULT_PERIOD,
            8,
            247,
            0x5eed_ba5e,
            NoiseDistribution::reference(),
        )
        .expect("reference periodic source is valid")
    }

    pub fn period(&self) -> usize {
        self.base.len()
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.base.is_empty() {
            return Err(SyntheticError::InvalidNoise("empty base waveform".into()));
        }
        let (lo, hi) = (self.noise.min_offset(), self.noise.max_offset());
        for (phase, &b) in self.base.iter().enumerate() {
            for offset in [lo, hi] {
                let v = b as i16 + offset;
                if !(0..=255).contains(&v) {
                    return Err(SyntheticError::Clipping {
                        phase,
                        base: b,
                        offset,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn gen_periodic(spec: &PeriodicSpec, n: usize, seed: u64) -> Result<SymbolStream, SyntheticError> {
    spec.validate()?;
    if n == 0 {
        return Err(SyntheticError::ZeroLength);
    }
    let (weights, denom) = spec.noise.integer_weights()?;
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0u128;
    for w in weights {
        acc += w;
        cdf.push(acc as u64);
    }
    let offsets: Vec<i16> = spec.noise.terms.iter().map(|t| t.offset).collect();
    let mut r = rng(seed);
    let period = spec.period();
    let single = offsets.len() == 1;
    let out = (0..n)
        .map(|t| {
            let offset = if single {
                offsets[0]
            } else {
                let u = bounded(&mut r, denom as u64);
                offsets[cdf.partition_point(|&c| c <= u)]
            };
            (spec.base[t % period] as i16 + offset) as u8
        })
        .collect();
    Ok(SymbolStream::new(out))
}

/// Entropy rate of a periodic source: the noise entropy, since the phase is known.
pub fn periodic_entropy(spec: &PeriodicSpec) -> EntropyOracle {
    EntropyOracle {
        entropy_rate_bpb: spec.noise.entropy(),
        derivation: Derivation::NoiseEntropyPeriodic,
    }
}

/// Circulant 256-state chain: stay with probability `p`, otherwise jump to a state at
/// wrap-around distance `d >= 1` with weight proportional to `1 / (1 + d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub self_num: u32,
    pub self_den: u32,
}

impl MarkovSpec {
    /// `p = num / den`, required to lie in `(0, 1]`.
    pub fn new(self_num: u32, self_den: u32) -> Result<Self, SyntheticError> {
        if self_num == 0 || self_den == 0 || self_num > self_den {
            return Err(SyntheticError::InvalidMarkov(format!(
                "self-transition mass {self_num}/{self_den} outside (0, 1]"
            )));
        }
        Ok(Self { self_num, self_den })
    }

    pub fn locality(&self) -> f64 {
        self.self_num as f64 / self.self_den as f64
    }

    /// Transition probabilities out of state 0; row `i` is this row rotated by `i`.
    pub fn row0(&self) -> [f64; STATES] {
        let p = self.locality();
        let weight = |j: usize| 1.0 / (1.0 + j.min(STATES - j) as f64);
        let norm: f64 = (1..STATES).map(weight).sum();
        let mut row = [0.0; STATES];
        row[0] = p;
        for (j, r) in row.iter_mut().enumerate().skip(1) {
            *r = (1.0 - p) * weight(j) / norm;
        }
        row
    }

    pub fn matrix(&self) -> TransitionMatrix {
        TransitionMatrix::circulant(&self.row0())
    }
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SyntheticError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(SyntheticError::InvalidMarkov("matrix must be square".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return Err(SyntheticError::InvalidMarkov(format!(
                    "row {i} is not a probability distribution"
                )));
            }
        }
        Ok(Self {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn circulant(row0: &[f64]) -> Self {
        let n = row0.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + (i + j) % n] = row0[j];
            }
        }
        Self { n, entries }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Power iteration from the uniform distribution until the L1 change drops below
    /// [`POWER_ITERATION_TOL`].
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, SyntheticError> {
        let n = self.n;
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..POWER_ITERATION_MAX {
            next.fill(0.0);
            for (i, &w) in pi.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (acc, &p) in next.iter_mut().zip(self.row(i)) {
                    *acc += w * p;
                }
            }
            let sum: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= sum);
            residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if residual < POWER_ITERATION_TOL {
                return Ok(pi);
            }
        }
        Err(SyntheticError::NonConvergence {
            iterations: POWER_ITERATION_MAX,
            residual,
        })
    }

    /// `sum_i pi_i H(row i)`.
    pub fn entropy_rate(&self) -> Result<EntropyOracle, SyntheticError> {
        let pi = self.stationary_distribution()?;
        let rate = pi
            .iter()
            .enumerate()
            .map(|(i, &w)| w * self.row(i).iter().map(|&p| plogp(p)).sum::<f64>())
            .sum();
        Ok(EntropyOracle {
            entropy_rate_bpb: rate,
            derivation: Derivation::PowerIterationGeneral,
        })
    }
}

/// Entropy rate of the circulant chain: its stationary law is uniform, so the rate
/// is the entropy of any single row.
pub fn markov_entropy(spec: &MarkovSpec) -> EntropyOracle {
    EntropyOracle {
        entropy_rate_bpb: spec.row0().iter().map(|&p| plogp(p)).sum(),
        derivation: Derivation::RowEntropyCirculant,
    }
}

/// `s_0` is the top byte of the first draw; each later state adds an inverse-CDF
/// sample from row 0 (mod 256).
pub fn gen_markov(spec: &MarkovSpec, n: usize, seed: u64) -> Result<SymbolStream, SyntheticError> {
    if n == 0 {
        return Err(SyntheticError::ZeroLength);
    }
    let row = spec.row0();
    let mut cdf = [0.0f64; STATES];
    let mut acc = 0.0;
    for (c, &p) in cdf.iter_mut().zip(&row) {
        acc += p;
        *c = acc;
    }
    let mut r = rng(seed);
    let mut state = (r.next_u64() >> 56) as u8;
    let mut out = Vec::with_capacity(n);
    out.push(state);
    for _ in 1..n {
        let u = unit(&mut r);
        let step = cdf.partition_point(|&c| c <= u).min(STATES - 1);
        state = state.wrapping_add(step as u8);
        out.push(state);
    }
    Ok(SymbolStream::new(out))
}
