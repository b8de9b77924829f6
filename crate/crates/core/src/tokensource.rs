//! Next-token probability vectors: the synthetic M1/M2 constructors, the
//! least-favorable distribution for a given regularity, and a small seeded
//! autoregressive source used to run generation end to end.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::splitmix64;

const SUM_TOL: f64 = 1e-12;

/// A next-token probability vector over vocabulary indices `0..V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NtpDist {
    probs: Vec<f64>,
}

impl NtpDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return invalid(format!("distribution needs >= 2 entries, got {}", probs.len()));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return invalid(format!("probability {bad} is not a finite nonnegative number"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(NtpDist { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for NtpDist {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NtpDist::new(v)
    }
}

impl From<NtpDist> for Vec<f64> {
    fn from(d: NtpDist) -> Vec<f64> {
        d.probs
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("regularity delta must lie in (0,1), got {delta}"));
    }
    Ok(())
}

fn check_vocab(vocab_size: usize) -> Result<()> {
    if vocab_size < 2 {
        return invalid(format!("vocab size must be >= 2, got {vocab_size}"));
    }
    Ok(())
}

/// `(1-Δ, Δ/(V-1), ..., Δ/(V-1))`.
pub fn make_m2(delta: f64, vocab_size: usize) -> Result<NtpDist> {
    check_delta(delta)?;
    check_vocab(vocab_size)?;
    let mut probs = vec![delta / (vocab_size - 1) as f64; vocab_size];
    probs[0] = 1.0 - delta;
    NtpDist::new(probs)
}

/// Top entry `1-Δ` at index 0, Zipf tail `∝ (i + b)^(-a)` on indices `1..V`.
pub fn make_m1_with(delta: f64, vocab_size: usize, a: f64, b: f64) -> Result<NtpDist> {
    check_delta(delta)?;
    check_vocab(vocab_size)?;
    if !(a > 0.0 && b > 0.0) {
        return invalid(format!("zipf parameters must be positive, got a={a}, b={b}"));
    }
    let mut probs = Vec::with_capacity(vocab_size);
    probs.push(1.0 - delta);
    probs.extend((1..vocab_size).map(|i| (i as f64 + b).powf(-a)));
    let norm: f64 = probs[1..].iter().sum();
    for p in &mut probs[1..] {
        *p *= delta / norm;
    }
    NtpDist::new(probs)
}

/// M1 with `a ~ U(0.95, 1.5)` and `b ~ U(0.01, 0.1)` drawn from `rng`.
pub fn make_m1<R: Rng + ?Sized>(delta: f64, vocab_size: usize, rng: &mut R) -> Result<NtpDist> {
    let a = rng.gen_range(0.95..1.5);
    let b = rng.gen_range(0.01..0.1);
    make_m1_with(delta, vocab_size, a, b)
}

/// Least-favorable Δ-regular distribution: `⌊1/(1-Δ)⌋` atoms of mass `1-Δ`
/// and one remainder atom (dropped when it is zero).
pub fn least_favorable(delta: f64) -> Result<NtpDist> {
    check_delta(delta)?;
    let top = 1.0 - delta;
    // 1/(1-Δ) may land a hair below an integer, e.g. Δ = 2/3.
    let k = (1.0 / top * (1.0 + 1e-12)).floor() as usize;
    let remainder = (1.0 - top * k as f64).max(0.0);
    let mut probs = vec![top; k];
    if remainder > SUM_TOL {
        probs.push(remainder);
    }
    if probs.len() == 1 {
        // Only possible when Δ is within rounding of 0; keep V >= 2.
        probs.push(0.0);
    }
    NtpDist::new(probs)
}

/// Δ(P) = 1 - max_w P_w.
pub fn delta_of(dist: &NtpDist) -> f64 {
    1.0 - dist.max_prob()
}

/// Shannon entropy in nats.
pub fn entropy_of(dist: &NtpDist) -> f64 {
    dist.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Stand-in language model: the next distribution is M2-shaped with a
/// regularity and a top token chosen by hashing `(seed, last token)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySource {
    pub vocab_size: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub seed: u64,
}

impl ToySource {
    pub fn new(vocab_size: usize, delta_min: f64, delta_max: f64, seed: u64) -> Result<Self> {
        check_vocab(vocab_size)?;
        if vocab_size > u32::MAX as usize {
            return invalid("vocab size exceeds u32 range");
        }
        if !(delta_min > 0.0 && delta_min <= delta_max && delta_max < 1.0) {
            return invalid(format!(
                "need 0 < delta_min <= delta_max < 1, got [{delta_min}, {delta_max}]"
            ));
        }
        Ok(ToySource {
            vocab_size,
            delta_min,
            delta_max,
            seed,
        })
    }

    /// Source with a single regularity level.
    pub fn fixed(vocab_size: usize, delta: f64, seed: u64) -> Result<Self> {
        ToySource::new(vocab_size, delta, delta, seed)
    }
}

/// The toy source's next-token distribution given the history so far.
pub fn toy_next_dist(source: &ToySource, history: &[u32]) -> NtpDist {
    let last = history.last().map_or(0, |&t| u64::from(t) + 1);
    let h = splitmix64(source.seed ^ splitmix64(last));
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    let delta = (source.delta_min + (source.delta_max - source.delta_min) * u)
        .clamp(source.delta_min, source.delta_max);
    let top = (splitmix64(h) % source.vocab_size as u64) as usize;
    let v = source.vocab_size;
    let mut probs = vec![delta / (v - 1) as f64; v];
    probs[top] = 1.0 - delta;
    NtpDist { probs }
}
