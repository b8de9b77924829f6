//! Gumbel-max watermarked generation.
//!
//! At each step the decoder picks `argmax_w log(U_w) / P_w` where `U` is the
//! keyed uniform vector for the current `m`-token window. With repeated
//! context masking, a window that already occurred earlier in the same
//! sequence is not watermarked; the token is sampled from `P_t` with an
//! independent seeded stream instead.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prf::{prf_vector, Key, WindowCtx};
use crate::rng::{open_unit, substream, StreamRng};
use crate::tokensource::{toy_next_dist, NtpDist, ToySource};

/// Where a token came from. Diagnostics only; detectors never read it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Watermarked,
    Sampled,
    Prompt,
    Edited,
}

impl Provenance {
    pub fn as_char(self) -> char {
        match self {
            Provenance::Watermarked => 'W',
            Provenance::Sampled => 'S',
            Provenance::Prompt => 'P',
            Provenance::Edited => 'E',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'W' => Ok(Provenance::Watermarked),
            'S' => Ok(Provenance::Sampled),
            'P' => Ok(Provenance::Prompt),
            'E' => Ok(Provenance::Edited),
            other => invalid(format!("unknown provenance flag {other:?}")),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_char(self.as_char())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = char::deserialize(d)?;
        Provenance::from_char(c).map_err(serde::de::Error::custom)
    }
}

/// Token ids with per-position provenance and the window size used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTokenSeq")]
pub struct TokenSeq {
    tokens: Vec<u32>,
    provenance: Vec<Provenance>,
    m: usize,
}

#[derive(Deserialize)]
struct RawTokenSeq {
    tokens: Vec<u32>,
    provenance: Vec<Provenance>,
    m: usize,
}

impl TryFrom<RawTokenSeq> for TokenSeq {
    type Error = Error;
    fn try_from(raw: RawTokenSeq) -> Result<Self> {
        TokenSeq::new(raw.tokens, raw.provenance, raw.m)
    }
}

impl TokenSeq {
    pub fn new(tokens: Vec<u32>, provenance: Vec<Provenance>, m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("window size m must be >= 1");
        }
        if tokens.len() != provenance.len() {
            return invalid(format!(
                "{} tokens but {} provenance flags",
                tokens.len(),
                provenance.len()
            ));
        }
        if provenance
            .iter()
            .take(m)
            .any(|&p| p == Provenance::Watermarked)
        {
            return invalid("the first m positions cannot be watermarked");
        }
        Ok(TokenSeq {
            tokens,
            provenance,
            m,
        })
    }

    /// Plain text with every position flagged as prompt.
    pub fn from_prompt(tokens: Vec<u32>, m: usize) -> Result<Self> {
        let provenance = vec![Provenance::Prompt; tokens.len()];
        TokenSeq::new(tokens, provenance, m)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Length of the leading run of prompt positions.
    pub fn prompt_len(&self) -> usize {
        self.provenance
            .iter()
            .take_while(|&&p| p == Provenance::Prompt)
            .count()
    }

    pub fn max_token(&self) -> Option<u32> {
        self.tokens.iter().copied().max()
    }

    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == which).count()
    }

    /// The first `len` positions (the whole sequence if it is shorter).
    pub fn truncated(&self, len: usize) -> TokenSeq {
        let len = len.min(self.len());
        TokenSeq {
            tokens: self.tokens[..len].to_vec(),
            provenance: self.provenance[..len].to_vec(),
            m: self.m,
        }
    }

    pub(crate) fn from_parts_unchecked(
        tokens: Vec<u32>,
        provenance: Vec<Provenance>,
        m: usize,
    ) -> TokenSeq {
        debug_assert_eq!(tokens.len(), provenance.len());
        TokenSeq {
            tokens,
            provenance,
            m,
        }
    }
}

/// Generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub masking: bool,
    /// Seed of the multinomial fallback stream.
    pub seed: u64,
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return invalid(format!("need n >= 1 and m >= 1, got n={}, m={}", self.n, self.m));
        }
        Ok(())
    }
}

/// The Gumbel-max decoder: `argmax_{w: P_w > 0} log(xi_w) / P_w`, lowest index on ties.
pub fn gumbel_decode(dist: &NtpDist, xi: &[f64]) -> Result<u32> {
    let probs = dist.probs();
    if xi.len() != probs.len() {
        return invalid(format!(
            "uniform vector has length {}, distribution {}",
            xi.len(),
            probs.len()
        ));
    }
    if let Some(bad) = xi.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
        return invalid(format!("uniform {bad} outside (0,1)"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (w, (&p, &u)) in probs.iter().zip(xi).enumerate() {
        if p <= 0.0 {
            continue;
        }
        let score = u.ln() / p;
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((w, score)),
        }
    }
    best.map(|(w, _)| w as u32)
        .ok_or_else(|| Error::Invariant("distribution has no positive mass".into()))
}

/// Inverse-CDF multinomial draw.
pub fn sample_multinomial(dist: &NtpDist, rng: &mut StreamRng) -> u32 {
    let probs = dist.probs();
    let target = open_unit(rng) * probs.iter().sum::<f64>();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (w, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = w;
        }
        cum += p;
        if cum > target && p > 0.0 {
            return w as u32;
        }
    }
    last_positive as u32
}

fn check_prompt(prompt: &[u32], m: usize, vocab_size: usize) -> Result<()> {
    if prompt.len() < m {
        return invalid(format!("prompt has {} tokens, need at least m = {m}", prompt.len()));
    }
    if let Some(&bad) = prompt.iter().find(|&&t| t as usize >= vocab_size) {
        return invalid(format!("prompt token {bad} >= vocab size {vocab_size}"));
    }
    Ok(())
}

/// Watermarked autoregressive generation from a toy source.
pub fn generate(source: &ToySource, key: &Key, prompt: &[u32], cfg: &GenConfig) -> Result<TokenSeq> {
    cfg.validate()?;
    let m = cfg.m;
    let v = source.vocab_size;
    check_prompt(prompt, m, v)?;

    let mut tokens = Vec::with_capacity(prompt.len() + cfg.n);
    tokens.extend_from_slice(prompt);
    let mut provenance = vec![Provenance::Prompt; prompt.len()];
    provenance.reserve(cfg.n);

    // Contexts of prompt positions t >= m count as already seen.
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    if cfg.masking {
        for t in m..prompt.len() {
            seen.insert(prompt[t - m..t].to_vec());
        }
    }
    let mut fallback = substream(cfg.seed, "fallback", &[]);

    for _ in 0..cfg.n {
        let len = tokens.len();
        let dist = toy_next_dist(source, &tokens);
        let window = &tokens[len - m..];
        let repeated = cfg.masking && !seen.insert(window.to_vec());
        let (token, flag) = if repeated {
            (sample_multinomial(&dist, &mut fallback), Provenance::Sampled)
        } else {
            let ctx = WindowCtx::new(window, v)?;
            let xi = prf_vector(key, &ctx, v)?;
            (gumbel_decode(&dist, &xi)?, Provenance::Watermarked)
        };
        tokens.push(token);
        provenance.push(flag);
    }
    TokenSeq::new(tokens, provenance, m)
}

/// Unwatermarked control text: plain multinomial sampling, no key involved.
pub fn generate_null(source: &ToySource, prompt: &[u32], cfg: &GenConfig) -> Result<TokenSeq> {
    cfg.validate()?;
    check_prompt(prompt, cfg.m, source.vocab_size)?;
    let mut tokens = prompt.to_vec();
    let mut provenance = vec![Provenance::Prompt; prompt.len()];
    let mut fallback = substream(cfg.seed, "fallback", &[]);
    for _ in 0..cfg.n {
        let dist = toy_next_dist(source, &tokens);
        tokens.push(sample_multinomial(&dist, &mut fallback));
        provenance.push(Provenance::Sampled);
    }
    TokenSeq::new(tokens, provenance, cfg.m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokensource::make_m2;

    fn key() -> Key {
        Key::new(b"unit-test-key".to_vec()).unwrap()
    }

    #[test]
    fn decode_degenerate_and_worked_example() {
        let degenerate = NtpDist::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(gumbel_decode(&degenerate, &[0.01, 0.99, 0.98]).unwrap(), 0);
        let half = make_m2(0.5, 2).unwrap();
        assert_eq!(gumbel_decode(&half, &[0.9, 0.2]).unwrap(), 0);
        assert_eq!(gumbel_decode(&half, &[0.2, 0.9]).unwrap(), 1);
    }

    #[test]
    fn decode_ties_go_to_lowest_index() {
        let half = make_m2(0.5, 2).unwrap();
        assert_eq!(gumbel_decode(&half, &[0.5, 0.5]).unwrap(), 0);
    }

    #[test]
    fn decode_rejects_bad_input() {
        let half = make_m2(0.5, 2).unwrap();
        assert!(gumbel_decode(&half, &[0.5]).is_err());
        assert!(gumbel_decode(&half, &[0.0, 0.5]).is_err());
        assert!(gumbel_decode(&half, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn generate_without_masking_watermarks_everything() {
        let src = ToySource::fixed(30, 0.3, 4).unwrap();
        let cfg = GenConfig { n: 80, m: 5, masking: false, seed: 1 };
        let seq = generate(&src, &key(), &[1, 2, 3, 4, 5], &cfg).unwrap();
        assert_eq!(seq.len(), 85);
        assert_eq!(seq.prompt_len(), 5);
        assert_eq!(seq.count(Provenance::Watermarked), 80);
    }

    #[test]
    fn generate_is_deterministic() {
        let src = ToySource::new(30, 0.1, 0.5, 4).unwrap();
        let cfg = GenConfig { n: 60, m: 3, masking: true, seed: 8 };
        let a = generate(&src, &key(), &[0, 1, 2], &cfg).unwrap();
        let b = generate(&src, &key(), &[0, 1, 2], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masking_kicks_in_on_repeated_windows() {
        // Two-token vocabulary: a 5-window must repeat within 50 steps.
        let src = ToySource::fixed(2, 0.3, 2).unwrap();
        let cfg = GenConfig { n: 50, m: 5, masking: true, seed: 3 };
        let seq = generate(&src, &key(), &[0, 1, 0, 1, 1], &cfg).unwrap();
        assert!(seq.count(Provenance::Sampled) >= 1);
        // Each watermarked position used a window never seen before it.
        let mut seen = HashSet::new();
        for t in 5..seq.len() {
            let w = seq.tokens()[t - 5..t].to_vec();
            let fresh = seen.insert(w);
            assert_eq!(fresh, seq.provenance()[t] == Provenance::Watermarked);
        }
    }

    #[test]
    fn null_generation_never_watermarks() {
        let src = ToySource::new(30, 0.1, 0.5, 4).unwrap();
        let cfg = GenConfig { n: 100, m: 5, masking: true, seed: 5 };
        let seq = generate_null(&src, &[1, 2, 3, 4, 5], &cfg).unwrap();
        assert_eq!(seq.count(Provenance::Watermarked), 0);
        assert_eq!(seq.count(Provenance::Sampled), 100);
        assert_eq!(seq, generate_null(&src, &[1, 2, 3, 4, 5], &cfg).unwrap());
    }

    #[test]
    fn short_prompt_is_rejected() {
        let src = ToySource::fixed(10, 0.3, 0).unwrap();
        let cfg = GenConfig { n: 10, m: 5, masking: true, seed: 0 };
        assert!(generate(&src, &key(), &[1, 2], &cfg).is_err());
        assert!(generate_null(&src, &[1, 2], &cfg).is_err());
    }

    #[test]
    fn tokenseq_json_shape() {
        let seq = TokenSeq::new(
            vec![1, 2, 3],
            vec![Provenance::Prompt, Provenance::Prompt, Provenance::Watermarked],
            2,
        )
        .unwrap();
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(json, r#"{"tokens":[1,2,3],"provenance":["P","P","W"],"m":2}"#);
        let back: TokenSeq = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
        let bad = r#"{"tokens":[1,2,3],"provenance":["W","P","P"],"m":2}"#;
        assert!(serde_json::from_str::<TokenSeq>(bad).is_err());
    }
}
