//! Pivotal statistics and the laws they follow.
//!
//! For the Gumbel-max scheme the pivot at position `t` is `Y_t = U_{t, w_t}`,
//! the keyed uniform of the observed token. Without a watermark `Y_t ~ U(0,1)`;
//! a watermarked token drawn from `P` has
//! `F_P(r) = P(Y <= r) = sum_w P_w r^(1/P_w)`. The p-value is `1 - Y_t`.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::prf::{prf_uniform, Key, WindowCtx};
use crate::tokensource::NtpDist;
use crate::watermark::TokenSeq;

const BISECTION_TOL: f64 = 1e-12;
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;
const TINY: f64 = f64::EPSILON / 2.0;

/// Pivots `y` and p-values `p = 1 - y`, both strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PivotSeries {
    y: Vec<f64>,
    p: Vec<f64>,
    first_position: usize,
}

impl PivotSeries {
    pub fn from_pivots(y: Vec<f64>) -> Result<Self> {
        Self::with_offset(y, 0)
    }

    fn with_offset(y: Vec<f64>, first_position: usize) -> Result<Self> {
        if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return invalid(format!("pivot {bad} outside (0,1)"));
        }
        let p = y.iter().map(|v| 1.0 - v).collect();
        Ok(PivotSeries {
            y,
            p,
            first_position,
        })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Sequence position of the first pivot.
    pub fn first_position(&self) -> usize {
        self.first_position
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len().max(1) as f64
    }

    /// CSV with header `t,y,p`, where `t` is the sequence position.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y,p\n");
        for (i, (y, p)) in self.y.iter().zip(&self.p).enumerate() {
            let _ = writeln!(out, "{},{},{}", self.first_position + i, y, p);
        }
        out
    }
}

/// Pivots of every position `t >= m` of `seq` under `key`.
pub fn pivot_series(seq: &TokenSeq, key: &Key, vocab_size: usize) -> Result<PivotSeries> {
    let m = seq.m();
    if let Some(max) = seq.max_token() {
        if max as usize >= vocab_size {
            return invalid(format!("token id {max} >= vocab size {vocab_size}"));
        }
    }
    let tokens = seq.tokens();
    let y = (m..tokens.len())
        .map(|t| {
            let ctx = WindowCtx::new(&tokens[t - m..t], vocab_size)?;
            prf_uniform(key, &ctx, tokens[t])
        })
        .collect::<Result<Vec<_>>>()?;
    PivotSeries::with_offset(y, m)
}

/// The watermarked pivot law for one distribution, with equal
/// probabilities grouped so M2-style vectors evaluate in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct AltLaw {
    // (probability, multiplicity), probability > 0, descending
    groups: Vec<(f64, f64)>,
}

impl AltLaw {
    pub fn new(dist: &NtpDist) -> Self {
        let mut probs: Vec<f64> = dist.probs().iter().copied().filter(|&p| p > 0.0).collect();
        probs.sort_by(|a, b| b.total_cmp(a));
        let mut groups: Vec<(f64, f64)> = Vec::new();
        for p in probs {
            match groups.last_mut() {
                Some((q, c)) if *q == p => *c += 1.0,
                _ => groups.push((p, 1.0)),
            }
        }
        AltLaw { groups }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= 1.0 {
            return 1.0;
        }
        let lr = r.ln();
        self.groups
            .iter()
            .map(|&(p, c)| c * p * (lr / p).exp())
            .sum::<f64>()
            .min(1.0)
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            return self.pdf_edge(r);
        }
        let lr = r.ln();
        self.groups
            .iter()
            .map(|&(p, c)| c * (lr * (1.0 / p - 1.0)).exp())
            .sum()
    }

    fn pdf_edge(&self, r: f64) -> f64 {
        if r >= 1.0 {
            self.groups.iter().map(|&(_, c)| c).sum()
        } else {
            // only a point mass at probability 1 has r^0 = 1 near zero
            self.groups
                .iter()
                .filter(|&&(p, _)| p >= 1.0)
                .map(|&(_, c)| c)
                .sum()
        }
    }

    /// `log pdf(r)` evaluated as a log-sum-exp, stable for tiny `r`.
    pub fn log_pdf(&self, r: f64) -> f64 {
        let lr = r.ln();
        let exps: Vec<f64> = self
            .groups
            .iter()
            .map(|&(p, c)| c.ln() + lr * (1.0 / p - 1.0))
            .collect();
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return top;
        }
        top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln()
    }

    /// Inverse CDF by bisection to absolute tolerance 1e-12.
    pub fn sample(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).clamp(TINY, ONE_MINUS_ULP)
    }
}

/// `F_P(r) = sum_{w: P_w > 0} P_w r^(1/P_w)`.
pub fn alt_cdf(dist: &NtpDist, r: f64) -> f64 {
    AltLaw::new(dist).cdf(r)
}

/// `f_P(r) = sum_{w: P_w > 0} r^(1/P_w - 1)`.
pub fn alt_pdf(dist: &NtpDist, r: f64) -> f64 {
    AltLaw::new(dist).pdf(r)
}

/// Draw from `F_P` by inverting at `u`.
pub fn alt_sample(dist: &NtpDist, u: f64) -> f64 {
    AltLaw::new(dist).sample(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokensource::{make_m1, make_m2};
    use crate::rng::{open_unit, substream};

    #[test]
    fn cdf_examples() {
        let half = make_m2(0.5, 2).unwrap();
        assert!((alt_cdf(&half, 0.5) - 0.25).abs() < 1e-15);
        assert_eq!(alt_cdf(&half, 1.0), 1.0);
        assert_eq!(alt_cdf(&half, 0.0), 0.0);
        assert!((alt_pdf(&half, 0.5) - 1.0).abs() < 1e-15);
        assert!((alt_pdf(&half, 0.3) - 0.6).abs() < 1e-15);
        let degenerate = NtpDist::new(vec![1.0, 0.0]).unwrap();
        for r in [0.1, 0.5, 0.9] {
            assert!((alt_cdf(&degenerate, r) - r).abs() < 1e-15);
            assert!((alt_pdf(&degenerate, r) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_lies_below_identity() {
        let mut rng = substream(5, "cdf", &[]);
        for _ in 0..50 {
            let d = make_m1(0.05 + 0.9 * open_unit(&mut rng), 8, &mut rng).unwrap();
            let law = AltLaw::new(&d);
            let mut prev = 0.0;
            for i in 1..100 {
                let r = i as f64 / 100.0;
                let f = law.cdf(r);
                assert!(f <= r + 1e-15);
                assert!(f >= prev);
                prev = f;
            }
            assert!(law.cdf(0.5) < 0.5);
        }
    }

    #[test]
    fn sample_inverts_cdf() {
        let half = make_m2(0.5, 2).unwrap();
        assert!((alt_sample(&half, 0.25) - 0.5).abs() < 1e-11);
        let d = make_m2(0.3, 6).unwrap();
        let law = AltLaw::new(&d);
        for i in 1..200 {
            let u = i as f64 / 200.0;
            assert!((law.cdf(law.sample(u)) - u).abs() < 1e-10);
            let r = u;
            assert!((law.sample(law.cdf(r)) - r).abs() < 1e-10);
        }
    }

    #[test]
    fn grouping_matches_direct_sum() {
        let d = make_m2(0.37, 9).unwrap();
        let law = AltLaw::new(&d);
        for r in [0.01_f64, 0.2, 0.77, 0.999] {
            let direct: f64 = d.probs().iter().map(|&p| p * r.powf(1.0 / p)).sum();
            assert!((law.cdf(r) - direct).abs() < 1e-14);
            let direct_pdf: f64 = d.probs().iter().map(|&p| r.powf(1.0 / p - 1.0)).sum();
            assert!((law.pdf(r) - direct_pdf).abs() < 1e-12);
            assert!((law.log_pdf(r) - direct_pdf.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn series_invariants() {
        let s = PivotSeries::from_pivots(vec![0.1, 0.5, 0.9]).unwrap();
        for (y, p) in s.y().iter().zip(s.p()) {
            assert_eq!(*p, 1.0 - *y);
        }
        assert!(PivotSeries::from_pivots(vec![0.0]).is_err());
        assert!(PivotSeries::from_pivots(vec![1.0]).is_err());
        assert_eq!(s.to_csv().lines().next(), Some("t,y,p"));
        assert_eq!(s.to_csv().lines().count(), 4);
    }

    #[test]
    fn pivot_series_rejects_vocab_overflow() {
        let key = Key::new(b"k".to_vec()).unwrap();
        let seq = TokenSeq::from_prompt(vec![0, 1, 2, 9], 2).unwrap();
        assert!(pivot_series(&seq, &key, 5).is_err());
        let ok = pivot_series(&seq, &key, 10).unwrap();
        assert_eq!(ok.n(), 2);
        assert_eq!(ok.first_position(), 2);
    }
}
