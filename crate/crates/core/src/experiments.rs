//! Synthetic studies on mixture alternatives.
//!
//! A trial draws `n` null pivots `U(0,1)`, then overwrites the first
//! `ceil(n eps)` of them with draws from `F_{P_t}` where `eps = n^-p` and the
//! regularity is `Delta = n^-q`. The untouched draws double as the null
//! companion, so null statistics do not depend on `(p, q)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{empirical_quantile, tradeoff_curve};
use crate::detectors::{loglog_threshold, null_moments, DetectorKind, DetectorSpec, ScoreKind};
use crate::edits::{tolerance_limit, EditKind, EditPlan, ToleranceResult};
use crate::error::{invalid, Result};
use crate::pivotal::{pivot_series, AltLaw, PivotSeries};
use crate::prf::Key;
use crate::rng::{open_unit, substream, StreamRng};
use crate::tokensource::{make_m1, make_m2, NtpDist, ToySource};
use crate::watermark::{generate, GenConfig, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NtpMode {
    M1,
    M2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub vocab_size: usize,
    pub ntp_mode: NtpMode,
    pub trials: usize,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn epsilon(&self) -> f64 {
        (self.n as f64).powf(-self.p)
    }

    pub fn delta(&self) -> f64 {
        (self.n as f64).powf(-self.q)
    }

    /// `ceil(n eps)` with a guard against float round-up.
    pub fn replaced(&self) -> usize {
        let k = (self.n as f64 * self.epsilon() - 1e-9).ceil().max(0.0) as usize;
        k.min(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return invalid(format!("n must be at least 3, got {}", self.n));
        }
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) {
            return invalid(format!("p, q must lie in [0,1], got ({}, {})", self.p, self.q));
        }
        if self.vocab_size < 2 {
            return invalid("vocab size must be at least 2");
        }
        let v = self.vocab_size as f64;
        if 1.0 - self.delta() < 1.0 / v {
            return invalid(format!(
                "q = {} too small: 1 - n^-q must be at least 1/V = {}",
                self.q,
                1.0 / v
            ));
        }
        Ok(())
    }
}

/// Inclusive grid of `k >= 2` equally spaced points from `a` to `b`.
pub fn linspace(a: f64, b: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return invalid(format!("grid needs at least 2 points, got {k}"));
    }
    let step = (b - a) / (k - 1) as f64;
    Ok((0..k).map(|i| if i == k - 1 { b } else { a + i as f64 * step }).collect())
}

/// One mixture trial: the alternative series and its null companion.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraw {
    pub alt: PivotSeries,
    pub null: PivotSeries,
}

enum Alt {
    Fixed(AltLaw),
    PerEntry { delta: f64, vocab: usize },
}

impl Alt {
    fn new(cfg: &MixtureConfig) -> Result<Self> {
        Ok(match cfg.ntp_mode {
            NtpMode::M2 => Alt::Fixed(AltLaw::new(&make_m2(cfg.delta(), cfg.vocab_size)?)),
            NtpMode::M1 => Alt::PerEntry {
                delta: cfg.delta(),
                vocab: cfg.vocab_size,
            },
        })
    }

    fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        match self {
            Alt::Fixed(law) => Ok(law.sample(open_unit(rng))),
            Alt::PerEntry { delta, vocab } => {
                let dist: NtpDist = make_m1(*delta, *vocab, rng)?;
                Ok(compose_sample(&dist, rng))
            }
        }
    }
}

/// Exact draw from `F_P` by composition: pick `w ~ P`, return `U^(P_w)`.
/// Linear in `V`, against `O(V)` per bisection step for inversion.
pub fn compose_sample(dist: &NtpDist, rng: &mut StreamRng) -> f64 {
    let probs = dist.probs();
    let u = open_unit(rng);
    let mut acc = 0.0;
    let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (w, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            pick = w;
            break;
        }
    }
    open_unit(rng).powf(probs[pick])
}

fn draw_trial(cfg: &MixtureConfig, alt: &Alt, trial: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = substream(cfg.seed, "mixture", &[trial]);
    let null: Vec<f64> = (0..cfg.n).map(|_| open_unit(&mut rng)).collect();
    let mut mixed = null.clone();
    for slot in mixed.iter_mut().take(cfg.replaced()) {
        *slot = alt.draw(&mut rng)?;
    }
    Ok((mixed, null))
}

/// Mixture series for trial `trial` of `cfg`.
pub fn sample_mixture(cfg: &MixtureConfig, trial: u64) -> Result<MixtureDraw> {
    cfg.validate()?;
    let alt = Alt::new(cfg)?;
    let (mixed, null) = draw_trial(cfg, &alt, trial)?;
    Ok(MixtureDraw {
        alt: PivotSeries::from_pivots(mixed)?,
        null: PivotSeries::from_pivots(null)?,
    })
}

/// `trials` statistics under the null and under the mixture.
pub fn simulate_statistics(cfg: &MixtureConfig, detector: &DetectorSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let alt = Alt::new(cfg)?;
    let eval = detector.evaluator()?;
    let pairs: Vec<(f64, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (mixed, null) = draw_trial(cfg, &alt, trial)?;
            Ok((eval.statistic(&null)?, eval.statistic(&mixed)?))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Histogram samples for one detector. Tr-GoF statistics are reported as
/// `log(n S_n^+(s))`; HC and sum statistics as they are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    pub detector: DetectorSpec,
    pub null: Vec<f64>,
    pub alt: Vec<f64>,
    pub alpha: f64,
    pub critical_value: f64,
    pub power: f64,
}

fn display_scale(detector: &DetectorSpec, stat: f64) -> f64 {
    match detector.kind {
        DetectorKind::TrGoF { .. } => stat.ln(),
        _ => stat,
    }
}

/// Null and mixture samples per detector; power is the share of mixture
/// samples at or above the empirical `(1 - alpha)` null quantile.
pub fn histogram_study(cfg: &MixtureConfig, detectors: &[DetectorSpec], alpha: f64) -> Result<Vec<HistogramResult>> {
    detectors
        .iter()
        .map(|det| {
            let (null, alt) = simulate_statistics(cfg, det)?;
            let null: Vec<f64> = null.into_iter().map(|s| display_scale(det, s)).collect();
            let alt: Vec<f64> = alt.into_iter().map(|s| display_scale(det, s)).collect();
            let critical_value = empirical_quantile(&mut null.clone(), alpha)?;
            let power = alt.iter().filter(|&&s| s >= critical_value).count() as f64 / alt.len() as f64;
            Ok(HistogramResult {
                detector: *det,
                null,
                alt,
                alpha,
                critical_value,
                power,
            })
        })
        .collect()
}

/// Raw samples as CSV `detector,hypothesis,value`.
pub fn histogram_csv(results: &[HistogramResult]) -> String {
    let mut out = String::from("detector,hypothesis,value\n");
    for r in results {
        let label = r.detector.label();
        for v in &r.null {
            let _ = writeln!(out, "\"{label}\",H0,{v}");
        }
        for v in &r.alt {
            let _ = writeln!(out, "\"{label}\",H1,{v}");
        }
    }
    out
}

/// How candidate critical values are parameterized in a boundary sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// Tr-GoF: reject when `log(n S_n^+) >= C`.
    LogStatistic(Vec<f64>),
    /// HC: reject when `HC_n^+ >= sqrt(2 (1 + delta) log log n)`.
    LogLogDelta(Vec<f64>),
    /// Sum rules: reject when `sum h >= n E0 h + C sqrt(n) log n`.
    SumOffset(Vec<f64>),
}

impl ThresholdRule {
    /// The default sweep for a detector family.
    pub fn default_for(detector: &DetectorSpec) -> Result<Self> {
        Ok(match detector.kind {
            DetectorKind::TrGoF { .. } => ThresholdRule::LogStatistic(linspace(0.0, 30.0, 1000)?),
            DetectorKind::Hc { .. } => ThresholdRule::LogLogDelta(linspace(0.0, 4.0, 21)?),
            DetectorKind::Sum(score) => {
                let (a, b) = match score {
                    ScoreKind::Ars => (8.0, 60.0),
                    ScoreKind::Log => (-20.0, 0.0),
                    ScoreKind::Ind(_) | ScoreKind::Opt(_) => (-10.0, 10.0),
                };
                ThresholdRule::SumOffset(linspace(a, b, 1000)?)
            }
        })
    }

    /// Candidate critical values on the detector's statistic scale.
    pub fn native_thresholds(&self, detector: &DetectorSpec, n: usize) -> Result<Vec<f64>> {
        match (self, detector.kind) {
            (ThresholdRule::LogStatistic(cs), DetectorKind::TrGoF { .. }) => Ok(cs.iter().map(|c| c.exp()).collect()),
            (ThresholdRule::LogLogDelta(ds), DetectorKind::Hc { .. }) => ds
                .iter()
                .map(|&d| Ok((2.0 * loglog_threshold(n, d)?).sqrt()))
                .collect(),
            (ThresholdRule::SumOffset(cs), DetectorKind::Sum(score)) => {
                let (mean, _) = null_moments(score)?;
                let nf = n as f64;
                Ok(cs.iter().map(|c| nf * mean + c * nf.sqrt() * nf.ln()).collect())
            }
            _ => invalid("threshold rule does not fit the detector family"),
        }
    }
}

/// `alpha_hat + beta_hat` for the rule "reject when statistic >= tau",
/// given both samples sorted ascending.
fn error_sum(null_sorted: &[f64], alt_sorted: &[f64], tau: f64) -> f64 {
    let below0 = null_sorted.partition_point(|&s| s < tau);
    let below1 = alt_sorted.partition_point(|&s| s < tau);
    let alpha = (null_sorted.len() - below0) as f64 / null_sorted.len() as f64;
    let beta = below1 as f64 / alt_sorted.len() as f64;
    alpha + beta
}

/// Smallest empirical error sum over a threshold list, and the threshold.
pub fn min_error_sum(null: &[f64], alt: &[f64], thresholds: &[f64]) -> Result<(f64, f64)> {
    if null.is_empty() || alt.is_empty() || thresholds.is_empty() {
        return invalid("min_error_sum needs samples and thresholds");
    }
    let mut a = null.to_vec();
    let mut b = alt.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, thresholds[0]);
    for &tau in thresholds {
        let e = error_sum(&a, &b, tau);
        if e < best.0 {
            best = (e, tau);
        }
    }
    Ok(best)
}

/// Smallest error sum over every threshold, i.e. over the whole trade-off curve.
pub fn oracle_error_sum(null: &[f64], alt: &[f64]) -> Result<f64> {
    Ok(tradeoff_curve(null, alt)?
        .into_iter()
        .map(|(a, b)| a + b)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub n: usize,
    pub trials: usize,
    pub vocab_size: usize,
    pub ntp_mode: NtpMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p: f64,
    pub q: f64,
    /// Best error sum over the rule's threshold list.
    pub min_error_sum: f64,
    /// Native-scale threshold attaining it.
    pub threshold: f64,
    /// Best error sum over all thresholds.
    pub oracle_error_sum: f64,
}

/// One boundary cell; `None` when `(p, q)` violates the mixture invariants.
pub fn boundary_cell(
    grid: &ExperimentGrid,
    p: f64,
    q: f64,
    detector: &DetectorSpec,
    rule: &ThresholdRule,
) -> Result<Option<CellResult>> {
    let cfg = MixtureConfig {
        n: grid.n,
        p,
        q,
        vocab_size: grid.vocab_size,
        ntp_mode: grid.ntp_mode,
        trials: grid.trials,
        seed: grid.seed,
    };
    if cfg.validate().is_err() {
        return Ok(None);
    }
    let thresholds = rule.native_thresholds(detector, grid.n)?;
    let (null, alt) = simulate_statistics(&cfg, detector)?;
    let (min_error_sum, threshold) = min_error_sum(&null, &alt, &thresholds)?;
    Ok(Some(CellResult {
        p,
        q,
        min_error_sum,
        threshold,
        oracle_error_sum: oracle_error_sum(&null, &alt)?,
    }))
}

/// Minimal error sums over the `(p, q)` grid, row-major in `q` then `p`.
/// Cells where `1 - n^-q < 1/V` are skipped.
pub fn boundary_grid(grid: &ExperimentGrid, detector: &DetectorSpec, rule: &ThresholdRule) -> Result<Vec<CellResult>> {
    if grid.p_values.is_empty() || grid.q_values.is_empty() || grid.trials == 0 {
        return invalid("boundary grid needs p values, q values and trials");
    }
    let mut out = Vec::new();
    for &q in &grid.q_values {
        for &p in &grid.p_values {
            if let Some(cell) = boundary_cell(grid, p, q, detector, rule)? {
                out.push(cell);
            }
        }
    }
    Ok(out)
}

/// CSV `p,q,min_error_sum,threshold,oracle_error_sum`.
pub fn boundary_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("p,q,min_error_sum,threshold,oracle_error_sum\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.p, c.q, c.min_error_sum, c.threshold, c.oracle_error_sum
        );
    }
    out
}

/// What the Monte Carlo gap is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapTarget {
    Exact(f64),
    Bounds(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub score: String,
    pub probs: Vec<f64>,
    pub mc_gap: f64,
    pub std_error: f64,
    pub target: GapTarget,
    pub pass: bool,
}

/// Shannon entropy in nats.
fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Monte Carlo `E1 h - E0 h` for `h_ars`, `h_log` and `h_ind,ind_delta` per
/// distribution, checked against the closed forms `1 - sum P_w^2`,
/// `delta - F_P(delta)` and the entropy bracket
/// `[(pi^2/6 - 1) Ent(P), Ent(P)]` for `h_ars`, each to 4 standard errors.
pub fn entropy_gap_check(dists: &[NtpDist], samples: usize, ind_delta: f64, seed: u64) -> Result<Vec<GapRow>> {
    if samples < 2 {
        return invalid("gap check needs at least two samples");
    }
    let kinds = [ScoreKind::Ars, ScoreKind::Log, ScoreKind::Ind(ind_delta)];
    let mut rows = Vec::new();
    for (d, dist) in dists.iter().enumerate() {
        let law = AltLaw::new(dist);
        let ys: Vec<f64> = (0..samples as u64)
            .into_par_iter()
            .map(|i| law.sample(open_unit(&mut substream(seed, "gap", &[d as u64, i]))))
            .collect();
        let probs = dist.probs().to_vec();
        let ent = entropy(&probs);
        for kind in kinds {
            let scorer = kind.scorer()?;
            let (e0, _) = null_moments(kind)?;
            let vals: Vec<f64> = ys.iter().map(|&y| scorer.eval(y)).collect();
            let mean = vals.iter().sum::<f64>() / samples as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            let se = (var / samples as f64).sqrt();
            let gap = mean - e0;
            let target = match kind {
                ScoreKind::Ars => GapTarget::Bounds((std::f64::consts::PI.powi(2) / 6.0 - 1.0) * ent, ent),
                ScoreKind::Log => GapTarget::Exact(1.0 - probs.iter().map(|p| p * p).sum::<f64>()),
                ScoreKind::Ind(delta) => GapTarget::Exact(delta - law.cdf(delta)),
                ScoreKind::Opt(_) => unreachable!("opt is not part of the gap check"),
            };
            let pass = match target {
                GapTarget::Exact(v) => (gap - v).abs() <= 4.0 * se,
                GapTarget::Bounds(lo, hi) => gap >= lo - 4.0 * se && gap <= hi + 4.0 * se,
            };
            rows.push(GapRow {
                score: kind.to_string(),
                probs: probs.clone(),
                mc_gap: gap,
                std_error: se,
                target,
                pass,
            });
        }
    }
    Ok(rows)
}

pub fn gap_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("score,probs,mc_gap,std_error,target_lo,target_hi,pass\n");
    for r in rows {
        let (lo, hi) = match r.target {
            GapTarget::Exact(v) => (v, v),
            GapTarget::Bounds(lo, hi) => (lo, hi),
        };
        let probs: Vec<String> = r.probs.iter().map(f64::to_string).collect();
        let _ = writeln!(
            out,
            "{},\"{}\",{},{},{},{},{}",
            r.score,
            probs.join(" "),
            r.mc_gap,
            r.std_error,
            lo,
            hi,
            r.pass
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub source: ToySource,
    pub n: usize,
    pub m: usize,
    pub kind: EditKind,
    pub trials: usize,
    pub seed: u64,
}

/// Detector verdict on the generated part of `seq` (positions at or after
/// both the prompt and the first full window).
pub fn detect_generated(seq: &TokenSeq, key: &Key, vocab_size: usize, detector: &DetectorSpec) -> Result<bool> {
    let Some(cv) = detector.critical_value else {
        return invalid("detector has no critical value");
    };
    let series = pivot_series(seq, key, vocab_size)?;
    let skip = seq.prompt_len().saturating_sub(series.first_position());
    let y = &series.y()[skip.min(series.n())..];
    if y.is_empty() {
        return Ok(false);
    }
    Ok(detector.statistic(y)? >= cv)
}

/// Edit tolerance limits of freshly generated watermarked texts.
pub fn tolerance_study(cfg: &ToleranceConfig, key: &Key, detector: &DetectorSpec) -> Result<Vec<ToleranceResult>> {
    let v = cfg.source.vocab_size;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(cfg.seed, "tolerance-prompt", &[trial]);
            let prompt: Vec<u32> = (0..cfg.m).map(|_| rand::Rng::gen_range(&mut rng, 0..v as u32)).collect();
            let gen = GenConfig {
                n: cfg.n,
                m: cfg.m,
                masking: true,
                seed: cfg.seed ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            };
            let seq = generate(&cfg.source, key, &prompt, &gen)?;
            let plan = match cfg.kind {
                EditKind::Adversarial => EditPlan::adversarial(&seq, key, v, cfg.seed.wrapping_add(trial))?,
                kind => EditPlan::random(&seq, kind, v, cfg.seed.wrapping_add(trial))?,
            };
            tolerance_limit(&seq, &plan, cfg.n, |s| detect_generated(s, key, v, detector))
        })
        .collect()
}

pub fn tolerance_csv(results: &[ToleranceResult]) -> String {
    let mut out = String::from("trial,limit,edits,n0,unedited_rejected\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", r.limit, r.edits, r.n0, r.unedited_rejected);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64, q: f64) -> MixtureConfig {
        MixtureConfig {
            n: 100,
            p,
            q,
            vocab_size: 50,
            ntp_mode: NtpMode::M2,
            trials: 20,
            seed: 4,
        }
    }

    #[test]
    fn replaced_counts() {
        assert_eq!(cfg(1.0, 0.5).replaced(), 1);
        assert_eq!(cfg(0.0, 0.5).replaced(), 100);
        assert_eq!(cfg(0.5, 0.5).replaced(), 10);
    }

    #[test]
    fn validation() {
        assert!(cfg(0.2, 0.5).validate().is_ok());
        assert!(cfg(1.2, 0.5).validate().is_err());
        assert!(cfg(0.2, 0.0).validate().is_err());
        let mut tiny = cfg(0.2, 0.01);
        tiny.vocab_size = 2;
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn mixture_layout() {
        let c = cfg(0.5, 0.3);
        let draw = sample_mixture(&c, 3).unwrap();
        assert_eq!(&draw.alt.y()[10..], &draw.null.y()[10..]);
        assert_ne!(&draw.alt.y()[..10], &draw.null.y()[..10]);
        // the null companion does not depend on (p, q)
        let other = sample_mixture(&cfg(0.1, 0.9), 3).unwrap();
        assert_eq!(other.null, draw.null);
        let m1 = MixtureConfig {
            ntp_mode: NtpMode::M1,
            ..c
        };
        assert_eq!(sample_mixture(&m1, 3).unwrap().null, draw.null);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(8.0, 60.0, 1000).unwrap();
        assert_eq!(g.len(), 1000);
        assert_eq!(g[0], 8.0);
        assert_eq!(g[999], 60.0);
        assert!(linspace(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn error_sums() {
        let (e, tau) = min_error_sum(&[0.0, 1.0], &[2.0, 3.0], &[0.5, 1.5, 2.5]).unwrap();
        assert_eq!((e, tau), (0.0, 1.5));
        assert_eq!(oracle_error_sum(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(oracle_error_sum(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn native_thresholds_per_family() {
        let tr = DetectorSpec::trgof(2.0, 0.0).unwrap();
        let rule = ThresholdRule::default_for(&tr).unwrap();
        let t = rule.native_thresholds(&tr, 1000).unwrap();
        assert_eq!(t[0], 1.0);
        let hc = DetectorSpec::hc(0.0).unwrap();
        let t = ThresholdRule::default_for(&hc).unwrap().native_thresholds(&hc, 10_000).unwrap();
        assert_eq!(t.len(), 21);
        assert!((t[0] - (2.0 * 10_000f64.ln().ln()).sqrt()).abs() < 1e-12);
        let ars = DetectorSpec::sum(ScoreKind::Ars).unwrap();
        let t = ThresholdRule::default_for(&ars).unwrap().native_thresholds(&ars, 100).unwrap();
        assert!((t[0] - (100.0 + 8.0 * 10.0 * 100f64.ln())).abs() < 1e-9);
        assert!(rule.native_thresholds(&ars, 100).is_err());
    }

    #[test]
    fn histogram_and_grid_smoke() {
        let c = MixtureConfig {
            n: 200,
            trials: 40,
            ..cfg(0.1, 0.2)
        };
        let det = DetectorSpec::trgof(2.0, 1.0 / 200.0).unwrap();
        let res = histogram_study(&c, &[det], 0.05).unwrap();
        assert_eq!(res[0].null.len(), 40);
        assert!(res[0].power > 0.5);
        assert!(histogram_csv(&res).lines().count() == 81);
        let grid = ExperimentGrid {
            p_values: vec![0.1, 0.9],
            q_values: vec![0.2],
            n: 200,
            trials: 40,
            vocab_size: 50,
            ntp_mode: NtpMode::M2,
            seed: 1,
        };
        let rule = ThresholdRule::default_for(&det).unwrap();
        let cells = boundary_grid(&grid, &det, &rule).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells[0].min_error_sum < cells[1].min_error_sum);
        assert!(cells.iter().all(|c| c.oracle_error_sum <= c.min_error_sum));
        assert_eq!(boundary_csv(&cells).lines().count(), 3);
    }

    #[test]
    fn gap_check_examples() {
        let dists = [NtpDist::new(vec![0.5, 0.5]).unwrap(), NtpDist::new(vec![0.6, 0.4]).unwrap()];
        let rows = entropy_gap_check(&dists, 20_000, 0.5, 2).unwrap();
        assert_eq!(rows.len(), 6);
        let exact = |row: &GapRow| match row.target {
            GapTarget::Exact(v) => v,
            GapTarget::Bounds(..) => panic!("expected a closed form"),
        };
        assert!((exact(&rows[2]) - 0.25).abs() < 1e-12);
        assert!((exact(&rows[4]) - 0.48).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }
}
