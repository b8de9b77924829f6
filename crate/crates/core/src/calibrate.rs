//! Critical values: Monte Carlo null quantiles, CLT thresholds for sum rules
//! and empirical Type I / Type II trade-off curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{null_moments, DetectorSpec, ScoreKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{open_unit, substream};

pub const DEFAULT_REPS: usize = 10_000;
pub const DEFAULT_OUTER: usize = 10;
const MIN_TAIL: f64 = 10.0;

/// A calibrated critical value and the protocol that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub detector: DetectorSpec,
    pub n: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub reps: usize,
    pub outer: usize,
    pub seed: u64,
}

/// Standard normal quantile (Wichura's AS241, PPND16).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
                + 6.726_577_092_700_870_085_3e4)
                * r
                + 4.592_195_393_154_987_145_7e4)
                * r
                + 1.373_169_376_550_946_112_5e4)
                * r
                + 1.971_590_950_306_551_442_7e3)
                * r
                + 1.331_416_678_917_843_774_5e2)
                * r
                + 3.387_132_872_796_366_608_0)
            / (((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
                + 3.930_789_580_009_271_061_0e4)
                * r
                + 2.121_379_430_158_659_586_7e4)
                * r
                + 5.394_196_021_424_751_107_7e3)
                * r
                + 6.871_870_074_920_579_083_0e2)
                * r
                + 4.231_333_070_160_091_125_2e1)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_33e-2) * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34)
            / (((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4) * r
                + 1.519_866_656_361_645_719_66e-2)
                * r
                + 1.481_039_764_274_800_745_9e-1)
                * r
                + 6.897_673_349_851_000_045_5e-1)
                * r
                + 1.676_384_830_183_803_849_4)
                * r
                + 2.053_191_626_637_758_821_87)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5) * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2)
            / (((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7) * r
                + 1.846_318_317_510_054_681_8e-5)
                * r
                + 7.868_691_311_456_132_591e-4)
                * r
                + 1.487_536_129_085_061_485_25e-2)
                * r
                + 1.369_298_809_227_358_053_1e-1)
                * r
                + 5.998_322_065_558_879_376_9e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0,1), got {alpha}"));
    }
    Ok(())
}

/// 1-based index `ceil((1 - alpha) * reps)` of the type-1 empirical quantile.
pub fn quantile_index(alpha: f64, reps: usize) -> usize {
    let k = ((1.0 - alpha) * reps as f64 - 1e-9).ceil() as usize;
    k.clamp(1, reps)
}

/// Type-1 empirical `(1 - alpha)` quantile. Sorts `samples` in place.
pub fn empirical_quantile(samples: &mut [f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if samples.is_empty() {
        return invalid("no samples");
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[quantile_index(alpha, samples.len()) - 1])
}

/// `reps` null statistics for one calibration round. Replication `r` of
/// round `round` always draws from the same substream.
pub fn null_statistics(detector: &DetectorSpec, n: usize, reps: usize, seed: u64, round: u64) -> Result<Vec<f64>> {
    let eval = detector.evaluator()?;
    (0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |y, r| {
                let mut rng = substream(seed, "null", &[round, r]);
                for v in y.iter_mut() {
                    *v = open_unit(&mut rng);
                }
                eval.statistic(y)
            },
        )
        .collect()
}

/// Monte Carlo critical value: the mean over `outer` rounds of the empirical
/// `(1 - alpha)` quantile of `reps` null statistics.
pub fn mc_critical(
    detector: &DetectorSpec,
    n: usize,
    alpha: f64,
    reps: usize,
    outer: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    check_alpha(alpha)?;
    if n < 3 {
        return invalid(format!("calibration needs n >= 3, got {n}"));
    }
    if reps < 100 {
        return invalid(format!("calibration needs reps >= 100, got {reps}"));
    }
    if outer == 0 {
        return invalid("calibration needs at least one outer round");
    }
    let tail = alpha * reps as f64;
    if tail < MIN_TAIL {
        return Err(Error::UnstableQuantile { alpha, reps, tail });
    }
    let mut total = 0.0;
    for round in 0..outer {
        let mut stats = null_statistics(detector, n, reps, seed, round as u64)?;
        total += empirical_quantile(&mut stats, alpha)?;
    }
    let critical_value = total / outer as f64;
    Ok(CalibrationResult {
        detector: detector.with_critical_value(critical_value),
        n,
        alpha,
        critical_value,
        reps,
        outer,
        seed,
    })
}

/// `n E0 h + z_{1-alpha} sqrt(n Var0 h)`.
pub fn clt_critical(kind: ScoreKind, n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return invalid("n must be positive");
    }
    let (mean, var) = null_moments(kind)?;
    let n = n as f64;
    Ok(n * mean + normal_quantile(1.0 - alpha) * (n * var).sqrt())
}

/// Empirical `(alpha, beta)` pairs for the rule "reject when statistic >= tau",
/// sweeping `tau` upward over the pooled sample and then past its maximum.
pub fn tradeoff_curve(h0: &[f64], h1: &[f64]) -> Result<Vec<(f64, f64)>> {
    if h0.is_empty() || h1.is_empty() {
        return invalid("trade-off curve needs samples under both hypotheses");
    }
    let mut a: Vec<f64> = h0.to_vec();
    let mut b: Vec<f64> = h1.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut taus: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let (n0, n1) = (a.len() as f64, b.len() as f64);
    let mut curve = Vec::with_capacity(taus.len() + 1);
    let (mut i, mut j) = (0usize, 0usize);
    for tau in taus {
        while i < a.len() && a[i] < tau {
            i += 1;
        }
        while j < b.len() && b[j] < tau {
            j += 1;
        }
        curve.push(((a.len() - i) as f64 / n0, j as f64 / n1));
    }
    curve.push((0.0, 1.0));
    Ok(curve)
}
