//! Test statistics over pivot series.
//!
//! Tr-GoF compares the empirical CDF of the p-values `p_t = 1 - Y_t` against
//! the uniform CDF through a Bernoulli `phi_s`-divergence, keeping only
//! positive deviations and only indices whose next order statistic is at least
//! `c_plus`. Higher Criticism is its `s = 2` member; sum rules add a score
//! `h(Y_t)` over the series.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pivotal::{AltLaw, PivotSeries};
use crate::quadrature::integrate_unit;
use crate::tokensource::least_favorable;

const BRANCH_TOL: f64 = 1e-9;
const MOMENT_TOL: f64 = 1e-10;

/// `phi_s(x) = (1 - s + s x - x^s) / (s (1 - s))`, with its `s = 0, 1` limits.
pub fn phi_s(x: f64, s: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return invalid(format!("phi_s needs x > 0, got {x}"));
    }
    let v = if (s - 1.0).abs() < BRANCH_TOL {
        x * x.ln() - x + 1.0
    } else if s.abs() < BRANCH_TOL {
        -x.ln() + x - 1.0
    } else if (s - 2.0).abs() < BRANCH_TOL {
        0.5 * (x - 1.0) * (x - 1.0)
    } else {
        (1.0 - s + s * x - x.powf(s)) / (s * (1.0 - s))
    };
    Ok(v)
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    // a * ln(a / b) with 0 ln 0 = 0
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

fn k_unchecked(u: f64, v: f64, s: f64) -> f64 {
    let w = 1.0 - u;
    let z = 1.0 - v;
    let k = if (s - 2.0).abs() < BRANCH_TOL {
        (u - v) * (u - v) / (2.0 * v * z)
    } else if (s - 1.0).abs() < BRANCH_TOL {
        xlogy_ratio(u, v) + xlogy_ratio(w, z)
    } else if s.abs() < BRANCH_TOL {
        xlogy_ratio(v, u) + xlogy_ratio(z, w)
    } else {
        let a = if u == 0.0 { pow_zero(s) } else { u.powf(s) * v.powf(1.0 - s) };
        let b = if w == 0.0 { pow_zero(s) } else { w.powf(s) * z.powf(1.0 - s) };
        (1.0 - a - b) / (s * (1.0 - s))
    };
    if k.is_nan() {
        f64::INFINITY
    } else {
        k.max(0.0)
    }
}

fn pow_zero(s: f64) -> f64 {
    if s > 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Bernoulli `phi_s`-divergence between `Ber(u)` and `Ber(v)`.
/// `s = 1` is `KL(Ber(u) || Ber(v))`, `s = 0` is `KL(Ber(v) || Ber(u))`.
pub fn k_s(u: f64, v: f64, s: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return invalid(format!("k_s needs v in (0,1), got {v}"));
    }
    if !(0.0..=1.0).contains(&u) {
        return invalid(format!("k_s needs u in [0,1], got {u}"));
    }
    Ok(k_unchecked(u, v, s))
}

fn k_plus_unchecked(u: f64, v: f64, s: f64) -> f64 {
    if !(v > 0.0 && v < u && u <= 1.0) {
        return 0.0;
    }
    let k = k_unchecked(u, v, s);
    if u == 1.0 && !k.is_finite() {
        0.0
    } else {
        k
    }
}

/// `K_s` on `0 < v < u <= 1` (the `u = 1` end only where finite), else 0.
pub fn k_s_plus(u: f64, v: f64, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return invalid(format!("k_s_plus needs u, v in [0,1], got ({u}, {v})"));
    }
    Ok(k_plus_unchecked(u, v, s))
}

fn sorted_p(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return invalid("empty pivot series");
    }
    if let Some(bad) = p.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return invalid(format!("p-value {bad} outside (0,1)"));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn check_c_plus(c_plus: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c_plus) {
        return invalid(format!("c_plus must lie in [0,1], got {c_plus}"));
    }
    Ok(())
}

// Calls `f(t, p_(t))` for every admissible t (1-based).
fn admissible<F: FnMut(usize, f64)>(sorted: &[f64], c_plus: f64, mut f: F) {
    let n = sorted.len();
    for t in 1..=n {
        let next = if t < n { sorted[t] } else { 1.0 };
        if next >= c_plus {
            f(t, sorted[t - 1]);
        }
    }
}

/// `S_n^+(s)` from raw p-values.
pub fn trgof_stat_p(p: &[f64], s: f64, c_plus: f64) -> Result<f64> {
    check_c_plus(c_plus)?;
    let sorted = sorted_p(p)?;
    let n = sorted.len() as f64;
    let mut best = 0.0_f64;
    admissible(&sorted, c_plus, |t, pt| {
        best = best.max(k_plus_unchecked(t as f64 / n, pt, s));
    });
    Ok(best)
}

/// `S_n^+(s) = sup { K_s^+(t/n, p_(t)) : p_(t+1) >= c_plus }`, `p_(n+1) = 1`.
pub fn trgof_stat(series: &PivotSeries, s: f64, c_plus: f64) -> Result<f64> {
    trgof_stat_p(series.p(), s, c_plus)
}

/// `HC_n^+` from raw p-values. `-inf` when no index is admissible.
pub fn hc_plus_p(p: &[f64], c_plus: f64) -> Result<f64> {
    check_c_plus(c_plus)?;
    let sorted = sorted_p(p)?;
    let n = sorted.len() as f64;
    let root_n = n.sqrt();
    let mut best = f64::NEG_INFINITY;
    admissible(&sorted, c_plus, |t, pt| {
        let hc = root_n * (t as f64 / n - pt) / (pt * (1.0 - pt)).sqrt();
        best = best.max(hc);
    });
    Ok(best)
}

/// `HC_n^+ = sup { sqrt(n) (t/n - p_(t)) / sqrt(p_(t)(1 - p_(t))) : p_(t+1) >= c_plus }`.
pub fn hc_plus(series: &PivotSeries, c_plus: f64) -> Result<f64> {
    hc_plus_p(series.p(), c_plus)
}

/// `(1 + delta) log log n`.
pub fn loglog_threshold(n: usize, delta: f64) -> Result<f64> {
    if n < 3 {
        return invalid(format!("log log n needs n >= 3, got {n}"));
    }
    Ok((1.0 + delta) * (n as f64).ln().ln())
}

/// Reject when `n * stat >= (1 + delta) log log n`.
pub fn reject_rule(stat: f64, n: usize, delta: f64) -> Result<bool> {
    let threshold = loglog_threshold(n, delta)?;
    Ok(n as f64 * stat >= threshold)
}

/// Score function for sum-based detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreKind {
    Ars,
    Log,
    Ind(f64),
    Opt(f64),
}

impl ScoreKind {
    pub fn validate(self) -> Result<Self> {
        match self {
            ScoreKind::Ind(d) | ScoreKind::Opt(d) if !(d > 0.0 && d < 1.0) => {
                invalid(format!("score parameter must lie in (0,1), got {d}"))
            }
            k => Ok(k),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Ars => "ars",
            ScoreKind::Log => "log",
            ScoreKind::Ind(_) => "ind",
            ScoreKind::Opt(_) => "opt",
        }
    }

    pub fn parameter(self) -> Option<f64> {
        match self {
            ScoreKind::Ind(d) | ScoreKind::Opt(d) => Some(d),
            _ => None,
        }
    }

    pub fn from_name(name: &str, parameter: Option<f64>) -> Result<Self> {
        let need = |p: Option<f64>| match p {
            Some(v) => Ok(v),
            None => invalid(format!("score '{name}' needs a parameter")),
        };
        let kind = match name {
            "ars" => ScoreKind::Ars,
            "log" => ScoreKind::Log,
            "ind" => ScoreKind::Ind(need(parameter)?),
            "opt" => ScoreKind::Opt(need(parameter)?),
            other => return invalid(format!("unknown score '{other}'")),
        };
        kind.validate()
    }

    /// Precompute whatever the score needs so it can be applied repeatedly.
    pub fn scorer(self) -> Result<Scorer> {
        let kind = self.validate()?;
        let law = match kind {
            ScoreKind::Opt(d) => Some(AltLaw::new(&least_favorable(d)?)),
            _ => None,
        };
        Ok(Scorer { kind, law })
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter() {
            Some(d) => write!(f, "{}({d})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// A ready-to-apply score function.
#[derive(Debug, Clone)]
pub struct Scorer {
    kind: ScoreKind,
    law: Option<AltLaw>,
}

impl Scorer {
    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Score of one pivot; `y` is assumed to lie in (0, 1).
    pub fn eval(&self, y: f64) -> f64 {
        match (self.kind, &self.law) {
            (ScoreKind::Ars, _) => -(-y).ln_1p(),
            (ScoreKind::Log, _) => y.ln(),
            (ScoreKind::Ind(d), _) => {
                if y >= d {
                    1.0
                } else {
                    0.0
                }
            }
            (ScoreKind::Opt(_), Some(law)) => law.log_pdf(y),
            (ScoreKind::Opt(_), None) => unreachable!("opt scorer built without its law"),
        }
    }

    pub fn sum(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| self.eval(v)).sum()
    }
}

/// `h(y)` for one pivot.
pub fn score(y: f64, kind: ScoreKind) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return invalid(format!("score needs y in (0,1), got {y}"));
    }
    Ok(kind.scorer()?.eval(y))
}

/// Null mean and variance of `h(U)`, `U ~ U(0,1)`.
pub fn null_moments(kind: ScoreKind) -> Result<(f64, f64)> {
    match kind.validate()? {
        ScoreKind::Ars => Ok((1.0, 1.0)),
        ScoreKind::Log => Ok((-1.0, 1.0)),
        ScoreKind::Ind(d) => Ok((1.0 - d, d * (1.0 - d))),
        ScoreKind::Opt(_) => null_moments_quadrature(kind),
    }
}

/// Null mean and variance by adaptive quadrature, for any score.
pub fn null_moments_quadrature(kind: ScoreKind) -> Result<(f64, f64)> {
    let scorer = kind.scorer()?;
    let breaks: Vec<f64> = match kind {
        ScoreKind::Ind(d) => vec![d],
        _ => Vec::new(),
    };
    let mean = integrate_unit(|y| scorer.eval(y), &breaks, MOMENT_TOL)?;
    let second = integrate_unit(|y| scorer.eval(y).powi(2), &breaks, MOMENT_TOL)?;
    Ok((mean, second - mean * mean))
}

/// Sum rule: reject when `sum_t h(Y_t) >= threshold`.
pub fn sum_test(series: &PivotSeries, kind: ScoreKind, threshold: f64) -> Result<bool> {
    let total = kind.scorer()?.sum(series.y());
    Ok(total >= threshold)
}

/// Which statistic a detector computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorKind {
    TrGoF { s: f64, c_plus: f64 },
    Hc { c_plus: f64 },
    Sum(ScoreKind),
}

/// A detector and its critical value. The statistic is `n * S_n^+(s)` for
/// Tr-GoF, `HC_n^+` for HC and `sum_t h(Y_t)` for sum rules; the detector
/// rejects when the statistic is at least the critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub critical_value: Option<f64>,
}

impl DetectorSpec {
    pub fn trgof(s: f64, c_plus: f64) -> Result<Self> {
        Self::new(DetectorKind::TrGoF { s, c_plus })
    }

    pub fn hc(c_plus: f64) -> Result<Self> {
        Self::new(DetectorKind::Hc { c_plus })
    }

    pub fn sum(score: ScoreKind) -> Result<Self> {
        Self::new(DetectorKind::Sum(score))
    }

    pub fn new(kind: DetectorKind) -> Result<Self> {
        match kind {
            DetectorKind::TrGoF { s, c_plus } => {
                if !(-1.0..=2.0).contains(&s) {
                    return invalid(format!("s must lie in [-1,2], got {s}"));
                }
                check_c_plus(c_plus)?;
            }
            DetectorKind::Hc { c_plus } => check_c_plus(c_plus)?,
            DetectorKind::Sum(score) => {
                score.validate()?;
            }
        }
        Ok(DetectorSpec {
            kind,
            critical_value: None,
        })
    }

    pub fn with_critical_value(mut self, value: f64) -> Self {
        self.critical_value = Some(value);
        self
    }

    pub fn c_plus(&self) -> Option<f64> {
        match self.kind {
            DetectorKind::TrGoF { c_plus, .. } | DetectorKind::Hc { c_plus } => Some(c_plus),
            DetectorKind::Sum(_) => None,
        }
    }

    /// Copy with `c_plus` replaced; sum rules are returned unchanged.
    pub fn with_c_plus(mut self, c: f64) -> Result<Self> {
        check_c_plus(c)?;
        match &mut self.kind {
            DetectorKind::TrGoF { c_plus, .. } | DetectorKind::Hc { c_plus } => *c_plus = c,
            DetectorKind::Sum(_) => {}
        }
        Ok(self)
    }

    /// Prepared evaluator, reusable across series.
    pub fn evaluator(&self) -> Result<Evaluator> {
        let scorer = match self.kind {
            DetectorKind::Sum(score) => Some(score.scorer()?),
            _ => None,
        };
        Ok(Evaluator {
            kind: self.kind,
            scorer,
        })
    }

    /// Statistic on pivots `y` (p-values are `1 - y`).
    pub fn statistic(&self, y: &[f64]) -> Result<f64> {
        self.evaluator()?.statistic(y)
    }

    pub fn rejects(&self, y: &[f64]) -> Result<bool> {
        let Some(cv) = self.critical_value else {
            return invalid("detector has no critical value");
        };
        Ok(self.statistic(y)? >= cv)
    }

    pub fn label(&self) -> String {
        match self.kind {
            DetectorKind::TrGoF { s, c_plus } => format!("trgof(s={s},c_plus={c_plus})"),
            DetectorKind::Hc { c_plus } => format!("hc(c_plus={c_plus})"),
            DetectorKind::Sum(score) => format!("sum({score})"),
        }
    }
}

/// [`DetectorSpec`] statistic with its score function precomputed.
#[derive(Debug, Clone)]
pub struct Evaluator {
    kind: DetectorKind,
    scorer: Option<Scorer>,
}

impl Evaluator {
    pub fn statistic(&self, y: &[f64]) -> Result<f64> {
        if y.is_empty() {
            return invalid("empty pivot series");
        }
        match self.kind {
            DetectorKind::TrGoF { s, c_plus } => {
                let p: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
                Ok(y.len() as f64 * trgof_stat_p(&p, s, c_plus)?)
            }
            DetectorKind::Hc { c_plus } => {
                let p: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
                hc_plus_p(&p, c_plus)
            }
            DetectorKind::Sum(_) => {
                let scorer = self.scorer.as_ref().expect("sum evaluator carries a scorer");
                Ok(scorer.sum(y))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawDetector {
    kind: String,
    #[serde(default)]
    s: Option<f64>,
    #[serde(default)]
    c_plus: Option<f64>,
    #[serde(default)]
    score: Option<String>,
    #[serde(default)]
    delta0: Option<f64>,
    #[serde(default)]
    critical_value: Option<f64>,
}

impl Serialize for DetectorSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut raw = RawDetector {
            kind: String::new(),
            s: None,
            c_plus: None,
            score: None,
            delta0: None,
            critical_value: self.critical_value,
        };
        match self.kind {
            DetectorKind::TrGoF { s, c_plus } => {
                raw.kind = "trgof".into();
                raw.s = Some(s);
                raw.c_plus = Some(c_plus);
            }
            DetectorKind::Hc { c_plus } => {
                raw.kind = "hc".into();
                raw.c_plus = Some(c_plus);
            }
            DetectorKind::Sum(score) => {
                raw.kind = "sum".into();
                raw.score = Some(score.name().into());
                raw.delta0 = score.parameter();
            }
        }
        raw.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DetectorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawDetector::deserialize(de)?;
        let missing = |field: &str| D::Error::custom(format!("detector '{}' needs '{field}'", raw.kind));
        let kind = match raw.kind.as_str() {
            "trgof" => DetectorKind::TrGoF {
                s: raw.s.ok_or_else(|| missing("s"))?,
                c_plus: raw.c_plus.unwrap_or(0.0),
            },
            "hc" => DetectorKind::Hc {
                c_plus: raw.c_plus.unwrap_or(0.0),
            },
            "sum" => {
                let name = raw.score.as_deref().ok_or_else(|| missing("score"))?;
                DetectorKind::Sum(ScoreKind::from_name(name, raw.delta0).map_err(D::Error::custom)?)
            }
            other => return Err(D::Error::custom(format!("unknown detector kind '{other}'"))),
        };
        let mut spec = DetectorSpec::new(kind).map_err(D::Error::custom)?;
        spec.critical_value = raw.critical_value;
        Ok(spec)
    }
}
