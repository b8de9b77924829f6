//! Optimal detection efficiency against the least-favorable distribution:
//! `R = KL(U(0,1) || (1 - eps) U(0,1) + eps F_{P*_Delta})`
//!   `= int_0^1 -log((1 - eps) + eps f_{P*}(y)) dy`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pivotal::AltLaw;
use crate::quadrature::integrate_unit;
use crate::tokensource::least_favorable;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyQuery {
    pub delta: f64,
    pub epsilon: f64,
    pub quad_tolerance: f64,
}

impl EfficiencyQuery {
    pub fn new(delta: f64, epsilon: f64) -> Self {
        EfficiencyQuery {
            delta,
            epsilon,
            quad_tolerance: DEFAULT_TOLERANCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return invalid(format!("epsilon must lie in (0,1], got {}", self.epsilon));
        }
        if !(self.quad_tolerance > 0.0) {
            return invalid("quadrature tolerance must be positive");
        }
        Ok(())
    }
}

/// `-log` of the mixture density at `y`, computed in log space.
pub fn neg_log_mixture(law: &AltLaw, epsilon: f64, y: f64) -> f64 {
    let lf = law.log_pdf(y);
    if epsilon >= 1.0 {
        return -lf;
    }
    let a = (1.0 - epsilon).ln();
    let b = epsilon.ln() + lf;
    let top = a.max(b);
    -(top + ((a - top).exp() + (b - top).exp()).ln())
}

pub fn optimal_rate(query: &EfficiencyQuery) -> Result<f64> {
    query.validate()?;
    let law = AltLaw::new(&least_favorable(query.delta)?);
    let rate = integrate_unit(|y| neg_log_mixture(&law, query.epsilon, y), &[], query.quad_tolerance)?;
    Ok(rate.max(0.0))
}

/// Rates over a grid of `delta` values at fixed `epsilon`.
pub fn rate_curve(deltas: &[f64], epsilon: f64, quad_tolerance: f64) -> Result<Vec<(f64, f64)>> {
    deltas
        .par_iter()
        .map(|&delta| {
            let q = EfficiencyQuery {
                delta,
                epsilon,
                quad_tolerance,
            };
            Ok((delta, optimal_rate(&q)?))
        })
        .collect()
}

/// CSV with header `delta,epsilon,rate`.
pub fn rate_curve_csv(curve: &[(f64, f64)], epsilon: f64) -> String {
    let mut out = String::from("delta,epsilon,rate\n");
    for (delta, rate) in curve {
        let _ = writeln!(out, "{delta},{epsilon},{rate}");
    }
    out
}
