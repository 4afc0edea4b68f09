//! Sigmoid calibration of decision values.
//!
//! Fits P(y=+1 | g) = 1 / (1 + exp(a*g + b)) by Newton's method with
//! backtracking line search on the prior-corrected maximum-likelihood
//! problem: positive targets (N+ + 1)/(N+ + 2), negative targets
//! 1/(N- + 2). For separable data `a` comes out negative, making the
//! sigmoid increase with g.

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_EPS: f64 = 1e-8;
const MIN_STEP: f64 = 1e-10;
const RIDGE: f64 = 1e-12;

/// Numerically safe log(1 + exp(x)) based NLL term for target t at f = a*g+b.
#[inline]
fn nll_term(t: f64, f_apb: f64) -> f64 {
    if f_apb >= 0.0 {
        t * f_apb + (1.0 + (-f_apb).exp()).ln()
    } else {
        (t - 1.0) * f_apb + (1.0 + f_apb.exp()).ln()
    }
}

/// Fits the sigmoid parameters (a, b) on decision values and ±1 labels.
pub fn platt_fit(decision_values: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if decision_values.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} decision values but {} labels",
            decision_values.len(),
            labels.len()
        )));
    }
    if decision_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "decision values must be finite".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::SingleClass);
    }

    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.0 { hi } else { lo })
        .collect();

    let mut a = 0.0f64;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval: f64 = decision_values
        .iter()
        .zip(&targets)
        .map(|(&g, &t)| nll_term(t, a * g + b))
        .sum();

    for _ in 0..MAX_ITER {
        let mut h11 = RIDGE;
        let mut h22 = RIDGE;
        let mut h21 = 0.0;
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for (&g, &t) in decision_values.iter().zip(&targets) {
            let f_apb = a * g + b;
            let (p, q) = if f_apb >= 0.0 {
                let e = (-f_apb).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f_apb.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += g * g * d2;
            h22 += d2;
            h21 += g * d2;
            let d1 = t - p;
            g1 += g * d1;
            g2 += d1;
        }
        if (g1 * g1 + g2 * g2).sqrt() < GRAD_EPS {
            break;
        }

        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut improved = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf: f64 = decision_values
                .iter()
                .zip(&targets)
                .map(|(&g, &t)| nll_term(t, na * g + nb))
                .sum();
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                improved = true;
                break;
            }
            step /= 2.0;
        }
        if !improved {
            log::warn!("platt line search stalled; keeping current parameters");
            break;
        }
    }
    Ok((a, b))
}

/// P(y=+1 | g) under fitted parameters (a, b).
#[inline]
pub fn platt_prob(a: f64, b: f64, g: f64) -> f64 {
    let f_apb = a * g + b;
    if f_apb >= 0.0 {
        let e = (-f_apb).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + f_apb.exp())
    }
}

/// Total negative log-likelihood of the prior-corrected targets; exposed so
/// tests can compare fitted parameters against fixed reference points.
pub fn platt_nll(a: f64, b: f64, decision_values: &[f64], labels: &[f64]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    decision_values
        .iter()
        .zip(labels)
        .map(|(&g, &y)| nll_term(if y > 0.0 { hi } else { lo }, a * g + b))
        .sum()
}
