use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{expit, softplus};

/// Coefficients are clamped to this magnitude when the data are separated.
pub const COEFFICIENT_CAP: f64 = 30.0;
const SCORE_TOLERANCE: f64 = 1e-10;
const MAX_ITER: usize = 200;

/// One covariate pattern of a grouped-binomial regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticCell {
    pub design: Vec<f64>,
    pub successes: f64,
    pub failures: f64,
    /// Fixed term added to the linear predictor.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a coefficient hit the separation cap.
    pub capped: bool,
}

fn loglik(cells: &[LogisticCell], beta: &[f64]) -> f64 {
    cells
        .iter()
        .map(|c| {
            let eta = c.offset + c.design.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            // log expit(eta) = -softplus(-eta), log(1 - expit(eta)) = -softplus(eta)
            -c.successes * softplus(-eta) - c.failures * softplus(eta)
        })
        .sum()
}

/// Maximizes the grouped-binomial log-likelihood by Newton-Raphson with step
/// halving (equivalently IRLS). `start` warm-starts the coefficients.
pub fn irls_logistic(cells: &[LogisticCell], start: Option<&[f64]>) -> Result<LogisticFit> {
    irls_logistic_with(cells, start, MAX_ITER)
}

/// [`irls_logistic`] with at most `max_iter` Newton steps. Every accepted step
/// increases the log-likelihood, so a truncated fit is still an ascent step.
pub fn irls_logistic_with(cells: &[LogisticCell], start: Option<&[f64]>, max_iter: usize) -> Result<LogisticFit> {
    let p = cells
        .first()
        .map(|c| c.design.len())
        .ok_or_else(|| Error::InvalidInput("logistic regression needs at least one cell".into()))?;
    if cells.iter().any(|c| c.design.len() != p) {
        return Err(Error::DimensionMismatch("design vectors differ in length".into()));
    }
    if cells
        .iter()
        .any(|c| !(c.successes >= 0.0 && c.failures >= 0.0 && c.offset.is_finite()))
    {
        return Err(Error::InvalidInput("weights must be nonnegative and offsets finite".into()));
    }

    // Rank of the design over positively weighted cells.
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for c in cells {
        let w = c.successes + c.failures;
        if w > 0.0 {
            let x = DVector::from_column_slice(&c.design);
            gram += w * &x * x.transpose();
        }
    }
    let sv = gram.singular_values();
    let smax = sv.max();
    if smax == 0.0 || sv.min() <= 1e-12 * smax {
        return Err(Error::RankDeficient(
            "logistic design is not of full column rank on weighted cells".into(),
        ));
    }

    let mut beta = match start {
        Some(s) if s.len() == p && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; p],
    };
    let mut capped = false;
    let mut current = loglik(cells, &beta);
    for iter in 1..=max_iter {
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for c in cells {
            let n = c.successes + c.failures;
            if n == 0.0 {
                continue;
            }
            let x = DVector::from_column_slice(&c.design);
            let mu = expit(c.offset + x.dot(&DVector::from_column_slice(&beta)));
            score += (c.successes - n * mu) * &x;
            info += (n * mu * (1.0 - mu)) * &x * x.transpose();
        }
        if score.amax() < SCORE_TOLERANCE {
            return Ok(LogisticFit { beta, iterations: iter - 1, converged: true, capped });
        }
        let Some(step) = info.clone().cholesky().map(|ch| ch.solve(&score)).or_else(|| info.lu().solve(&score)) else {
            // Information collapsed: fitted probabilities at the boundary.
            return Ok(LogisticFit { beta, iterations: iter, converged: capped, capped });
        };
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + scale * d).collect();
            let mut hit = false;
            for v in &mut trial {
                if v.abs() > COEFFICIENT_CAP {
                    *v = v.signum() * COEFFICIENT_CAP;
                    hit = true;
                }
            }
            let value = loglik(cells, &trial);
            if value >= current - 1e-12 * current.abs().max(1.0) {
                let shift = trial.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                moved = shift > 1e-14 * (1.0 + beta.iter().map(|b| b.abs()).fold(0.0, f64::max));
                capped |= hit;
                beta = trial;
                current = value;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            // Stalled at machine precision or pinned at the cap.
            return Ok(LogisticFit { beta, iterations: iter, converged: true, capped });
        }
    }
    Ok(LogisticFit { beta, iterations: max_iter, converged: false, capped })
}
