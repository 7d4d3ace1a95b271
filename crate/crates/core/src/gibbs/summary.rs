use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::measures::{eval_measure, risk_ratio, Measure};
use crate::stats::quantile_sorted;

const MIN_DRAWS: usize = 100;

/// A scalar function of one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Target {
    /// `P(Y=1 | T=t, X=x)`.
    Outcome { t: usize, x: usize },
    /// `CE_x` under a measure.
    Effect { measure: Measure, x: usize },
    /// `CRR_x = P(Y=1 | T=1, X=x) / P(Y=1 | T=0, X=x)`.
    RiskRatio { x: usize },
    /// `CE_a - CE_b` under a measure.
    EffectDifference { measure: Measure, a: usize, b: usize },
}

impl Target {
    pub fn evaluate(&self, draws: &PosteriorDraws, i: usize) -> f64 {
        let ce = |m: Measure, x: usize| eval_measure(m, draws.outcome(i, 1, x), draws.outcome(i, 0, x));
        match *self {
            Target::Outcome { t, x } => draws.outcome(i, t, x),
            Target::Effect { measure, x } => ce(measure, x),
            Target::RiskRatio { x } => risk_ratio(draws.outcome(i, 1, x), draws.outcome(i, 0, x)),
            Target::EffectDifference { measure, a, b } => ce(measure, a) - ce(measure, b),
        }
    }

    fn check(&self, draws: &PosteriorDraws) -> Result<()> {
        if draws.k != 2 && !matches!(self, Target::Outcome { .. }) {
            return Err(Error::Unsupported("effect targets need a binary outcome".into()));
        }
        let (a, b) = match *self {
            Target::Outcome { x, .. } | Target::Effect { x, .. } | Target::RiskRatio { x } => (x, x),
            Target::EffectDifference { a, b, .. } => (a, b),
        };
        if a.max(b) >= draws.j {
            return Err(Error::InvalidInput(format!("covariate level out of range for J={}", draws.j)));
        }
        if let Target::Outcome { t, .. } = self {
            if *t > 1 {
                return Err(Error::InvalidInput("treatment must be 0 or 1".into()));
            }
        }
        Ok(())
    }
}

/// Posterior median and equal-tailed 95% interval (type-7 quantiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorSummary {
    #[serde(serialize_with = "crate::ext::f64")]
    pub median: f64,
    #[serde(serialize_with = "crate::ext::f64")]
    pub lower: f64,
    #[serde(serialize_with = "crate::ext::f64")]
    pub upper: f64,
}

impl PosteriorSummary {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_DRAWS {
            return Err(Error::TooFewDraws(values.len(), MIN_DRAWS));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            median: quantile_sorted(&values, 0.5),
            lower: quantile_sorted(&values, 0.025),
            upper: quantile_sorted(&values, 0.975),
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

pub fn posterior_summary(draws: &PosteriorDraws, target: Target) -> Result<PosteriorSummary> {
    target.check(draws)?;
    PosteriorSummary::from_values((0..draws.len()).map(|i| target.evaluate(draws, i)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectModification {
    pub measure: Measure,
    /// Interval for `CE_0 - CE_1`.
    pub interval: PosteriorSummary,
    pub contains_zero: bool,
}

/// Credible interval of `CE_0 - CE_1`; an interval excluding zero indicates
/// effect modification by the covariate.
pub fn effect_modification_test(draws: &PosteriorDraws, measure: Measure) -> Result<EffectModification> {
    if draws.j != 2 {
        return Err(Error::Unsupported("effect modification test needs a binary covariate".into()));
    }
    let interval = posterior_summary(draws, Target::EffectDifference { measure, a: 0, b: 1 })?;
    Ok(EffectModification { measure, interval, contains_zero: interval.contains(0.0) })
}
