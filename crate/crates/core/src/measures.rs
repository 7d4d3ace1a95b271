//! Causal-effect measures `D[p1, p0]` and their evaluation on joints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::JointDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `p1 - p0`
    RiskDifference,
    /// `log(p1 / p0)`
    LogRiskRatio,
    /// `log(p1 (1 - p0) / (p0 (1 - p1)))`
    LogOddsRatio,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::RiskDifference, Measure::LogRiskRatio, Measure::LogOddsRatio];

    pub fn short_name(self) -> &'static str {
        match self {
            Measure::RiskDifference => "crd",
            Measure::LogRiskRatio => "log_crr",
            Measure::LogOddsRatio => "log_cor",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crd" | "rd" | "risk_difference" => Ok(Measure::RiskDifference),
            "crr" | "log_crr" | "logcrr" | "rr" => Ok(Measure::LogRiskRatio),
            "cor" | "log_cor" | "logcor" | "or" => Ok(Measure::LogOddsRatio),
            other => Err(Error::InvalidInput(format!("unknown measure '{other}'"))),
        }
    }
}

/// Ratio of two nonnegative quantities as an extended real: `c/0 = +inf` for
/// `c > 0` and `0/0 = NaN`.
fn ext_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        }
    } else {
        num / den
    }
}

/// Evaluates `D[p1, p0]`. Boundary probabilities give `+-inf`; indeterminate
/// forms such as `log(0/0)` give NaN.
pub fn eval_measure(measure: Measure, p1: f64, p0: f64) -> f64 {
    match measure {
        Measure::RiskDifference => p1 - p0,
        Measure::LogRiskRatio => ext_ratio(p1, p0).ln(),
        Measure::LogOddsRatio => ext_ratio(p1 * (1.0 - p0), p0 * (1.0 - p1)).ln(),
    }
}

/// Causal risk ratio `p1 / p0`.
pub fn risk_ratio(p1: f64, p0: f64) -> f64 {
    ext_ratio(p1, p0)
}

/// Which treatment-assignment assumption licenses reading effects off the joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// `T` independent of potential outcomes and missingness given `X`.
    LatentIgnorable,
    /// `T` independent of everything, `X` included.
    CompleteRandomization,
}

impl std::str::FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "latent" | "latent_ignorable" => Ok(Assumption::LatentIgnorable),
            "randomized" | "complete" | "complete_randomization" => Ok(Assumption::CompleteRandomization),
            other => Err(Error::InvalidInput(format!("unknown assumption '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEstimate {
    pub measure: Measure,
    /// `CE_x` for each covariate level.
    #[serde(serialize_with = "crate::ext::vec")]
    pub ce_x: Vec<f64>,
    /// `CE_+`, the population effect.
    #[serde(serialize_with = "crate::ext::f64")]
    pub ce_total: f64,
    /// Estimator that produced the joint or effects.
    pub provenance: String,
}

impl CausalEstimate {
    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }
}

/// `P(Y=1 | T=t, X=x)` at `[t*J + x]` for a binary outcome.
pub fn outcome_probabilities(joint: &JointDistribution) -> Result<Vec<f64>> {
    if joint.k() != 2 {
        return Err(Error::Unsupported("causal measures need a binary outcome".into()));
    }
    let j = joint.j();
    let mut out = Vec::with_capacity(2 * j);
    for t in 0..2 {
        for x in 0..j {
            out.push(joint.p_y_given_tx(t, x, 1)?);
        }
    }
    Ok(out)
}

pub fn effects_from_joint(
    joint: &JointDistribution,
    measure: Measure,
    assume: Assumption,
) -> Result<CausalEstimate> {
    let j = joint.j();
    let p = outcome_probabilities(joint)?;
    let ce_x = (0..j).map(|x| eval_measure(measure, p[j + x], p[x])).collect();
    let (p1, p0) = match assume {
        Assumption::CompleteRandomization => (joint.p_y_given_t(1, 1)?, joint.p_y_given_t(0, 1)?),
        Assumption::LatentIgnorable => {
            let mix = |t: usize| (0..j).map(|x| p[t * j + x] * joint.p_x(x)).sum::<f64>();
            (mix(1), mix(0))
        }
    };
    Ok(CausalEstimate {
        measure,
        ce_x,
        ce_total: eval_measure(measure, p1, p0),
        provenance: "joint".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::{compose_joint, FactoredParams, MechanismSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_cor_reference_values() {
        assert_eq!(eval_measure(Measure::LogOddsRatio, 0.5, 0.5), 0.0);
        assert_abs_diff_eq!(eval_measure(Measure::LogOddsRatio, 0.8, 0.2), 2.773, epsilon = 1e-3);
        assert_abs_diff_eq!(eval_measure(Measure::LogOddsRatio, 0.3, 0.5), -0.847, epsilon = 1e-3);
    }

    #[test]
    fn boundary_values_are_infinite() {
        assert_eq!(eval_measure(Measure::LogOddsRatio, 0.3, 0.0), f64::INFINITY);
        assert_eq!(eval_measure(Measure::LogOddsRatio, 1.0, 0.3), f64::INFINITY);
        assert_eq!(eval_measure(Measure::LogRiskRatio, 0.0, 0.3), f64::NEG_INFINITY);
        assert!(eval_measure(Measure::LogRiskRatio, 0.0, 0.0).is_nan());
        assert_eq!(risk_ratio(0.2, 0.0), f64::INFINITY);
    }

    #[test]
    fn monotone_and_sign_preserving_on_grid() {
        let grid: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
        for m in Measure::ALL {
            for &p0 in &grid {
                for w in grid.windows(2) {
                    assert!(eval_measure(m, w[1], p0) > eval_measure(m, w[0], p0));
                    assert!(eval_measure(m, p0, w[1]) < eval_measure(m, p0, w[0]));
                }
                for &p1 in &grid {
                    let d = eval_measure(m, p1, p0);
                    let s = (p1 - p0).partial_cmp(&0.0).unwrap();
                    assert_eq!(d.partial_cmp(&0.0).unwrap(), s, "{m:?} {p1} {p0}");
                }
            }
        }
    }

    fn simulation_joint(outcome: [f64; 4]) -> JointDistribution {
        compose_joint(&FactoredParams::binary(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            &outcome,
            MechanismSpec::M1 { p_missing: vec![0.7, 0.4, 0.3, 0.3] },
            true,
        ))
        .unwrap()
    }

    #[test]
    fn simulation_truth() {
        let est = effects_from_joint(
            &simulation_joint([0.2, 0.5, 0.8, 0.3]),
            Measure::LogOddsRatio,
            Assumption::LatentIgnorable,
        )
        .unwrap();
        assert_abs_diff_eq!(est.ce_x[0], 2.773, epsilon = 1e-3);
        assert_abs_diff_eq!(est.ce_x[1], -0.847, epsilon = 1e-3);
    }

    #[test]
    fn null_effect_when_outcome_ignores_treatment() {
        let joint = simulation_joint([0.2, 0.6, 0.2, 0.6]);
        for m in Measure::ALL {
            let est = effects_from_joint(&joint, m, Assumption::LatentIgnorable).unwrap();
            assert!(est.ce_x.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn total_effect_agrees_across_assumptions_when_treatment_is_randomized() {
        let joint = compose_joint(&FactoredParams::binary(
            vec![0.3, 0.7],
            vec![0.4, 0.4],
            &[0.2, 0.5, 0.8, 0.3],
            MechanismSpec::M2 { p_missing: vec![0.3, 0.5, 0.6, 0.7] },
            true,
        ))
        .unwrap();
        for m in Measure::ALL {
            let a = effects_from_joint(&joint, m, Assumption::CompleteRandomization).unwrap();
            let b = effects_from_joint(&joint, m, Assumption::LatentIgnorable).unwrap();
            // Mixture by hand: sum_x P(Y=1|t,x) P(X=x).
            let p1 = 0.8 * 0.3 + 0.3 * 0.7;
            let p0 = 0.2 * 0.3 + 0.5 * 0.7;
            assert_abs_diff_eq!(a.ce_total, eval_measure(m, p1, p0), epsilon = 1e-14);
            assert_abs_diff_eq!(a.ce_total, b.ce_total, epsilon = 1e-14);
        }
    }

    #[test]
    fn measures_agree_on_sign() {
        let joint = simulation_joint([0.2, 0.5, 0.8, 0.3]);
        let signs: Vec<Vec<bool>> = Measure::ALL
            .iter()
            .map(|&m| {
                effects_from_joint(&joint, m, Assumption::LatentIgnorable)
                    .unwrap()
                    .ce_x
                    .iter()
                    .map(|v| *v > 0.0)
                    .collect()
            })
            .collect();
        assert!(signs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_conditioning_event_is_an_error() {
        let mut params = FactoredParams::binary(
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            &[0.2, 0.5, 0.8, 0.3],
            MechanismSpec::M1 { p_missing: vec![0.1; 4] },
            true,
        );
        params.pi_x = vec![1.0, 0.0];
        let joint = compose_joint(&params).unwrap();
        assert!(matches!(
            effects_from_joint(&joint, Measure::RiskDifference, Assumption::LatentIgnorable),
            Err(Error::ZeroConditioning(_))
        ));
    }
}
