use serde::Serialize;

use super::{em_fit, EmFit, EmOptions};
use crate::error::{Error, Result};
use crate::stats::chi2_sf;
use crate::tables::{JointDistribution, MechanismKind, ObservedTable};

/// Likelihood-ratio test of a fitted mechanism against the saturated model of
/// the observable frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub mechanism: MechanismKind,
    #[serde(serialize_with = "crate::ext::f64")]
    pub loglik: f64,
    #[serde(serialize_with = "crate::ext::f64")]
    pub saturated_loglik: f64,
    #[serde(serialize_with = "crate::ext::f64")]
    pub lr_statistic: f64,
    pub df: usize,
    #[serde(serialize_with = "crate::ext::f64")]
    pub p_value: f64,
    /// The MLE is on the parameter boundary, where the chi-square reference
    /// distribution is only approximate.
    pub boundary: bool,
    pub converged: bool,
}

fn free_parameters(kind: MechanismKind, j: usize, k: usize, randomized: bool) -> usize {
    let treatment = if randomized { 1 } else { j };
    let missingness = match kind {
        MechanismKind::M1 => 2 * k,
        MechanismKind::M2 => 2 * j,
        MechanismKind::M3 => j * k,
        MechanismKind::Mx => j,
        MechanismKind::M4 | MechanismKind::Sensitivity => 4,
        MechanismKind::M5 => 2 * j * k,
    };
    (j - 1) + treatment + 2 * j * (k - 1) + missingness
}

impl GofResult {
    pub fn from_fit(table: &ObservedTable, fit: &EmFit) -> Result<Self> {
        let (j, k) = (table.j(), table.k());
        let frequencies = 2 * j * k + 2 * k - 1;
        let params = free_parameters(fit.mechanism, j, k, fit.params.randomized);
        if params >= frequencies {
            return Err(Error::Unsupported(format!(
                "{} has {params} parameters for {frequencies} free frequencies; no degrees of freedom remain",
                fit.mechanism
            )));
        }
        let saturated = table.saturated_loglik();
        let lr = (2.0 * (saturated - fit.loglik)).max(0.0);
        let df = frequencies - params;
        Ok(Self {
            mechanism: fit.mechanism,
            loglik: fit.loglik,
            saturated_loglik: saturated,
            lr_statistic: lr,
            df,
            p_value: chi2_sf(lr, df),
            boundary: fit.boundary,
            converged: fit.converged,
        })
    }
}

/// Goodness of fit under complete randomization, the setting in which every
/// restricted mechanism leaves one degree of freedom for binary `X` and `Y`.
pub fn lrt_gof(table: &ObservedTable, mechanism: MechanismKind) -> Result<GofResult> {
    lrt_gof_with(table, mechanism, &EmOptions::randomized())
}

pub fn lrt_gof_with(table: &ObservedTable, mechanism: MechanismKind, options: &EmOptions) -> Result<GofResult> {
    let fit = em_fit(table, mechanism, options)?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "EM for {mechanism} did not converge in {} iterations",
            fit.iterations
        )));
    }
    GofResult::from_fit(table, &fit)
}

/// The four clinical-opinion inequalities used to criticize ICD-trial fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExpertAssumptions {
    /// `P(X=0 | T=t, M=1) >= P(X=0 | T=t, M=0)` for both arms.
    pub a5: bool,
    /// `P(Y=1 | T=0, X=1) >= P(Y=1 | T=0, X=0)`.
    pub a6: bool,
    /// `0.05 <= P(Y=1 | T=0, X=x) <= 0.50` for both strata.
    pub a7: bool,
    /// `P(Y=1 | T=1, X=1) <= P(Y=1 | T=0, X=1)`.
    pub a8: bool,
}

impl ExpertAssumptions {
    pub fn as_array(&self) -> [bool; 4] {
        [self.a5, self.a6, self.a7, self.a8]
    }

    pub fn all(&self) -> bool {
        self.as_array().iter().all(|&b| b)
    }
}

pub fn check_expert_assumptions(joint: &JointDistribution) -> Result<ExpertAssumptions> {
    if joint.j() != 2 || joint.k() != 2 {
        return Err(Error::Unsupported("expert assumptions are stated for binary X and Y".into()));
    }
    let x0_given = |t: usize, m: usize| -> Result<f64> {
        let num: f64 = (0..2).map(|y| joint.get(t, 0, y, m)).sum();
        let den: f64 = (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).map(|(x, y)| joint.get(t, x, y, m)).sum();
        if den <= 0.0 {
            return Err(Error::ZeroConditioning(format!("P(T={t}, M={m}) = 0")));
        }
        Ok(num / den)
    };
    let mut a5 = true;
    for t in 0..2 {
        a5 &= x0_given(t, 1)? >= x0_given(t, 0)?;
    }
    let p = |t, x| joint.p_y_given_tx(t, x, 1);
    let a6 = p(0, 1)? >= p(0, 0)?;
    let a7 = [p(0, 0)?, p(0, 1)?].iter().all(|v| (0.05..=0.5).contains(v));
    let a8 = p(1, 1)? <= p(0, 1)?;
    Ok(ExpertAssumptions { a5, a6, a7, a8 })
}
