use serde::Serialize;

use super::{check_expert_assumptions, em_fit, EmOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::measures::{effects_from_joint, Assumption, Measure};
use crate::tables::{MechanismKind, ObservedTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateFit {
    pub mechanism: MechanismKind,
    #[serde(serialize_with = "crate::ext::f64")]
    pub loglik: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub chosen: MechanismKind,
    pub candidates: Vec<CandidateFit>,
}

/// Picks the candidate with the largest maximized log-likelihood. Ties go to
/// the lowest mechanism; unconverged or failed fits are not eligible.
pub fn select_mechanism(
    table: &ObservedTable,
    candidates: &[MechanismKind],
    options: &EmOptions,
    exec: Execution,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate mechanisms".into()));
    }
    let mut kinds = candidates.to_vec();
    kinds.sort();
    kinds.dedup();
    let fits = exec.map(&kinds, |&kind| match em_fit(table, kind, options) {
        Ok(fit) => CandidateFit { mechanism: kind, loglik: fit.loglik, converged: fit.converged, error: None },
        Err(e) => CandidateFit { mechanism: kind, loglik: f64::NAN, converged: false, error: Some(e.to_string()) },
    });
    let mut chosen: Option<&CandidateFit> = None;
    for fit in fits.iter().filter(|f| f.converged && !f.loglik.is_nan()) {
        if chosen.is_none_or(|best| fit.loglik > best.loglik) {
            chosen = Some(fit);
        }
    }
    let chosen = chosen
        .ok_or_else(|| Error::NonConvergence("no candidate mechanism converged".into()))?
        .mechanism;
    Ok(Selection { chosen, candidates: fits })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub beta_y: f64,
    /// `log COR_x` at the MLE for each covariate level.
    #[serde(serialize_with = "crate::ext::vec")]
    pub log_cor: Vec<f64>,
    #[serde(serialize_with = "crate::ext::f64")]
    pub loglik: f64,
    /// All expert assumptions hold at the MLE.
    pub feasible: bool,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub points: Vec<SensitivityPoint>,
}

impl SensitivityCurve {
    pub fn feasible(&self) -> impl Iterator<Item = &SensitivityPoint> {
        self.points.iter().filter(|p| p.feasible)
    }
}

/// Refits the sensitivity model for each fixed outcome coefficient in `grid`.
/// Failed points are kept with `error` set.
pub fn profile_sensitivity(
    table: &ObservedTable,
    grid: &[f64],
    options: &EmOptions,
    exec: Execution,
) -> Result<SensitivityCurve> {
    table.require_binary("sensitivity analysis")?;
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("sensitivity grid must be finite and strictly increasing".into()));
    }
    let points = exec.map(grid, |&beta_y| {
        let opts = EmOptions { beta_y, ..options.clone() };
        let outcome = em_fit(table, MechanismKind::Sensitivity, &opts).and_then(|fit| {
            let effects = effects_from_joint(&fit.joint, Measure::LogOddsRatio, Assumption::LatentIgnorable)?;
            let expert = check_expert_assumptions(&fit.joint)?;
            Ok((fit, effects, expert))
        });
        match outcome {
            Ok((fit, effects, expert)) => SensitivityPoint {
                beta_y,
                log_cor: effects.ce_x,
                loglik: fit.loglik,
                feasible: expert.all(),
                converged: fit.converged,
                error: None,
            },
            Err(e) => SensitivityPoint {
                beta_y,
                log_cor: vec![f64::NAN; table.j()],
                loglik: f64::NAN,
                feasible: false,
                converged: false,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(SensitivityCurve { points })
}
