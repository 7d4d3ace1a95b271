use serde::{Deserialize, Serialize};

use super::dgp::{generate_dataset, DgpSpec, SIMULATION_LOG_COR};
use crate::em::{em_fit, select_mechanism, EmOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gibbs::{gibbs_run, posterior_summary, GibbsOptions, Target};
use crate::identify::bounds_m5;
use crate::measures::{effects_from_joint, Assumption, Measure};
use crate::tables::{MechanismKind, ObservedTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "mechanism")]
pub enum StudyEstimator {
    /// EM and Gibbs under one restricted mechanism.
    Mechanism(MechanismKind),
    /// The restricted mechanism with the largest likelihood, refit.
    Selected,
    /// Plug-in bounds under the unrestricted mechanism.
    Bounds,
}

impl std::fmt::Display for StudyEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyEstimator::Mechanism(kind) => write!(f, "{kind}"),
            StudyEstimator::Selected => write!(f, "M*"),
            StudyEstimator::Bounds => write!(f, "M5"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    /// Missingness of each data-generating process (simulation design).
    pub dgps: Vec<MechanismKind>,
    pub estimators: Vec<StudyEstimator>,
    pub n: u64,
    pub replicates: usize,
    pub base_seed: u64,
    /// Skip the sampler and report EM metrics only.
    pub run_gibbs: bool,
    pub gibbs: GibbsOptions,
    pub em: EmOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dgps: vec![MechanismKind::M1, MechanismKind::M2, MechanismKind::M3, MechanismKind::M4, MechanismKind::M5],
            estimators: vec![
                StudyEstimator::Mechanism(MechanismKind::M1),
                StudyEstimator::Mechanism(MechanismKind::M2),
                StudyEstimator::Mechanism(MechanismKind::M3),
                StudyEstimator::Mechanism(MechanismKind::M4),
                StudyEstimator::Selected,
                StudyEstimator::Bounds,
            ],
            n: 1000,
            replicates: 200,
            base_seed: 0,
            run_gibbs: true,
            gibbs: GibbsOptions { randomized: true, ..GibbsOptions::default() },
            em: EmOptions::randomized(),
        }
    }
}

/// Seed of the data set for replicate `r` of design `d`.
pub fn replicate_seed(base: u64, dgp: usize, r: usize) -> u64 {
    // SplitMix64 finalizer over the packed coordinates.
    let mut z = base ^ ((dgp as u64) << 40) ^ r as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Metrics for one target quantity in one (design, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub truth: f64,
    /// Replicates contributing to the EM (or bounds) metrics.
    pub used: usize,
    #[serde(serialize_with = "crate::ext::option")]
    pub bias_em: Option<f64>,
    #[serde(serialize_with = "crate::ext::option")]
    pub mse_em: Option<f64>,
    /// Replicates contributing to the posterior metrics.
    pub used_posterior: usize,
    #[serde(serialize_with = "crate::ext::option")]
    pub bias_posterior_median: Option<f64>,
    #[serde(serialize_with = "crate::ext::option")]
    pub mse_posterior_median: Option<f64>,
    #[serde(serialize_with = "crate::ext::option")]
    pub coverage: Option<f64>,
    #[serde(serialize_with = "crate::ext::option")]
    pub mean_lower: Option<f64>,
    #[serde(serialize_with = "crate::ext::option")]
    pub mean_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyCell {
    pub dgp: MechanismKind,
    pub estimator: StudyEstimator,
    pub replicates: usize,
    /// Replicates excluded for a failed, unconverged or boundary fit.
    pub failures: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<MechanismKind>,
    /// One entry per covariate level, for `log COR_x`.
    pub targets: Vec<TargetMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub n: u64,
    pub replicates: usize,
    pub cells: Vec<StudyCell>,
}

impl StudyResult {
    pub fn cell(&self, dgp: MechanismKind, estimator: StudyEstimator) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.dgp == dgp && c.estimator == estimator)
    }
}

/// Outcome of one estimator on one data set.
#[derive(Debug, Clone, Default)]
struct ReplicateOutcome {
    failed: bool,
    selected: Option<MechanismKind>,
    em: Option<[f64; 2]>,
    /// `(median, lower, upper)` per covariate level.
    posterior: Option<[(f64, f64, f64); 2]>,
    bounds: Option<[(f64, f64); 2]>,
}

fn fit_mechanism(table: &ObservedTable, kind: MechanismKind, config: &StudyConfig, seed: u64) -> ReplicateOutcome {
    let mut out = ReplicateOutcome::default();
    let em = em_fit(table, kind, &config.em).and_then(|fit| {
        if !fit.converged || fit.boundary {
            return Ok(None);
        }
        let ce = effects_from_joint(&fit.joint, Measure::LogOddsRatio, Assumption::LatentIgnorable)?.ce_x;
        Ok(ce.iter().all(|v| v.is_finite()).then(|| [ce[0], ce[1]]))
    });
    match em {
        Ok(Some(v)) => out.em = Some(v),
        _ => out.failed = true,
    }
    if config.run_gibbs {
        let options = GibbsOptions { seed, ..config.gibbs.clone() };
        let summary = gibbs_run(table, kind, &options).and_then(|draws| {
            let s0 = posterior_summary(&draws, Target::Effect { measure: Measure::LogOddsRatio, x: 0 })?;
            let s1 = posterior_summary(&draws, Target::Effect { measure: Measure::LogOddsRatio, x: 1 })?;
            Ok([(s0.median, s0.lower, s0.upper), (s1.median, s1.lower, s1.upper)])
        });
        match summary {
            Ok(s) if s.iter().all(|(m, l, u)| m.is_finite() && l.is_finite() && u.is_finite()) => {
                out.posterior = Some(s)
            }
            _ => out.failed = true,
        }
    }
    out
}

fn run_estimator(table: &ObservedTable, estimator: StudyEstimator, config: &StudyConfig, seed: u64) -> ReplicateOutcome {
    match estimator {
        StudyEstimator::Mechanism(kind) => fit_mechanism(table, kind, config, seed),
        StudyEstimator::Selected => {
            match select_mechanism(table, &MechanismKind::ESTIMABLE, &config.em, Execution::Sequential) {
                Ok(sel) => ReplicateOutcome {
                    selected: Some(sel.chosen),
                    ..fit_mechanism(table, sel.chosen, config, seed)
                },
                Err(_) => ReplicateOutcome { failed: true, ..Default::default() },
            }
        }
        StudyEstimator::Bounds => match bounds_m5(table, Measure::LogOddsRatio) {
            Ok(b) if b.lower.iter().chain(&b.upper).all(|v| v.is_finite()) => ReplicateOutcome {
                bounds: Some([(b.lower[0], b.upper[0]), (b.lower[1], b.upper[1])]),
                ..Default::default()
            },
            _ => ReplicateOutcome { failed: true, ..Default::default() },
        },
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn aggregate(dgp: MechanismKind, estimator: StudyEstimator, outcomes: &[ReplicateOutcome]) -> StudyCell {
    let failures = outcomes.iter().filter(|o| o.failed).count();
    let kept: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| !o.failed).collect();
    let targets = (0..2)
        .map(|x| {
            let truth = SIMULATION_LOG_COR[x];
            let em: Vec<f64> = kept.iter().filter_map(|o| o.em.map(|v| v[x] - truth)).collect();
            let post: Vec<(f64, f64, f64)> = kept.iter().filter_map(|o| o.posterior.map(|v| v[x])).collect();
            let medians: Vec<f64> = post.iter().map(|p| p.0 - truth).collect();
            let covered: Vec<f64> = post.iter().map(|p| f64::from(u8::from(p.1 <= truth && truth <= p.2))).collect();
            let bounds: Vec<(f64, f64)> = kept.iter().filter_map(|o| o.bounds.map(|v| v[x])).collect();
            TargetMetrics {
                truth,
                used: em.len().max(bounds.len()),
                bias_em: mean(&em),
                mse_em: mean(&em.iter().map(|d| d * d).collect::<Vec<_>>()),
                used_posterior: post.len(),
                bias_posterior_median: mean(&medians),
                mse_posterior_median: mean(&medians.iter().map(|d| d * d).collect::<Vec<_>>()),
                coverage: mean(&covered),
                mean_lower: mean(&bounds.iter().map(|b| b.0).collect::<Vec<_>>()),
                mean_upper: mean(&bounds.iter().map(|b| b.1).collect::<Vec<_>>()),
            }
        })
        .collect();
    StudyCell {
        dgp,
        estimator,
        replicates: outcomes.len(),
        failures,
        selected: outcomes.iter().filter_map(|o| o.selected).collect(),
        targets,
    }
}

/// Repeats each design `replicates` times and fits every estimator to every
/// data set. Replicates are independent jobs; results are folded in seed
/// order, so the output does not depend on `exec`.
pub fn replicate_study(config: &StudyConfig, exec: Execution) -> Result<StudyResult> {
    if config.replicates == 0 || config.dgps.is_empty() || config.estimators.is_empty() {
        return Err(Error::InvalidInput("study needs designs, estimators and replicates".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..config.dgps.len())
        .flat_map(|d| (0..config.replicates).map(move |r| (d, r)))
        .collect();
    let results: Vec<Result<Vec<ReplicateOutcome>>> = exec.map(&jobs, |&(d, r)| {
        let seed = replicate_seed(config.base_seed, d, r);
        let table = generate_dataset(&DgpSpec::simulation(config.dgps[d], config.n, seed)?)?;
        Ok(config
            .estimators
            .iter()
            .map(|&e| run_estimator(&table, e, config, seed.rotate_left(17)))
            .collect())
    });
    let mut per_job = Vec::with_capacity(results.len());
    for r in results {
        per_job.push(r?);
    }

    let mut cells = Vec::new();
    for (d, &dgp) in config.dgps.iter().enumerate() {
        for (e, &estimator) in config.estimators.iter().enumerate() {
            let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
                .map(|r| per_job[d * config.replicates + r][e].clone())
                .collect();
            let cell = aggregate(dgp, estimator, &outcomes);
            if cell.failures == cell.replicates {
                return Err(Error::NonConvergence(format!(
                    "every replicate failed for {estimator} on {dgp} data"
                )));
            }
            cells.push(cell);
        }
    }
    Ok(StudyResult { n: config.n, replicates: config.replicates, cells })
}
