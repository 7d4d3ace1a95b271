//! EM maximum likelihood for the restricted mechanisms, model checking,
//! mechanism selection and sensitivity profiling.
//!
//! The E-step spreads each covariate-missing margin `N_t+y1` over `x` in
//! proportion to the current `P(T=t, X=x, Y=y, M=1)`. The M-step refits each
//! factor of `P(X) P(T|X) P(Y|T,X) P(M|T,X,Y)` from the completed counts:
//! proportions for the first three and for the tabular missingness models,
//! a grouped logistic regression for the logistic ones.

mod gof;
mod irls;
mod select;

pub use gof::{check_expert_assumptions, lrt_gof, lrt_gof_with, ExpertAssumptions, GofResult};
pub use irls::{irls_logistic, irls_logistic_with, LogisticCell, LogisticFit, COEFFICIENT_CAP};
pub use select::{profile_sensitivity, select_mechanism, CandidateFit, Selection, SensitivityCurve, SensitivityPoint};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tables::{
    compose_unchecked, observed_loglik, FactoredParams, JointDistribution, MechanismKind, MechanismSpec,
    ObservedTable,
};

/// Newton steps per warm-started logistic M-step. A partial M-step keeps EM an
/// ascent method; the first M-step is solved fully.
const M_STEP_NEWTON: usize = 5;

/// Fitted probabilities closer than this to 0 or 1 mark a boundary solution.
const BOUNDARY_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "params")]
pub enum EmStart {
    /// Observed complete-case cells, with each missing margin spread evenly
    /// over the covariate levels.
    Empirical,
    /// Every cell of the joint equal.
    Uniform,
    Explicit(FactoredParams),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when the log-likelihood changes by less than this between steps.
    pub loglik_tolerance: f64,
    /// When set, also require every joint cell to move by less than this.
    pub param_tolerance: Option<f64>,
    pub start: EmStart,
    /// Constrain `P(T | X) = P(T)`.
    pub randomized: bool,
    /// Fixed outcome coefficient for the sensitivity mechanism.
    pub beta_y: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            loglik_tolerance: 1e-10,
            param_tolerance: None,
            start: EmStart::Empirical,
            randomized: false,
            beta_y: 0.0,
        }
    }
}

impl EmOptions {
    pub fn randomized() -> Self {
        Self { randomized: true, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if self.loglik_tolerance.is_nan() || self.loglik_tolerance <= 0.0 {
            return Err(Error::InvalidInput("loglik_tolerance must be positive".into()));
        }
        if self.param_tolerance.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return Err(Error::InvalidInput("param_tolerance must be positive".into()));
        }
        if !self.beta_y.is_finite() {
            return Err(Error::InvalidInput("beta_y must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmFit {
    pub mechanism: MechanismKind,
    pub joint: JointDistribution,
    pub params: FactoredParams,
    #[serde(serialize_with = "crate::ext::f64")]
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some fitted probability sits at 0 or 1, or a logistic coefficient hit
    /// its cap.
    pub boundary: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn safe_div(num: f64, den: f64, fallback: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        fallback
    }
}

fn start_joint(table: &ObservedTable, start: &EmStart) -> Result<JointDistribution> {
    let (j, k) = (table.j(), table.k());
    match start {
        EmStart::Uniform => Ok(JointDistribution::from_raw(j, k, vec![1.0 / (4 * j * k) as f64; 4 * j * k])),
        EmStart::Empirical => {
            let n = table.total();
            let mut p = vec![0.0; 4 * j * k];
            for t in 0..2 {
                for x in 0..j {
                    for y in 0..k {
                        let base = ((t * j + x) * k + y) * 2;
                        p[base] = table.obs(t, x, y) / n;
                        p[base + 1] = table.mis(t, y) / (n * j as f64);
                    }
                }
            }
            Ok(JointDistribution::from_raw(j, k, p))
        }
        EmStart::Explicit(params) => {
            if params.j() != j || params.k() != k {
                return Err(Error::DimensionMismatch("explicit start does not match the table".into()));
            }
            params.validate()?;
            Ok(compose_unchecked(params))
        }
    }
}

/// Completed counts `c[((t*J + x)*K + y)*2 + m]`.
fn e_step(table: &ObservedTable, joint: &JointDistribution) -> Vec<f64> {
    let (j, k) = (table.j(), table.k());
    let mut c = vec![0.0; 4 * j * k];
    for t in 0..2 {
        for y in 0..k {
            let margin = joint.p_missing_margin(t, y);
            let n_mis = table.mis(t, y);
            for x in 0..j {
                let base = ((t * j + x) * k + y) * 2;
                c[base] = table.obs(t, x, y);
                c[base + 1] = n_mis * safe_div(joint.get(t, x, y, 1), margin, 1.0 / j as f64);
            }
        }
    }
    c
}

struct MStep {
    params: FactoredParams,
    capped: bool,
    logistic_beta: Option<Vec<f64>>,
}

fn logistic_missingness(
    c: &[f64],
    j: usize,
    k: usize,
    kind: MechanismKind,
    beta_y: f64,
    warm: Option<&[f64]>,
) -> Result<(MechanismSpec, bool, Vec<f64>)> {
    let mut cells = Vec::with_capacity(4 * j * k);
    for t in 0..2 {
        for x in 0..j {
            for y in 0..k {
                let base = ((t * j + x) * k + y) * 2;
                let (tf, xf, yf) = (t as f64, x as f64, y as f64);
                cells.push(match kind {
                    MechanismKind::M4 => LogisticCell {
                        design: vec![1.0, tf, xf, yf],
                        successes: c[base + 1],
                        failures: c[base],
                        offset: 0.0,
                    },
                    _ => LogisticCell {
                        design: vec![1.0, tf, xf, tf * xf],
                        successes: c[base],
                        failures: c[base + 1],
                        offset: beta_y * yf,
                    },
                });
            }
        }
    }
    let fit = match warm {
        Some(_) => irls_logistic_with(&cells, warm, M_STEP_NEWTON)?,
        None => irls_logistic(&cells, None)?,
    };
    let beta = [fit.beta[0], fit.beta[1], fit.beta[2], fit.beta[3]];
    let spec = match kind {
        MechanismKind::M4 => MechanismSpec::M4 { beta },
        _ => MechanismSpec::Sensitivity { beta, beta_y },
    };
    Ok((spec, fit.capped, fit.beta))
}

fn m_step(
    table: &ObservedTable,
    c: &[f64],
    kind: MechanismKind,
    options: &EmOptions,
    warm: Option<&[f64]>,
) -> Result<MStep> {
    let (j, k) = (table.j(), table.k());
    let at = |t: usize, x: usize, y: usize, m: usize| c[((t * j + x) * k + y) * 2 + m];
    let n: f64 = c.iter().sum();
    let n_tx = |t: usize, x: usize| (0..k).map(|y| at(t, x, y, 0) + at(t, x, y, 1)).sum::<f64>();
    let n_x: Vec<f64> = (0..j).map(|x| n_tx(0, x) + n_tx(1, x)).collect();
    let p_treated = table.arm_total(1) / n;

    let pi_x = n_x.iter().map(|v| v / n).collect();
    let pi_t_given_x = (0..j)
        .map(|x| if options.randomized { p_treated } else { safe_div(n_tx(1, x), n_x[x], p_treated) })
        .collect();
    let mut pi_y_given_tx = Vec::with_capacity(2 * j * k);
    for t in 0..2 {
        for x in 0..j {
            let d = n_tx(t, x);
            for y in 0..k {
                pi_y_given_tx.push(safe_div(at(t, x, y, 0) + at(t, x, y, 1), d, 1.0 / k as f64));
            }
        }
    }

    // Proportion missing within each cell of the conditioning variables.
    let proportion = |cells: &mut dyn Iterator<Item = (usize, usize, usize)>| {
        let (mut m1, mut tot) = (0.0, 0.0);
        for (t, x, y) in cells {
            m1 += at(t, x, y, 1);
            tot += at(t, x, y, 0) + at(t, x, y, 1);
        }
        safe_div(m1, tot, 0.0)
    };
    let mut capped = false;
    let mut logistic_beta = None;
    let missingness = match kind {
        MechanismKind::M1 => MechanismSpec::M1 {
            p_missing: (0..2 * k)
                .map(|i| proportion(&mut (0..j).map(|x| (i / k, x, i % k))))
                .collect(),
        },
        MechanismKind::M2 => MechanismSpec::M2 {
            p_missing: (0..2 * j)
                .map(|i| proportion(&mut (0..k).map(|y| (i / j, i % j, y))))
                .collect(),
        },
        MechanismKind::M3 => MechanismSpec::M3 {
            p_missing: (0..j * k)
                .map(|i| proportion(&mut (0..2).map(|t| (t, i / k, i % k))))
                .collect(),
        },
        MechanismKind::Mx => MechanismSpec::Mx {
            p_missing: (0..j)
                .map(|x| proportion(&mut (0..2).flat_map(|t| (0..k).map(move |y| (t, x, y)))))
                .collect(),
        },
        MechanismKind::M4 | MechanismKind::Sensitivity => {
            let (spec, hit, beta) = logistic_missingness(c, j, k, kind, options.beta_y, warm)?;
            capped = hit;
            logistic_beta = Some(beta);
            spec
        }
        MechanismKind::M5 => unreachable!("rejected before iterating"),
    };
    Ok(MStep {
        params: FactoredParams {
            pi_x,
            pi_t_given_x,
            pi_y_given_tx,
            missingness,
            randomized: options.randomized,
        },
        capped,
        logistic_beta,
    })
}

fn on_boundary(params: &FactoredParams) -> bool {
    let (j, k) = (params.j(), params.k());
    let near = |p: f64| !(BOUNDARY_EPS..=1.0 - BOUNDARY_EPS).contains(&p);
    let mut any = params.pi_x.iter().chain(&params.pi_t_given_x).chain(&params.pi_y_given_tx).any(|&p| near(p));
    for t in 0..2 {
        for x in 0..j {
            for y in 0..k {
                // P(M=1) = 0 is an interior value for cells with no missing data.
                any |= params.missingness.p_missing(j, k, t, x, y) > 1.0 - BOUNDARY_EPS;
            }
        }
    }
    any
}

/// Fits a missingness mechanism by EM.
///
/// A fit that exhausts `max_iter` is returned with `converged = false`.
pub fn em_fit(table: &ObservedTable, mechanism: MechanismKind, options: &EmOptions) -> Result<EmFit> {
    options.validate()?;
    table.require_nonempty()?;
    match mechanism {
        MechanismKind::M5 => {
            return Err(Error::Unsupported(
                "the unrestricted mechanism is not identified; use the bounds instead".into(),
            ))
        }
        MechanismKind::M4 | MechanismKind::Sensitivity => table.require_binary("logistic missingness")?,
        _ => {}
    }
    let mut joint = start_joint(table, &options.start)?;
    let mut warm: Option<Vec<f64>> = match (&options.start, mechanism) {
        (EmStart::Explicit(p), MechanismKind::M4 | MechanismKind::Sensitivity) => match &p.missingness {
            MechanismSpec::M4 { beta } | MechanismSpec::Sensitivity { beta, .. } => Some(beta.to_vec()),
            _ => None,
        },
        _ => None,
    };
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut result = None;
    for iter in 1..=options.max_iter {
        let counts = e_step(table, &joint);
        let step = m_step(table, &counts, mechanism, options, warm.as_deref())?;
        warm = step.logistic_beta.clone();
        let next = compose_unchecked(&step.params);
        let shift = next.cells().iter().zip(joint.cells()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        joint = next;
        let ll = observed_loglik(table, &joint)?;
        trace.push(ll);
        let settled = options.param_tolerance.is_none_or(|t| shift < t);
        let converged = !table.has_missing() || ((ll - prev).abs() < options.loglik_tolerance && settled);
        prev = ll;
        if converged || iter == options.max_iter {
            result = Some((step, iter, converged));
            break;
        }
    }
    let (step, iterations, converged) = result.expect("max_iter is at least 1");
    Ok(EmFit {
        mechanism,
        boundary: step.capped || on_boundary(&step.params),
        params: step.params,
        joint,
        loglik: prev,
        iterations,
        converged,
        trace,
    })
}
