//! Closed-form identification of the joint distribution from observable
//! proportions, one solver per missingness mechanism.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::conditions::{check_m2_rank, check_m3_condition, check_m4_condition, check_mx_rank, m4_quadratic};
use crate::error::{Error, Result};
use crate::measures::{eval_measure, CausalEstimate, Measure};
use crate::tables::{empirical_conditionals, JointDistribution, MechanismSpec, ObservedTable};

/// Odds solutions this close below zero are rounding noise and are set to 0.
const NEGATIVE_SLACK: f64 = 1e-10;

/// A joint recovered in closed form with the missingness parameters that
/// generated it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Identified {
    pub joint: JointDistribution,
    pub missingness: MechanismSpec,
    /// Norm of the residual of an overdetermined solve, when one was needed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
}

/// Builds `p_txy0 = N_txy0 / N`, `p_txy1 = p_txy0 * odds(t, x, y)` and
/// renormalizes (a no-op when the odds solve the moment equations exactly).
fn joint_from_odds(table: &ObservedTable, odds: impl Fn(usize, usize, usize) -> f64) -> JointDistribution {
    let (j, k) = (table.j(), table.k());
    let n = table.total();
    let mut p = vec![0.0; 4 * j * k];
    for t in 0..2 {
        for x in 0..j {
            for y in 0..k {
                let base = ((t * j + x) * k + y) * 2;
                let p0 = table.obs(t, x, y) / n;
                p[base] = p0;
                p[base + 1] = if p0 > 0.0 { p0 * odds(t, x, y) } else { 0.0 };
            }
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    JointDistribution::from_raw(j, k, p)
}

fn odds_to_probability(odds: f64) -> f64 {
    odds / (1.0 + odds)
}

fn check_nonnegative(values: &mut [f64], what: &str) -> Result<()> {
    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for v in values.iter_mut() {
        if *v < -NEGATIVE_SLACK * scale {
            return Err(Error::ModelIncompatible(format!(
                "{what} has a negative solution ({v:.6})"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Mechanism 1: `P(X, Y | T) = p_xy0|t / P(M=0 | T, Y)`.
pub fn identify_m1(table: &ObservedTable) -> Result<Identified> {
    table.require_nonempty()?;
    let (j, k) = (table.j(), table.k());
    let mut p_missing = vec![0.0; 2 * k];
    for t in 0..2 {
        for y in 0..k {
            let complete: f64 = (0..j).map(|x| table.obs(t, x, y)).sum();
            let missing = table.mis(t, y);
            if complete <= 0.0 && missing > 0.0 {
                return Err(Error::ConditionViolated(format!(
                    "every row with T={t}, Y={y} has a missing covariate"
                )));
            }
            if complete > 0.0 {
                p_missing[t * k + y] = missing / (complete + missing);
            }
        }
    }
    let joint = joint_from_odds(table, |t, _, y| {
        let q = p_missing[t * k + y];
        q / (1.0 - q)
    });
    Ok(Identified {
        joint,
        missingness: MechanismSpec::M1 { p_missing },
        residual_norm: None,
    })
}

/// Solves `A z = b` (square or overdetermined) and returns the residual norm.
fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let z = if a.is_square() {
        a.clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::RankDeficient("singular moment system".into()))?
    } else {
        a.clone()
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::RankDeficient(e.to_string()))?
    };
    let residual = (&a * &z - &b).norm();
    Ok((z.iter().copied().collect(), residual))
}

/// Mechanism 2: per arm, solve `Theta_t xi_t = p_{+.1|t}` for the odds of
/// missingness `xi_tx = P(M=1 | t, x) / P(M=0 | t, x)`.
pub fn identify_m2(table: &ObservedTable) -> Result<Identified> {
    let (j, k) = (table.j(), table.k());
    if j > k {
        return Err(Error::RankDeficient(format!(
            "mechanism 2 needs at least as many outcome levels as covariate levels (J={j}, K={k})"
        )));
    }
    let emp = empirical_conditionals(table)?;
    let mut xi = vec![0.0; 2 * j];
    let mut residual = 0.0_f64;
    for t in 0..2 {
        let rhs = DVector::from_fn(k, |y, _| emp.missing(t, y));
        if rhs.iter().all(|&v| v == 0.0) {
            continue;
        }
        let report = check_m2_rank(table, t)?;
        if !report.satisfied {
            return Err(Error::RankDeficient(format!(
                "complete-case X and Y are independent in arm t={t}"
            )));
        }
        let a = DMatrix::from_fn(k, j, |y, x| emp.complete(t, x, y));
        let (sol, res) = least_squares(a, rhs)?;
        xi[t * j..(t + 1) * j].copy_from_slice(&sol);
        residual = residual.hypot(res);
    }
    check_nonnegative(&mut xi, "missingness odds xi")?;
    let joint = joint_from_odds(table, |t, x, _| xi[t * j + x]);
    Ok(Identified {
        joint,
        missingness: MechanismSpec::M2 {
            p_missing: xi.iter().map(|&o| odds_to_probability(o)).collect(),
        },
        residual_norm: (k > j).then_some(residual),
    })
}

/// `log COR_x` under mechanism 3, identified without any randomization
/// assumption. Infinite values are flagged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M3LogOddsRatios {
    #[serde(serialize_with = "crate::ext::vec")]
    pub log_cor: Vec<f64>,
    /// Set where a zero cell makes `log COR_x` infinite or undefined.
    pub flagged: Vec<bool>,
}

impl M3LogOddsRatios {
    /// Sign of `CE_x`, shared by every causal measure: 1, 0, -1, or NaN.
    pub fn signs(&self) -> Vec<f64> {
        self.log_cor
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { v.signum() })
            .collect()
    }
}

pub fn identify_m3_cor(table: &ObservedTable) -> Result<M3LogOddsRatios> {
    if table.k() != 2 {
        return Err(Error::Unsupported("odds ratios need a binary outcome".into()));
    }
    let emp = empirical_conditionals(table)?;
    let mut log_cor = Vec::with_capacity(table.j());
    for x in 0..table.j() {
        let num = emp.complete(1, x, 1) * emp.complete(0, x, 0);
        let den = emp.complete(0, x, 1) * emp.complete(1, x, 0);
        let cor = if den == 0.0 {
            if num > 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        } else {
            num / den
        };
        log_cor.push(cor.ln());
    }
    let flagged = log_cor.iter().map(|v| !v.is_finite()).collect();
    Ok(M3LogOddsRatios { log_cor, flagged })
}

/// Mechanism 3 with a binary covariate: per outcome level, a 2x2 solve for
/// `kappa_xy = P(M=1 | x, y) / P(M=0 | x, y)`.
pub fn identify_m3_joint(table: &ObservedTable) -> Result<Identified> {
    let (j, k) = (table.j(), table.k());
    if j != 2 {
        return Err(Error::Unsupported("mechanism 3 joint needs a binary covariate".into()));
    }
    let emp = empirical_conditionals(table)?;
    let mut kappa = vec![0.0; j * k];
    for y in 0..k {
        let rhs = DVector::from_vec(vec![emp.missing(1, y), emp.missing(0, y)]);
        if rhs.iter().all(|&v| v == 0.0) {
            continue;
        }
        if !check_m3_condition(table, y)?.satisfied {
            return Err(Error::RankDeficient(format!(
                "complete-case X and T are independent given Y={y}"
            )));
        }
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                emp.complete(1, 0, y),
                emp.complete(1, 1, y),
                emp.complete(0, 0, y),
                emp.complete(0, 1, y),
            ],
        );
        let (sol, _) = least_squares(a, rhs)?;
        kappa[y] = sol[0];
        kappa[k + y] = sol[1];
    }
    check_nonnegative(&mut kappa, "missingness odds kappa")?;
    let joint = joint_from_odds(table, |_, x, y| kappa[x * k + y]);
    Ok(Identified {
        joint,
        missingness: MechanismSpec::M3 {
            p_missing: kappa.iter().map(|&o| odds_to_probability(o)).collect(),
        },
        residual_norm: None,
    })
}

/// Outcome probabilities and effects under mechanism 3 when treatment is
/// completely randomized (`T` independent of `X`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct M3RandomizedEffects {
    /// `P(Y=1 | T=t, X=x)` at `[t*J + x]`; NaN in degenerate strata.
    #[serde(serialize_with = "crate::ext::vec")]
    pub p_outcome: Vec<f64>,
    /// Strata where the 2x2 system is singular, which forces `CE_x = 0`.
    pub degenerate: Vec<bool>,
    pub estimate: CausalEstimate,
}

pub fn identify_m3_ce_randomized(table: &ObservedTable, measure: Measure) -> Result<M3RandomizedEffects> {
    if table.k() != 2 {
        return Err(Error::Unsupported("needs a binary outcome".into()));
    }
    let j = table.j();
    let emp = empirical_conditionals(table)?;
    let mut p_outcome = vec![f64::NAN; 2 * j];
    let mut degenerate = vec![false; j];
    let mut ce_x = vec![0.0; j];
    for x in 0..j {
        // [p_x10|0  p_x10|1] [ P(Y=1|T=1,x)]   [        0         ]
        // [p_x00|0  p_x00|1] [-P(Y=1|T=0,x)] = [p_x00|0 - p_x00|1 ]
        let (a11, a12) = (emp.complete(0, x, 1), emp.complete(1, x, 1));
        let (a21, a22) = (emp.complete(0, x, 0), emp.complete(1, x, 0));
        let r = a21 - a22;
        let det = a11 * a22 - a12 * a21;
        let scale = (a11 * a22).abs().max((a12 * a21).abs());
        if det.abs() <= 1e-12 * scale || scale == 0.0 {
            degenerate[x] = true;
            continue;
        }
        let p1 = -a12 * r / det;
        let p0 = -(a11 * r / det);
        p_outcome[j + x] = p1;
        p_outcome[x] = p0;
        ce_x[x] = eval_measure(measure, p1, p0);
    }
    let arm_risk = |t: usize| (0..j).map(|x| emp.complete(t, x, 1)).sum::<f64>() + emp.missing(t, 1);
    let estimate = CausalEstimate {
        measure,
        ce_x,
        ce_total: eval_measure(measure, arm_risk(1), arm_risk(0)),
        provenance: "identify_m3_randomized".into(),
    };
    Ok(M3RandomizedEffects {
        p_outcome,
        degenerate,
        estimate,
    })
}

/// Roots of `E B^2 + F B + G = 0` that are strictly positive.
fn positive_roots(e: f64, f: f64, g: f64) -> Result<Vec<f64>> {
    let scale = f.abs().max(g.abs());
    if e.abs() < 1e-12 * scale {
        if f == 0.0 {
            return Err(Error::ModelIncompatible("degenerate mechanism-4 equation".into()));
        }
        return Ok([-g / f].into_iter().filter(|&b| b > 0.0).collect());
    }
    let mut disc = f * f - 4.0 * e * g;
    if disc < 0.0 {
        if disc > -1e-12 * f * f {
            disc = 0.0;
        } else {
            return Err(Error::ModelIncompatible(
                "mechanism-4 equation has a negative discriminant".into(),
            ));
        }
    }
    let q = -0.5 * (f + f.signum() * disc.sqrt());
    let roots = if q == 0.0 {
        vec![0.0]
    } else {
        let (r1, r2) = (q / e, g / q);
        if (r1 - r2).abs() <= 1e-12 * r1.abs().max(r2.abs()) {
            vec![r1]
        } else {
            vec![r1, r2]
        }
    };
    Ok(roots.into_iter().filter(|&b| b > 0.0).collect())
}

/// Mechanism 4: solves the quadratic for `B = exp(beta_X)` and back-substitutes
/// for the remaining logistic coefficients.
pub fn identify_m4(table: &ObservedTable) -> Result<Identified> {
    let (quad, _) = m4_quadratic(table)?;
    let roots = positive_roots(quad.e, quad.f, quad.g)?;
    let b = match roots.as_slice() {
        [b] => *b,
        [] => {
            return Err(Error::ModelIncompatible(
                "mechanism-4 equation has no positive root".into(),
            ))
        }
        _ => {
            let report = check_m4_condition(table)?;
            return Err(Error::ConditionViolated(format!(
                "mechanism-4 equation has two positive roots (E*G = {:.3e})",
                report.statistic
            )));
        }
    };
    let emp = empirical_conditionals(table)?;
    let c = |t: usize, x: usize, y: usize| emp.complete(t, x, y);
    let a = emp.missing(0, 0) / (c(0, 0, 0) + c(0, 1, 0) * b);
    let cc = emp.missing(1, 0) / (c(1, 0, 0) + c(1, 1, 0) * b);
    let d = emp.missing(0, 1) / (c(0, 0, 1) + c(0, 1, 1) * b);
    let beta0 = a.ln();
    let beta = [beta0, cc.ln() - beta0, b.ln(), d.ln() - beta0];
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelIncompatible(format!(
            "mechanism-4 coefficients are not finite: {beta:?}"
        )));
    }
    let joint = joint_from_odds(table, |t, x, y| {
        (beta[0] + beta[1] * t as f64 + beta[2] * x as f64 + beta[3] * y as f64).exp()
    });
    Ok(Identified {
        joint,
        missingness: MechanismSpec::M4 { beta },
        residual_norm: None,
    })
}

/// Missingness depending on `X` only: least-squares solve of the stacked
/// moment equations of both arms for `gamma_x = P(M=1 | x) / P(M=0 | x)`.
pub fn identify_mx(table: &ObservedTable) -> Result<Identified> {
    let (j, k) = (table.j(), table.k());
    let emp = empirical_conditionals(table)?;
    let rhs = DVector::from_fn(2 * k, |row, _| emp.missing(row / k, row % k));
    let mut gamma = vec![0.0; j];
    let mut residual = 0.0;
    if rhs.iter().any(|&v| v != 0.0) {
        if !check_mx_rank(table)?.satisfied {
            return Err(Error::RankDeficient(
                "complete-case X is independent of (T, Y)".into(),
            ));
        }
        let a = DMatrix::from_fn(2 * k, j, |row, x| emp.complete(row / k, x, row % k));
        let (sol, res) = least_squares(a, rhs)?;
        gamma = sol;
        residual = res;
    }
    check_nonnegative(&mut gamma, "missingness odds gamma")?;
    let joint = joint_from_odds(table, |_, x, _| gamma[x]);
    Ok(Identified {
        joint,
        missingness: MechanismSpec::Mx {
            p_missing: gamma.iter().map(|&o| odds_to_probability(o)).collect(),
        },
        residual_norm: Some(residual),
    })
}
