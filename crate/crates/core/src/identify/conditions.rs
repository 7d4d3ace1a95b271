//! Testable identification conditions.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::independence_test;
use crate::tables::{empirical_conditionals, ObservedTable};

/// Relative tolerance below which a singular-value ratio (or a normalized
/// determinant) declares rank deficiency.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionRule {
    /// Satisfied when `|statistic| > tolerance`.
    NonzeroStatistic,
    /// Satisfied when `statistic <= tolerance`.
    NonPositiveStatistic,
}

/// The odds ratios of `Y` on `T` that bracket the mechanism-4 condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct M4OddsRatios {
    /// `OR_{YT | M=1}`
    #[serde(serialize_with = "crate::ext::f64")]
    pub missing: f64,
    /// `OR_{YT | X=0, M=0}`
    #[serde(serialize_with = "crate::ext::f64")]
    pub complete_x0: f64,
    /// `OR_{YT | X=1, M=0}`
    #[serde(serialize_with = "crate::ext::f64")]
    pub complete_x1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub satisfied: bool,
    #[serde(serialize_with = "crate::ext::f64")]
    pub statistic: f64,
    /// Chi-square independence test on the relevant complete-case sub-table;
    /// NaN when no such test applies.
    #[serde(serialize_with = "crate::ext::f64")]
    pub test_p_value: f64,
    pub tolerance: f64,
    pub rule: ConditionRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_ratios: Option<M4OddsRatios>,
}

impl ConditionReport {
    fn nonzero(name: String, statistic: f64, tolerance: f64, test_p_value: f64) -> Self {
        Self {
            name,
            satisfied: statistic.abs() > tolerance,
            statistic,
            test_p_value,
            tolerance,
            rule: ConditionRule::NonzeroStatistic,
            odds_ratios: None,
        }
    }
}

/// Determinant of a 2x2 matrix together with a tolerance scaled to its entries.
fn det2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let det = a * d - b * c;
    let scale = (a * d).abs().max((b * c).abs());
    (det, RANK_TOLERANCE * scale)
}

/// Smallest-to-largest singular value ratio of the leading `rank` values.
pub(crate) fn singular_ratio(m: &DMatrix<f64>, rank: usize) -> f64 {
    let sv = m.singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    if v.is_empty() || v[0] == 0.0 || v.len() < rank {
        return 0.0;
    }
    v[rank - 1] / v[0]
}

/// Rank condition for mechanism 2 in arm `t`: the `J x K` matrix of
/// `P(X=x, Y=y | T=t, M=0)` must have rank `J`.
///
/// For binary `X` and `Y` the statistic is the determinant of that matrix,
/// i.e. the test of `X` dependent on `Y` given `(T=t, M=0)`.
pub fn check_m2_rank(table: &ObservedTable, t: usize) -> Result<ConditionReport> {
    let (j, k) = (table.j(), table.k());
    let total = table.complete_total(t);
    if total <= 0.0 {
        return Err(Error::EmptyArm(t));
    }
    let counts: Vec<f64> = (0..j)
        .flat_map(|x| (0..k).map(move |y| (x, y)))
        .map(|(x, y)| table.obs(t, x, y))
        .collect();
    let (_, _, p_value) = independence_test(&counts, j, k);
    let q = |x: usize, y: usize| counts[x * k + y] / total;
    let name = format!("rank of P(X, Y | T={t}, M=0) equals J");
    if j == 2 && k == 2 {
        let (det, tol) = det2(q(0, 0), q(0, 1), q(1, 0), q(1, 1));
        return Ok(ConditionReport::nonzero(name, det, tol, p_value));
    }
    if j > k {
        return Ok(ConditionReport::nonzero(name, 0.0, RANK_TOLERANCE, p_value));
    }
    let m = DMatrix::from_fn(j, k, q);
    Ok(ConditionReport::nonzero(name, singular_ratio(&m, j), RANK_TOLERANCE, p_value))
}

/// Condition for mechanism 3 in outcome stratum `y`: `X` dependent on `T`
/// given `(Y=y, M=0)`. Requires a binary covariate.
pub fn check_m3_condition(table: &ObservedTable, y: usize) -> Result<ConditionReport> {
    if table.j() != 2 {
        return Err(Error::Unsupported("mechanism 3 condition needs a binary covariate".into()));
    }
    let counts: Vec<f64> = (0..2)
        .flat_map(|t| (0..2).map(move |x| (t, x)))
        .map(|(t, x)| table.obs(t, x, y))
        .collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(format!("no complete rows with Y={y}")));
    }
    let (_, _, p_value) = independence_test(&counts, 2, 2);
    let q: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let (det, tol) = det2(q[0], q[1], q[2], q[3]);
    Ok(ConditionReport::nonzero(
        format!("X dependent on T given (Y={y}, M=0)"),
        det,
        tol,
        p_value,
    ))
}

/// Coefficients of the quadratic `E B^2 + F B + G = 0` in `B = exp(beta_X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct M4Quadratic {
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

pub(crate) fn m4_quadratic(table: &ObservedTable) -> Result<(M4Quadratic, M4OddsRatios)> {
    table.require_binary("mechanism 4")?;
    let emp = empirical_conditionals(table)?;
    let c = |t: usize, x: usize, y: usize| emp.complete(t, x, y);
    let m = |t: usize, y: usize| emp.missing(t, y);
    if (0..2).any(|t| (0..2).any(|y| m(t, y) <= 0.0)) {
        return Err(Error::ConditionViolated(
            "mechanism 4 needs covariate-missing rows in every (T, Y) cell".into(),
        ));
    }
    let d1 = m(0, 1) * m(1, 0);
    let d2 = m(0, 0) * m(1, 1);
    let e = c(0, 1, 1) * c(1, 1, 0) / d1 - c(0, 1, 0) * c(1, 1, 1) / d2;
    let f = (c(0, 1, 1) * c(1, 0, 0) + c(0, 0, 1) * c(1, 1, 0)) / d1
        - (c(0, 1, 0) * c(1, 0, 1) + c(0, 0, 0) * c(1, 1, 1)) / d2;
    let g = c(0, 0, 1) * c(1, 0, 0) / d1 - c(0, 0, 0) * c(1, 0, 1) / d2;

    let ratio = |num: f64, den: f64| {
        if den == 0.0 {
            if num > 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        } else {
            num / den
        }
    };
    let ors = M4OddsRatios {
        missing: ratio(m(1, 1) * m(0, 0), m(1, 0) * m(0, 1)),
        complete_x0: ratio(c(1, 0, 1) * c(0, 0, 0), c(1, 0, 0) * c(0, 0, 1)),
        complete_x1: ratio(c(1, 1, 1) * c(0, 1, 0), c(1, 1, 0) * c(0, 1, 1)),
    };
    Ok((M4Quadratic { e, f, g }, ors))
}

/// Mechanism-4 condition: `OR_{YT|M=1}` lies between the two complete-case
/// odds ratios, equivalently `E G <= 0`.
pub fn check_m4_condition(table: &ObservedTable) -> Result<ConditionReport> {
    let (quad, ors) = m4_quadratic(table)?;
    if ors.missing.is_nan() && ors.complete_x0.is_nan() && ors.complete_x1.is_nan() {
        return Err(Error::InvalidInput("all three odds ratios are undefined".into()));
    }
    let statistic = quad.e * quad.g;
    let scale = quad.e.abs().max(quad.f.abs()).max(quad.g.abs());
    let tolerance = 1e-12 * scale * scale;
    Ok(ConditionReport {
        name: "OR_{YT|M=1} between OR_{YT|X=0,M=0} and OR_{YT|X=1,M=0}".into(),
        satisfied: statistic <= tolerance,
        statistic,
        test_p_value: f64::NAN,
        tolerance,
        rule: ConditionRule::NonPositiveStatistic,
        odds_ratios: Some(ors),
    })
}

/// Corollary condition for `M` depending on `X` only: the stacked matrix of
/// both arms' `P(X, Y | T=t, M=0)` must have rank `J`.
pub fn check_mx_rank(table: &ObservedTable) -> Result<ConditionReport> {
    let emp = empirical_conditionals(table)?;
    let (j, k) = (table.j(), table.k());
    let m = DMatrix::from_fn(2 * k, j, |row, x| emp.complete(row / k, x, row % k));
    let counts: Vec<f64> = (0..j)
        .flat_map(|x| (0..2 * k).map(move |row| (x, row)))
        .map(|(x, row)| table.obs(row / k, x, row % k))
        .collect();
    let (_, _, p_value) = independence_test(&counts, j, 2 * k);
    Ok(ConditionReport::nonzero(
        "X dependent on (T, Y) given M=0".into(),
        singular_ratio(&m, j),
        RANK_TOLERANCE,
        p_value,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::icd_trial;
    use approx::assert_abs_diff_eq;

    fn product_table() -> ObservedTable {
        // X and Y independent within each arm's complete cases.
        ObservedTable::new(
            2,
            2,
            vec![10.0, 30.0, 20.0, 60.0, 8.0, 2.0, 4.0, 1.0],
            vec![5.0, 6.0, 7.0, 8.0],
        )
        .unwrap()
    }

    #[test]
    fn icd_treated_arm_satisfies_rank_condition() {
        let report = check_m2_rank(&icd_trial(), 1).unwrap();
        let expected = (311.0 * 20.0 - 62.0 * 190.0) / (583.0 * 583.0);
        assert_abs_diff_eq!(report.statistic, expected, epsilon = 1e-15);
        assert!(report.satisfied);
    }

    #[test]
    fn product_counts_fail_rank_condition() {
        for t in 0..2 {
            let report = check_m2_rank(&product_table(), t).unwrap();
            assert_eq!(report.statistic, 0.0);
            assert!(!report.satisfied);
            assert_abs_diff_eq!(report.test_p_value, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn determinant_matches_cross_ratio_form() {
        // Rank deficiency is the same event as p000 p110 = p010 p100 in each arm.
        let table = icd_trial();
        for t in 0..2 {
            let report = check_m2_rank(&table, t).unwrap();
            let cross = table.obs(t, 0, 0) * table.obs(t, 1, 1) - table.obs(t, 0, 1) * table.obs(t, 1, 0);
            assert_eq!(report.satisfied, cross != 0.0);
            assert_eq!(report.statistic.signum(), cross.signum());
        }
    }

    #[test]
    fn empty_arm_rejected() {
        let mut table = ObservedTable::zeros(2, 2).unwrap();
        table.set_obs(1, 0, 0, 3.0);
        table.set_mis(0, 0, 3.0);
        assert_eq!(check_m2_rank(&table, 0), Err(Error::EmptyArm(0)));
    }

    #[test]
    fn identical_covariate_distribution_across_arms_fails_m3() {
        let table = ObservedTable::new(
            2,
            2,
            vec![10.0, 5.0, 30.0, 7.0, 20.0, 9.0, 60.0, 21.0],
            vec![5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let report = check_m3_condition(&table, 0).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(!report.satisfied);
        assert!(check_m3_condition(&table, 1).unwrap().satisfied);
    }

    #[test]
    fn icd_m3_condition_reported_for_survivors() {
        let report = check_m3_condition(&icd_trial(), 0).unwrap();
        assert!(report.statistic.is_finite());
        assert!((0.0..=1.0).contains(&report.test_p_value));
    }

    #[test]
    fn icd_satisfies_m4_condition() {
        let report = check_m4_condition(&icd_trial()).unwrap();
        assert!(report.satisfied);
        let ors = report.odds_ratios.unwrap();
        // The control arm has no deaths among tested non-inducible patients.
        assert_eq!(ors.complete_x0, f64::INFINITY);
        assert!(ors.missing > ors.complete_x1);
    }

    #[test]
    fn collapsed_odds_ratios_put_m4_on_the_boundary() {
        // Every stratum shares the same arm-by-outcome odds ratio of 1.
        let table = ObservedTable::new(
            2,
            2,
            vec![20.0, 10.0, 40.0, 20.0, 20.0, 10.0, 40.0, 20.0],
            vec![30.0, 15.0, 30.0, 15.0],
        )
        .unwrap();
        let report = check_m4_condition(&table).unwrap();
        assert_abs_diff_eq!(report.statistic, 0.0, epsilon = 1e-12);
        assert!(report.satisfied);
    }

    #[test]
    fn m4_needs_missing_rows_everywhere() {
        let table = ObservedTable::new(2, 2, vec![1.0; 8], vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(check_m4_condition(&table), Err(Error::ConditionViolated(_))));
    }
}
