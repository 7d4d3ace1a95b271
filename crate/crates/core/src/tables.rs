//! Observed and complete contingency tables over (T, X, Y, M).
//!
//! `T` is a binary treatment, `X` a covariate with `J` levels that is missing
//! when `M = 1`, and `Y` an outcome with `K` levels. Complete rows are counted
//! per `(t, x, y)`; rows with `X` missing only contribute the `(t, y)` margin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{expit, xlogy};

/// Observable counts: `N_txy0` for complete rows and `N_t+y1` for rows whose
/// covariate is missing.
///
/// Counts are nonnegative reals so that expected-count tables can be fed to
/// the estimators; integrality is only enforced where sampling needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTable {
    j: usize,
    k: usize,
    n_obs: Vec<f64>,
    n_mis: Vec<f64>,
}

impl ObservedTable {
    /// An all-zero table.
    pub fn zeros(j: usize, k: usize) -> Result<Self> {
        if j < 2 || k < 2 {
            return Err(Error::InvalidInput(format!(
                "covariate and outcome need at least two levels (J={j}, K={k})"
            )));
        }
        Ok(Self {
            j,
            k,
            n_obs: vec![0.0; 2 * j * k],
            n_mis: vec![0.0; 2 * k],
        })
    }

    /// Builds a table from flat count vectors laid out as `n_obs[(t*J + x)*K + y]`
    /// and `n_mis[t*K + y]`.
    pub fn new(j: usize, k: usize, n_obs: Vec<f64>, n_mis: Vec<f64>) -> Result<Self> {
        let mut table = Self::zeros(j, k)?;
        if n_obs.len() != 2 * j * k || n_mis.len() != 2 * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} complete and {} missing cells, got {} and {}",
                2 * j * k,
                2 * k,
                n_obs.len(),
                n_mis.len()
            )));
        }
        if let Some(bad) = n_obs.iter().chain(&n_mis).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("count {bad} is not a nonnegative number")));
        }
        table.n_obs = n_obs;
        table.n_mis = n_mis;
        Ok(table)
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn obs(&self, t: usize, x: usize, y: usize) -> f64 {
        self.n_obs[(t * self.j + x) * self.k + y]
    }

    pub fn mis(&self, t: usize, y: usize) -> f64 {
        self.n_mis[t * self.k + y]
    }

    pub fn set_obs(&mut self, t: usize, x: usize, y: usize, n: f64) {
        self.n_obs[(t * self.j + x) * self.k + y] = n;
    }

    pub fn set_mis(&mut self, t: usize, y: usize, n: f64) {
        self.n_mis[t * self.k + y] = n;
    }

    pub fn add_obs(&mut self, t: usize, x: usize, y: usize, n: f64) {
        self.n_obs[(t * self.j + x) * self.k + y] += n;
    }

    pub fn add_mis(&mut self, t: usize, y: usize, n: f64) {
        self.n_mis[t * self.k + y] += n;
    }

    pub fn obs_counts(&self) -> &[f64] {
        &self.n_obs
    }

    pub fn mis_counts(&self) -> &[f64] {
        &self.n_mis
    }

    pub fn total(&self) -> f64 {
        self.n_obs.iter().sum::<f64>() + self.n_mis.iter().sum::<f64>()
    }

    pub fn arm_total(&self, t: usize) -> f64 {
        let obs: f64 = (0..self.j)
            .flat_map(|x| (0..self.k).map(move |y| (x, y)))
            .map(|(x, y)| self.obs(t, x, y))
            .sum();
        obs + (0..self.k).map(|y| self.mis(t, y)).sum::<f64>()
    }

    pub fn complete_total(&self, t: usize) -> f64 {
        (0..self.j)
            .flat_map(|x| (0..self.k).map(move |y| (x, y)))
            .map(|(x, y)| self.obs(t, x, y))
            .sum()
    }

    pub fn has_missing(&self) -> bool {
        self.n_mis.iter().any(|&v| v > 0.0)
    }

    pub fn is_integral(&self) -> bool {
        self.n_obs.iter().chain(&self.n_mis).all(|v| v.fract() == 0.0)
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.total() > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput("table has no observations".into()))
        }
    }

    pub(crate) fn require_binary(&self, what: &str) -> Result<()> {
        if self.j == 2 && self.k == 2 {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} requires a binary covariate and outcome (J={}, K={})",
                self.j, self.k
            )))
        }
    }

    /// Saturated log-likelihood: the observed-data likelihood at the empirical
    /// proportions.
    pub fn saturated_loglik(&self) -> f64 {
        let n = self.total();
        self.n_obs
            .iter()
            .chain(&self.n_mis)
            .map(|&c| xlogy(c, c / n))
            .sum()
    }
}

/// Cell probabilities `p_txym` over (T, X, Y, M).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    j: usize,
    k: usize,
    p: Vec<f64>,
}

impl JointDistribution {
    /// Wraps a flat probability vector laid out as `p[((t*J + x)*K + y)*2 + m]`.
    pub fn new(j: usize, k: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != 4 * j * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells, got {}",
                4 * j * k,
                p.len()
            )));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { j, k, p })
    }

    pub(crate) fn from_raw(j: usize, k: usize, p: Vec<f64>) -> Self {
        Self { j, k, p }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, t: usize, x: usize, y: usize, m: usize) -> f64 {
        self.p[((t * self.j + x) * self.k + y) * 2 + m]
    }

    pub fn p_t(&self, t: usize) -> f64 {
        (0..self.j).map(|x| self.p_tx(t, x)).sum()
    }

    pub fn p_x(&self, x: usize) -> f64 {
        self.p_tx(0, x) + self.p_tx(1, x)
    }

    pub fn p_tx(&self, t: usize, x: usize) -> f64 {
        (0..self.k).map(|y| self.get(t, x, y, 0) + self.get(t, x, y, 1)).sum()
    }

    pub fn p_txy(&self, t: usize, x: usize, y: usize) -> f64 {
        self.get(t, x, y, 0) + self.get(t, x, y, 1)
    }

    /// `P(T=t, Y=y, M=1)`, the observable margin of covariate-missing rows.
    pub fn p_missing_margin(&self, t: usize, y: usize) -> f64 {
        (0..self.j).map(|x| self.get(t, x, y, 1)).sum()
    }

    pub fn p_y_given_tx(&self, t: usize, x: usize, y: usize) -> Result<f64> {
        let denom = self.p_tx(t, x);
        if denom <= 0.0 {
            return Err(Error::ZeroConditioning(format!("P(T={t}, X={x}) = 0")));
        }
        Ok(self.p_txy(t, x, y) / denom)
    }

    pub fn p_y_given_t(&self, t: usize, y: usize) -> Result<f64> {
        let denom = self.p_t(t);
        if denom <= 0.0 {
            return Err(Error::ZeroConditioning(format!("P(T={t}) = 0")));
        }
        let num: f64 = (0..self.j).map(|x| self.p_txy(t, x, y)).sum();
        Ok(num / denom)
    }

    /// `P(M=1 | T=t, X=x, Y=y)`; `None` when the conditioning cell is empty.
    pub fn p_missing_given(&self, t: usize, x: usize, y: usize) -> Option<f64> {
        let d = self.p_txy(t, x, y);
        (d > 0.0).then(|| self.get(t, x, y, 1) / d)
    }

    /// Expected observable counts `N * p_txy0` and `N * p_t+y1`.
    pub fn expected_table(&self, n: f64) -> ObservedTable {
        let mut table = ObservedTable::zeros(self.j, self.k).expect("dimensions already validated");
        for t in 0..2 {
            for y in 0..self.k {
                for x in 0..self.j {
                    table.set_obs(t, x, y, n * self.get(t, x, y, 0));
                }
                table.set_mis(t, y, n * self.p_missing_margin(t, y));
            }
        }
        table
    }

    pub fn total_variation(&self, other: &JointDistribution) -> f64 {
        0.5 * self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub(crate) fn require_dims(&self, table: &ObservedTable) -> Result<()> {
        if self.j == table.j && self.k == table.k {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "joint is {}x{}, table is {}x{}",
                self.j, self.k, table.j, table.k
            )))
        }
    }
}

/// Which restriction governs the missingness of the covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MechanismKind {
    /// `M` depends on `(T, Y)` only (missing at random).
    M1,
    /// `M` depends on `(T, X)` only.
    M2,
    /// `M` depends on `(X, Y)` only.
    M3,
    /// Main-effects logistic model for `P(M=1 | t, x, y)`.
    M4,
    /// Unrestricted.
    M5,
    /// `M` depends on `X` only; the common special case of M2 and M3.
    Mx,
    /// Logistic model for `P(M=0 | t, x, y)` with a fixed outcome coefficient.
    Sensitivity,
}

impl MechanismKind {
    pub const ESTIMABLE: [MechanismKind; 4] =
        [MechanismKind::M1, MechanismKind::M2, MechanismKind::M3, MechanismKind::M4];

    pub fn label(self) -> &'static str {
        match self {
            MechanismKind::M1 => "1",
            MechanismKind::M2 => "2",
            MechanismKind::M3 => "3",
            MechanismKind::M4 => "4",
            MechanismKind::M5 => "5",
            MechanismKind::Mx => "x",
            MechanismKind::Sensitivity => "sensitivity",
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MechanismKind::Mx => write!(f, "Mx"),
            MechanismKind::Sensitivity => write!(f, "Sensitivity"),
            other => write!(f, "M{}", other.label()),
        }
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches('m') {
            "1" => Ok(MechanismKind::M1),
            "2" => Ok(MechanismKind::M2),
            "3" => Ok(MechanismKind::M3),
            "4" => Ok(MechanismKind::M4),
            "5" => Ok(MechanismKind::M5),
            "x" => Ok(MechanismKind::Mx),
            "sens" | "sensitivity" => Ok(MechanismKind::Sensitivity),
            other => Err(Error::InvalidInput(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Missingness model together with its parameters.
///
/// Tables hold `P(M=1 | ...)` laid out row-major over the conditioning
/// variables listed in each variant. `M4` parameterizes `P(M=1)` while
/// `Sensitivity` parameterizes `P(M=0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    /// `p_missing[t*K + y]`.
    M1 { p_missing: Vec<f64> },
    /// `p_missing[t*J + x]`.
    M2 { p_missing: Vec<f64> },
    /// `p_missing[x*K + y]`.
    M3 { p_missing: Vec<f64> },
    /// `logit P(M=1) = b0 + bT t + bX x + bY y`, coefficients in that order.
    M4 { beta: [f64; 4] },
    /// `p_missing[(t*J + x)*K + y]`, no restriction.
    M5 { p_missing: Vec<f64> },
    /// `p_missing[x]`.
    Mx { p_missing: Vec<f64> },
    /// `logit P(M=0) = b0 + bT t + bX x + bTX t x + beta_y y`, with `beta`
    /// holding `(b0, bT, bX, bTX)`.
    Sensitivity { beta: [f64; 4], beta_y: f64 },
}

impl MechanismSpec {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismSpec::M1 { .. } => MechanismKind::M1,
            MechanismSpec::M2 { .. } => MechanismKind::M2,
            MechanismSpec::M3 { .. } => MechanismKind::M3,
            MechanismSpec::M4 { .. } => MechanismKind::M4,
            MechanismSpec::M5 { .. } => MechanismKind::M5,
            MechanismSpec::Mx { .. } => MechanismKind::Mx,
            MechanismSpec::Sensitivity { .. } => MechanismKind::Sensitivity,
        }
    }

    /// `P(M=1 | T=t, X=x, Y=y)` for a `J x K` layout.
    pub fn p_missing(&self, j: usize, k: usize, t: usize, x: usize, y: usize) -> f64 {
        match self {
            MechanismSpec::M1 { p_missing } => p_missing[t * k + y],
            MechanismSpec::M2 { p_missing } => p_missing[t * j + x],
            MechanismSpec::M3 { p_missing } => p_missing[x * k + y],
            MechanismSpec::M4 { beta } => {
                expit(beta[0] + beta[1] * t as f64 + beta[2] * x as f64 + beta[3] * y as f64)
            }
            MechanismSpec::M5 { p_missing } => p_missing[(t * j + x) * k + y],
            MechanismSpec::Mx { p_missing } => p_missing[x],
            MechanismSpec::Sensitivity { beta, beta_y } => {
                let (tf, xf) = (t as f64, x as f64);
                1.0 - expit(beta[0] + beta[1] * tf + beta[2] * xf + beta[3] * tf * xf + beta_y * y as f64)
            }
        }
    }

    /// Checks table sizes and that `P(M=0 | .) > 0` everywhere.
    ///
    /// Fitted mechanisms may put `P(M=1) = 0` on a cell (no missing data), so
    /// the lower end of the range is closed.
    pub fn validate(&self, j: usize, k: usize) -> Result<()> {
        let expected = match self {
            MechanismSpec::M1 { p_missing } => Some((p_missing.len(), 2 * k)),
            MechanismSpec::M2 { p_missing } => Some((p_missing.len(), 2 * j)),
            MechanismSpec::M3 { p_missing } => Some((p_missing.len(), j * k)),
            MechanismSpec::M5 { p_missing } => Some((p_missing.len(), 2 * j * k)),
            MechanismSpec::Mx { p_missing } => Some((p_missing.len(), j)),
            MechanismSpec::M4 { beta } | MechanismSpec::Sensitivity { beta, .. } => {
                if beta.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidInput("logistic coefficients must be finite".into()));
                }
                if j != 2 || k != 2 {
                    return Err(Error::Unsupported(
                        "logistic missingness models need binary X and Y".into(),
                    ));
                }
                None
            }
        };
        if let Some((got, want)) = expected {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{} table has {got} entries, expected {want}",
                    self.kind()
                )));
            }
        }
        for t in 0..2 {
            for x in 0..j {
                for y in 0..k {
                    let p = self.p_missing(j, k, t, x, y);
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::InvalidInput(format!(
                            "P(M=1 | t={t}, x={x}, y={y}) = {p} is outside [0, 1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Product factorization `P(X) P(T | X) P(Y | T, X) P(M | T, X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredParams {
    /// `P(X = x)`.
    pub pi_x: Vec<f64>,
    /// `P(T = 1 | X = x)`.
    pub pi_t_given_x: Vec<f64>,
    /// `P(Y = y | T = t, X = x)` at `[(t*J + x)*K + y]`.
    pub pi_y_given_tx: Vec<f64>,
    pub missingness: MechanismSpec,
    /// Forces `P(T | X) = P(T)`.
    pub randomized: bool,
}

impl FactoredParams {
    pub fn j(&self) -> usize {
        self.pi_x.len()
    }

    pub fn k(&self) -> usize {
        self.pi_y_given_tx.len() / (2 * self.pi_x.len().max(1))
    }

    pub fn p_y(&self, t: usize, x: usize, y: usize) -> f64 {
        self.pi_y_given_tx[(t * self.j() + x) * self.k() + y]
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.pi_x.len();
        if j < 2 {
            return Err(Error::InvalidInput("covariate needs at least two levels".into()));
        }
        if self.pi_t_given_x.len() != j || !self.pi_y_given_tx.len().is_multiple_of(2 * j) {
            return Err(Error::DimensionMismatch("factor tables disagree on J".into()));
        }
        let k = self.k();
        if k < 2 {
            return Err(Error::InvalidInput("outcome needs at least two levels".into()));
        }
        let in_unit = |v: &f64| v.is_finite() && (0.0..=1.0).contains(v);
        if !self.pi_x.iter().chain(&self.pi_t_given_x).chain(&self.pi_y_given_tx).all(in_unit) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        if (self.pi_x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("P(X) does not sum to 1".into()));
        }
        for row in self.pi_y_given_tx.chunks(k) {
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("a row of P(Y | T, X) does not sum to 1".into()));
            }
        }
        if self.randomized
            && self
                .pi_t_given_x
                .iter()
                .any(|p| (p - self.pi_t_given_x[0]).abs() > 1e-12)
        {
            return Err(Error::InvalidInput(
                "randomized parameters must have P(T=1 | X) constant in X".into(),
            ));
        }
        self.missingness.validate(j, k)
    }

    /// Binary-outcome convenience constructor: `p_outcome[t*J + x] = P(Y=1 | t, x)`.
    pub fn binary(
        pi_x: Vec<f64>,
        pi_t_given_x: Vec<f64>,
        p_outcome: &[f64],
        missingness: MechanismSpec,
        randomized: bool,
    ) -> Self {
        let pi_y_given_tx = p_outcome.iter().flat_map(|&p| [1.0 - p, p]).collect();
        Self {
            pi_x,
            pi_t_given_x,
            pi_y_given_tx,
            missingness,
            randomized,
        }
    }
}

/// Multiplies out the four factors into `p_txym`.
pub fn compose_joint(params: &FactoredParams) -> Result<JointDistribution> {
    params.validate()?;
    Ok(compose_unchecked(params))
}

pub(crate) fn compose_unchecked(params: &FactoredParams) -> JointDistribution {
    let (j, k) = (params.j(), params.k());
    let mut p = vec![0.0; 4 * j * k];
    for t in 0..2 {
        for x in 0..j {
            let pt1 = params.pi_t_given_x[x];
            let p_tx = params.pi_x[x] * if t == 1 { pt1 } else { 1.0 - pt1 };
            for y in 0..k {
                let p_txy = p_tx * params.p_y(t, x, y);
                let q = params.missingness.p_missing(j, k, t, x, y);
                let base = ((t * j + x) * k + y) * 2;
                p[base] = p_txy * (1.0 - q);
                p[base + 1] = p_txy * q;
            }
        }
    }
    JointDistribution::from_raw(j, k, p)
}

/// `sum n_obs log p_txy0 + sum n_mis log p_t+y1` with `0 log 0 = 0`.
///
/// Returns `-inf` when a positive count sits on a zero-probability cell.
pub fn observed_loglik(table: &ObservedTable, joint: &JointDistribution) -> Result<f64> {
    joint.require_dims(table)?;
    let mut ll = 0.0;
    for t in 0..2 {
        for y in 0..table.k() {
            for x in 0..table.j() {
                ll += xlogy(table.obs(t, x, y), joint.get(t, x, y, 0));
            }
            ll += xlogy(table.mis(t, y), joint.p_missing_margin(t, y));
        }
    }
    Ok(ll)
}

/// Within-arm observable proportions `p_xy0|t`, `p_+y1|t` and `P(T=t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConditionals {
    pub j: usize,
    pub k: usize,
    /// `P(X=x, Y=y, M=0 | T=t)` at `[(t*J + x)*K + y]`.
    pub complete: Vec<f64>,
    /// `P(Y=y, M=1 | T=t)` at `[t*K + y]`.
    pub missing: Vec<f64>,
    pub p_t: [f64; 2],
}

impl EmpiricalConditionals {
    pub fn complete(&self, t: usize, x: usize, y: usize) -> f64 {
        self.complete[(t * self.j + x) * self.k + y]
    }

    pub fn missing(&self, t: usize, y: usize) -> f64 {
        self.missing[t * self.k + y]
    }
}

pub fn empirical_conditionals(table: &ObservedTable) -> Result<EmpiricalConditionals> {
    let (j, k) = (table.j(), table.k());
    let arm = [table.arm_total(0), table.arm_total(1)];
    for (t, &n) in arm.iter().enumerate() {
        if n <= 0.0 {
            return Err(Error::EmptyArm(t));
        }
    }
    let total = arm[0] + arm[1];
    let mut complete = vec![0.0; 2 * j * k];
    let mut missing = vec![0.0; 2 * k];
    for t in 0..2 {
        for y in 0..k {
            for x in 0..j {
                complete[(t * j + x) * k + y] = table.obs(t, x, y) / arm[t];
            }
            missing[t * k + y] = table.mis(t, y) / arm[t];
        }
    }
    Ok(EmpiricalConditionals {
        j,
        k,
        complete,
        missing,
        p_t: [arm[0] / total, arm[1] / total],
    })
}

/// Log odds ratio of `Y` on `T`, pooling over `X` and `M`, with its
/// normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationLogOr {
    #[serde(serialize_with = "crate::ext::f64")]
    pub estimate: f64,
    #[serde(serialize_with = "crate::ext::f64")]
    pub se: f64,
    /// Set when a `(t, y)` margin is zero and the estimate is infinite.
    pub degenerate: bool,
}

pub fn population_log_or(table: &ObservedTable) -> Result<PopulationLogOr> {
    if table.k() != 2 {
        return Err(Error::Unsupported("population odds ratio needs a binary outcome".into()));
    }
    let margin = |t: usize, y: usize| -> f64 {
        (0..table.j()).map(|x| table.obs(t, x, y)).sum::<f64>() + table.mis(t, y)
    };
    let (a, b, c, d) = (margin(1, 1), margin(1, 0), margin(0, 1), margin(0, 0));
    let degenerate = [a, b, c, d].iter().any(|&v| v <= 0.0);
    let estimate = if degenerate {
        let num = a * d;
        let den = b * c;
        match (num > 0.0, den > 0.0) {
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            _ => f64::NAN,
        }
    } else {
        (a * d / (b * c)).ln()
    };
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    Ok(PopulationLogOr { estimate, se, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::icd_trial;
    use approx::assert_abs_diff_eq;

    fn uniform_params() -> FactoredParams {
        FactoredParams::binary(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            &[0.5; 4],
            MechanismSpec::M2 { p_missing: vec![0.5; 4] },
            true,
        )
    }

    #[test]
    fn uniform_factors_give_uniform_joint() {
        let joint = compose_joint(&uniform_params()).unwrap();
        for &p in joint.cells() {
            assert_abs_diff_eq!(p, 1.0 / 16.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn m2_simulation_joint_has_requested_outcome_probability() {
        let params = FactoredParams::binary(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            &[0.2, 0.5, 0.8, 0.3],
            MechanismSpec::M2 { p_missing: vec![0.3, 0.5, 0.6, 0.7] },
            true,
        );
        let joint = compose_joint(&params).unwrap();
        assert_abs_diff_eq!(joint.p_y_given_tx(1, 0, 1).unwrap(), 0.8, epsilon = 1e-14);
        for t in 0..2 {
            for x in 0..2 {
                assert_abs_diff_eq!(joint.p_tx(t, x), 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn empty_table_has_zero_loglik() {
        let table = ObservedTable::zeros(2, 2).unwrap();
        let joint = compose_joint(&uniform_params()).unwrap();
        assert_eq!(observed_loglik(&table, &joint).unwrap(), 0.0);
    }

    #[test]
    fn positive_count_on_zero_cell_is_negative_infinity() {
        let mut params = uniform_params();
        params.pi_y_given_tx = vec![1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let joint = compose_joint(&params).unwrap();
        let mut table = ObservedTable::zeros(2, 2).unwrap();
        table.set_obs(0, 0, 1, 3.0);
        assert_eq!(observed_loglik(&table, &joint).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn loglik_rejects_dimension_mismatch() {
        let table = ObservedTable::zeros(3, 2).unwrap();
        let joint = compose_joint(&uniform_params()).unwrap();
        assert!(matches!(observed_loglik(&table, &joint), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn icd_empirical_conditionals() {
        let emp = empirical_conditionals(&icd_trial()).unwrap();
        assert_abs_diff_eq!(emp.complete(0, 0, 0), 4.0 / 489.0, epsilon = 1e-15);
        assert_abs_diff_eq!(emp.p_t[1], 742.0 / 1231.0, epsilon = 1e-15);
        for t in 0..2 {
            let s: f64 = emp.complete[t * 4..t * 4 + 4].iter().sum::<f64>()
                + emp.missing[t * 2..t * 2 + 2].iter().sum::<f64>();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn empirical_conditionals_without_missing_rows() {
        let table = ObservedTable::new(2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], vec![0.0; 4]).unwrap();
        let emp = empirical_conditionals(&table).unwrap();
        assert!(emp.missing.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_arm_is_an_error() {
        let mut table = ObservedTable::zeros(2, 2).unwrap();
        table.set_obs(1, 0, 0, 5.0);
        assert_eq!(empirical_conditionals(&table), Err(Error::EmptyArm(0)));
    }

    #[test]
    fn identical_arms_have_zero_log_or() {
        let table = ObservedTable::new(2, 2, vec![3.0, 4.0, 5.0, 6.0, 3.0, 4.0, 5.0, 6.0], vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let lor = population_log_or(&table).unwrap();
        assert_abs_diff_eq!(lor.estimate, 0.0, epsilon = 1e-15);
        assert!(!lor.degenerate);
    }

    #[test]
    fn zero_margin_flags_infinite_log_or() {
        let table = ObservedTable::new(2, 2, vec![3.0, 0.0, 5.0, 0.0, 3.0, 4.0, 5.0, 6.0], vec![1.0, 0.0, 1.0, 2.0]).unwrap();
        let lor = population_log_or(&table).unwrap();
        assert!(lor.degenerate);
        assert_eq!(lor.estimate, f64::INFINITY);
    }

    #[test]
    fn negative_counts_are_rejected() {
        assert!(ObservedTable::new(2, 2, vec![-1.0; 8], vec![0.0; 4]).is_err());
    }

    #[test]
    fn mechanism_validation_rejects_certain_missingness() {
        let spec = MechanismSpec::M1 { p_missing: vec![0.2, 1.0, 0.1, 0.1] };
        assert!(spec.validate(2, 2).is_err());
        let spec = MechanismSpec::M3 { p_missing: vec![0.2; 3] };
        assert!(matches!(spec.validate(2, 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sign_conventions_of_logistic_mechanisms() {
        let m4 = MechanismSpec::M4 { beta: [0.3, 0.0, 0.0, 0.0] };
        assert_abs_diff_eq!(m4.p_missing(2, 2, 0, 0, 0), expit(0.3), epsilon = 1e-15);
        let sens = MechanismSpec::Sensitivity { beta: [0.3, 0.0, 0.0, 0.0], beta_y: 0.0 };
        assert_abs_diff_eq!(sens.p_missing(2, 2, 0, 0, 0), 1.0 - expit(0.3), epsilon = 1e-15);
    }
}
