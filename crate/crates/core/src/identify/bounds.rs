use serde::Serialize;

use crate::error::Result;
use crate::measures::{eval_measure, Measure};
use crate::tables::ObservedTable;

/// Sharp bounds on `CE_x` under an unrestricted missingness mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsResult {
    pub measure: Measure,
    #[serde(serialize_with = "crate::ext::vec")]
    pub lower: Vec<f64>,
    #[serde(serialize_with = "crate::ext::vec")]
    pub upper: Vec<f64>,
}

impl BoundsResult {
    pub fn has_infinite(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|v| v.is_infinite())
    }

    pub fn contains(&self, x: usize, value: f64, slack: f64) -> bool {
        value >= self.lower[x] - slack && value <= self.upper[x] + slack
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Worst cases put every missing row of one outcome level into stratum `x`
/// and none of the other. Empirical proportions are plugged in for the cell
/// probabilities; the arm totals cancel.
pub fn bounds_m5(table: &ObservedTable, measure: Measure) -> Result<BoundsResult> {
    table.require_binary("bounds")?;
    table.require_nonempty()?;
    let mut lower = Vec::with_capacity(table.j());
    let mut upper = Vec::with_capacity(table.j());
    for x in 0..table.j() {
        let c = |t: usize, y: usize| table.obs(t, x, y);
        let m = |t: usize, y: usize| table.mis(t, y);
        let p1_lo = ratio(c(1, 1), c(1, 0) + c(1, 1) + m(1, 0));
        let p1_hi = ratio(c(1, 1) + m(1, 1), c(1, 0) + c(1, 1) + m(1, 1));
        let p0_lo = ratio(c(0, 1), c(0, 0) + c(0, 1) + m(0, 0));
        let p0_hi = ratio(c(0, 1) + m(0, 1), c(0, 0) + c(0, 1) + m(0, 1));
        lower.push(eval_measure(measure, p1_lo, p0_hi));
        upper.push(eval_measure(measure, p1_hi, p0_lo));
    }
    Ok(BoundsResult { measure, lower, upper })
}
