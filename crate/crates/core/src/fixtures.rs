//! Bundled data sets.

use crate::tables::ObservedTable;

/// Counts from the implantable cardiac defibrillator trial.
///
/// `T = 1` is the ICD arm, `Y = 1` is death and `X = 1` marks patients who
/// were inducible on electro-physiological stimulation testing; `X` is missing
/// for patients that were never tested.
pub fn icd_trial() -> ObservedTable {
    let mut table = ObservedTable::zeros(2, 2).expect("binary table");
    // (t, x, y, n)
    for &(t, x, y, n) in &[
        (0, 0, 0, 4.0),
        (0, 0, 1, 0.0),
        (1, 0, 0, 311.0),
        (1, 0, 1, 62.0),
        (0, 1, 0, 6.0),
        (0, 1, 1, 2.0),
        (1, 1, 0, 190.0),
        (1, 1, 1, 20.0),
    ] {
        table.set_obs(t, x, y, n);
    }
    for &(t, y, n) in &[(0, 0, 382.0), (0, 1, 95.0), (1, 0, 136.0), (1, 1, 23.0)] {
        table.set_mis(t, y, n);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icd_totals() {
        let table = icd_trial();
        assert_eq!(table.total(), 1231.0);
        assert_eq!(table.arm_total(0), 489.0);
        assert_eq!(table.arm_total(1), 742.0);
        // 79.3% of the ICD arm and 2.4% of the control arm have test records.
        assert!((table.complete_total(1) / 742.0 - 0.786).abs() < 0.01);
        assert!((table.complete_total(0) / 489.0 - 0.0245).abs() < 0.001);
    }
}
