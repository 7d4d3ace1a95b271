//! Identification: testable conditions, closed-form solvers and bounds.

mod bounds;
mod conditions;
mod solvers;

pub use bounds::{bounds_m5, BoundsResult};
pub use conditions::{
    check_m2_rank, check_m3_condition, check_m4_condition, check_mx_rank, ConditionReport, ConditionRule,
    M4OddsRatios, M4Quadratic, RANK_TOLERANCE,
};
pub use solvers::{
    identify_m1, identify_m2, identify_m3_ce_randomized, identify_m3_cor, identify_m3_joint, identify_m4,
    identify_mx, Identified, M3LogOddsRatios, M3RandomizedEffects,
};
