//! Simulation designs, the replication study and mask-and-recover.

mod dgp;
mod mask;
mod study;

pub use dgp::{generate_dataset, simulation_missingness, DgpSpec, SIMULATION_LOG_COR, SIMULATION_OUTCOME};
pub use mask::{apply_mask, mask_and_recover, mask_preset, MaskResult};
pub use study::{replicate_seed, replicate_study, StudyCell, StudyConfig, StudyEstimator, StudyResult, TargetMetrics};
