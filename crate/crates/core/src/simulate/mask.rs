use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::em::{em_fit, EmOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::measures::outcome_probabilities;
use crate::tables::{MechanismKind, MechanismSpec, ObservedTable};

/// Masking mechanisms of the mask-and-recover protocol for binary data.
pub fn mask_preset(kind: MechanismKind) -> Result<MechanismSpec> {
    Ok(match kind {
        // Tables are P(M=1) at [t*2 + y], [t*2 + x] and [x*2 + y].
        MechanismKind::M1 => MechanismSpec::M1 { p_missing: vec![0.2, 0.3, 0.2, 0.4] },
        MechanismKind::M2 => MechanismSpec::M2 { p_missing: vec![0.2, 0.3, 0.2, 0.5] },
        MechanismKind::M3 => MechanismSpec::M3 { p_missing: vec![0.1, 0.1, 0.1, 0.6] },
        MechanismKind::M4 => MechanismSpec::M4 { beta: [-1.0, 1.0, -1.0, 1.0] },
        other => return Err(Error::Unsupported(format!("no mask preset for {other}"))),
    })
}

/// Removes the covariate of each complete unit independently with the
/// mechanism's probability.
pub fn apply_mask(complete: &ObservedTable, mask: &MechanismSpec, rng: &mut ChaCha8Rng) -> Result<ObservedTable> {
    if complete.has_missing() {
        return Err(Error::InvalidInput("mask-and-recover needs a table without missing rows".into()));
    }
    if !complete.is_integral() {
        return Err(Error::InvalidInput("mask-and-recover needs integer counts".into()));
    }
    let (j, k) = (complete.j(), complete.k());
    mask.validate(j, k)?;
    let mut out = ObservedTable::zeros(j, k)?;
    for t in 0..2 {
        for x in 0..j {
            for y in 0..k {
                let n = complete.obs(t, x, y) as u64;
                let q = mask.p_missing(j, k, t, x, y);
                let removed = if n == 0 || q == 0.0 {
                    0
                } else {
                    Binomial::new(n, q).expect("valid binomial").sample(rng)
                };
                out.set_obs(t, x, y, (n - removed) as f64);
                out.add_mis(t, y, removed as f64);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskResult {
    /// Complete-data `P(Y=1 | T=t, X=x)` at `[t*J + x]`.
    pub reference: Vec<f64>,
    pub masks: Vec<MechanismKind>,
    pub estimators: Vec<MechanismKind>,
    /// `rmse[mask][estimator]`; `None` where the estimator failed.
    pub rmse: Vec<Vec<Option<f64>>>,
}

impl MaskResult {
    /// Estimator with the smallest RMSE in each row.
    pub fn row_minimizers(&self) -> Vec<Option<MechanismKind>> {
        self.rmse
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(i, v)| v.map(|v| (i, v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| self.estimators[i])
            })
            .collect()
    }
}

/// Masks `complete` with each mechanism, refits each estimator by EM and
/// reports `sqrt(sum_tx (p_hat_1|tx - p_hat^h_1|tx)^2)` against the
/// complete-data estimates. Mask `i` draws from its own stream of `seed`.
pub fn mask_and_recover(
    complete: &ObservedTable,
    masks: &[(MechanismKind, MechanismSpec)],
    estimators: &[MechanismKind],
    seed: u64,
    options: &EmOptions,
    exec: Execution,
) -> Result<MaskResult> {
    let reference = outcome_probabilities(&em_fit(complete, MechanismKind::M1, options)?.joint)?;
    let masked: Vec<ObservedTable> = masks
        .iter()
        .enumerate()
        .map(|(i, (_, spec))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            apply_mask(complete, spec, &mut rng)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..masks.len())
        .flat_map(|m| (0..estimators.len()).map(move |e| (m, e)))
        .collect();
    let values = exec.map(&jobs, |&(m, e)| {
        let fit = em_fit(&masked[m], estimators[e], options).ok()?;
        if !fit.converged {
            return None;
        }
        let p = outcome_probabilities(&fit.joint).ok()?;
        let sq: f64 = p.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum();
        sq.is_finite().then(|| sq.sqrt())
    });
    let rmse = values.chunks(estimators.len().max(1)).map(|row| row.to_vec()).collect();
    Ok(MaskResult {
        reference,
        masks: masks.iter().map(|(k, _)| *k).collect(),
        estimators: estimators.to_vec(),
        rmse,
    })
}
