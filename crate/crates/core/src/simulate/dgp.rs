use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::expit;
use crate::tables::{compose_joint, FactoredParams, JointDistribution, MechanismKind, MechanismSpec, ObservedTable};

/// `P(Y=1 | T=t, X=x)` at `[t*2 + x]` used by every simulation design.
pub const SIMULATION_OUTCOME: [f64; 4] = [0.2, 0.5, 0.8, 0.3];
/// True `log COR_x` implied by [`SIMULATION_OUTCOME`].
pub const SIMULATION_LOG_COR: [f64; 2] = [2.772588722239781, -0.8472978603872037];

/// A binary data-generating process with a known joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    /// `P(Y=1 | T=t, X=x)` at `[t*2 + x]`.
    pub p_outcome: [f64; 4],
    pub p_treated: f64,
    pub p_covariate: f64,
    pub missingness: MechanismSpec,
    pub n: u64,
    pub seed: u64,
}

/// Saturated logit missingness of the fifth simulation design.
fn saturated_logit(t: f64, x: f64, y: f64) -> f64 {
    expit(-1.0 + 1.4 * t - x - 0.5 * y + 0.5 * t * x + 0.3 * t * y - 0.6 * x * y - 0.2 * t * x * y)
}

/// Missingness of the simulation design for each mechanism.
pub fn simulation_missingness(kind: MechanismKind) -> Result<MechanismSpec> {
    Ok(match kind {
        MechanismKind::M1 => MechanismSpec::M1 { p_missing: vec![0.7, 0.4, 0.3, 0.3] },
        MechanismKind::M2 => MechanismSpec::M2 { p_missing: vec![0.3, 0.5, 0.6, 0.7] },
        MechanismKind::M3 => MechanismSpec::M3 { p_missing: vec![0.8, 0.5, 0.3, 0.3] },
        MechanismKind::M4 => MechanismSpec::M4 { beta: [-1.0, 1.4, -0.5, 0.8] },
        MechanismKind::M5 => {
            let mut p = Vec::with_capacity(8);
            for t in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        p.push(saturated_logit(t as f64, x as f64, y as f64));
                    }
                }
            }
            MechanismSpec::M5 { p_missing: p }
        }
        other => return Err(Error::Unsupported(format!("no simulation design for {other}"))),
    })
}

impl DgpSpec {
    /// The simulation design: `T, X ~ Bernoulli(0.5)`, [`SIMULATION_OUTCOME`],
    /// and the missingness of `kind`.
    pub fn simulation(kind: MechanismKind, n: u64, seed: u64) -> Result<Self> {
        Ok(Self {
            p_outcome: SIMULATION_OUTCOME,
            p_treated: 0.5,
            p_covariate: 0.5,
            missingness: simulation_missingness(kind)?,
            n,
            seed,
        })
    }

    pub fn params(&self) -> FactoredParams {
        FactoredParams::binary(
            vec![1.0 - self.p_covariate, self.p_covariate],
            vec![self.p_treated; 2],
            &self.p_outcome,
            self.missingness.clone(),
            true,
        )
    }

    pub fn joint(&self) -> Result<JointDistribution> {
        let in_open = |p: f64| p > 0.0 && p < 1.0;
        if !(in_open(self.p_treated) && in_open(self.p_covariate) && self.p_outcome.iter().all(|&p| in_open(p))) {
            return Err(Error::InvalidInput("design probabilities must lie in (0, 1)".into()));
        }
        compose_joint(&self.params())
    }
}

/// Draws `n` cell counts from `probs` by sequential binomials.
pub(crate) fn multinomial_counts(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        out[i] = k;
        remaining -= k;
        mass -= p;
    }
    out
}

/// `n` independent units from the design's joint, with the covariate masked
/// wherever `M = 1`.
pub fn generate_dataset(spec: &DgpSpec) -> Result<ObservedTable> {
    if spec.n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let joint = spec.joint()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = multinomial_counts(&mut rng, spec.n, joint.cells());
    let mut table = ObservedTable::zeros(2, 2)?;
    for t in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                let base = ((t * 2 + x) * 2 + y) * 2;
                table.add_obs(t, x, y, counts[base] as f64);
                table.add_mis(t, y, counts[base + 1] as f64);
            }
        }
    }
    Ok(table)
}
