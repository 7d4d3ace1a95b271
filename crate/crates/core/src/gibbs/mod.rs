//! Posterior sampling by data augmentation.
//!
//! Each sweep imputes the covariate of the missing rows with binomial
//! (multinomial for `J > 2`) draws per `(t, y)` margin, then draws every
//! probability factor from its conjugate Beta or Dirichlet posterior given the
//! completed table. The logistic mechanism has flat priors and is updated by a
//! componentwise random-walk Metropolis-Hastings step.

mod summary;

pub use summary::{effect_modification_test, posterior_summary, EffectModification, PosteriorSummary, Target};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Normal};
use serde::Serialize;

use crate::em::{em_fit, EmOptions};
use crate::error::{Error, Result};
use crate::stats::softplus;
use crate::tables::{compose_unchecked, FactoredParams, JointDistribution, MechanismKind, MechanismSpec, ObservedTable};

/// Componentwise MH acceptance outside this range attaches a warning.
const ACCEPTANCE_RANGE: (f64, f64) = (0.05, 0.9);
const ADAPT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    /// Jeffreys prior `Beta(1/2, 1/2)`.
    pub const JEFFREYS: BetaPrior = BetaPrior { alpha: 0.5, beta: 0.5 };
    pub const UNIFORM: BetaPrior = BetaPrior { alpha: 1.0, beta: 1.0 };
}

/// Hyperparameters for each probability factor. For categorical factors with
/// more than two levels the prior is Dirichlet with every concentration equal
/// to `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Priors {
    pub covariate: BetaPrior,
    pub treatment: BetaPrior,
    pub outcome: BetaPrior,
    pub missingness: BetaPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self::all(BetaPrior::JEFFREYS)
    }
}

impl Priors {
    pub fn all(prior: BetaPrior) -> Self {
        Self { covariate: prior, treatment: prior, outcome: prior, missingness: prior }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsOptions {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burnin: usize,
    pub seed: u64,
    pub priors: Priors,
    /// Standard deviation of the random-walk proposal for logistic coefficients.
    pub mh_proposal_scale: f64,
    /// Scale the proposal toward 30-40% acceptance during burn-in.
    pub adapt_proposal: bool,
    /// Draw a single `P(T=1)` instead of `P(T=1 | X=x)` per stratum.
    pub randomized: bool,
    /// Also store the composed joint of every retained draw.
    pub keep_joints: bool,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burnin: 5_000,
            seed: 0,
            priors: Priors::default(),
            mh_proposal_scale: 0.1,
            adapt_proposal: true,
            randomized: false,
            keep_joints: false,
        }
    }
}

impl GibbsOptions {
    fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::InvalidInput("burn-in must be shorter than the chain".into()));
        }
        if !(self.mh_proposal_scale > 0.0 && self.mh_proposal_scale.is_finite()) {
            return Err(Error::InvalidInput("proposal scale must be positive".into()));
        }
        let p = self.priors;
        for prior in [p.covariate, p.treatment, p.outcome, p.missingness] {
            if !(prior.alpha > 0.0 && prior.beta > 0.0) {
                return Err(Error::InvalidInput("prior hyperparameters must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorDraws {
    pub mechanism: MechanismKind,
    pub j: usize,
    pub k: usize,
    /// Retained parameter draws in chain order.
    pub params: Vec<FactoredParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<JointDistribution>>,
    /// Per-coefficient MH acceptance rate after burn-in (logistic mechanism only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `P(Y=1 | T=t, X=x)` for draw `i`.
    pub fn outcome(&self, i: usize, t: usize, x: usize) -> f64 {
        self.params[i].p_y(t, x, 1)
    }

    pub fn joint(&self, i: usize) -> JointDistribution {
        match &self.joints {
            Some(joints) => joints[i].clone(),
            None => compose_unchecked(&self.params[i]),
        }
    }
}

fn draw_beta(rng: &mut ChaCha8Rng, prior: BetaPrior, successes: f64, failures: f64) -> f64 {
    Beta::new(prior.alpha + successes, prior.beta + failures)
        .expect("posterior shape parameters are positive")
        .sample(rng)
}

/// Dirichlet via normalized Gammas.
fn draw_dirichlet(rng: &mut ChaCha8Rng, concentration: f64, counts: &[f64]) -> Vec<f64> {
    if counts.len() == 2 {
        let p1 = draw_beta(rng, BetaPrior { alpha: concentration, beta: concentration }, counts[1], counts[0]);
        return vec![1.0 - p1, p1];
    }
    let g: Vec<f64> = counts
        .iter()
        .map(|&c| Gamma::new(concentration + c, 1.0).expect("positive shape").sample(rng))
        .collect();
    let s: f64 = g.iter().sum();
    g.iter().map(|v| v / s).collect()
}

/// Splits `n` over categories with probabilities `w` by sequential binomials.
fn draw_multinomial(rng: &mut ChaCha8Rng, n: u64, w: &[f64], out: &mut [f64]) {
    let mut remaining = n;
    let mut mass: f64 = w.iter().sum();
    for (i, &wi) in w.iter().enumerate() {
        if i + 1 == w.len() {
            out[i] = remaining as f64;
            break;
        }
        let p = if mass > 0.0 { (wi / mass).clamp(0.0, 1.0) } else { 1.0 / (w.len() - i) as f64 };
        let k = if remaining == 0 { 0 } else { Binomial::new(remaining, p).expect("valid binomial").sample(rng) };
        out[i] = k as f64;
        remaining -= k;
        mass -= wi;
    }
}

fn logistic_loglik(c: &[f64], j: usize, k: usize, beta: &[f64; 4]) -> f64 {
    let mut ll = 0.0;
    for t in 0..2 {
        for x in 0..j {
            for y in 0..k {
                let base = ((t * j + x) * k + y) * 2;
                let eta = beta[0] + beta[1] * t as f64 + beta[2] * x as f64 + beta[3] * y as f64;
                // successes are M=1
                ll -= c[base + 1] * softplus(-eta) + c[base] * softplus(eta);
            }
        }
    }
    ll
}

struct Sampler<'a> {
    table: &'a ObservedTable,
    kind: MechanismKind,
    options: &'a GibbsOptions,
    rng: ChaCha8Rng,
    scales: [f64; 4],
    accepted: [usize; 4],
    proposed: [usize; 4],
}

impl Sampler<'_> {
    fn impute(&mut self, params: &FactoredParams, c: &mut [f64]) {
        let (j, k) = (self.table.j(), self.table.k());
        let joint = compose_unchecked(params);
        let mut w = vec![0.0; j];
        let mut out = vec![0.0; j];
        for t in 0..2 {
            for y in 0..k {
                for (x, wx) in w.iter_mut().enumerate() {
                    c[((t * j + x) * k + y) * 2] = self.table.obs(t, x, y);
                    *wx = joint.get(t, x, y, 1);
                }
                draw_multinomial(&mut self.rng, self.table.mis(t, y) as u64, &w, &mut out);
                for (x, &n) in out.iter().enumerate() {
                    c[((t * j + x) * k + y) * 2 + 1] = n;
                }
            }
        }
    }

    fn update(&mut self, current: &FactoredParams, c: &[f64], burning: bool) -> FactoredParams {
        let (j, k) = (self.table.j(), self.table.k());
        let pr = self.options.priors;
        let at = |t: usize, x: usize, y: usize, m: usize| c[((t * j + x) * k + y) * 2 + m];
        let n_txy = |t: usize, x: usize, y: usize| at(t, x, y, 0) + at(t, x, y, 1);
        let n_tx = |t: usize, x: usize| (0..k).map(|y| n_txy(t, x, y)).sum::<f64>();

        let n_x: Vec<f64> = (0..j).map(|x| n_tx(0, x) + n_tx(1, x)).collect();
        let pi_x = if j == 2 {
            let p1 = draw_beta(&mut self.rng, pr.covariate, n_x[1], n_x[0]);
            vec![1.0 - p1, p1]
        } else {
            draw_dirichlet(&mut self.rng, pr.covariate.alpha, &n_x)
        };

        let pi_t_given_x = if self.options.randomized {
            let n1: f64 = (0..j).map(|x| n_tx(1, x)).sum();
            let n0: f64 = (0..j).map(|x| n_tx(0, x)).sum();
            vec![draw_beta(&mut self.rng, pr.treatment, n1, n0); j]
        } else {
            (0..j).map(|x| draw_beta(&mut self.rng, pr.treatment, n_tx(1, x), n_tx(0, x))).collect()
        };

        let mut pi_y_given_tx = Vec::with_capacity(2 * j * k);
        for t in 0..2 {
            for x in 0..j {
                if k == 2 {
                    let p1 = draw_beta(&mut self.rng, pr.outcome, n_txy(t, x, 1), n_txy(t, x, 0));
                    pi_y_given_tx.extend([1.0 - p1, p1]);
                } else {
                    let counts: Vec<f64> = (0..k).map(|y| n_txy(t, x, y)).collect();
                    pi_y_given_tx.extend(draw_dirichlet(&mut self.rng, pr.outcome.alpha, &counts));
                }
            }
        }

        let cell = |cells: &mut dyn Iterator<Item = (usize, usize, usize)>, rng: &mut ChaCha8Rng| {
            let (mut m1, mut m0) = (0.0, 0.0);
            for (t, x, y) in cells {
                m1 += at(t, x, y, 1);
                m0 += at(t, x, y, 0);
            }
            draw_beta(rng, pr.missingness, m1, m0)
        };
        let rng = &mut self.rng;
        let missingness = match self.kind {
            MechanismKind::M1 => MechanismSpec::M1 {
                p_missing: (0..2 * k).map(|i| cell(&mut (0..j).map(|x| (i / k, x, i % k)), rng)).collect(),
            },
            MechanismKind::M2 => MechanismSpec::M2 {
                p_missing: (0..2 * j).map(|i| cell(&mut (0..k).map(|y| (i / j, i % j, y)), rng)).collect(),
            },
            MechanismKind::M3 => MechanismSpec::M3 {
                p_missing: (0..j * k).map(|i| cell(&mut (0..2).map(|t| (t, i / k, i % k)), rng)).collect(),
            },
            MechanismKind::Mx => MechanismSpec::Mx {
                p_missing: (0..j)
                    .map(|x| cell(&mut (0..2).flat_map(|t| (0..k).map(move |y| (t, x, y))), rng))
                    .collect(),
            },
            MechanismKind::M4 => {
                let MechanismSpec::M4 { beta } = current.missingness else {
                    unreachable!("chain state matches its mechanism")
                };
                MechanismSpec::M4 { beta: self.metropolis(beta, c, burning) }
            }
            MechanismKind::M5 | MechanismKind::Sensitivity => unreachable!("rejected before sampling"),
        };
        FactoredParams { pi_x, pi_t_given_x, pi_y_given_tx, missingness, randomized: self.options.randomized }
    }

    fn metropolis(&mut self, mut beta: [f64; 4], c: &[f64], burning: bool) -> [f64; 4] {
        let (j, k) = (self.table.j(), self.table.k());
        let mut current = logistic_loglik(c, j, k, &beta);
        for i in 0..4 {
            let step = Normal::new(0.0, self.scales[i]).expect("positive scale").sample(&mut self.rng);
            let mut proposal = beta;
            proposal[i] += step;
            let value = logistic_loglik(c, j, k, &proposal);
            let accept = value >= current || self.rng.random::<f64>().ln() < value - current;
            self.proposed[i] += 1;
            if accept {
                beta = proposal;
                current = value;
                self.accepted[i] += 1;
            }
            if burning && self.options.adapt_proposal && self.proposed[i] == ADAPT_WINDOW {
                let rate = self.accepted[i] as f64 / ADAPT_WINDOW as f64;
                if rate < 0.3 {
                    self.scales[i] *= 0.5;
                } else if rate > 0.4 {
                    self.scales[i] *= 2.0;
                }
                self.proposed[i] = 0;
                self.accepted[i] = 0;
            }
        }
        beta
    }
}

/// Runs one chain. Identical inputs, options and seed reproduce the draws
/// bit for bit.
pub fn gibbs_run(table: &ObservedTable, mechanism: MechanismKind, options: &GibbsOptions) -> Result<PosteriorDraws> {
    options.validate()?;
    table.require_nonempty()?;
    if !table.is_integral() {
        return Err(Error::InvalidInput("the sampler needs integer counts".into()));
    }
    match mechanism {
        MechanismKind::M5 | MechanismKind::Sensitivity => {
            return Err(Error::Unsupported(format!("no sampler for {mechanism}")));
        }
        MechanismKind::M4 => table.require_binary("logistic missingness")?,
        _ => {}
    }
    let (j, k) = (table.j(), table.k());
    // One EM step from the empirical start gives a valid interior state.
    let em_options = EmOptions { max_iter: 1, randomized: options.randomized, ..EmOptions::default() };
    let mut params = em_fit(table, mechanism, &em_options)?.params;

    let mut sampler = Sampler {
        table,
        kind: mechanism,
        options,
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        scales: [options.mh_proposal_scale; 4],
        accepted: [0; 4],
        proposed: [0; 4],
    };
    let retained = options.iterations - options.burnin;
    let mut draws = Vec::with_capacity(retained);
    let mut joints = options.keep_joints.then(|| Vec::with_capacity(retained));
    let mut c = vec![0.0; 4 * j * k];
    for iter in 0..options.iterations {
        let burning = iter < options.burnin;
        if iter == options.burnin {
            sampler.accepted = [0; 4];
            sampler.proposed = [0; 4];
        }
        sampler.impute(&params, &mut c);
        params = sampler.update(&params, &c, burning);
        if !burning {
            if let Some(js) = joints.as_mut() {
                js.push(compose_unchecked(&params));
            }
            draws.push(params.clone());
        }
    }

    let mut warnings = Vec::new();
    let acceptance_rate = (mechanism == MechanismKind::M4).then(|| {
        let rates: Vec<f64> = (0..4)
            .map(|i| sampler.accepted[i] as f64 / sampler.proposed[i].max(1) as f64)
            .collect();
        for (i, r) in rates.iter().enumerate() {
            if !(ACCEPTANCE_RANGE.0 < *r && *r < ACCEPTANCE_RANGE.1) {
                warnings.push(format!("acceptance rate {r:.3} for coefficient {i} is outside (0.05, 0.9)"));
            }
        }
        rates
    });
    Ok(PosteriorDraws {
        mechanism,
        j,
        k,
        params: draws,
        joints,
        acceptance_rate,
        warnings,
    })
}
