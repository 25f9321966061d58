//! Environment design by Bayesian optimization.
//!
//! The outer loop searches environment parameters `θ` for the most
//! informative query; the inner loop synthesizes the best query inside the
//! environment that `θ` induces. A GP surrogate over `θ → gain` with a UCB
//! acquisition proposes where to look next.

pub mod gp;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefSamples;
use crate::counterfactual::{counterfactual_query, CounterfactualConfig, GeneratedQuery};
use crate::domains::{instantiate, Bounds, DomainSpec};
use crate::error::{invalid, Error, Result};
use crate::rng;

pub use gp::{gp_posterior, ucb, GpModel};

pub const DEFAULT_KAPPA: f64 = 2.576;
const PROBES: usize = 256;
const REFINE_ROUNDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignBudget {
    /// Environments evaluated per design run.
    pub total_evals: usize,
    /// Leading evaluations at uniformly random `θ`.
    pub init_random: usize,
    /// UCB exploration weight.
    pub kappa: f64,
}

impl Default for DesignBudget {
    fn default() -> Self {
        Self { total_evals: 15, init_random: 5, kappa: DEFAULT_KAPPA }
    }
}

impl DesignBudget {
    pub fn validate(&self) -> Result<()> {
        if self.total_evals == 0 {
            return Err(invalid("design budget needs at least one evaluation"));
        }
        if self.init_random > self.total_evals {
            return Err(invalid("init_random cannot exceed total_evals"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(invalid("kappa must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One outer-loop evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignStep {
    pub theta: Vec<f64>,
    pub gain: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub theta: Vec<f64>,
    pub query: GeneratedQuery,
    pub trace: Vec<DesignStep>,
}

impl DesignOutcome {
    pub fn gain(&self) -> f64 {
        self.query.gain
    }
}

/// Maximizes UCB over the box: seeded uniform probes, then coordinate-wise
/// refinement from the best probe with the step halving every round.
pub fn propose_next(model: &GpModel, bounds: &Bounds, kappa: f64, seed: u64) -> Result<Vec<f64>> {
    if bounds.dim() != model.dim() {
        return Err(invalid("bounds and model dimensions differ"));
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(invalid("kappa must be non-negative"));
    }
    let gp = model.condition()?;
    let mut rng = rng::seeded(seed);
    let mut best = bounds.sample(&mut rng);
    let mut best_value = gp.ucb(&best, kappa)?;
    for _ in 1..PROBES {
        let x = bounds.sample(&mut rng);
        let v = gp.ucb(&x, kappa)?;
        if v > best_value {
            best = x;
            best_value = v;
        }
    }
    let mut steps: Vec<f64> = (0..bounds.dim()).map(|i| bounds.width(i) / 4.0).collect();
    for _ in 0..REFINE_ROUNDS {
        for i in 0..bounds.dim() {
            for dir in [1.0, -1.0] {
                let mut x = best.clone();
                x[i] = (x[i] + dir * steps[i]).clamp(bounds.lower[i], bounds.upper[i]);
                let v = gp.ucb(&x, kappa)?;
                if v > best_value {
                    best = x;
                    best_value = v;
                }
            }
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
    }
    Ok(best)
}

/// Generic design loop around an inner query generator.
///
/// `inner(θ, seed)` builds the best query it can in environment `θ`;
/// `DegenerateQuery` and `NoPath` failures count as zero-gain evaluations.
/// Evaluation `t` depends only on evaluations before it, so a larger budget
/// with the same seed replays a smaller one as its prefix.
pub fn design_environment<F>(spec: &DomainSpec, budget: &DesignBudget, seed: u64, mut inner: F) -> Result<DesignOutcome>
where
    F: FnMut(&[f64], u64) -> Result<GeneratedQuery>,
{
    budget.validate()?;
    let bounds = spec.theta_bounds();
    let mut random_thetas = rng::stream(seed, 1);
    let mut trace: Vec<DesignStep> = Vec::with_capacity(budget.total_evals);
    let mut best: Option<(Vec<f64>, GeneratedQuery)> = None;

    for t in 0..budget.total_evals {
        let theta = if t < budget.init_random {
            bounds.sample(&mut random_thetas)
        } else {
            let inputs = trace.iter().map(|s| s.theta.clone()).collect();
            let outputs = trace.iter().map(|s| s.gain).collect();
            let model = gp::fit(inputs, outputs, &bounds)?;
            propose_next(&model, &bounds, budget.kappa, rng::derive(seed, 0x1000 + t as u64))?
        };
        match inner(&theta, rng::derive(seed, 0x2000 + t as u64)) {
            Ok(query) => {
                trace.push(DesignStep { theta: theta.clone(), gain: query.gain, degenerate: false });
                if best.as_ref().is_none_or(|(_, q)| query.gain > q.gain) {
                    best = Some((theta, query));
                }
            }
            Err(Error::DegenerateQuery | Error::NoPath(_)) => {
                trace.push(DesignStep { theta, gain: 0.0, degenerate: true });
            }
            Err(e) => return Err(e),
        }
    }
    let (theta, query) = best.ok_or(Error::DegenerateDesign)?;
    Ok(DesignOutcome { theta, query, trace })
}

/// Environment design with counterfactual queries as the inner optimizer.
pub fn run_environment_design(
    belief: &BeliefSamples,
    spec: &DomainSpec,
    budget: &DesignBudget,
    counterfactual: &CounterfactualConfig,
    env_seed: u64,
    seed: u64,
) -> Result<DesignOutcome> {
    design_environment(spec, budget, seed, |theta, inner_seed| {
        let env = instantiate(spec, theta, env_seed)?;
        counterfactual_query(belief, &env, spec, counterfactual, inner_seed)
    })
}

/// Uniformly random `θ` draws for domain randomization, `count` of them.
pub fn random_thetas(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, 1);
    (0..count).map(|_| bounds.sample(&mut rng)).collect()
}
