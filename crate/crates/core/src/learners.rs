//! Query-selection methods and the per-round learning loop.
//!
//! Every method turns the current belief into one `(θ, pair)` query per round:
//!
//! | method  | environment                     | pair generator                      |
//! |---------|---------------------------------|-------------------------------------|
//! | CRED    | Bayesian optimization over `θ`  | counterfactual planning             |
//! | CR      | fixed (box midpoint)            | counterfactual planning             |
//! | RR      | fixed                           | best of `n_rollouts` random rollouts|
//! | MBP     | fixed                           | mean-belief plan vs ε-greedy rollout|
//! | MBP-ED  | Bayesian optimization over `θ`  | as MBP                              |
//! | *-DR    | best of `total_evals` random `θ`| as the base method                  |
//!
//! When a generator cannot produce two distinct trajectories, the learner
//! falls back to the mean-belief plan against a random rollout in the fixed
//! environment, so a query is always produced.

use serde::{Deserialize, Serialize};

use crate::belief::{posterior_mean, sample_posterior, Answer, BeliefSamples, PreferenceRecord, SamplerConfig};
use crate::counterfactual::{best_query, counterfactual_query, CounterfactualConfig, GeneratedQuery};
use crate::domains::{instantiate, DomainSpec, EnvironmentInstance, Trajectory};
use crate::envdesign::{design_environment, random_thetas, DesignBudget};
use crate::error::{invalid, Error, Result};
use crate::query::{info_gain, CandidatePair, Provenance};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CRED")]
    Cred,
    #[serde(rename = "CR")]
    Cr,
    #[serde(rename = "MBP")]
    Mbp,
    #[serde(rename = "MBP-ED")]
    MbpEd,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "RR-DR")]
    RrDr,
    #[serde(rename = "MBP-DR")]
    MbpDr,
    #[serde(rename = "CR-DR")]
    CrDr,
}

impl Method {
    pub const ALL: [Method; 8] =
        [Method::Cred, Method::Cr, Method::Mbp, Method::MbpEd, Method::Rr, Method::RrDr, Method::MbpDr, Method::CrDr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cred => "CRED",
            Method::Cr => "CR",
            Method::Mbp => "MBP",
            Method::MbpEd => "MBP-ED",
            Method::Rr => "RR",
            Method::RrDr => "RR-DR",
            Method::MbpDr => "MBP-DR",
            Method::CrDr => "CR-DR",
        }
    }

    /// Methods that always query in the fixed default environment.
    pub fn fixed_environment(self) -> bool {
        matches!(self, Method::Cr | Method::Mbp | Method::Rr)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub method: Method,
    /// Exploration probability of the mean-belief policy.
    pub epsilon: f64,
    /// Random-rollout pool size per round.
    pub n_rollouts: usize,
    pub design: DesignBudget,
    pub counterfactual: CounterfactualConfig,
    pub belief: SamplerConfig,
    /// Seeds every stochastic stage of the episode.
    pub seed: u64,
    /// Seeds the environment geometry, shared by every `θ`.
    pub env_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            method: Method::Cred,
            epsilon: 0.25,
            n_rollouts: 100,
            design: DesignBudget::default(),
            counterfactual: CounterfactualConfig::default(),
            belief: SamplerConfig::default(),
            seed: 0,
            env_seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid("epsilon must lie in [0, 1]"));
        }
        if self.n_rollouts < 2 {
            return Err(invalid("n_rollouts must be at least 2"));
        }
        self.design.validate()?;
        let cf = &self.counterfactual;
        if cf.keep < 2 || cf.samples < cf.keep {
            return Err(invalid("counterfactual settings need samples >= keep >= 2"));
        }
        if self.belief.samples < 2 {
            return Err(invalid("belief needs at least two samples"));
        }
        Ok(())
    }
}

/// A query ready to show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub theta: Vec<f64>,
    pub pair: CandidatePair,
    pub trajectories: [Trajectory; 2],
    pub gain: f64,
    /// Produced by the degenerate-query fallback.
    pub fallback: bool,
}

/// One completed round, as written to episode traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRound {
    pub round: usize,
    pub theta: Vec<f64>,
    pub pair: CandidatePair,
    pub gain: f64,
    pub answer: Answer,
    pub posterior_mean: Vec<f64>,
    pub acceptance_rate: f64,
    pub belief_seed: u64,
}

fn query_in(theta: Vec<f64>, q: GeneratedQuery) -> Query {
    Query { theta, pair: q.pair, trajectories: q.trajectories, gain: q.gain, fallback: false }
}

fn mean_belief_pair(
    belief: &BeliefSamples,
    env: &EnvironmentInstance,
    spec: &DomainSpec,
    epsilon: f64,
    seed: u64,
) -> Result<GeneratedQuery> {
    let mean = posterior_mean(belief)?;
    let model = env.model();
    let values = model.value_table(&mean, spec.discount, spec.horizon);
    let greedy = model.plan(&mean, spec.discount, spec.horizon)?;
    let explored =
        model.epsilon_greedy_rollout(&values, &mean, spec.discount, spec.horizon, epsilon, &mut rng::seeded(seed));
    let candidates = vec![
        (greedy.clone(), model.features(&greedy, spec.discount)?, Provenance::MeanBelief),
        (explored.clone(), model.features(&explored, spec.discount)?, Provenance::EpsilonGreedy),
    ];
    best_query(candidates, belief)
}

fn rollout_pair(
    belief: &BeliefSamples,
    env: &EnvironmentInstance,
    spec: &DomainSpec,
    n: usize,
    seed: u64,
) -> Result<GeneratedQuery> {
    let model = env.model();
    let mut rng = rng::seeded(seed);
    let candidates = (0..n)
        .map(|index| {
            let t = model.random_rollout(spec.horizon, &mut rng);
            let f = model.features(&t, spec.discount)?;
            Ok((t, f, Provenance::Rollout { index }))
        })
        .collect::<Result<Vec<_>>>()?;
    best_query(candidates, belief)
}

/// Mean-belief plan against a random rollout, retrying rollouts until the
/// features differ. Returns a zero-gain query if they never do.
fn fallback(belief: &BeliefSamples, spec: &DomainSpec, env_seed: u64, seed: u64) -> Result<Query> {
    let theta = spec.default_theta();
    let env = instantiate(spec, &theta, env_seed)?;
    let model = env.model();
    let mean = posterior_mean(belief)?;
    let mut rng = rng::seeded(seed);
    let planned = match model.plan(&mean, spec.discount, spec.horizon) {
        Ok(t) => t,
        Err(Error::NoPath(_)) => model.random_rollout(spec.horizon, &mut rng),
        Err(e) => return Err(e),
    };
    let planned_f = model.features(&planned, spec.discount)?;
    let mut rollout = model.random_rollout(spec.horizon, &mut rng);
    let mut rollout_f = model.features(&rollout, spec.discount)?;
    for _ in 0..32 {
        if planned_f.linf_distance(&rollout_f) > crate::counterfactual::DEDUP_TOLERANCE {
            break;
        }
        rollout = model.random_rollout(spec.horizon, &mut rng);
        rollout_f = model.features(&rollout, spec.discount)?;
    }
    let pair = CandidatePair::with_provenance(planned_f, rollout_f, [Provenance::Fallback, Provenance::Fallback])?;
    let gain = info_gain(&pair, belief)?;
    Ok(Query { theta, pair, trajectories: [planned, rollout], gain, fallback: true })
}

/// Best query over `θ` drawn uniformly at random, `total_evals` of them.
fn randomized<F>(spec: &DomainSpec, config: &LearnerConfig, seed: u64, mut inner: F) -> Result<Query>
where
    F: FnMut(&EnvironmentInstance, u64) -> Result<GeneratedQuery>,
{
    let thetas = random_thetas(&spec.theta_bounds(), config.design.total_evals, seed);
    let mut best: Option<Query> = None;
    for (i, theta) in thetas.into_iter().enumerate() {
        let env = instantiate(spec, &theta, config.env_seed)?;
        match inner(&env, rng::derive(seed, 0x2000 + i as u64)) {
            Ok(q) => {
                if best.as_ref().is_none_or(|b| q.gain > b.gain) {
                    best = Some(query_in(theta, q));
                }
            }
            Err(Error::DegenerateQuery | Error::NoPath(_)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::DegenerateDesign)
}

/// Produces this round's query for the configured method.
pub fn next_query(config: &LearnerConfig, belief: &BeliefSamples, spec: &DomainSpec, round_seed: u64) -> Result<Query> {
    config.validate()?;
    let fixed_theta = spec.default_theta();
    let inner_seed = rng::derive(round_seed, 1);
    let cf = &config.counterfactual;
    let attempt = match config.method {
        Method::Cr | Method::Rr | Method::Mbp => {
            let env = instantiate(spec, &fixed_theta, config.env_seed)?;
            let q = match config.method {
                Method::Cr => counterfactual_query(belief, &env, spec, cf, inner_seed),
                Method::Rr => rollout_pair(belief, &env, spec, config.n_rollouts, inner_seed),
                _ => mean_belief_pair(belief, &env, spec, config.epsilon, inner_seed),
            };
            q.map(|q| query_in(fixed_theta, q))
        }
        Method::Cred => design_environment(spec, &config.design, inner_seed, |theta, s| {
            let env = instantiate(spec, theta, config.env_seed)?;
            counterfactual_query(belief, &env, spec, cf, s)
        })
        .map(|o| query_in(o.theta, o.query)),
        Method::MbpEd => design_environment(spec, &config.design, inner_seed, |theta, s| {
            let env = instantiate(spec, theta, config.env_seed)?;
            mean_belief_pair(belief, &env, spec, config.epsilon, s)
        })
        .map(|o| query_in(o.theta, o.query)),
        Method::CrDr => randomized(spec, config, inner_seed, |env, s| counterfactual_query(belief, env, spec, cf, s)),
        Method::RrDr => {
            randomized(spec, config, inner_seed, |env, s| rollout_pair(belief, env, spec, config.n_rollouts, s))
        }
        Method::MbpDr => {
            randomized(spec, config, inner_seed, |env, s| mean_belief_pair(belief, env, spec, config.epsilon, s))
        }
    };
    match attempt {
        Ok(q) => Ok(q),
        Err(Error::DegenerateQuery | Error::DegenerateDesign | Error::NoPath(_)) => {
            fallback(belief, spec, config.env_seed, rng::derive(round_seed, 2))
        }
        Err(e) => Err(e),
    }
}

/// Appends the answered query and resamples the posterior from all records.
pub fn incorporate_answer(
    records: &[PreferenceRecord],
    pair: &CandidatePair,
    answer: Answer,
    d: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<(Vec<PreferenceRecord>, BeliefSamples)> {
    let mut updated = records.to_vec();
    updated.push(PreferenceRecord::new(pair.features_a.clone(), pair.features_b.clone(), answer)?);
    let belief = sample_posterior(&updated, d, sampler, seed)?;
    Ok((updated, belief))
}

/// State of one learning episode: records, belief, completed rounds, and at
/// most one pending query.
#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    spec: DomainSpec,
    records: Vec<PreferenceRecord>,
    belief: BeliefSamples,
    rounds: Vec<QueryRound>,
    pending: Option<Query>,
}

const BELIEF_TAG: u64 = 0xB000;
const ROUND_TAG: u64 = 0x5100;

impl Learner {
    pub fn new(config: LearnerConfig, spec: DomainSpec) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let belief = sample_posterior(&[], spec.feature_dim(), &config.belief, rng::derive(config.seed, BELIEF_TAG))?;
        Ok(Self { config, spec, records: Vec::new(), belief, rounds: Vec::new(), pending: None })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn belief(&self) -> &BeliefSamples {
        &self.belief
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn rounds(&self) -> &[QueryRound] {
        &self.rounds
    }

    pub fn pending(&self) -> Option<&Query> {
        self.pending.as_ref()
    }

    /// Round number of the pending query, or of the next one to be generated.
    pub fn current_round(&self) -> usize {
        self.rounds.len() + 1
    }

    pub fn posterior_mean(&self) -> Result<Vec<f64>> {
        Ok(posterior_mean(&self.belief)?.into_inner())
    }

    /// Generates the next query. Returns the pending one if it exists.
    pub fn propose(&mut self) -> Result<&Query> {
        if self.pending.is_none() {
            let seed = rng::derive(self.config.seed, ROUND_TAG + self.current_round() as u64);
            self.pending = Some(next_query(&self.config, &self.belief, &self.spec, seed)?);
        }
        Ok(self.pending.as_ref().expect("set above"))
    }

    pub fn answer(&mut self, answer: Answer) -> Result<&QueryRound> {
        let query = self.pending.take().ok_or_else(|| invalid("no pending query to answer"))?;
        let belief_seed = rng::derive(self.config.seed, BELIEF_TAG + self.current_round() as u64);
        let (records, belief) = incorporate_answer(
            &self.records,
            &query.pair,
            answer,
            self.spec.feature_dim(),
            &self.config.belief,
            belief_seed,
        )?;
        self.records = records;
        self.belief = belief;
        let round = QueryRound {
            round: self.current_round(),
            theta: query.theta,
            pair: query.pair,
            gain: query.gain,
            answer,
            posterior_mean: posterior_mean(&self.belief)?.into_inner(),
            acceptance_rate: self.belief.acceptance_rate,
            belief_seed,
        };
        self.rounds.push(round);
        Ok(self.rounds.last().expect("pushed above"))
    }
}
