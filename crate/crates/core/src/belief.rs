//! Bayesian belief over reward weights.
//!
//! The posterior `p(w | answers) ∝ Π P(answer | w) · p(w)` uses a uniform
//! prior on the unit ball and a Boltzmann choice likelihood. It is represented
//! by samples from an adaptive Metropolis chain (Haario et al. 2001): the
//! random-walk proposal covariance tracks the empirical covariance of the
//! chain history. Proposals leaving the unit ball have zero prior density and
//! are rejected outright.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domains::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::{dot, norm, rng};

/// Slack allowed on the unit-ball constraint.
pub const BALL_TOLERANCE: f64 = 1e-9;

/// Rationality coefficient assumed when none is given.
pub const DEFAULT_RATIONALITY: f64 = 1.0;

/// Reward weights `w` with `‖w‖₂ ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("weight vector must have at least one entry"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("weight vector has non-finite entries"));
        }
        let n = norm(&values);
        if n > 1.0 + BALL_TOLERANCE {
            return Err(invalid(format!("weight norm {n} exceeds 1")));
        }
        Ok(Self(values))
    }

    /// Rescales `values` to unit norm.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        let n = norm(&values);
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::new(values.into_iter().map(|v| v / n).collect())
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Which trajectory of a pair the user preferred. Serialized as `+1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Answer {
    /// `I = +1`
    A,
    /// `I = -1`
    B,
}

impl Answer {
    pub fn sign(self) -> f64 {
        match self {
            Answer::A => 1.0,
            Answer::B => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Answer::A => Answer::B,
            Answer::B => Answer::A,
        }
    }
}

impl TryFrom<i8> for Answer {
    type Error = Error;
    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Answer::A),
            -1 => Ok(Answer::B),
            other => Err(invalid(format!("choice must be +1 or -1, got {other}"))),
        }
    }
}

impl From<Answer> for i8 {
    fn from(a: Answer) -> i8 {
        match a {
            Answer::A => 1,
            Answer::B => -1,
        }
    }
}

fn default_rationality() -> f64 {
    DEFAULT_RATIONALITY
}

/// One answered comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub features_a: FeatureVector,
    pub features_b: FeatureVector,
    pub choice: Answer,
    #[serde(default = "default_rationality")]
    pub rationality: f64,
}

impl PreferenceRecord {
    pub fn new(features_a: FeatureVector, features_b: FeatureVector, choice: Answer) -> Result<Self> {
        Self::with_rationality(features_a, features_b, choice, DEFAULT_RATIONALITY)
    }

    pub fn with_rationality(
        features_a: FeatureVector,
        features_b: FeatureVector,
        choice: Answer,
        rationality: f64,
    ) -> Result<Self> {
        if features_a.len() != features_b.len() {
            return Err(invalid(format!("feature dimensions differ: {} vs {}", features_a.len(), features_b.len())));
        }
        if !(rationality.is_finite() && rationality > 0.0) {
            return Err(invalid("rationality must be positive and finite"));
        }
        Ok(Self { features_a, features_b, choice, rationality })
    }

    pub fn dim(&self) -> usize {
        self.features_a.len()
    }

    pub fn flipped(&self) -> Self {
        Self { choice: self.choice.flipped(), ..self.clone() }
    }

    fn check(&self, w: &[f64]) -> Result<()> {
        if self.dim() != w.len() || self.features_b.len() != w.len() {
            return Err(invalid(format!(
                "record dimension {} does not match weight dimension {}",
                self.dim(),
                w.len()
            )));
        }
        let finite = |f: &FeatureVector| f.iter().all(|v| v.is_finite());
        if !finite(&self.features_a) || !finite(&self.features_b) {
            return Err(invalid("non-finite feature value in preference record"));
        }
        Ok(())
    }

    /// `β·w·Φ_A` and `β·w·Φ_B`.
    fn scaled_rewards(&self, w: &[f64]) -> (f64, f64) {
        (self.rationality * dot(w, &self.features_a), self.rationality * dot(w, &self.features_b))
    }
}

/// `ln σ(x)` without overflow.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Boltzmann probability that the user answers as recorded, given weights `w`.
pub fn preference_likelihood(record: &PreferenceRecord, w: &[f64]) -> Result<f64> {
    record.check(w)?;
    let (ra, rb) = record.scaled_rewards(w);
    let m = ra.max(rb);
    let (ea, eb) = ((ra - m).exp(), (rb - m).exp());
    let chosen = match record.choice {
        Answer::A => ea,
        Answer::B => eb,
    };
    Ok(chosen / (ea + eb))
}

/// `ln P(I | w)` for one record, stable for saturated reward gaps.
pub fn log_likelihood(record: &PreferenceRecord, w: &[f64]) -> Result<f64> {
    record.check(w)?;
    let (ra, rb) = record.scaled_rewards(w);
    Ok(log_sigmoid(record.choice.sign() * (ra - rb)))
}

/// Log posterior density up to an additive constant. `-inf` outside the unit ball.
pub fn log_unnormalized_posterior(w: &[f64], records: &[PreferenceRecord]) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        total += log_likelihood(r, w)?;
    }
    if norm(w) > 1.0 + BALL_TOLERANCE {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(total)
}

/// Chain length settings for [`sample_posterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of posterior samples `K` to return.
    pub samples: usize,
    /// Total chain steps including burn-in.
    pub total_steps: usize,
    /// Defaults to 20% of `total_steps`.
    pub burn_in: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: 1000, total_steps: 10_000, burn_in: None }
    }
}

impl SamplerConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.total_steps / 5)
    }

    /// Keep every `thin`-th post-burn-in state.
    pub fn thin(&self) -> usize {
        let post = self.total_steps.saturating_sub(self.burn_in());
        post.div_ceil(self.samples.max(1)).max(1)
    }
}

/// Steps with a fixed isotropic proposal before covariance adaptation starts.
pub fn adaptation_start(d: usize) -> usize {
    1000.max(10 * d)
}

const INITIAL_PROPOSAL_STD: f64 = 0.1;
const PROPOSAL_JITTER: f64 = 1e-6;

/// Posterior samples plus chain diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSamples {
    pub d: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub samples: Vec<WeightVector>,
    #[serde(skip)]
    pub records: Vec<PreferenceRecord>,
}

impl BeliefSamples {
    /// Wraps fixed samples, e.g. for tests or externally supplied beliefs.
    pub fn from_samples(samples: Vec<WeightVector>) -> Result<Self> {
        let d = samples.first().map(|s| s.dim()).ok_or_else(|| invalid("belief needs at least one sample"))?;
        if samples.iter().any(|s| s.dim() != d) {
            return Err(invalid("belief samples have mixed dimensions"));
        }
        Ok(Self { d, seed: 0, acceptance_rate: 0.5, samples, records: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Running mean and co-moment of the chain (Welford).
struct RunningCovariance {
    n: usize,
    mean: DVector<f64>,
    comoment: DMatrix<f64>,
}

impl RunningCovariance {
    fn new(d: usize) -> Self {
        Self { n: 0, mean: DVector::zeros(d), comoment: DMatrix::zeros(d, d) }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.comoment += &delta * delta2.transpose();
    }

    fn proposal_factor(&self, d: usize) -> Option<DMatrix<f64>> {
        if self.n < 2 {
            return None;
        }
        let scale = 2.38 * 2.38 / d as f64;
        let cov = &self.comoment * (scale / (self.n - 1) as f64) + DMatrix::identity(d, d) * PROPOSAL_JITTER;
        cov.cholesky().map(|c| c.l())
    }
}

/// Draws `config.samples` weights from the posterior given `records`.
///
/// Deterministic for a fixed `(records, d, config, seed)`.
pub fn sample_posterior(
    records: &[PreferenceRecord],
    d: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<BeliefSamples> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if config.samples == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if let Some(r) = records.iter().find(|r| r.dim() != d) {
        return Err(invalid(format!("record dimension {} does not match {d}", r.dim())));
    }
    for r in records {
        r.check(&vec![0.0; d])?;
    }
    // β·I·(Φ_A − Φ_B): the log-likelihood of each record is ln σ(w · diff).
    let diffs: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let s = r.rationality * r.choice.sign();
            r.features_a.iter().zip(r.features_b.iter()).map(|(a, b)| s * (a - b)).collect()
        })
        .collect();
    let log_post = |w: &[f64]| -> f64 { diffs.iter().map(|diff| log_sigmoid(dot(w, diff))).sum() };

    let burn_in = config.burn_in();
    let thin = config.thin();
    let total = burn_in + thin * config.samples;
    let adapt_after = adaptation_start(d);

    let mut rng = rng::seeded(seed);
    let mut current = DVector::<f64>::zeros(d);
    let mut current_lp = log_post(current.as_slice());
    let mut history = RunningCovariance::new(d);
    let mut samples = Vec::with_capacity(config.samples);
    let mut accepted = 0usize;
    let mut z = DVector::<f64>::zeros(d);

    for step in 0..total {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let factor = if step >= adapt_after { history.proposal_factor(d) } else { None };
        let proposal = match factor {
            Some(l) => &current + l * &z,
            None => &current + &z * INITIAL_PROPOSAL_STD,
        };
        let u: f64 = rng.random();
        if proposal.norm() <= 1.0 {
            let lp = log_post(proposal.as_slice());
            if u.ln() < lp - current_lp {
                current = proposal;
                current_lp = lp;
                if step >= burn_in {
                    accepted += 1;
                }
            }
        }
        history.push(&current);
        if step >= burn_in && (step - burn_in + 1).is_multiple_of(thin) {
            samples.push(WeightVector(current.as_slice().to_vec()));
        }
    }

    let post_steps = total - burn_in;
    let acceptance_rate = accepted as f64 / post_steps as f64;
    if accepted == 0 {
        return Err(Error::SamplerDegenerate);
    }
    Ok(BeliefSamples { d, seed, acceptance_rate, samples, records: records.to_vec() })
}

/// Component-wise sample mean, clamped into the unit ball.
pub fn posterior_mean(belief: &BeliefSamples) -> Result<WeightVector> {
    if belief.is_empty() {
        return Err(invalid("belief has no samples"));
    }
    let mut mean = vec![0.0; belief.d];
    for s in &belief.samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    let k = belief.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    let n = norm(&mean);
    if n > 1.0 {
        mean.iter_mut().for_each(|m| *m /= n);
    }
    Ok(WeightVector(mean))
}
