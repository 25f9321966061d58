//! Counterfactual query synthesis.
//!
//! Hypothesized weights are drawn from the belief, thinned to a diverse subset
//! under cosine distance, and each one is handed to the planner: "what would
//! the robot do if this were the true reward?" The most informative pair of
//! the resulting trajectories becomes the query.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefSamples, WeightVector};
use crate::domains::{self, DomainSpec, EnvironmentInstance, FeatureVector, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::query::{best_pair, CandidatePair, Provenance};
use crate::{dot, norm, rng};

/// Feature vectors closer than this in L∞ are the same trajectory for querying.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterfactualConfig {
    /// Weights drawn from the belief (`N`).
    pub samples: usize,
    /// Diverse weights kept for planning (`M`).
    pub keep: usize,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        Self { samples: 50, keep: 8 }
    }
}

/// A synthesized query with its trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub pair: CandidatePair,
    pub trajectories: [Trajectory; 2],
    pub gain: f64,
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    1.0 - dot(u, v) / (norm(u) * norm(v))
}

/// Greedy farthest-point selection of `m` indices under cosine distance.
///
/// Starts from the largest-norm weight, then repeatedly adds the weight whose
/// minimum distance to the chosen set is largest. Ties go to the lowest index.
pub fn select_diverse_indices(weights: &[WeightVector], m: usize) -> Result<Vec<usize>> {
    if m > weights.len() {
        return Err(invalid(format!("cannot select {m} of {} weights", weights.len())));
    }
    if weights.iter().any(|w| w.norm() == 0.0) {
        return Err(invalid("zero-norm weight has no direction"));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut first = 0;
    for (i, w) in weights.iter().enumerate() {
        if w.norm() > weights[first].norm() {
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut taken = vec![false; weights.len()];
    taken[first] = true;
    let mut min_dist: Vec<f64> = weights.iter().map(|w| cosine_distance(w, &weights[first])).collect();
    while chosen.len() < m {
        let mut next = None;
        for i in 0..weights.len() {
            if taken[i] {
                continue;
            }
            match next {
                Some(j) if min_dist[i] <= min_dist[j] => {}
                _ => next = Some(i),
            }
        }
        let next = next.expect("m <= number of weights");
        taken[next] = true;
        chosen.push(next);
        for i in 0..weights.len() {
            min_dist[i] = min_dist[i].min(cosine_distance(&weights[i], &weights[next]));
        }
    }
    Ok(chosen)
}

pub fn select_diverse(weights: &[WeightVector], m: usize) -> Result<Vec<WeightVector>> {
    Ok(select_diverse_indices(weights, m)?.into_iter().map(|i| weights[i].clone()).collect())
}

/// One optimal trajectory per weight.
pub fn generate_counterfactuals(
    env: &EnvironmentInstance,
    weights: &[WeightVector],
    spec: &DomainSpec,
) -> Result<Vec<Trajectory>> {
    let model = env.model();
    weights
        .iter()
        .map(|w| {
            if w.dim() != spec.feature_dim() {
                return Err(invalid("weight dimension does not match domain features"));
            }
            model.plan(w, spec.discount, spec.horizon)
        })
        .collect()
}

/// Uniform resampling with replacement.
pub fn resample(belief: &BeliefSamples, n: usize, seed: u64) -> Vec<WeightVector> {
    let mut rng = rng::seeded(seed);
    (0..n).map(|_| belief.samples[rng.random_range(0..belief.len())].clone()).collect()
}

/// Drops trajectories whose features duplicate an earlier one; keeps input order.
pub(crate) fn dedup(
    items: Vec<(Trajectory, FeatureVector, Provenance)>,
) -> Vec<(Trajectory, FeatureVector, Provenance)> {
    let mut out: Vec<(Trajectory, FeatureVector, Provenance)> = Vec::with_capacity(items.len());
    for item in items {
        if out.iter().all(|o| o.1.linf_distance(&item.1) > DEDUP_TOLERANCE) {
            out.push(item);
        }
    }
    out
}

/// Picks the best pair among distinct candidates.
pub(crate) fn best_query(
    candidates: Vec<(Trajectory, FeatureVector, Provenance)>,
    belief: &BeliefSamples,
) -> Result<GeneratedQuery> {
    let distinct = dedup(candidates);
    if distinct.len() < 2 {
        return Err(Error::DegenerateQuery);
    }
    let feats: Vec<FeatureVector> = distinct.iter().map(|c| c.1.clone()).collect();
    let ((i, j), gain) = best_pair(&feats, belief)?;
    let (a, b) = (&distinct[i], &distinct[j]);
    Ok(GeneratedQuery {
        pair: CandidatePair::with_provenance(a.1.clone(), b.1.clone(), [a.2.clone(), b.2.clone()])?,
        trajectories: [a.0.clone(), b.0.clone()],
        gain,
    })
}

/// The full pipeline: resample `n`, keep `m` diverse, plan, deduplicate, pick the best pair.
pub fn counterfactual_query(
    belief: &BeliefSamples,
    env: &EnvironmentInstance,
    spec: &DomainSpec,
    config: &CounterfactualConfig,
    seed: u64,
) -> Result<GeneratedQuery> {
    let (n, m) = (config.samples, config.keep);
    if m < 2 || n < m {
        return Err(invalid(format!("need n >= m >= 2, got n={n}, m={m}")));
    }
    if belief.is_empty() {
        return Err(invalid("belief has no samples"));
    }
    let drawn: Vec<WeightVector> = resample(belief, n, seed).into_iter().filter(|w| w.norm() > 0.0).collect();
    if drawn.len() < m {
        return Err(Error::DegenerateQuery);
    }
    let selected = select_diverse(&drawn, m)?;
    let trajectories = generate_counterfactuals(env, &selected, spec)?;
    let model = env.model();
    let candidates = trajectories
        .into_iter()
        .enumerate()
        .map(|(index, t)| {
            let f = model.features(&t, spec.discount)?;
            Ok((t, f, Provenance::Counterfactual { index }))
        })
        .collect::<Result<Vec<_>>>()?;
    best_query(candidates, belief)
}

/// Feature vectors for a list of feasible trajectories.
pub fn trajectory_features(
    env: &EnvironmentInstance,
    trajectories: &[Trajectory],
    spec: &DomainSpec,
) -> Result<Vec<FeatureVector>> {
    trajectories.iter().map(|t| domains::features(env, t, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn full_selection_returns_every_index() {
        let ws = vec![w(&[0.1, 0.0]), w(&[0.0, 0.5]), w(&[-0.3, 0.3])];
        let mut idx = select_diverse_indices(&ws, 3).unwrap();
        assert_eq!(idx[0], 1);
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn duplicates_are_skipped() {
        let ws = vec![w(&[1.0, 0.0]), w(&[1.0, 0.0]), w(&[0.0, 1.0])];
        assert_eq!(select_diverse_indices(&ws, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn selection_errors() {
        let ws = vec![w(&[1.0, 0.0])];
        assert!(select_diverse(&ws, 2).is_err());
        assert!(select_diverse(&[w(&[0.0, 0.0]), w(&[1.0, 0.0])], 1).is_err());
    }

    #[test]
    fn concentrated_belief_is_degenerate() {
        let spec = DomainSpec::gridnav();
        let env = domains::instantiate(&spec, &spec.default_theta(), 0).unwrap();
        let one = w(&[-0.8, 0.1, 0.2, -0.3, 0.0]);
        let belief = BeliefSamples::from_samples(vec![one.clone(), one]).unwrap();
        let r = counterfactual_query(&belief, &env, &spec, &CounterfactualConfig { samples: 10, keep: 4 }, 1);
        assert!(matches!(r, Err(Error::DegenerateQuery)));
    }
}
