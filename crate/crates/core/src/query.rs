//! Expected information gain of a comparison query.
//!
//! For posterior samples `w_1..w_K` and a pair `(Φ_A, Φ_B)` the mutual
//! information between the answer `I` and `w` is estimated as
//!
//! ```text
//! (1/K) Σ_k Σ_I P(I|w_k) · log2( K·P(I|w_k) / Σ_k' P(I|w_k') )
//! ```
//!
//! which is `H(I) − E_w[H(I|w)]` in bits.

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefSamples, DEFAULT_RATIONALITY};
use crate::domains::FeatureVector;
use crate::dot;
use crate::error::{invalid, Result};

/// Floor on probabilities inside logarithms.
const PROB_FLOOR: f64 = 1e-12;

/// Where one side of a query came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// Planned under the `index`-th selected hypothesis weight.
    Counterfactual {
        index: usize,
    },
    Rollout {
        index: usize,
    },
    MeanBelief,
    EpsilonGreedy,
    Fallback,
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub features_a: FeatureVector,
    pub features_b: FeatureVector,
    pub provenance: [Provenance; 2],
}

impl CandidatePair {
    pub fn new(features_a: FeatureVector, features_b: FeatureVector) -> Result<Self> {
        Self::with_provenance(features_a, features_b, [Provenance::Given, Provenance::Given])
    }

    pub fn with_provenance(
        features_a: FeatureVector,
        features_b: FeatureVector,
        provenance: [Provenance; 2],
    ) -> Result<Self> {
        if features_a.len() != features_b.len() {
            return Err(invalid("pair sides have different dimensions"));
        }
        Ok(Self { features_a, features_b, provenance })
    }

    pub fn swapped(&self) -> Self {
        Self {
            features_a: self.features_b.clone(),
            features_b: self.features_a.clone(),
            provenance: [self.provenance[1].clone(), self.provenance[0].clone()],
        }
    }
}

fn check_belief(belief: &BeliefSamples, d: usize) -> Result<()> {
    if belief.len() < 2 {
        return Err(invalid("information gain needs at least two belief samples"));
    }
    if belief.d != d {
        return Err(invalid(format!("belief dimension {} does not match features {d}", belief.d)));
    }
    Ok(())
}

/// Rewards `w_k·Φ` for every sample.
fn sample_rewards(features: &[f64], belief: &BeliefSamples) -> Vec<f64> {
    belief.samples.iter().map(|w| dot(w, features)).collect()
}

/// The estimator over precomputed per-sample rewards of the two sides.
fn gain_from_rewards(rewards_a: &[f64], rewards_b: &[f64], beta: f64) -> f64 {
    let k = rewards_a.len() as f64;
    let mut p_a = Vec::with_capacity(rewards_a.len());
    for (ra, rb) in rewards_a.iter().zip(rewards_b) {
        let (x, y) = (beta * ra, beta * rb);
        let m = x.max(y);
        let (ea, eb) = ((x - m).exp(), (y - m).exp());
        p_a.push(ea / (ea + eb));
    }
    let sum_a: f64 = p_a.iter().sum();
    let sum_b: f64 = p_a.iter().map(|p| 1.0 - p).sum();
    let term = |p: f64, total: f64| {
        if p <= 0.0 {
            return 0.0;
        }
        p * ((k * p.max(PROB_FLOOR)) / total.max(PROB_FLOOR)).log2()
    };
    let total: f64 = p_a.iter().map(|&p| term(p, sum_a) + term(1.0 - p, sum_b)).sum();
    (total / k).max(0.0)
}

/// Mutual information between the answer to `pair` and the weights, in bits.
pub fn info_gain(pair: &CandidatePair, belief: &BeliefSamples) -> Result<f64> {
    check_belief(belief, pair.features_a.len())?;
    let ra = sample_rewards(&pair.features_a, belief);
    let rb = sample_rewards(&pair.features_b, belief);
    Ok(gain_from_rewards(&ra, &rb, DEFAULT_RATIONALITY))
}

/// Best unordered pair `(i, j)`, `i < j`, by information gain. Ties go to the
/// lexicographically smallest pair.
pub fn best_pair(candidates: &[FeatureVector], belief: &BeliefSamples) -> Result<((usize, usize), f64)> {
    if candidates.len() < 2 {
        return Err(invalid("best_pair needs at least two candidates"));
    }
    let d = candidates[0].len();
    if candidates.iter().any(|c| c.len() != d) {
        return Err(invalid("candidates have mixed dimensions"));
    }
    check_belief(belief, d)?;
    let rewards: Vec<Vec<f64>> = candidates.iter().map(|c| sample_rewards(c, belief)).collect();
    let mut best = ((0, 1), f64::NEG_INFINITY);
    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            let g = gain_from_rewards(&rewards[i], &rewards[j], DEFAULT_RATIONALITY);
            if g > best.1 {
                best = ((i, j), g);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::WeightVector;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn belief(samples: &[&[f64]]) -> BeliefSamples {
        BeliefSamples::from_samples(samples.iter().map(|s| WeightVector::new(s.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn identical_sides_carry_no_information() {
        let b = belief(&[&[0.5, 0.1], &[-0.3, 0.7], &[0.0, -0.9]]);
        let pair = CandidatePair::new(fv(&[1.0, 2.0]), fv(&[1.0, 2.0])).unwrap();
        assert!(info_gain(&pair, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn saturated_opposite_answers_give_one_bit() {
        let b = belief(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let pair = CandidatePair::new(fv(&[1000.0, 0.0]), fv(&[0.0, 0.0])).unwrap();
        assert!((info_gain(&pair, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_formula_for_two_samples() {
        // P(+1|w1) = 0.8, P(+1|w2) = 0.6 via logit gaps on the first feature.
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let b = belief(&[&[logit(0.8) / 2.0, 0.0], &[logit(0.6) / 2.0, 0.0]]);
        let pair = CandidatePair::new(fv(&[2.0, 0.0]), fv(&[0.0, 0.0])).unwrap();
        let direct = {
            let (p1, p2) = (0.8f64, 0.6f64);
            let (s_a, s_b) = (p1 + p2, (1.0 - p1) + (1.0 - p2));
            let t = |p: f64, s: f64| p * (2.0 * p / s).log2();
            (t(p1, s_a) + t(p2, s_a) + t(1.0 - p1, s_b) + t(1.0 - p2, s_b)) / 2.0
        };
        let g = info_gain(&pair, &b).unwrap();
        assert!((g - direct).abs() < 1e-9, "{g} vs {direct}");
        assert!((g - 0.0349).abs() < 5e-5);
    }

    #[test]
    fn needs_two_samples() {
        let b = belief(&[&[0.1, 0.1]]);
        let pair = CandidatePair::new(fv(&[1.0, 0.0]), fv(&[0.0, 0.0])).unwrap();
        assert!(info_gain(&pair, &b).is_err());
    }

    #[test]
    fn best_pair_basics() {
        let b = belief(&[&[0.9, 0.0], &[-0.9, 0.0], &[0.0, 0.5]]);
        let two = [fv(&[1.0, 0.0]), fv(&[0.0, 1.0])];
        assert_eq!(best_pair(&two, &b).unwrap().0, (0, 1));
        let dup = [fv(&[1.0, 1.0]), fv(&[1.0, 1.0]), fv(&[3.0, 1.0])];
        let ((i, j), g) = best_pair(&dup, &b).unwrap();
        assert!(j == 2 && i == 0 && g > 0.0);
        assert!(best_pair(&two[..1], &b).is_err());
    }
}
