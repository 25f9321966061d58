//! Active preference learning over linear reward functions.
//!
//! A learner keeps an MCMC belief over reward weights, asks a (simulated or
//! live) user to compare two trajectories, and updates the belief from the
//! answer. Queries are synthesized by planning under diverse hypothesized
//! weights ([`counterfactual`]) inside environments chosen by Bayesian
//! optimization ([`envdesign`]).

pub mod belief;
pub mod counterfactual;
pub mod domains;
pub mod envdesign;
pub mod error;
pub mod experiments;
pub mod learners;
pub mod query;
pub mod rng;
pub mod session;

pub use belief::{BeliefSamples, PreferenceRecord, SamplerConfig, WeightVector};
pub use domains::{DomainSpec, EnvironmentInstance, FeatureVector, Trajectory};
pub use error::{Error, Result};
pub use learners::{LearnerConfig, Method};
pub use query::CandidatePair;

/// Dot product of two equal-length slices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
