//! Environment families, trajectory features and planning.
//!
//! A [`DomainSpec`] maps a bounded parameter vector `θ` to a concrete
//! [`EnvironmentInstance`]. Both families are deterministic graph MDPs: states
//! are nodes (or grid cells), an action moves to a neighbour, and each move
//! emits a per-step feature vector `φ`. The goal state is absorbing.

mod model;
pub mod nav;
pub mod tabletop;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use model::StepModel;
pub use nav::{NavEdge, NavGraph, NavInstance, NavLayout, Terrain};
pub use tabletop::{ObjectKind, TableInstance, TableLayout};

/// Trajectory feature vector `Φ(ξ, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature vector has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `max_i |a_i − b_i|`.
    pub fn linf_distance(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

/// A state sequence starting at the instance's start state; each move is the action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Axis-aligned box of environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("bounds need matching, nonempty lower and upper vectors"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(invalid("bounds must be finite with lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    /// Uniform draw inside the box.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        (0..self.dim()).map(|i| self.lower[i] + rng.random::<f64>() * self.width(i)).collect()
    }
}

/// Environment family plus episode settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Discount `γ` applied to per-step features.
    pub discount: f64,
    /// Maximum number of moves `H`.
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Gridnav(NavLayout),
    Tabletop(TableLayout),
}

impl DomainSpec {
    /// 5×5 street lattice with 12 designable central edges.
    pub fn gridnav() -> Self {
        Self { kind: DomainKind::Gridnav(NavLayout::default()), discount: 1.0, horizon: 12 }
    }

    /// 6×6 table with three object clusters.
    pub fn tabletop() -> Self {
        Self { kind: DomainKind::Tabletop(TableLayout::default()), discount: 1.0, horizon: 14 }
    }

    pub fn nav_graph(graph: NavGraph, horizon: usize) -> Self {
        Self { kind: DomainKind::Gridnav(NavLayout::Graph(graph)), discount: 1.0, horizon }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gridnav" => Ok(Self::gridnav()),
            "tabletop" => Ok(Self::tabletop()),
            other => Err(invalid(format!("unknown domain '{other}'"))),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.kind {
            DomainKind::Gridnav(_) => nav::FEATURE_DIM,
            DomainKind::Tabletop(_) => tabletop::FEATURE_DIM,
        }
    }

    pub fn theta_bounds(&self) -> Bounds {
        let dim = match &self.kind {
            DomainKind::Gridnav(layout) => layout.theta_dim(),
            DomainKind::Tabletop(layout) => layout.theta_dim(),
        };
        Bounds::unit(dim)
    }

    /// Parameters of the fixed environment used by non-design methods.
    pub fn default_theta(&self) -> Vec<f64> {
        self.theta_bounds().midpoint()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(invalid("discount must lie in [0, 1]"));
        }
        match &self.kind {
            DomainKind::Gridnav(layout) => layout.validate(),
            DomainKind::Tabletop(layout) => layout.validate(),
        }
    }
}

/// A concrete environment induced by `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentInstance {
    Gridnav(NavInstance),
    Tabletop(TableInstance),
}

impl EnvironmentInstance {
    pub fn model(&self) -> StepModel {
        match self {
            EnvironmentInstance::Gridnav(n) => n.model(),
            EnvironmentInstance::Tabletop(t) => t.model(),
        }
    }
}

/// Bins a parameter in `[0, 1]` into one of `n` categories.
pub(crate) fn bin(theta: f64, n: usize) -> usize {
    ((theta * n as f64).floor() as usize).min(n - 1)
}

pub fn instantiate(spec: &DomainSpec, theta: &[f64], seed: u64) -> Result<EnvironmentInstance> {
    spec.validate()?;
    let bounds = spec.theta_bounds();
    if theta.len() != bounds.dim() {
        return Err(invalid(format!("theta has {} entries, domain expects {}", theta.len(), bounds.dim())));
    }
    if !bounds.contains(theta) {
        return Err(invalid("theta lies outside the domain bounds"));
    }
    match &spec.kind {
        DomainKind::Gridnav(layout) => Ok(EnvironmentInstance::Gridnav(layout.instantiate(theta, seed)?)),
        DomainKind::Tabletop(layout) => Ok(EnvironmentInstance::Tabletop(layout.instantiate(theta)?)),
    }
}

fn check_weights(w: &[f64], spec: &DomainSpec) -> Result<()> {
    if w.len() != spec.feature_dim() {
        return Err(invalid(format!("weights have {} entries, domain features have {}", w.len(), spec.feature_dim())));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(invalid("weights must be finite"));
    }
    Ok(())
}

/// Optimal goal-reaching trajectory under per-step reward `w·φ`.
pub fn plan(env: &EnvironmentInstance, w: &[f64], spec: &DomainSpec) -> Result<Trajectory> {
    check_weights(w, spec)?;
    env.model().plan(w, spec.discount, spec.horizon)
}

/// Discounted feature sum of a feasible trajectory.
pub fn features(env: &EnvironmentInstance, traj: &Trajectory, spec: &DomainSpec) -> Result<FeatureVector> {
    env.model().features(traj, spec.discount)
}

/// Uniformly random walk from the start, absorbing at the goal, at most `H` moves.
pub fn random_rollout(env: &EnvironmentInstance, spec: &DomainSpec, seed: u64) -> Trajectory {
    env.model().random_rollout(spec.horizon, &mut crate::rng::seeded(seed))
}

/// Rollout of the greedy policy for `w` that takes a uniformly random move with
/// probability `epsilon` at each step.
pub fn epsilon_greedy_rollout(
    env: &EnvironmentInstance,
    w: &[f64],
    spec: &DomainSpec,
    epsilon: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_weights(w, spec)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon must lie in [0, 1]"));
    }
    let model = env.model();
    let values = model.value_table(w, spec.discount, spec.horizon);
    Ok(model.epsilon_greedy_rollout(&values, w, spec.discount, spec.horizon, epsilon, &mut crate::rng::seeded(seed)))
}

/// True iff `traj` starts at the start state and every move is a legal transition.
pub fn validate(env: &EnvironmentInstance, traj: &Trajectory) -> bool {
    env.model().is_feasible(traj)
}
