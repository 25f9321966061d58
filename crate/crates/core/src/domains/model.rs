use super::{FeatureVector, Trajectory};
use crate::dot;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub phi: Vec<f64>,
}

/// Deterministic transition graph with per-move features.
///
/// Successor lists are sorted by state index, which fixes the tie-break order
/// of the planner. The goal has no successors.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    pub start: usize,
    pub goal: usize,
    pub dim: usize,
    succ: Vec<Vec<Transition>>,
}

/// Finite-horizon values `V[h][s]`: best discounted reward from `s` reaching the
/// goal within `h` moves, `-inf` when the goal is out of reach.
pub type ValueTable = Vec<Vec<f64>>;

impl StepModel {
    pub(crate) fn new(start: usize, goal: usize, dim: usize, mut succ: Vec<Vec<Transition>>) -> Self {
        for list in &mut succ {
            list.sort_by_key(|t| t.next);
        }
        succ[goal].clear();
        Self { start, goal, dim, succ }
    }

    pub fn num_states(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, s: usize) -> &[Transition] {
        &self.succ[s]
    }

    fn transition(&self, from: usize, to: usize) -> Option<&Transition> {
        let list = self.succ.get(from)?;
        list.binary_search_by_key(&to, |t| t.next).ok().map(|i| &list[i])
    }

    pub fn is_feasible(&self, traj: &Trajectory) -> bool {
        match traj.states.first() {
            Some(&s) if s == self.start => {}
            _ => return false,
        }
        traj.states.windows(2).all(|w| self.transition(w[0], w[1]).is_some())
    }

    pub fn features(&self, traj: &Trajectory, discount: f64) -> Result<FeatureVector> {
        if !self.is_feasible(traj) {
            return Err(invalid("trajectory is not feasible in this environment"));
        }
        let mut total = vec![0.0; self.dim];
        let mut weight = 1.0;
        for pair in traj.states.windows(2) {
            let t = self.transition(pair[0], pair[1]).expect("checked above");
            for (acc, v) in total.iter_mut().zip(&t.phi) {
                *acc += weight * v;
            }
            weight *= discount;
        }
        Ok(FeatureVector::new_unchecked(total))
    }

    /// Discounted sum of per-step rewards `w·φ`, as accumulated by the planner.
    pub fn reward(&self, traj: &Trajectory, w: &[f64], discount: f64) -> Result<f64> {
        if !self.is_feasible(traj) {
            return Err(invalid("trajectory is not feasible in this environment"));
        }
        let mut total = 0.0;
        let mut weight = 1.0;
        for pair in traj.states.windows(2) {
            let t = self.transition(pair[0], pair[1]).expect("checked above");
            total += weight * dot(w, &t.phi);
            weight *= discount;
        }
        Ok(total)
    }

    /// Backward induction over the horizon. Equivalent to value iteration on
    /// the (state, moves-left) MDP, which converges after exactly `horizon` sweeps.
    pub fn value_table(&self, w: &[f64], discount: f64, horizon: usize) -> ValueTable {
        let n = self.num_states();
        let rewards: Vec<Vec<f64>> = self.succ.iter().map(|l| l.iter().map(|t| dot(w, &t.phi)).collect()).collect();
        let mut values = Vec::with_capacity(horizon + 1);
        let mut v0 = vec![f64::NEG_INFINITY; n];
        v0[self.goal] = 0.0;
        values.push(v0);
        for h in 1..=horizon {
            let prev = &values[h - 1];
            let mut cur = vec![f64::NEG_INFINITY; n];
            for s in 0..n {
                if s == self.goal {
                    cur[s] = 0.0;
                    continue;
                }
                for (t, r) in self.succ[s].iter().zip(&rewards[s]) {
                    let q = backup(*r, discount, prev[t.next]);
                    if q > cur[s] {
                        cur[s] = q;
                    }
                }
            }
            values.push(cur);
        }
        values
    }

    /// Greedy successor at `s` with `moves_left` moves remaining; lowest index wins ties.
    fn greedy(&self, values: &ValueTable, w: &[f64], discount: f64, s: usize, moves_left: usize) -> Option<usize> {
        let prev = &values[moves_left - 1];
        let mut best: Option<(usize, f64)> = None;
        for t in &self.succ[s] {
            let q = backup(dot(w, &t.phi), discount, prev[t.next]);
            if q == f64::NEG_INFINITY {
                continue;
            }
            match best {
                Some((_, bq)) if q <= bq + 1e-12 * (q.abs() + bq.abs()) => {}
                _ => best = Some((t.next, q)),
            }
        }
        best.map(|(next, _)| next)
    }

    pub fn plan(&self, w: &[f64], discount: f64, horizon: usize) -> Result<Trajectory> {
        let values = self.value_table(w, discount, horizon);
        if values[horizon][self.start] == f64::NEG_INFINITY {
            return Err(Error::NoPath(horizon));
        }
        let mut states = vec![self.start];
        let mut s = self.start;
        let mut left = horizon;
        while s != self.goal {
            s = self.greedy(&values, w, discount, s, left).ok_or(Error::NoPath(horizon))?;
            states.push(s);
            left -= 1;
        }
        Ok(Trajectory { states })
    }

    pub fn random_rollout(&self, horizon: usize, rng: &mut impl rand::Rng) -> Trajectory {
        let mut states = vec![self.start];
        let mut s = self.start;
        for _ in 0..horizon {
            let succ = &self.succ[s];
            if s == self.goal || succ.is_empty() {
                break;
            }
            s = succ[rng.random_range(0..succ.len())].next;
            states.push(s);
        }
        Trajectory { states }
    }

    pub fn epsilon_greedy_rollout(
        &self,
        values: &ValueTable,
        w: &[f64],
        discount: f64,
        horizon: usize,
        epsilon: f64,
        rng: &mut impl rand::Rng,
    ) -> Trajectory {
        let mut states = vec![self.start];
        let mut s = self.start;
        for step in 0..horizon {
            let succ = &self.succ[s];
            if s == self.goal || succ.is_empty() {
                break;
            }
            let explore = rng.random::<f64>() < epsilon;
            let greedy = if explore { None } else { self.greedy(values, w, discount, s, horizon - step) };
            s = match greedy {
                Some(next) => next,
                None => succ[rng.random_range(0..succ.len())].next,
            };
            states.push(s);
        }
        Trajectory { states }
    }
}

#[inline]
fn backup(reward: f64, discount: f64, next_value: f64) -> f64 {
    if next_value == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        reward + discount * next_value
    }
}
