//! Terrain-typed street networks.
//!
//! Features per move along an edge of length `L` km with terrain `t`:
//! `[L, L·[t=paved], L·[t=grass], L·[t=asphalt], L·[t=concrete]]`. Brick adds
//! to the path length only.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::bin;
use super::model::{StepModel, Transition};
use crate::error::{invalid, Result};
use crate::rng;

pub const FEATURE_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Paved,
    Grass,
    Asphalt,
    Concrete,
    Brick,
}

impl Terrain {
    pub const ALL: [Terrain; 5] = [Terrain::Paved, Terrain::Grass, Terrain::Asphalt, Terrain::Concrete, Terrain::Brick];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Feature slot carrying this terrain's distance, if any.
    pub fn feature_slot(self) -> Option<usize> {
        match self {
            Terrain::Brick => None,
            t => Some(1 + t.index()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEdge {
    pub a: usize,
    pub b: usize,
    /// Kilometres.
    pub length: f64,
    pub terrain: Terrain,
}

/// An explicit street network. Designable edges take their terrain from
/// `palette[⌊θᵢ·|palette|⌋]`; the rest keep the terrain stored on the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavGraph {
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<NavEdge>,
    pub designable: Vec<usize>,
    pub palette: Vec<Terrain>,
    pub start: usize,
    pub goal: usize,
}

impl NavGraph {
    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.start >= n || self.goal >= n || self.start == self.goal {
            return Err(invalid("start and goal must be distinct nodes"));
        }
        for e in &self.edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(invalid("edge endpoints must be distinct existing nodes"));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(invalid("edge lengths must be positive"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(invalid("duplicate edge"));
            }
        }
        if self.designable.iter().any(|&i| i >= self.edges.len()) {
            return Err(invalid("designable edge index out of range"));
        }
        if self.palette.is_empty() {
            return Err(invalid("terrain palette must be nonempty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavLayout {
    /// `size × size` jittered street lattice, geometry and default terrains drawn from the seed.
    Lattice {
        size: usize,
        spacing: f64,
        jitter: f64,
    },
    Graph(NavGraph),
}

impl Default for NavLayout {
    fn default() -> Self {
        NavLayout::Lattice { size: 5, spacing: 1.0, jitter: 0.25 }
    }
}

impl NavLayout {
    pub fn theta_dim(&self) -> usize {
        match self {
            NavLayout::Lattice { size, .. } => lattice_designable(*size).len(),
            NavLayout::Graph(g) => g.designable.len(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            NavLayout::Lattice { size, spacing, jitter } => {
                if *size < 3 {
                    return Err(invalid("lattice size must be at least 3"));
                }
                if !(*spacing > 0.0 && *jitter >= 0.0 && *jitter < 0.5 * spacing) {
                    return Err(invalid("lattice needs spacing > 0 and 0 <= jitter < spacing/2"));
                }
                Ok(())
            }
            NavLayout::Graph(g) => g.validate(),
        }
    }

    pub(crate) fn instantiate(&self, theta: &[f64], seed: u64) -> Result<NavInstance> {
        let graph = match self {
            NavLayout::Lattice { size, spacing, jitter } => lattice(*size, *spacing, *jitter, seed),
            NavLayout::Graph(g) => g.clone(),
        };
        let mut edges = graph.edges;
        for (&edge, &t) in graph.designable.iter().zip(theta) {
            edges[edge].terrain = graph.palette[bin(t, graph.palette.len())];
        }
        Ok(NavInstance { nodes: graph.nodes, edges, start: graph.start, goal: graph.goal })
    }
}

/// Edge indices, in lattice edge order, whose endpoints are both interior nodes.
fn lattice_designable(size: usize) -> Vec<usize> {
    let interior = |r: usize, c: usize| r >= 1 && r + 2 <= size && c >= 1 && c + 2 <= size;
    lattice_pairs(size)
        .into_iter()
        .enumerate()
        .filter(|(_, ((r1, c1), (r2, c2)))| interior(*r1, *c1) && interior(*r2, *c2))
        .map(|(i, _)| i)
        .collect()
}

/// Horizontal edges row by row, then vertical edges row by row.
fn lattice_pairs(size: usize) -> Vec<((usize, usize), (usize, usize))> {
    let mut pairs = Vec::new();
    for r in 0..size {
        for c in 0..size - 1 {
            pairs.push(((r, c), (r, c + 1)));
        }
    }
    for r in 0..size - 1 {
        for c in 0..size {
            pairs.push(((r, c), (r + 1, c)));
        }
    }
    pairs
}

fn lattice(size: usize, spacing: f64, jitter: f64, seed: u64) -> NavGraph {
    let mut rng = rng::stream(seed, 0x006e_6176);
    let mut nodes = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let dx = (rng.random::<f64>() * 2.0 - 1.0) * jitter;
            let dy = (rng.random::<f64>() * 2.0 - 1.0) * jitter;
            nodes.push([c as f64 * spacing + dx, r as f64 * spacing + dy]);
        }
    }
    let id = |(r, c): (usize, usize)| r * size + c;
    let edges = lattice_pairs(size)
        .into_iter()
        .map(|(p, q)| {
            let (a, b) = (id(p), id(q));
            let length = ((nodes[a][0] - nodes[b][0]).powi(2) + (nodes[a][1] - nodes[b][1]).powi(2)).sqrt();
            let terrain = Terrain::ALL[rng.random_range(0..Terrain::ALL.len())];
            NavEdge { a, b, length, terrain }
        })
        .collect();
    NavGraph {
        nodes,
        edges,
        designable: lattice_designable(size),
        palette: Terrain::ALL.to_vec(),
        start: 0,
        goal: size * size - 1,
    }
}

/// Concrete street network: the payload a client renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavInstance {
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<NavEdge>,
    pub start: usize,
    pub goal: usize,
}

impl NavInstance {
    pub fn model(&self) -> StepModel {
        let mut succ: Vec<Vec<Transition>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let phi = edge_features(e);
            succ[e.a].push(Transition { next: e.b, phi: phi.clone() });
            succ[e.b].push(Transition { next: e.a, phi });
        }
        StepModel::new(self.start, self.goal, FEATURE_DIM, succ)
    }
}

pub fn edge_features(e: &NavEdge) -> Vec<f64> {
    let mut phi = vec![0.0; FEATURE_DIM];
    phi[0] = e.length;
    if let Some(slot) = e.terrain.feature_slot() {
        phi[slot] = e.length;
    }
    phi
}
