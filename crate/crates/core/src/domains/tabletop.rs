//! Grid tabletop: an end effector crosses a table with object clusters.
//!
//! Per-move features, for the cell entered: `[fruit, accessories, electronics, 1]`,
//! so a trajectory counts waypoints over each object category plus its length
//! in cells.

use serde::{Deserialize, Serialize};

use super::bin;
use super::model::{StepModel, Transition};
use crate::error::{invalid, Result};

pub const FEATURE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Fruit,
    Accessories,
    Electronics,
}

impl ObjectKind {
    /// Placement order; later kinds overwrite earlier ones on overlap.
    pub const ALL: [ObjectKind; 3] = [ObjectKind::Fruit, ObjectKind::Accessories, ObjectKind::Electronics];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableLayout {
    pub rows: usize,
    pub cols: usize,
    /// Side length of each square object cluster.
    pub cluster: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
}

impl Default for TableLayout {
    fn default() -> Self {
        Self { rows: 6, cols: 6, cluster: 2, start: [0, 0], goal: [5, 5] }
    }
}

impl TableLayout {
    /// One (row, col) pair per cluster.
    pub fn theta_dim(&self) -> usize {
        2 * ObjectKind::ALL.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.cluster == 0 || self.cluster > self.rows || self.cluster > self.cols {
            return Err(invalid("cluster must fit on the table"));
        }
        let inside = |p: [usize; 2]| p[0] < self.rows && p[1] < self.cols;
        if !inside(self.start) || !inside(self.goal) || self.start == self.goal {
            return Err(invalid("start and goal must be distinct cells on the table"));
        }
        Ok(())
    }

    pub(crate) fn instantiate(&self, theta: &[f64]) -> Result<TableInstance> {
        let mut cells = vec![None; self.rows * self.cols];
        for (k, kind) in ObjectKind::ALL.iter().enumerate() {
            let r0 = bin(theta[2 * k], self.rows - self.cluster + 1);
            let c0 = bin(theta[2 * k + 1], self.cols - self.cluster + 1);
            for r in r0..r0 + self.cluster {
                for c in c0..c0 + self.cluster {
                    cells[r * self.cols + c] = Some(*kind);
                }
            }
        }
        Ok(TableInstance {
            rows: self.rows,
            cols: self.cols,
            cells,
            start: self.start[0] * self.cols + self.start[1],
            goal: self.goal[0] * self.cols + self.goal[1],
        })
    }
}

/// Row-major grid of optional objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInstance {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<ObjectKind>>,
    pub start: usize,
    pub goal: usize,
}

impl TableInstance {
    pub fn model(&self) -> StepModel {
        let mut succ = vec![Vec::new(); self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let s = r * self.cols + c;
                let mut push = |nr: usize, nc: usize| {
                    let next = nr * self.cols + nc;
                    succ[s].push(Transition { next, phi: self.cell_features(next) });
                };
                if r > 0 {
                    push(r - 1, c);
                }
                if c > 0 {
                    push(r, c - 1);
                }
                if c + 1 < self.cols {
                    push(r, c + 1);
                }
                if r + 1 < self.rows {
                    push(r + 1, c);
                }
            }
        }
        StepModel::new(self.start, self.goal, FEATURE_DIM, succ)
    }

    fn cell_features(&self, cell: usize) -> Vec<f64> {
        let mut phi = vec![0.0, 0.0, 0.0, 1.0];
        if let Some(kind) = self.cells[cell] {
            phi[kind.index()] = 1.0;
        }
        phi
    }
}
