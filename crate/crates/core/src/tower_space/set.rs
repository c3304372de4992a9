//! Measurable sets as unions of (column, cell, level runs) rectangles.

use num_traits::Zero;
use serde::Serialize;

use super::{Castle, Pt, RunList};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// A union of rectangles `cell x levels`, one run list per cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TowerSet {
    cells: Vec<Vec<RunList>>,
}

impl TowerSet {
    pub fn empty(castle: &Castle) -> Self {
        TowerSet {
            cells: castle
                .columns()
                .iter()
                .map(|c| vec![RunList::empty(); c.cells.len()])
                .collect(),
        }
    }

    pub fn full(castle: &Castle) -> Self {
        TowerSet {
            cells: castle
                .columns()
                .iter()
                .map(|c| vec![RunList::full(c.height); c.cells.len()])
                .collect(),
        }
    }

    pub fn from_fn(castle: &Castle, mut f: impl FnMut(usize, usize) -> RunList) -> Self {
        TowerSet {
            cells: castle
                .columns()
                .iter()
                .enumerate()
                .map(|(id, c)| (0..c.cells.len()).map(|k| f(id, k)).collect())
                .collect(),
        }
    }

    /// The given levels in every cell of the castle.
    pub fn levels(castle: &Castle, pick: impl Fn(usize, u64) -> Vec<(u64, u64)>) -> Self {
        Self::from_fn(castle, |id, _| RunList::from_intervals(&pick(id, castle.column(id).height)))
    }

    pub fn get(&self, column: usize, cell: usize) -> &RunList {
        &self.cells[column][cell]
    }

    pub fn set(&mut self, column: usize, cell: usize, runs: RunList) {
        self.cells[column][cell] = runs;
    }

    pub fn num_runs(&self) -> usize {
        self.cells.iter().flatten().map(RunList::num_runs).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().flatten().all(RunList::is_empty)
    }

    pub fn check_budget(&self, run_max: usize) -> Result<()> {
        let n = self.num_runs();
        if n > run_max {
            return Err(Error::BudgetExceeded(format!("{n} runs exceed the cap {run_max}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Pt) -> bool {
        self.cells[p.column][p.cell].contains(p.level)
    }

    /// Exact measure: sum of cell width times covered level count.
    pub fn measure(&self, castle: &Castle) -> Rational {
        let mut m = Rational::zero();
        for (id, col) in self.cells.iter().enumerate() {
            for (k, rl) in col.iter().enumerate() {
                let c = rl.size();
                if c > 0 {
                    m += castle.width(id, k) * rational::from_u64(c);
                }
            }
        }
        m
    }

    /// Measure of the part inside one component.
    pub fn measure_in_component(&self, castle: &Castle, comp: usize) -> Rational {
        self.restrict_component(castle, comp).measure(castle)
    }

    pub fn restrict_component(&self, castle: &Castle, comp: usize) -> TowerSet {
        let mut out = self.clone();
        for (id, col) in out.cells.iter_mut().enumerate() {
            if castle.column(id).component != comp {
                col.iter_mut().for_each(|rl| *rl = RunList::empty());
            }
        }
        out
    }

    fn zip(&self, other: &TowerSet, f: impl Fn(&RunList, &RunList) -> RunList) -> TowerSet {
        TowerSet {
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(x, y)).collect())
                .collect(),
        }
    }

    pub fn union(&self, other: &TowerSet) -> TowerSet {
        self.zip(other, RunList::union)
    }

    pub fn difference(&self, other: &TowerSet) -> TowerSet {
        self.zip(other, RunList::difference)
    }

    pub fn intersection(&self, other: &TowerSet) -> TowerSet {
        self.zip(other, RunList::intersection)
    }

    pub fn sym_diff(&self, other: &TowerSet) -> TowerSet {
        self.zip(other, RunList::sym_diff)
    }

    pub fn is_disjoint(&self, other: &TowerSet) -> bool {
        self.cells
            .iter()
            .flatten()
            .zip(other.cells.iter().flatten())
            .all(|(a, b)| a.is_disjoint(b))
    }

    pub fn same_points(&self, other: &TowerSet) -> bool {
        self.cells
            .iter()
            .flatten()
            .zip(other.cells.iter().flatten())
            .all(|(a, b)| a.same_levels(b))
    }

    /// The same set after a cell split, given the origin of every new cell.
    pub fn pull_back(&self, origin: &[Vec<usize>]) -> TowerSet {
        TowerSet {
            cells: origin
                .iter()
                .enumerate()
                .map(|(id, from)| from.iter().map(|&k| self.cells[id][k].clone()).collect())
                .collect(),
        }
    }
}

/// `sum_{i < n} 1_A(T^i p)`, counting whole column stretches at once.
pub fn birkhoff_sum(castle: &Castle, a: &TowerSet, p: &Pt, n: u64) -> u64 {
    let mut left = n;
    let mut s = 0u64;
    let (mut col, mut cell, mut level) = (p.column, p.cell, p.level);
    let mut offset = p.offset.clone();
    while left > 0 {
        let h = castle.column(col).height;
        let take = left.min(h - level);
        s += a.get(col, cell).count_range(level, level + take);
        left -= take;
        if left > 0 {
            let q = castle.close(col, cell, &offset);
            col = q.column;
            cell = q.cell;
            offset = q.offset;
            level = 0;
        }
    }
    s
}
