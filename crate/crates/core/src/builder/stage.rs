//! Stage sets on a castle: staircase placement, refinement with
//! corrections, and assembly of the final union.

use std::sync::Arc;

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantizer::{realize_on_base, LatticeMeasure};
use crate::rational::{self, Rational};
use crate::tower_space::{refine_castle, Castle, RunList, TowerSet};

/// Default cap on the total number of runs held by one stage set.
pub const RUN_MAX: usize = 1 << 24;
/// Largest stretch of levels materialized while repairing one block.
pub const REPAIR_SPAN_MAX: u64 = 1 << 26;

/// A stage set together with the parameters it was built from.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub k: usize,
    pub n: u64,
    pub d: u64,
    pub eta: LatticeMeasure,
    /// The set, kept up to date through refinements and corrections.
    pub set: TowerSet,
    /// Castle and set as they were right after placement.
    pub built_on: Arc<Castle>,
    pub set_at_build: TowerSet,
    /// Subtower levels that could not use their own first levels.
    pub displaced: u64,
}

/// Outcome of one correction pass of one stage set after a refinement.
#[derive(Debug, Clone, Serialize)]
pub struct CorrectionReport {
    pub stage: usize,
    /// Index of the castle produced by the refinement.
    pub pass: usize,
    pub block: u64,
    pub target: u64,
    pub blocks: u64,
    pub repaired_blocks: u64,
    pub added_levels: u64,
    pub removed_levels: u64,
    /// Blocks still off target after the repair.
    pub unresolved: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub sym_diff: Rational,
    /// `2 p mu(J)` for the junk of the castle before the refinement.
    #[serde(with = "crate::rational::serde_rational")]
    pub bound: Rational,
}

#[derive(Debug, Clone)]
pub struct Construction {
    castle: Arc<Castle>,
    stages: Vec<StageRecord>,
    corrections: Vec<CorrectionReport>,
    run_max: usize,
}

impl Construction {
    pub fn new(castle: Castle) -> Self {
        Construction {
            castle: Arc::new(castle),
            stages: Vec::new(),
            corrections: Vec::new(),
            run_max: RUN_MAX,
        }
    }

    pub fn with_run_max(mut self, run_max: usize) -> Self {
        self.run_max = run_max;
        self
    }

    pub fn castle(&self) -> &Arc<Castle> {
        &self.castle
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn corrections(&self) -> &[CorrectionReport] {
        &self.corrections
    }

    fn split(&mut self, cuts: &[Vec<Rational>]) -> Result<Vec<Vec<usize>>> {
        let (castle, origin) = self.castle.split_cells(cuts)?;
        for s in &mut self.stages {
            s.set = s.set.pull_back(&origin);
        }
        self.castle = Arc::new(castle);
        Ok(origin)
    }

    /// Splits every component base into the `q` slots of `eta` and returns
    /// the slot of every cell.
    fn label_base(&mut self, eta: &LatticeMeasure) -> Result<Vec<Vec<u64>>> {
        let castle = self.castle.clone();
        let mut cuts: Vec<Vec<Rational>> = vec![Vec::new(); castle.columns().len()];
        // per column: (column-local start, slot)
        let mut starts: Vec<Vec<(Rational, u64)>> = vec![Vec::new(); castle.columns().len()];
        for comp in castle.components() {
            let mut cells = Vec::new();
            let mut owner = Vec::new();
            for &c in &comp.columns {
                for (k, w) in castle.column(c).cells.iter().enumerate() {
                    owner.push((c, k));
                    cells.push((owner.len() - 1, w.clone()));
                }
            }
            for piece in realize_on_base(eta, &cells).pieces {
                let (c, k) = owner[piece.cell];
                let local = castle.cell_start(c, k) + &piece.offset;
                if !piece.offset.is_zero() {
                    cuts[c].push(local.clone());
                }
                starts[c].push((local, piece.slot));
            }
        }
        self.split(&cuts)?;
        let castle = &self.castle;
        Ok((0..castle.columns().len())
            .map(|c| {
                let st = &starts[c];
                (0..castle.column(c).cells.len())
                    .map(|k| {
                        let s = castle.cell_start(c, k);
                        st[st.partition_point(|(x, _)| x <= s) - 1].1
                    })
                    .collect()
            })
            .collect())
    }

    /// Places stage `k` with lattice law `eta` and window `n` on the current
    /// castle: subtower `l` of a cell in slot `r` gets its first
    /// `value((r - l) mod q) + d` free levels.
    pub fn add_stage(&mut self, k: usize, eta: &LatticeMeasure, n: u64, d: u64) -> Result<()> {
        eta.check()?;
        if eta.d > d {
            return Err(Error::Config(format!("stage {k}: lattice half-width {} exceeds d = {d}", eta.d)));
        }
        let h = self.castle.main_height();
        let q = eta.q;
        if n == 0 || h % n != 0 || (h / n) % q != 0 {
            return Err(Error::Config(format!(
                "stage {k}: main height {h} is not a multiple of q n = {q} * {n}"
            )));
        }
        let p = h / n;
        if 2 * d - 1 > n {
            return Err(Error::Config(format!("stage {k}: 2d - 1 = {} exceeds n = {n}", 2 * d - 1)));
        }
        let slots = self.label_base(eta)?;
        let castle = self.castle.clone();
        let values = eta.slot_values();
        let label = |r: u64, l: u64| -> u64 { (values[((r + q - l % q) % q) as usize] + d as i64) as u64 };
        let earlier = self.union_of_stages();
        let mut displaced = 0u64;
        let mut cells = Vec::with_capacity(castle.columns().len());
        for (c, col) in castle.columns().iter().enumerate() {
            let mut row = Vec::with_capacity(col.cells.len());
            for (cell, &r) in slots[c].iter().enumerate() {
                let rl = match &earlier {
                    None => RunList::from_runs(
                        (0..q.min(p))
                            .map(|u| crate::tower_space::Run {
                                start: u * n,
                                len: label(r, u),
                                period: q * n,
                                count: p / q,
                            })
                            .collect(),
                    ),
                    Some(e) => {
                        let busy = e.get(c, cell).intervals();
                        let mut iv = Vec::new();
                        for l in 0..p {
                            let need = label(r, l);
                            let got = take_free(&busy, l * n, need, l * n + 4 * d).ok_or(
                                Error::DisjointnessInfeasible {
                                    stage: k,
                                    column: c,
                                    cell,
                                    subtower: l,
                                },
                            )?;
                            if got.last().map(|x| x.1) != Some(l * n + need) {
                                displaced += 1;
                            }
                            iv.extend(got);
                        }
                        RunList::from_intervals(&iv)
                    }
                };
                row.push(rl);
            }
            cells.push(row);
        }
        let set = TowerSet::from_fn(&castle, |c, cell| cells[c][cell].clone());
        set.check_budget(self.run_max)?;
        self.stages.push(StageRecord {
            k,
            n,
            d,
            eta: eta.clone(),
            set_at_build: set.clone(),
            set,
            built_on: castle,
            displaced,
        });
        Ok(())
    }

    /// Refines the castle to main height `new_height` with junk at most
    /// `gamma`, then repairs every stage set so that each block of the old
    /// height holds exactly `(block / n_j) d_j` of its points.
    pub fn refine_to(&mut self, new_height: u64, gamma: &Rational) -> Result<Vec<CorrectionReport>> {
        let prev = self.castle.clone();
        let block = prev.main_height();
        let junk = prev.junk_measure();
        let sets: Vec<TowerSet> = self.stages.iter().map(|s| s.set.clone()).collect();
        let (castle, moved) = refine_castle(prev, new_height, gamma, &sets)?;
        self.castle = Arc::new(castle);
        for (s, set) in self.stages.iter_mut().zip(moved) {
            s.set = set;
        }
        let p = new_height / block;
        let bound = rational::from_u64(2 * p) * junk;
        let mut reports = Vec::new();
        for j in 0..self.stages.len() {
            let r = self.correct(j, block, bound.clone())?;
            reports.push(r);
        }
        self.corrections.extend(reports.iter().cloned());
        Ok(reports)
    }

    fn correct(&mut self, j: usize, block: u64, bound: Rational) -> Result<CorrectionReport> {
        let castle = self.castle.clone();
        let (k, n_s, d_s) = (self.stages[j].k, self.stages[j].n, self.stages[j].d);
        if block % n_s != 0 {
            return Err(Error::RepairInfeasible {
                stage: k,
                detail: format!("block {block} is not a multiple of n = {n_s}"),
            });
        }
        let target = block / n_s * d_s;
        let others = self
            .stages
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, s)| s.set.clone())
            .reduce(|a, b| a.union(&b));
        let old = self.stages[j].set.clone();
        let mut set = old.clone();
        let mut rep = CorrectionReport {
            stage: k,
            pass: self.stages.len() + 1,
            block,
            target,
            blocks: 0,
            repaired_blocks: 0,
            added_levels: 0,
            removed_levels: 0,
            unresolved: 0,
            sym_diff: Rational::zero(),
            bound,
        };
        for (c, col) in castle.columns().iter().enumerate() {
            let nb = col.height / block;
            for cell in 0..col.cells.len() {
                rep.blocks += nb;
                let rl = old.get(c, cell);
                let bad: Vec<u64> = (0..nb)
                    .filter(|&i| rl.count_range(i * block, (i + 1) * block) != target)
                    .collect();
                if bad.is_empty() {
                    continue;
                }
                let busy = others.as_ref().map(|o| o.get(c, cell).clone()).unwrap_or_default();
                let mut cur = rl.clone();
                for i in bad {
                    let (a, r) = repair_block(&mut cur, &busy, i * block, block, col.height, target, n_s, 2 * d_s)
                        .map_err(|detail| Error::RepairInfeasible {
                            stage: k,
                            detail: format!("column {c}, cell {cell}, block {i}: {detail}"),
                        })?;
                    rep.repaired_blocks += 1;
                    rep.added_levels += a;
                    rep.removed_levels += r;
                }
                set.set(c, cell, cur);
            }
        }
        for (c, col) in castle.columns().iter().enumerate() {
            for cell in 0..col.cells.len() {
                let rl = set.get(c, cell);
                rep.unresolved += (0..col.height / block)
                    .filter(|&i| rl.count_range(i * block, (i + 1) * block) != target)
                    .count() as u64;
            }
        }
        rep.sym_diff = old.sym_diff(&set).measure(&castle);
        set.check_budget(self.run_max)?;
        self.stages[j].set = set;
        Ok(rep)
    }

    /// Union of all stage sets; fails if two of them meet.
    pub fn assemble(&self) -> Result<TowerSet> {
        for i in 0..self.stages.len() {
            for j in i + 1..self.stages.len() {
                if !self.stages[i].set.is_disjoint(&self.stages[j].set) {
                    return Err(Error::OverlapDetected(self.stages[i].k, self.stages[j].k));
                }
            }
        }
        Ok(self.union_of_stages().unwrap_or_else(|| TowerSet::empty(&self.castle)))
    }

    fn union_of_stages(&self) -> Option<TowerSet> {
        self.stages.iter().map(|s| s.set.clone()).reduce(|a, b| a.union(&b))
    }
}

/// First `need` levels at or above `start` avoiding the sorted disjoint
/// intervals `busy`, provided they all end by `limit`.
fn take_free(busy: &[(u64, u64)], start: u64, need: u64, limit: u64) -> Option<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    let mut idx = busy.partition_point(|iv| iv.1 <= start);
    let mut pos = start;
    let mut left = need;
    while left > 0 {
        if idx < busy.len() && busy[idx].0 <= pos {
            pos = pos.max(busy[idx].1);
            idx += 1;
            continue;
        }
        let next = if idx < busy.len() { busy[idx].0 } else { u64::MAX };
        let t = left.min(next - pos);
        out.push((pos, pos + t));
        pos += t;
        left -= t;
    }
    (pos <= limit).then_some(out)
}

/// Brings the count of `set` in `[start, start + len)` to `target`: surplus
/// points are dropped from the bottom, missing ones take the lowest levels
/// that are free in `busy` and keep every `n`-window of the column below
/// `cap` points. Returns (added, removed).
#[allow(clippy::too_many_arguments)]
fn repair_block(
    set: &mut RunList,
    busy: &RunList,
    start: u64,
    len: u64,
    height: u64,
    target: u64,
    n: u64,
    cap: u64,
) -> std::result::Result<(u64, u64), String> {
    let lo = start.saturating_sub(n);
    let hi = (start + len + n).min(height);
    if hi - lo > REPAIR_SPAN_MAX {
        return Err(format!("span {} exceeds the repair cap", hi - lo));
    }
    let span = (hi - lo) as usize;
    let mut mine = vec![false; span];
    for (a, b) in set.window(lo, hi).intervals() {
        mine[a as usize..b as usize].iter_mut().for_each(|x| *x = true);
    }
    let mut taken = vec![false; span];
    for (a, b) in busy.window(lo, hi).intervals() {
        taken[a as usize..b as usize].iter_mut().for_each(|x| *x = true);
    }
    let (bs, be) = ((start - lo) as usize, (start + len - lo) as usize);
    let have = mine[bs..be].iter().filter(|&&x| x).count() as u64;
    let (mut added, mut removed) = (0, 0);
    if have > target {
        let mut extra = have - target;
        for x in mine[bs..be].iter_mut() {
            if extra == 0 {
                break;
            }
            if *x {
                *x = false;
                extra -= 1;
                removed += 1;
            }
        }
    } else {
        let n = n as usize;
        let mut missing = target - have;
        let mut x = bs;
        while missing > 0 {
            if x >= be {
                return Err(format!("{missing} points could not be placed"));
            }
            if !mine[x] && !taken[x] {
                let w0 = x.saturating_sub(n - 1);
                let ok = (w0..=x).all(|w| {
                    let e = (w + n).min(span);
                    mine[w..e].iter().filter(|&&v| v).count() as u64 + 1 <= cap
                });
                if ok {
                    mine[x] = true;
                    missing -= 1;
                    added += 1;
                }
            }
            x += 1;
        }
    }
    let mut iv = Vec::new();
    let mut i = 0;
    while i < span {
        if mine[i] {
            let s = i;
            while i < span && mine[i] {
                i += 1;
            }
            iv.push((lo + s as u64, lo + i as u64));
        } else {
            i += 1;
        }
    }
    let outside = set.difference(&RunList::from_intervals(&[(lo, hi)]));
    *set = outside.union(&RunList::from_intervals(&iv));
    Ok((added, removed))
}
