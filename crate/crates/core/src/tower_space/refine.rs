//! Cut-and-stack refinement of a castle into taller columns.
//!
//! Per component the parent columns form two pools: the short pool (height
//! `N` columns, bases concatenated) and the long pool (height `N + 1`).
//! A strip is a vertical slice of a pool over a base interval; new columns
//! stack `m = M / N` strips. With `y` the new junk width:
//!
//! * `Y`: `m - 1` short strips then one long strip, height `mN + 1`, junk top;
//! * `Z`: `m - N - 1` short strips then `N` long strips, height `mN`
//!   (only when the long pool is wider than `gamma`);
//! * `X`: `m` short strips over the rest of the short pool, height `mN`.

use std::sync::Arc;

use num_traits::Zero;

use super::{Castle, Column, Pt, RunList, TowerSet};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strip {
    /// First level of the strip inside the new column.
    pub level: u64,
    pub long: bool,
    pub pool_offset: Rational,
}

/// Concatenated bases of a group of parent columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    /// (start, parent column, parent cell) sorted by start.
    pub entries: Vec<(Rational, usize, usize)>,
    pub width: Rational,
    pub height: u64,
}

impl Pool {
    fn build(parent: &Castle, columns: &[usize], height: u64) -> Pool {
        let mut entries = Vec::new();
        let mut pos = Rational::zero();
        for &c in columns {
            for (k, w) in parent.column(c).cells.iter().enumerate() {
                entries.push((pos.clone(), c, k));
                pos += w;
            }
        }
        Pool {
            entries,
            width: pos,
            height,
        }
    }

    /// Parent (column, cell, offset) at pool position `v`.
    pub fn locate(&self, v: &Rational) -> (usize, usize, Rational) {
        let idx = self.entries.partition_point(|(s, _, _)| s <= v) - 1;
        let (s, c, k) = &self.entries[idx];
        (*c, *k, v - s)
    }

    /// Parent cell starts strictly inside `(a, b)`.
    fn cuts<'a>(&'a self, a: &Rational, b: &'a Rational) -> impl Iterator<Item = &'a Rational> + 'a {
        let lo = self.entries.partition_point(|(s, _, _)| s <= a);
        self.entries[lo..].iter().map(|(s, _, _)| s).take_while(move |s| *s < b)
    }
}

#[derive(Debug, Clone)]
pub struct Lineage {
    pub parent: Arc<Castle>,
    /// Per component: [short pool, long pool].
    pub pools: Vec<[Pool; 2]>,
    /// Per new column, strips bottom to top.
    pub strips: Vec<Vec<Strip>>,
    /// Whether some component needed `Z` columns.
    pub used_z: bool,
}

impl Lineage {
    pub fn pool(&self, comp: usize, long: bool) -> &Pool {
        &self.pools[comp][long as usize]
    }
}

struct Plan {
    width: Rational,
    junk_top: bool,
    // (long, first pool offset, count); strips use consecutive offsets
    groups: Vec<(bool, Rational, u64)>,
}

fn plan_component(
    short_w: &Rational,
    long_w: &Rational,
    n: u64,
    m: u64,
    gamma: &Rational,
) -> Result<(Vec<Plan>, bool)> {
    let mr = rational::from_u64(m);
    let m1 = rational::from_u64(m - 1);
    let infeasible = |what: &str| {
        Error::RefinementInfeasible(format!(
            "{what} (short pool {}, long pool {}, N = {n}, m = {m})",
            rational::fmt(short_w),
            rational::fmt(long_w)
        ))
    };
    if gamma >= long_w {
        let y = long_w.clone();
        let x = (short_w - &m1 * &y) / &mr;
        if x <= Rational::zero() {
            return Err(infeasible("short pool too narrow for the junk column"));
        }
        let x_start = &m1 * &y;
        let mut plans = vec![Plan {
            width: x,
            junk_top: false,
            groups: vec![(false, x_start, m)],
        }];
        plans.push(Plan {
            width: y,
            junk_top: true,
            groups: vec![(false, Rational::zero(), m - 1), (true, Rational::zero(), 1)],
        });
        return Ok((plans, false));
    }
    if gamma <= &Rational::zero() {
        return Err(infeasible("gamma must be positive"));
    }
    if m < n + 1 {
        return Err(infeasible("junk wider than gamma needs m >= N + 1 to absorb the long pool"));
    }
    let y = rational::dyadic_floor(gamma);
    let nr = rational::from_u64(n);
    let z = (long_w - &y) / &nr;
    let zs = m - n - 1;
    let zsr = rational::from_u64(zs);
    let x = (short_w - &m1 * &y - &zsr * &z) / &mr;
    if x <= Rational::zero() {
        return Err(infeasible("short pool too narrow for junk and absorbing columns"));
    }
    let z_short_start = &m1 * &y;
    let x_start = &z_short_start + &zsr * &z;
    let plans = vec![
        Plan {
            width: x,
            junk_top: false,
            groups: vec![(false, x_start, m)],
        },
        Plan {
            width: z,
            junk_top: false,
            groups: vec![(false, z_short_start, zs), (true, y.clone(), n)],
        },
        Plan {
            width: y,
            junk_top: true,
            groups: vec![(false, Rational::zero(), m - 1), (true, Rational::zero(), 1)],
        },
    ];
    Ok((plans, true))
}

/// Refines `prev` into columns of main height `new_height` with junk
/// measure at most `gamma`, re-expressing the `preserve` sets.
pub fn refine_castle(
    prev: Arc<Castle>,
    new_height: u64,
    gamma: &Rational,
    preserve: &[TowerSet],
) -> Result<(Castle, Vec<TowerSet>)> {
    let n = prev.main_height();
    if new_height == 0 || new_height % n != 0 {
        return Err(Error::RefinementInfeasible(format!(
            "new height {new_height} is not a multiple of {n}"
        )));
    }
    let m = new_height / n;
    let mut pools = Vec::new();
    let mut columns = Vec::new();
    let mut strips_all = Vec::new();
    let mut used_z = false;
    for comp in 0..prev.components().len() {
        let ids = &prev.components()[comp].columns;
        let short: Vec<usize> = ids.iter().copied().filter(|&c| !prev.column(c).junk_top).collect();
        let long: Vec<usize> = ids.iter().copied().filter(|&c| prev.column(c).junk_top).collect();
        if short.is_empty() || long.is_empty() {
            return Err(Error::RefinementInfeasible(format!("component {comp} lacks a short or a long column")));
        }
        let sp = Pool::build(&prev, &short, n);
        let lp = Pool::build(&prev, &long, n + 1);
        let (plans, z) = plan_component(&sp.width, &lp.width, n, m, gamma)?;
        used_z |= z;
        let pair = [sp, lp];
        for plan in plans {
            let mut strips = Vec::new();
            let mut level = 0u64;
            for (is_long, start, count) in &plan.groups {
                let pool = &pair[*is_long as usize];
                for t in 0..*count {
                    strips.push(Strip {
                        level,
                        long: *is_long,
                        pool_offset: start + rational::from_u64(t) * &plan.width,
                    });
                    level += pool.height;
                }
            }
            let mut cuts: Vec<Rational> = Vec::new();
            for s in &strips {
                let pool = &pair[s.long as usize];
                let end = &s.pool_offset + &plan.width;
                cuts.extend(pool.cuts(&s.pool_offset, &end).map(|c| c - &s.pool_offset));
            }
            cuts.sort();
            cuts.dedup();
            let mut cells = Vec::with_capacity(cuts.len() + 1);
            let mut last = Rational::zero();
            for c in cuts {
                cells.push(&c - &last);
                last = c;
            }
            cells.push(&plan.width - &last);
            columns.push(Column {
                height: level,
                cells,
                junk_top: plan.junk_top,
                component: comp,
            });
            strips_all.push(strips);
        }
        pools.push(pair);
    }
    let lineage = Lineage {
        parent: prev.clone(),
        pools,
        strips: strips_all,
        used_z,
    };
    let castle = Castle::from_columns(columns, new_height, Some(lineage))?;
    let sets = preserve.iter().map(|s| castle.reexpress(s)).collect();
    Ok((castle, sets))
}

impl Castle {
    /// Parent (column, cell) under every strip of a cell, with strip levels.
    pub fn strip_parents(&self, column: usize, cell: usize) -> Vec<(u64, usize, usize)> {
        let lin = self.lineage.as_ref().expect("refined castle");
        let comp = self.columns[column].component;
        let cs = &self.cell_starts[column][cell];
        lin.strips[column]
            .iter()
            .map(|s| {
                let (pc, pk, _) = lin.pool(comp, s.long).locate(&(&s.pool_offset + cs));
                (s.level, pc, pk)
            })
            .collect()
    }

    /// A set of the parent castle written over this castle's cells.
    pub fn reexpress(&self, set: &TowerSet) -> TowerSet {
        TowerSet::from_fn(self, |col, cell| {
            RunList::concat(
                self.strip_parents(col, cell)
                    .into_iter()
                    .map(|(level, pc, pk)| (level, set.get(pc, pk).clone())),
            )
        })
    }

    /// The same point in parent coordinates.
    pub fn to_parent(&self, p: &Pt) -> Option<Pt> {
        let lin = self.lineage.as_ref()?;
        let strips = &lin.strips[p.column];
        let idx = strips.partition_point(|s| s.level <= p.level) - 1;
        let s = &strips[idx];
        let comp = self.columns[p.column].component;
        let pos = &s.pool_offset + &self.cell_starts[p.column][p.cell] + &p.offset;
        let (column, cell, offset) = lin.pool(comp, s.long).locate(&pos);
        Some(Pt {
            column,
            level: p.level - s.level,
            cell,
            offset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::build_initial_castle;
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn refine_case_a_heights_and_agreement() {
        let c = Arc::new(build_initial_castle(8, &ratio(1, 64)).unwrap());
        let (r, _) = refine_castle(c.clone(), 32, &ratio(1, 64), &[]).unwrap();
        r.check_invariants(Some(&ratio(1, 64))).unwrap();
        let hs: Vec<u64> = r.columns().iter().map(|c| c.height).collect();
        assert_eq!(hs, vec![32, 33]);
        // T agrees with the parent away from parent top levels
        let mut p = Pt {
            column: 0,
            level: 0,
            cell: 0,
            offset: ratio(1, 1000),
        };
        for _ in 0..200 {
            let q = r.to_parent(&p).unwrap();
            let next = r.apply_t(&p);
            if q.level + 1 < c.column(q.column).height {
                assert_eq!(r.to_parent(&next).unwrap(), c.apply_t(&q));
            }
            p = next;
        }
    }

    #[test]
    fn narrow_gamma_needs_enough_strips() {
        let c = Arc::new(build_initial_castle(8, &ratio(1, 16)).unwrap());
        // a long pool of width 1/32 cannot be absorbed by four height-8 strips
        for g in [ratio(1, 16), ratio(1, 64)] {
            assert!(matches!(refine_castle(c.clone(), 32, &g, &[]), Err(Error::RefinementInfeasible(_))));
        }
        let c = Arc::new(build_initial_castle(4, &ratio(1, 10)).unwrap());
        let (r, _) = refine_castle(c, 20, &ratio(1, 128), &[]).unwrap();
        r.check_invariants(Some(&ratio(1, 128))).unwrap();
        assert_eq!(r.columns().len(), 3);
        assert!(r.lineage().unwrap().used_z);
    }

    #[test]
    fn same_height_refinement_is_isomorphic() {
        let c = Arc::new(build_initial_castle(8, &ratio(1, 16)).unwrap());
        let (r, _) = refine_castle(c.clone(), 8, &ratio(1, 16), &[]).unwrap();
        assert_eq!(r.columns(), c.columns());
    }

    #[test]
    fn preserved_sets_keep_measure() {
        let c = Arc::new(build_initial_castle(8, &ratio(1, 64)).unwrap());
        let mut a = TowerSet::empty(&c);
        a.set(0, 0, RunList::from_intervals(&[(0, 3), (5, 6)]));
        a.set(1, 0, RunList::from_intervals(&[(8, 9)]));
        let (r, sets) = refine_castle(c.clone(), 32, &ratio(1, 64), &[a.clone()]).unwrap();
        assert_eq!(sets[0].measure(&r), a.measure(&c));
    }
}
