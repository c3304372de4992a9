//! Generators and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use indlim::builder::{feasible_initial_gamma, plan_schedule, ConstructionSchedule, Mode, ScheduleInput};
use indlim::measures::{Atom, RealMeasure, Segment};
use indlim::rational::{int, ratio};
use indlim::sequence::SequenceSpec;
use indlim::tower_space::{build_initial_components, refine_castle, sample_point, Castle, Pt, RunList, TowerSet};
use indlim::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn two_point(x: i64) -> RealMeasure {
    RealMeasure::atomic([(int(-x), ratio(1, 2)), (int(x), ratio(1, 2))]).unwrap()
}

fn atoms(pairs: &[(i64, i64, i64, i64)]) -> RealMeasure {
    RealMeasure::atomic(pairs.iter().map(|&(a, b, m, n)| (ratio(a, b), ratio(m, n)))).unwrap()
}

fn seg(lo: Rational, hi: Rational, mass: Rational) -> Segment {
    Segment { lo, hi, mass }
}

fn atom(at: Rational, mass: Rational) -> Atom {
    Atom { at, mass }
}

/// Twenty zero-mean targets: atomic, uniform and mixed.
pub fn quantizer_targets() -> Vec<RealMeasure> {
    vec![
        two_point(1),
        two_point(2),
        atoms(&[(-1, 2, 1, 2), (1, 2, 1, 2)]),
        atoms(&[(-2, 1, 1, 4), (0, 1, 1, 2), (2, 1, 1, 4)]),
        atoms(&[(-1, 1, 2, 3), (2, 1, 1, 3)]),
        atoms(&[(-3, 1, 1, 4), (1, 1, 3, 4)]),
        atoms(&[(-1, 3, 3, 4), (1, 1, 1, 4)]),
        atoms(&[(-3, 1, 1, 8), (-1, 1, 3, 8), (1, 1, 3, 8), (3, 1, 1, 8)]),
        atoms(&[(0, 1, 1, 1)]),
        RealMeasure::uniform(int(-1), int(1)).unwrap(),
        RealMeasure::uniform(int(-2), int(2)).unwrap(),
        RealMeasure::uniform(ratio(-1, 2), ratio(1, 2)).unwrap(),
        RealMeasure::new(vec![atom(int(0), ratio(1, 2))], vec![seg(int(-1), int(1), ratio(1, 2))]).unwrap(),
        RealMeasure::new(vec![atom(int(1), ratio(1, 2))], vec![seg(int(-2), int(0), ratio(1, 2))]).unwrap(),
        RealMeasure::new(vec![atom(int(1), ratio(1, 3))], vec![seg(int(-1), int(0), ratio(2, 3))]).unwrap(),
        RealMeasure::new(vec![], vec![seg(int(-3), int(-1), ratio(1, 2)), seg(int(1), int(3), ratio(1, 2))]).unwrap(),
        RealMeasure::new(
            vec![atom(int(-2), ratio(1, 4)), atom(int(2), ratio(1, 4))],
            vec![seg(ratio(-1, 2), ratio(1, 2), ratio(1, 2))],
        )
        .unwrap(),
        RealMeasure::new(vec![], vec![seg(int(-2), int(0), ratio(1, 3)), seg(int(0), int(1), ratio(2, 3))]).unwrap(),
        RealMeasure::new(
            vec![atom(ratio(-5, 2), ratio(1, 10)), atom(ratio(5, 2), ratio(1, 10))],
            vec![seg(int(-1), int(1), ratio(4, 5))],
        )
        .unwrap(),
        atoms(&[(-4, 1, 1, 5), (1, 1, 4, 5)]),
    ]
}

/// Up to four atoms on a small rational grid plus up to two segments in
/// disjoint slots, with random integer weights.
pub fn random_mixture(rng: &mut ChaCha8Rng) -> RealMeasure {
    loop {
        let na = rng.gen_range(0..5);
        let mut slots: Vec<i64> = (0..4).collect();
        let ns = rng.gen_range(0..3);
        if na + ns == 0 {
            continue;
        }
        let mut raw_atoms = Vec::new();
        for _ in 0..na {
            let den = [1i64, 2, 3, 4, 8][rng.gen_range(0..5)];
            raw_atoms.push((ratio(rng.gen_range(-24..=24), den), rng.gen_range(1..=9i64)));
        }
        let mut raw_segs = Vec::new();
        for _ in 0..ns {
            let slot = slots.swap_remove(rng.gen_range(0..slots.len()));
            let lo = int(6 * slot - 12);
            let hi = &lo + int(rng.gen_range(1..=4));
            raw_segs.push((lo, hi, rng.gen_range(1..=9i64)));
        }
        let total: i64 = raw_atoms.iter().map(|a| a.1).sum::<i64>() + raw_segs.iter().map(|s| s.2).sum::<i64>();
        let atoms = raw_atoms.into_iter().map(|(at, w)| atom(at, ratio(w, total))).collect();
        let segs = raw_segs.into_iter().map(|(lo, hi, w)| seg(lo, hi, ratio(w, total))).collect();
        return RealMeasure::new(atoms, segs).unwrap();
    }
}

/// A castle of main height at most 63 reached by zero or more refinements.
pub fn random_castle(rng: &mut ChaCha8Rng) -> Castle {
    let n0 = rng.gen_range(1..=16u64);
    let mut heights = vec![n0];
    while rng.gen_bool(0.6) {
        let next = heights.last().unwrap() * rng.gen_range(2..=4u64);
        if next > 63 {
            break;
        }
        heights.push(next);
    }
    let gamma = ratio(1, rng.gen_range(4..=64));
    let y0 = feasible_initial_gamma(&heights, &gamma).unwrap();
    let comps = rng.gen_range(1..=2);
    let mut c = Arc::new(build_initial_components(n0, &y0, comps).unwrap());
    for &h in &heights[1..] {
        c = Arc::new(refine_castle(c, h, &gamma, &[]).unwrap().0);
    }
    Arc::try_unwrap(c).unwrap_or_else(|a| (*a).clone())
}

pub fn random_set(c: &Castle, rng: &mut ChaCha8Rng) -> TowerSet {
    let density = rng.gen_range(0.05..0.6);
    TowerSet::from_fn(c, |col, _| {
        let h = c.column(col).height;
        let levels: Vec<(u64, u64)> = (0..h).filter(|_| rng.gen_bool(density)).map(|l| (l, l + 1)).collect();
        RunList::from_intervals(&levels)
    })
}

/// A random chain of castles `n_0 | n_1 | ...` with junk bound `gamma`.
pub fn build_chain(seed: u64) -> (Vec<Arc<Castle>>, Rational) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heights = vec![rng.gen_range(2..=12u64)];
    for _ in 0..rng.gen_range(1..=3) {
        let m = rng.gen_range(2..=5u64);
        heights.push(heights.last().unwrap() * m);
    }
    let components = if rng.gen_bool(0.25) { 2 } else { 1 };
    let gamma = ratio(1, rng.gen_range(8..=256));
    let y0 = feasible_initial_gamma(&heights, &gamma).unwrap();
    let first = Arc::new(build_initial_components(heights[0], &y0, components).unwrap());
    first.check_invariants(Some(&y0)).unwrap();
    let mut castles = vec![first];
    for &h in &heights[1..] {
        let prev = castles.last().unwrap().clone();
        let (c, _) = refine_castle(prev, h, &gamma, &[])
            .unwrap_or_else(|e| panic!("seed {seed}: heights {heights:?}, gamma {gamma}: {e}"));
        c.check_invariants(Some(&gamma)).unwrap();
        castles.push(Arc::new(c));
    }
    (castles, gamma)
}

/// Every non-top level moves up one level in the same cell and every top
/// level lands on a base.
pub fn sojourn_check(c: &Castle) -> bool {
    for (id, col) in c.columns().iter().enumerate() {
        for (k, w) in col.cells.iter().enumerate() {
            for level in 0..col.height - 1 {
                let p = Pt {
                    column: id,
                    level,
                    cell: k,
                    offset: w / int(3),
                };
                let q = c.apply_t(&p);
                if (q.column, q.cell, q.level) != (id, k, level + 1) || q.offset != p.offset {
                    return false;
                }
            }
            let top = Pt {
                column: id,
                level: col.height - 1,
                cell: k,
                offset: w / int(2),
            };
            let q = c.apply_t(&top);
            if q.level != 0 || !c.is_valid(&q) {
                return false;
            }
        }
    }
    true
}

/// Compares `T` of the refined castle with `T` of its parent along random
/// orbits, skipping points on the parent's top levels. Returns
/// `(compared, mismatches)`.
pub fn agreement(child: &Castle, parent: &Castle, points: usize, steps: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut compared, mut bad) = (0, 0);
    for _ in 0..points {
        let mut p = sample_point(child, &mut rng);
        for _ in 0..steps {
            let pp = child.to_parent(&p).unwrap();
            let next = child.apply_t(&p);
            if pp.level + 1 < parent.column(pp.column).height {
                compared += 1;
                if child.to_parent(&next).unwrap() != parent.apply_t(&pp) {
                    bad += 1;
                }
            }
            p = next;
        }
    }
    (compared, bad)
}

pub fn relaxed_schedule(targets: Vec<RealMeasure>, alphas: &[(usize, Rational)]) -> ConstructionSchedule {
    plan_schedule(&ScheduleInput {
        targets,
        eps: ratio(1, 2),
        seq: SequenceSpec::sqrt(),
        mode: Mode::Relaxed,
        alpha_overrides: alphas.iter().cloned().collect::<BTreeMap<_, _>>(),
        q_max: 1 << 12,
    })
    .unwrap()
}

/// `K = 1`, two-point target, `alpha = (1/4, 1/8)`.
pub fn toy_schedule() -> ConstructionSchedule {
    relaxed_schedule(vec![two_point(1)], &[(1, ratio(1, 4)), (2, ratio(1, 8))])
}
