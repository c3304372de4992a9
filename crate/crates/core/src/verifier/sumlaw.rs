//! Laws of window sums `S_n(1_A)` under `mu`: exact, pointwise, and Monte Carlo.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::RealMeasure;
use crate::rational::{self, Rational};
use crate::tower_space::{birkhoff_sum, Castle, TowerSet};

/// Law of `S_n(1_A)` as exact masses per count.
pub type CountLaw = BTreeMap<u64, Rational>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Empirical { samples: u64, seed: u64 },
}

/// Law of `(S_n(1_A) - n mu(A)) / a_n`.
#[derive(Debug, Clone)]
pub struct SumLaw {
    pub law: RealMeasure,
    pub counts: CountLaw,
    pub n: u64,
    pub a_n: Rational,
    pub mu_a: Rational,
    pub provenance: Provenance,
}

impl SumLaw {
    pub fn from_counts(counts: CountLaw, n: u64, a_n: &Rational, mu_a: &Rational, provenance: Provenance) -> Result<Self> {
        let center = rational::from_u64(n) * mu_a;
        let law = RealMeasure::atomic(
            counts
                .iter()
                .map(|(&s, m)| ((rational::from_u64(s) - &center) / a_n, m.clone())),
        )?;
        Ok(SumLaw {
            law,
            counts,
            n,
            a_n: a_n.clone(),
            mu_a: mu_a.clone(),
            provenance,
        })
    }

    /// Mean of the uncentered count.
    pub fn count_mean(&self) -> Rational {
        self.counts
            .iter()
            .fold(Rational::zero(), |acc, (&s, m)| acc + rational::from_u64(s) * m)
    }

    pub fn max_count(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }
}

/// Sorted disjoint intervals with prefix lengths for counting.
struct Seq {
    iv: Vec<(u64, u64)>,
    cum: Vec<u64>,
}

impl Seq {
    fn new(iv: Vec<(u64, u64)>) -> Self {
        let mut cum = Vec::with_capacity(iv.len() + 1);
        let mut acc = 0;
        cum.push(0);
        for &(a, b) in &iv {
            acc += b - a;
            cum.push(acc);
        }
        Seq { iv, cum }
    }

    fn count_below(&self, x: u64) -> u64 {
        let idx = self.iv.partition_point(|&(a, _)| a < x);
        let mut c = self.cum[idx];
        if idx > 0 {
            let (a, b) = self.iv[idx - 1];
            c = self.cum[idx - 1] + (b.min(x) - a);
        }
        c
    }

    fn contains(&self, x: u64) -> bool {
        let idx = self.iv.partition_point(|&(a, _)| a <= x);
        idx > 0 && x < self.iv[idx - 1].1
    }
}

/// Adds to `diff` (a difference map over count values) the number of starts
/// `l` in `[lo, hi)` with `|S cap [l, l + n)| = v`, for every `v`.
fn window_histogram(seq: &Seq, n: u64, lo: u64, hi: u64, diff: &mut BTreeMap<u64, i128>) {
    if lo >= hi {
        return;
    }
    let mut events: Vec<u64> = Vec::with_capacity(4 * seq.iv.len() + 2);
    events.push(lo);
    events.push(hi);
    for &(a, b) in &seq.iv {
        for p in [Some(a), Some(b), a.checked_sub(n), b.checked_sub(n)].into_iter().flatten() {
            if p > lo && p < hi {
                events.push(p);
            }
        }
    }
    events.sort_unstable();
    events.dedup();
    let mut f = seq.count_below(lo + n) - seq.count_below(lo);
    for w in events.windows(2) {
        let (b, e) = (w[0], w[1]);
        let len = e - b;
        let up = seq.contains(b + n);
        let down = seq.contains(b);
        match (up, down) {
            (true, false) => {
                *diff.entry(f).or_insert(0) += 1;
                *diff.entry(f + len).or_insert(0) -= 1;
                f += len;
            }
            (false, true) => {
                *diff.entry(f - len + 1).or_insert(0) += 1;
                *diff.entry(f + 1).or_insert(0) -= 1;
                f -= len;
            }
            _ => {
                *diff.entry(f).or_insert(0) += len as i128;
                *diff.entry(f + 1).or_insert(0) -= len as i128;
            }
        }
    }
}

fn expand(diff: &BTreeMap<u64, i128>) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut run = 0i128;
    let keys: Vec<(&u64, &i128)> = diff.iter().collect();
    for (i, (&k, &d)) in keys.iter().enumerate() {
        run += d;
        if run > 0 {
            let next = keys.get(i + 1).map(|(&k2, _)| k2).unwrap_or(k + 1);
            for v in k..next {
                out.push((v, run as u64));
            }
        }
    }
    out
}

fn add_weighted(law: &mut CountLaw, hist: &[(u64, u64)], w: &Rational) {
    for &(v, c) in hist {
        *law.entry(v).or_insert_with(Rational::zero) += w * rational::from_u64(c);
    }
}

/// Pieces of a cell that follow the same sequence of cells through the
/// closing map until `reach` levels are covered.
struct Piece {
    width: Rational,
    /// (level offset, column, cell) of every visited cell after the first.
    path: Vec<(u64, usize, usize)>,
}

fn wrap_pieces(c: &Castle, column: usize, cell: usize, reach: u64, wrap_max: usize) -> Result<Vec<Piece>> {
    // (width, offset inside the current cell, current column, cell, covered levels, path)
    struct Open {
        width: Rational,
        off: Rational,
        col: usize,
        cell: usize,
        len: u64,
        path: Vec<(u64, usize, usize)>,
    }
    let mut open = vec![Open {
        width: c.width(column, cell).clone(),
        off: Rational::zero(),
        col: column,
        cell,
        len: c.column(column).height,
        path: Vec::new(),
    }];
    let mut done = Vec::new();
    while let Some(p) = open.pop() {
        if p.len >= reach {
            done.push(Piece {
                width: p.width,
                path: p.path,
            });
            continue;
        }
        let end = &p.off + &p.width;
        for cp in c.closure_pieces(p.col, p.cell) {
            let cp_end = &cp.from_offset + &cp.width;
            let lo = if cp.from_offset > p.off { cp.from_offset.clone() } else { p.off.clone() };
            let hi = if cp_end < end { cp_end } else { end.clone() };
            if lo >= hi {
                continue;
            }
            let mut path = p.path.clone();
            path.push((p.len, cp.to_column, cp.to_cell));
            open.push(Open {
                width: &hi - &lo,
                off: &cp.to_offset + (&lo - &cp.from_offset),
                col: cp.to_column,
                cell: cp.to_cell,
                len: p.len + c.column(cp.to_column).height,
                path,
            });
        }
        if open.len() + done.len() > wrap_max {
            return Err(Error::BudgetExceeded(format!(
                "more than {wrap_max} wrap pieces for cell ({column},{cell})"
            )));
        }
    }
    Ok(done)
}

fn cell_law(c: &Castle, a: &TowerSet, n: u64, column: usize, cell: usize, wrap_max: usize) -> Result<CountLaw> {
    let h = c.column(column).height;
    let base = a.get(column, cell).intervals();
    let mut law = CountLaw::new();
    // starts whose window stays in the column
    let inner_hi = if n <= h { h - n + 1 } else { 0 };
    if inner_hi > 0 {
        let mut diff = BTreeMap::new();
        window_histogram(&Seq::new(base.clone()), n, 0, inner_hi, &mut diff);
        add_weighted(&mut law, &expand(&diff), c.width(column, cell));
    }
    if inner_hi >= h {
        return Ok(law);
    }
    let tail: Vec<(u64, u64)> = base
        .iter()
        .filter(|&&(_, e)| e > inner_hi)
        .map(|&(s, e)| (s.max(inner_hi), e))
        .collect();
    let reach = h + n - 1;
    for piece in wrap_pieces(c, column, cell, reach, wrap_max)? {
        let mut ext = tail.clone();
        for &(off, pc, pk) in &piece.path {
            if off >= reach {
                break;
            }
            for (s, e) in a.get(pc, pk).intervals() {
                if off + s >= reach {
                    break;
                }
                ext.push((off + s, (off + e).min(reach)));
            }
        }
        // merge intervals that touch across a seam
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(ext.len());
        for (s, e) in ext {
            match merged.last_mut() {
                Some(last) if last.1 >= s => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        let mut diff = BTreeMap::new();
        window_histogram(&Seq::new(merged), n, inner_hi, h, &mut diff);
        add_weighted(&mut law, &expand(&diff), &piece.width);
    }
    Ok(law)
}

fn merge_laws(mut a: CountLaw, b: CountLaw) -> CountLaw {
    for (k, v) in b {
        *a.entry(k).or_insert_with(Rational::zero) += v;
    }
    a
}

/// Exact law of `S_n(1_A)` with the window start distributed by `mu`.
pub fn exact_count_law(c: &Castle, a: &TowerSet, n: u64, wrap_max: usize) -> Result<CountLaw> {
    if n == 0 {
        return Ok(CountLaw::from([(0, Rational::from_integer(1.into()))]));
    }
    let cells: Vec<(usize, usize)> = c
        .columns()
        .iter()
        .enumerate()
        .flat_map(|(id, col)| (0..col.cells.len()).map(move |k| (id, k)))
        .collect();
    cells
        .par_iter()
        .map(|&(id, k)| cell_law(c, a, n, id, k, wrap_max))
        .try_reduce(CountLaw::new, |x, y| Ok(merge_laws(x, y)))
}

pub fn exact_sum_law(c: &Castle, a: &TowerSet, n: u64, a_n: &Rational, mu_a: &Rational, wrap_max: usize) -> Result<SumLaw> {
    let counts = exact_count_law(c, a, n, wrap_max)?;
    SumLaw::from_counts(counts, n, a_n, mu_a, Provenance::Exact)
}

/// Reference law by stepping every start level one level at a time.
/// Cost grows like cells x height x n; meant for small castles.
pub fn pointwise_count_law(c: &Castle, a: &TowerSet, n: u64) -> CountLaw {
    fn walk(c: &Castle, a: &TowerSet, col: usize, cell: usize, off: Rational, width: Rational, level: u64, left: u64, acc: u64, law: &mut CountLaw) {
        let (mut level, mut left, mut acc) = (level, left, acc);
        loop {
            if left == 0 {
                *law.entry(acc).or_insert_with(Rational::zero) += width;
                return;
            }
            if a.get(col, cell).contains(level) {
                acc += 1;
            }
            left -= 1;
            if level + 1 < c.column(col).height {
                level += 1;
                continue;
            }
            if left == 0 {
                *law.entry(acc).or_insert_with(Rational::zero) += width;
                return;
            }
            let end = &off + &width;
            for cp in c.closure_pieces(col, cell) {
                let cp_end = &cp.from_offset + &cp.width;
                let lo = if cp.from_offset > off { cp.from_offset.clone() } else { off.clone() };
                let hi = if cp_end < end { cp_end } else { end.clone() };
                if lo < hi {
                    let noff = &cp.to_offset + (&lo - &cp.from_offset);
                    walk(c, a, cp.to_column, cp.to_cell, noff, &hi - &lo, 0, left, acc, law);
                }
            }
            return;
        }
    }
    let mut law = CountLaw::new();
    for (id, col) in c.columns().iter().enumerate() {
        for (k, w) in col.cells.iter().enumerate() {
            for level in 0..col.height {
                walk(c, a, id, k, Rational::zero(), w.clone(), level, n, 0, &mut law);
            }
        }
    }
    law.retain(|_, m| !m.is_zero());
    law
}

/// Number of samples per independent random stream.
const CHUNK: u64 = 4096;

/// Histogram of `S_n(1_A)` over `samples` points drawn from `mu`.
pub fn empirical_counts(c: &Castle, a: &TowerSet, n: u64, samples: u64, seed: u64) -> BTreeMap<u64, u64> {
    let sampler = c.sampler();
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let m = CHUNK.min(samples - chunk * CHUNK);
            let mut hist = BTreeMap::new();
            for _ in 0..m {
                let p = sampler.sample(c, &mut rng);
                *hist.entry(birkhoff_sum(c, a, &p, n)).or_insert(0u64) += 1;
            }
            hist
        })
        .reduce(BTreeMap::new, |mut x, y| {
            for (k, v) in y {
                *x.entry(k).or_insert(0) += v;
            }
            x
        })
}

pub fn empirical_sum_law(
    c: &Castle,
    a: &TowerSet,
    n: u64,
    a_n: &Rational,
    mu_a: &Rational,
    samples: u64,
    seed: u64,
) -> Result<SumLaw> {
    if samples == 0 {
        return Err(Error::Config("at least one sample is required".into()));
    }
    let hist = empirical_counts(c, a, n, samples, seed);
    let total = rational::from_u64(samples);
    let counts = hist
        .into_iter()
        .map(|(k, v)| (k, rational::from_u64(v) / &total))
        .collect();
    SumLaw::from_counts(counts, n, a_n, mu_a, Provenance::Empirical { samples, seed })
}

/// Dvoretzky-Kiefer-Wolfowitz band `sqrt(ln(2/delta) / (2N))`.
pub fn dkw_band(samples: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use crate::tower_space::{build_initial_castle, Column, RunList};
    use num_traits::One;

    fn two_columns() -> Castle {
        Castle::from_columns(
            vec![
                Column {
                    height: 3,
                    cells: vec![ratio(1, 6), ratio(1, 12)],
                    junk_top: false,
                    component: 0,
                },
                Column {
                    height: 4,
                    cells: vec![ratio(1, 16)],
                    junk_top: true,
                    component: 0,
                },
            ],
            3,
            None,
        )
        .unwrap()
    }

    #[test]
    fn empty_set_gives_dirac_zero() {
        let c = build_initial_castle(8, &ratio(1, 16)).unwrap();
        let a = TowerSet::empty(&c);
        let law = exact_sum_law(&c, &a, 5, &int(2), &Rational::zero(), 1000).unwrap();
        assert_eq!(law.counts, CountLaw::from([(0, Rational::one())]));
    }

    #[test]
    fn one_step_law_of_a_column() {
        let c = build_initial_castle(8, &ratio(1, 16)).unwrap();
        let mut a = TowerSet::empty(&c);
        a.set(1, 0, RunList::full(9));
        let mu = a.measure(&c);
        let law = exact_count_law(&c, &a, 1, 100).unwrap();
        assert_eq!(law[&1], mu);
        assert_eq!(law[&0], Rational::one() - &mu);
    }

    #[test]
    fn oracle_matches_pointwise_with_wraps() {
        let c = two_columns();
        assert_eq!(c.total_measure(), Rational::one());
        let mut a = TowerSet::empty(&c);
        a.set(0, 0, RunList::from_intervals(&[(0, 1), (2, 3)]));
        a.set(0, 1, RunList::from_intervals(&[(1, 2)]));
        a.set(1, 0, RunList::from_intervals(&[(0, 2)]));
        for n in 0..12 {
            let fast = exact_count_law(&c, &a, n, 10_000).unwrap();
            let slow = pointwise_count_law(&c, &a, n);
            assert_eq!(fast, slow, "n = {n}");
            let total = fast.values().fold(Rational::zero(), |x, y| x + y);
            assert_eq!(total, Rational::one());
        }
    }

    #[test]
    fn conservation_of_mean() {
        let c = two_columns();
        let mut a = TowerSet::empty(&c);
        a.set(0, 1, RunList::from_intervals(&[(0, 2)]));
        a.set(1, 0, RunList::from_intervals(&[(3, 4)]));
        let mu = a.measure(&c);
        let law = exact_sum_law(&c, &a, 7, &int(1), &mu, 10_000).unwrap();
        assert_eq!(law.count_mean(), rational::from_u64(7) * mu);
    }

    #[test]
    fn dkw_band_value() {
        assert!((dkw_band(100_000, 0.01) - 0.005146).abs() < 1e-5);
    }

    #[test]
    fn empirical_is_deterministic() {
        let c = two_columns();
        let mut a = TowerSet::empty(&c);
        a.set(0, 0, RunList::from_intervals(&[(0, 2)]));
        let x = empirical_counts(&c, &a, 4, 5000, 9);
        let y = empirical_counts(&c, &a, 4, 5000, 9);
        assert_eq!(x, y);
        assert_eq!(x.values().sum::<u64>(), 5000);
    }
}
