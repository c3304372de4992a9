//! Level sets inside a column as lists of arithmetic-progression runs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// The levels `start + t * period + j` for `t < count`, `j < len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start: u64,
    pub len: u64,
    pub period: u64,
    pub count: u64,
}

impl Run {
    pub fn interval(start: u64, end: u64) -> Self {
        Run {
            start,
            len: end - start,
            period: end - start,
            count: 1,
        }
    }

    pub fn size(&self) -> u64 {
        self.len * self.count
    }

    /// One past the last covered level.
    pub fn end(&self) -> u64 {
        self.start + (self.count - 1) * self.period + self.len
    }

    fn shifted(&self, by: u64) -> Run {
        Run { start: self.start + by, ..*self }
    }

    /// Number of covered levels below `x`.
    pub fn count_below(&self, x: u64) -> u64 {
        if x <= self.start {
            return 0;
        }
        let rel = x - self.start;
        let full = (rel / self.period).min(self.count);
        let mut c = full * self.len;
        if full < self.count {
            c += (rel - full * self.period).min(self.len);
        }
        c
    }

    pub fn contains(&self, x: u64) -> bool {
        if x < self.start || x >= self.end() {
            return false;
        }
        (x - self.start) % self.period < self.len
    }
}

/// Disjoint runs sorted by start level. Interleaved progressions are
/// allowed, so order by start does not imply order of coverage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunList {
    runs: Vec<Run>,
}

impl RunList {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full(height: u64) -> Self {
        Self::from_intervals(&[(0, height)])
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn num_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn size(&self) -> u64 {
        self.runs.iter().map(Run::size).sum()
    }

    pub fn count_below(&self, x: u64) -> u64 {
        self.runs.iter().take_while(|r| r.start < x).map(|r| r.count_below(x)).sum()
    }

    /// Covered levels in `[a, b)`.
    pub fn count_range(&self, a: u64, b: u64) -> u64 {
        if b <= a {
            return 0;
        }
        self.count_below(b) - self.count_below(a)
    }

    pub fn contains(&self, x: u64) -> bool {
        self.runs.iter().take_while(|r| r.start <= x).any(|r| r.contains(x))
    }

    pub fn max_end(&self) -> u64 {
        self.runs.iter().map(Run::end).max().unwrap_or(0)
    }

    /// Compresses sorted, disjoint intervals into runs. Adjacent intervals
    /// are merged first.
    pub fn from_intervals(iv: &[(u64, u64)]) -> Self {
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(iv.len());
        for &(a, b) in iv {
            if a >= b {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.1 >= a => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut runs: Vec<Run> = Vec::new();
        for (a, b) in merged {
            let len = b - a;
            if let Some(r) = runs.last_mut() {
                if r.len == len {
                    if r.count == 1 {
                        r.period = a - r.start;
                        r.count = 2;
                        continue;
                    }
                    if r.start + r.period * r.count == a {
                        r.count += 1;
                        continue;
                    }
                }
            }
            runs.push(Run::interval(a, b));
        }
        RunList { runs }
    }

    /// Sorted disjoint non-adjacent intervals.
    pub fn intervals(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(self.runs.iter().map(|r| r.count as usize).sum());
        for r in &self.runs {
            for t in 0..r.count {
                let a = r.start + t * r.period;
                out.push((a, a + r.len));
            }
        }
        out.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(out.len());
        for (a, b) in out {
            match merged.last_mut() {
                Some(last) if last.1 >= a => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// Number of maximal intervals, without materializing them when the
    /// runs are not interleaved.
    pub fn interval_count_hint(&self) -> u64 {
        self.runs.iter().map(|r| r.count).sum()
    }

    pub fn union(&self, other: &RunList) -> RunList {
        let mut iv = self.intervals();
        iv.extend(other.intervals());
        iv.sort_unstable();
        Self::from_intervals(&iv)
    }

    pub fn difference(&self, other: &RunList) -> RunList {
        let b = other.intervals();
        let mut out = Vec::new();
        let mut j = 0;
        for (mut s, e) in self.intervals() {
            while j < b.len() && b[j].1 <= s {
                j += 1;
            }
            let mut k = j;
            while k < b.len() && b[k].0 < e {
                if b[k].0 > s {
                    out.push((s, b[k].0));
                }
                s = s.max(b[k].1);
                k += 1;
            }
            if s < e {
                out.push((s, e));
            }
        }
        Self::from_intervals(&out)
    }

    pub fn intersection(&self, other: &RunList) -> RunList {
        self.difference(&self.difference(other))
    }

    pub fn sym_diff(&self, other: &RunList) -> RunList {
        self.difference(other).union(&other.difference(self))
    }

    pub fn is_disjoint(&self, other: &RunList) -> bool {
        self.intersection(other).is_empty()
    }

    /// Same set of levels.
    pub fn same_levels(&self, other: &RunList) -> bool {
        self.intervals() == other.intervals()
    }

    /// Concatenates lists placed at the given level offsets. Pieces must not
    /// overlap; progressions continuing across pieces are merged.
    pub fn concat(pieces: impl IntoIterator<Item = (u64, RunList)>) -> RunList {
        let mut runs: Vec<Run> = Vec::new();
        // (len, period, next start) -> index of the run expecting it
        let mut open: HashMap<(u64, u64, u64), usize> = HashMap::new();
        for (offset, list) in pieces {
            for r in list.runs {
                let r = r.shifted(offset);
                if let Some(idx) = open.remove(&(r.len, r.period, r.start)) {
                    let prev = &mut runs[idx];
                    prev.count += r.count;
                    open.insert((prev.len, prev.period, prev.start + prev.period * prev.count), idx);
                } else {
                    runs.push(r);
                    let idx = runs.len() - 1;
                    open.insert((r.len, r.period, r.start + r.period * r.count), idx);
                }
            }
        }
        runs.sort_by_key(|r| r.start);
        RunList { runs }
    }

    pub fn from_runs(mut runs: Vec<Run>) -> RunList {
        runs.retain(|r| r.len > 0 && r.count > 0);
        runs.sort_by_key(|r| r.start);
        RunList { runs }
    }

    pub fn shift(&self, by: u64) -> RunList {
        RunList {
            runs: self.runs.iter().map(|r| r.shifted(by)).collect(),
        }
    }

    /// Levels of `self` inside `[a, b)`, shifted down by `a`.
    pub fn window(&self, a: u64, b: u64) -> RunList {
        let iv: Vec<(u64, u64)> = self
            .intervals()
            .into_iter()
            .filter(|&(s, e)| e > a && s < b)
            .map(|(s, e)| (s.max(a) - a, e.min(b) - a))
            .collect();
        Self::from_intervals(&iv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_finds_progressions() {
        let iv: Vec<(u64, u64)> = (0..10).map(|t| (t * 7, t * 7 + 3)).collect();
        let rl = RunList::from_intervals(&iv);
        assert_eq!(rl.num_runs(), 1);
        assert_eq!(rl.size(), 30);
        assert_eq!(rl.intervals(), iv);
        assert_eq!(rl.count_below(8), 4);
        assert_eq!(rl.count_range(2, 16), 1 + 3 + 2);
        assert!(rl.contains(15) && !rl.contains(17));
    }

    #[test]
    fn set_operations() {
        let a = RunList::from_intervals(&[(0, 10)]);
        let b = RunList::from_intervals(&[(3, 5), (8, 12)]);
        assert_eq!(a.difference(&b).intervals(), vec![(0, 3), (5, 8)]);
        assert_eq!(a.union(&b).intervals(), vec![(0, 12)]);
        assert_eq!(a.intersection(&b).intervals(), vec![(3, 5), (8, 10)]);
        assert_eq!(a.sym_diff(&b).intervals(), vec![(0, 3), (5, 8), (10, 12)]);
    }

    #[test]
    fn concat_merges_interleaved_progressions() {
        let block = RunList::from_runs(vec![
            Run { start: 0, len: 1, period: 8, count: 2 },
            Run { start: 4, len: 2, period: 8, count: 2 },
        ]);
        let rl = RunList::concat([(0, block.clone()), (16, block.clone()), (32, block)]);
        assert_eq!(rl.num_runs(), 2);
        assert_eq!(rl.size(), 18);
        assert_eq!(rl.count_below(48), 18);
    }
}
