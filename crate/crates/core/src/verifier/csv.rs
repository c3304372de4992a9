//! CDF tables for plotting: exact law, target and optional empirical law.

use std::fmt::Write;

use num_traits::Zero;

use crate::measures::RealMeasure;
use crate::rational::{self, Rational};

/// Uniform fill points added between the extreme grid positions.
pub const FILL_POINTS: u64 = 256;

fn positions(m: &RealMeasure, out: &mut Vec<Rational>) {
    out.extend(m.atoms().iter().map(|a| a.at.clone()));
    for s in m.segments() {
        out.push(s.lo.clone());
        out.push(s.hi.clone());
    }
}

/// CSV with header `t,F_exact,F_target,F_empirical`; every value is an
/// exact `p/q` string and the empirical column is empty when absent.
pub fn cdf_csv(exact: &RealMeasure, target: &RealMeasure, empirical: Option<&RealMeasure>) -> String {
    let mut grid = Vec::new();
    positions(exact, &mut grid);
    positions(target, &mut grid);
    if let Some(e) = empirical {
        positions(e, &mut grid);
    }
    if grid.is_empty() {
        grid.push(Rational::zero());
    }
    let lo = grid.iter().min().cloned().unwrap();
    let hi = grid.iter().max().cloned().unwrap();
    let span = &hi - &lo;
    for i in 0..FILL_POINTS {
        grid.push(&lo + &span * rational::ratio(i as i64, FILL_POINTS as i64 - 1));
    }
    grid.sort();
    grid.dedup();
    let mut s = String::from("t,F_exact,F_target,F_empirical\n");
    for t in &grid {
        let emp = empirical.map(|e| rational::fmt(&e.cdf_exact(t))).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{}",
            rational::fmt(t),
            rational::fmt(&exact.cdf_exact(t)),
            rational::fmt(&target.cdf_exact(t)),
            emp
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn csv_contains_atoms_and_fill() {
        let a = RealMeasure::atomic([(int(-1), ratio(1, 2)), (int(1), ratio(1, 2))]).unwrap();
        let u = RealMeasure::uniform(int(-1), int(1)).unwrap();
        let csv = cdf_csv(&a, &u, None);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,F_exact,F_target,F_empirical");
        assert_eq!(lines.len(), 1 + FILL_POINTS as usize);
        assert!(lines.contains(&"-1,1/2,0,"));
        assert_eq!(*lines.last().unwrap(), "1,1,1,");
    }
}
