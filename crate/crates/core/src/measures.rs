//! Probability measures on the real line built from point atoms and
//! uniform segments, with exact rational masses and locations.
//!
//! The Lévy distance is evaluated in floating point on the piecewise-linear
//! distribution functions; everything else is exact.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, serde_rational, Rational};

/// Absolute tolerance of [`levy_distance`].
pub const LEVY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(with = "serde_rational")]
    pub at: Rational,
    #[serde(with = "serde_rational")]
    pub mass: Rational,
}

/// Uniform mass on the half-open interval `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(with = "serde_rational")]
    pub lo: Rational,
    #[serde(with = "serde_rational")]
    pub hi: Rational,
    #[serde(with = "serde_rational")]
    pub mass: Rational,
}

impl Segment {
    /// Mass of the segment lying in `(-inf, t]`.
    fn mass_upto(&self, t: &Rational) -> Rational {
        if t <= &self.lo {
            Rational::zero()
        } else if t >= &self.hi {
            self.mass.clone()
        } else {
            &self.mass * (t - &self.lo) / (&self.hi - &self.lo)
        }
    }

    /// Mass of the segment inside `[a, b]` (endpoints carry no mass).
    fn mass_between(&self, a: Option<&Rational>, b: Option<&Rational>) -> (Rational, Option<(Rational, Rational)>) {
        let lo = match a {
            Some(a) if a > &self.lo => a.clone(),
            _ => self.lo.clone(),
        };
        let hi = match b {
            Some(b) if b < &self.hi => b.clone(),
            _ => self.hi.clone(),
        };
        if lo >= hi {
            return (Rational::zero(), None);
        }
        let m = &self.mass * (&hi - &lo) / (&self.hi - &self.lo);
        (m, Some((lo, hi)))
    }
}

/// A probability measure: finitely many atoms plus finitely many uniform segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealMeasure {
    atoms: Vec<Atom>,
    segments: Vec<Segment>,
}

impl RealMeasure {
    /// Builds a canonical measure. Atoms at equal locations are merged and
    /// zero masses dropped; segments must not overlap.
    pub fn new(atoms: Vec<Atom>, segments: Vec<Segment>) -> Result<Self> {
        let m = Self::new_unnormalized(atoms, segments)?;
        let total = m.total_mass();
        if !total.is_one() {
            return Err(Error::InvalidMeasure(format!(
                "total mass is {}, expected 1",
                rational::fmt(&total)
            )));
        }
        Ok(m)
    }

    fn new_unnormalized(mut atoms: Vec<Atom>, mut segments: Vec<Segment>) -> Result<Self> {
        if atoms.iter().any(|a| a.mass.is_negative()) || segments.iter().any(|s| s.mass.is_negative()) {
            return Err(Error::InvalidMeasure("negative mass".into()));
        }
        if let Some(s) = segments.iter().find(|s| s.lo >= s.hi) {
            return Err(Error::InvalidMeasure(format!(
                "segment ({}, {}] is empty",
                rational::fmt(&s.lo),
                rational::fmt(&s.hi)
            )));
        }
        atoms.retain(|a| !a.mass.is_zero());
        atoms.sort_by(|a, b| a.at.cmp(&b.at));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.at == a.at => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        segments.retain(|s| !s.mass.is_zero());
        segments.sort_by(|a, b| a.lo.cmp(&b.lo));
        for w in segments.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::InvalidMeasure("overlapping segments".into()));
            }
        }
        Ok(Self { atoms: merged, segments })
    }

    pub fn dirac(at: Rational) -> Self {
        Self {
            atoms: vec![Atom { at, mass: Rational::one() }],
            segments: vec![],
        }
    }

    pub fn uniform(lo: Rational, hi: Rational) -> Result<Self> {
        Self::new(vec![], vec![Segment { lo, hi, mass: Rational::one() }])
    }

    /// Purely atomic measure from `(location, mass)` pairs.
    pub fn atomic(pairs: impl IntoIterator<Item = (Rational, Rational)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(at, mass)| Atom { at, mass }).collect(), vec![])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_atomic(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_mass(&self) -> Rational {
        let mut t = Rational::zero();
        for a in &self.atoms {
            t += &a.mass;
        }
        for s in &self.segments {
            t += &s.mass;
        }
        t
    }

    /// Exact value of `m((-inf, t])`.
    pub fn cdf_exact(&self, t: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for a in &self.atoms {
            if &a.at <= t {
                acc += &a.mass;
            } else {
                break;
            }
        }
        for s in &self.segments {
            acc += s.mass_upto(t);
        }
        acc
    }

    /// `m((-inf, t))`.
    pub fn mass_below(&self, t: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for a in self.atoms.iter().take_while(|a| &a.at < t) {
            acc += &a.mass;
        }
        for s in &self.segments {
            acc += s.mass_upto(t);
        }
        acc
    }

    /// `m((t, inf))`.
    pub fn mass_above(&self, t: &Rational) -> Rational {
        Rational::one() - self.cdf_exact(t)
    }

    /// `m(R \ [lo, hi])`.
    pub fn mass_outside(&self, lo: &Rational, hi: &Rational) -> Rational {
        self.mass_below(lo) + self.mass_above(hi)
    }

    pub fn mean(&self) -> Rational {
        let mut acc = Rational::zero();
        for a in &self.atoms {
            acc += &a.at * &a.mass;
        }
        for s in &self.segments {
            acc += &s.mass * (&s.lo + &s.hi) / rational::int(2);
        }
        acc
    }

    /// Smallest and largest point of the support.
    pub fn support_hull(&self) -> (Rational, Rational) {
        let mut lo: Option<Rational> = None;
        let mut hi: Option<Rational> = None;
        let mut see = |v: &Rational| {
            if lo.as_ref().is_none_or(|l| v < l) {
                lo = Some(v.clone());
            }
            if hi.as_ref().is_none_or(|h| v > h) {
                hi = Some(v.clone());
            }
        };
        for a in &self.atoms {
            see(&a.at);
        }
        for s in &self.segments {
            see(&s.lo);
            see(&s.hi);
        }
        (lo.unwrap_or_else(Rational::zero), hi.unwrap_or_else(Rational::zero))
    }

    /// Floating-point view used for metric computations.
    pub fn cdf_table(&self) -> CdfTable {
        CdfTable::new(self)
    }
}

/// `F(t) = m((-inf, t])` in floating point.
pub fn cdf_eval(m: &RealMeasure, t: f64) -> f64 {
    m.cdf_table().eval(t)
}

/// Precomputed floating-point distribution function.
#[derive(Debug, Clone)]
pub struct CdfTable {
    atom_at: Vec<f64>,
    atom_cum: Vec<f64>,
    segs: Vec<(f64, f64, f64)>,
    breakpoints: Vec<f64>,
}

impl CdfTable {
    fn new(m: &RealMeasure) -> Self {
        let mut atom_at = Vec::with_capacity(m.atoms.len());
        let mut atom_cum = Vec::with_capacity(m.atoms.len());
        let mut cum = Rational::zero();
        for a in &m.atoms {
            cum += &a.mass;
            atom_at.push(rational::to_f64(&a.at));
            atom_cum.push(rational::to_f64(&cum));
        }
        let segs: Vec<_> = m
            .segments
            .iter()
            .map(|s| (rational::to_f64(&s.lo), rational::to_f64(&s.hi), rational::to_f64(&s.mass)))
            .collect();
        let mut breakpoints: Vec<f64> = atom_at.clone();
        for s in &segs {
            breakpoints.push(s.0);
            breakpoints.push(s.1);
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        breakpoints.dedup();
        Self {
            atom_at,
            atom_cum,
            segs,
            breakpoints,
        }
    }

    fn seg_part(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for &(lo, hi, m) in &self.segs {
            if t >= hi {
                acc += m;
            } else if t > lo {
                acc += m * (t - lo) / (hi - lo);
            }
        }
        acc
    }

    /// `F(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.atom_at.partition_point(|&a| a <= t);
        let atoms = if k == 0 { 0.0 } else { self.atom_cum[k - 1] };
        (atoms + self.seg_part(t)).min(1.0)
    }

    /// `F(t-)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.atom_at.partition_point(|&a| a < t);
        let atoms = if k == 0 { 0.0 } else { self.atom_cum[k - 1] };
        (atoms + self.seg_part(t)).min(1.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

/// Whether `F(t) <= G(t + eps) + eps` for every real t.
fn one_sided_ok(f: &CdfTable, g: &CdfTable, eps: f64) -> bool {
    // F(t) - G(t+eps) is piecewise linear between the breakpoints of F and
    // the shifted breakpoints of G, so its supremum is attained (as a value
    // or a left limit) at one of them.
    let check = |tf: f64, tg: f64| {
        f.eval(tf) - g.eval(tg) <= eps && f.eval_left(tf) - g.eval_left(tg) <= eps
    };
    f.breakpoints().iter().all(|&b| check(b, b + eps)) && g.breakpoints().iter().all(|&b| check(b - eps, b))
}

fn levy_feasible(f: &CdfTable, g: &CdfTable, eps: f64) -> bool {
    one_sided_ok(f, g, eps) && one_sided_ok(g, f, eps)
}

/// Lévy distance between two distribution tables, by bisection on the
/// corridor width.
pub fn levy_distance_tables(f: &CdfTable, g: &CdfTable) -> f64 {
    if levy_feasible(f, g, 0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > LEVY_TOL {
        let mid = 0.5 * (lo + hi);
        if levy_feasible(f, g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn levy_distance(m1: &RealMeasure, m2: &RealMeasure) -> f64 {
    levy_distance_tables(&m1.cdf_table(), &m2.cdf_table())
}

/// Kolmogorov (sup-norm) distance between distribution functions.
pub fn kolmogorov_distance(m1: &RealMeasure, m2: &RealMeasure) -> f64 {
    let (f, g) = (m1.cdf_table(), m2.cdf_table());
    let mut pts: Vec<f64> = f.breakpoints().iter().chain(g.breakpoints()).copied().collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.dedup();
    let mut best = 0.0f64;
    for t in pts {
        best = best.max((f.eval(t) - g.eval(t)).abs());
        best = best.max((f.eval_left(t) - g.eval_left(t)).abs());
    }
    best
}

/// One endpoint of a window interval; `None` bound means infinite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bound {
    pub at: Rational,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowPart {
    Interval { lo: Option<Bound>, hi: Option<Bound> },
    Point(Rational),
}

impl WindowPart {
    fn lo_key(&self) -> Option<&Rational> {
        match self {
            WindowPart::Interval { lo, .. } => lo.as_ref().map(|b| &b.at),
            WindowPart::Point(p) => Some(p),
        }
    }

    fn contains(&self, x: &Rational) -> bool {
        match self {
            WindowPart::Point(p) => p == x,
            WindowPart::Interval { lo, hi } => {
                let lo_ok = lo.as_ref().is_none_or(|b| if b.closed { x >= &b.at } else { x > &b.at });
                let hi_ok = hi.as_ref().is_none_or(|b| if b.closed { x <= &b.at } else { x < &b.at });
                lo_ok && hi_ok
            }
        }
    }
}

/// Finite union of disjoint intervals and isolated points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BorelWindow {
    parts: Vec<WindowPart>,
}

impl BorelWindow {
    pub fn new(mut parts: Vec<WindowPart>) -> Result<Self> {
        parts.sort_by(|a, b| match (a.lo_key(), b.lo_key()) {
            (None, None) => Ordering::Equal,
            (None, _) => Ordering::Less,
            (_, None) => Ordering::Greater,
            (Some(x), Some(y)) => x.cmp(y),
        });
        for p in &parts {
            if let WindowPart::Interval { lo: Some(l), hi: Some(h) } = p {
                if l.at > h.at || (l.at == h.at && !(l.closed && h.closed)) {
                    return Err(Error::InvalidMeasure("empty window interval".into()));
                }
            }
        }
        for w in parts.windows(2) {
            let overlap = match (&w[0], &w[1]) {
                (WindowPart::Point(a), other) | (other, WindowPart::Point(a)) => other.contains(a) && w[0] != w[1],
                (WindowPart::Interval { hi, .. }, WindowPart::Interval { lo, .. }) => match (hi, lo) {
                    (None, _) | (_, None) => true,
                    (Some(h), Some(l)) => h.at > l.at || (h.at == l.at && h.closed && l.closed),
                },
            };
            if overlap || w[0] == w[1] {
                return Err(Error::InvalidMeasure("window components overlap".into()));
            }
        }
        Ok(Self { parts })
    }

    pub fn point(x: Rational) -> Self {
        Self {
            parts: vec![WindowPart::Point(x)],
        }
    }

    /// The interval `(lo, hi]`.
    pub fn left_open(lo: Rational, hi: Rational) -> Result<Self> {
        Self::new(vec![WindowPart::Interval {
            lo: Some(Bound { at: lo, closed: false }),
            hi: Some(Bound { at: hi, closed: true }),
        }])
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    pub fn mass(&self, m: &RealMeasure) -> Rational {
        let mut acc = Rational::zero();
        for a in &m.atoms {
            if self.contains(&a.at) {
                acc += &a.mass;
            }
        }
        for s in &m.segments {
            for p in &self.parts {
                if let WindowPart::Interval { lo, hi } = p {
                    acc += s.mass_between(lo.as_ref().map(|b| &b.at), hi.as_ref().map(|b| &b.at)).0;
                }
            }
        }
        acc
    }
}

/// The conditional law `m(. | B)`.
pub fn condition(m: &RealMeasure, window: &BorelWindow) -> Result<RealMeasure> {
    let total = window.mass(m);
    if total.is_zero() {
        return Err(Error::ZeroMassWindow);
    }
    let atoms = m
        .atoms
        .iter()
        .filter(|a| window.contains(&a.at))
        .map(|a| Atom {
            at: a.at.clone(),
            mass: &a.mass / &total,
        })
        .collect();
    let mut segments = Vec::new();
    for s in &m.segments {
        for p in &window.parts {
            if let WindowPart::Interval { lo, hi } = p {
                let (mass, range) = s.mass_between(lo.as_ref().map(|b| &b.at), hi.as_ref().map(|b| &b.at));
                if let Some((lo, hi)) = range {
                    segments.push(Segment {
                        lo,
                        hi,
                        mass: mass / &total,
                    });
                }
            }
        }
    }
    RealMeasure::new(atoms, segments)
}

/// Law of `X / x` when `X` has law `m`.
pub fn scale(m: &RealMeasure, x: &Rational) -> Result<RealMeasure> {
    if !x.is_positive() {
        return Err(Error::NonPositiveScale(rational::fmt(x)));
    }
    Ok(RealMeasure {
        atoms: m
            .atoms
            .iter()
            .map(|a| Atom {
                at: &a.at / x,
                mass: a.mass.clone(),
            })
            .collect(),
        segments: m
            .segments
            .iter()
            .map(|s| Segment {
                lo: &s.lo / x,
                hi: &s.hi / x,
                mass: s.mass.clone(),
            })
            .collect(),
    })
}

pub fn mean(m: &RealMeasure) -> Rational {
    m.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn half_half(a: i64, b: i64) -> RealMeasure {
        RealMeasure::atomic([(int(a), ratio(1, 2)), (int(b), ratio(1, 2))]).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let d0 = RealMeasure::dirac(int(0));
        assert_eq!(cdf_eval(&d0, -1.0), 0.0);
        let u = RealMeasure::uniform(int(0), int(1)).unwrap();
        assert!((cdf_eval(&u, 0.25) - 0.25).abs() < 1e-15);
        let mix = RealMeasure::new(
            vec![Atom { at: int(0), mass: ratio(1, 2) }],
            vec![Segment { lo: int(0), hi: int(1), mass: ratio(1, 2) }],
        )
        .unwrap();
        assert_eq!(mix.cdf_exact(&ratio(1, 2)), ratio(3, 4));
        assert!((cdf_eval(&mix, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn levy_examples() {
        let d0 = RealMeasure::dirac(int(0));
        assert_eq!(levy_distance(&d0, &d0), 0.0);
        let dh = RealMeasure::dirac(ratio(1, 2));
        assert!((levy_distance(&dh, &d0) - 0.5).abs() < 1e-12);
        let u1 = RealMeasure::uniform(int(0), int(1)).unwrap();
        let u2 = RealMeasure::uniform(ratio(1, 5), ratio(6, 5)).unwrap();
        assert!((levy_distance(&u1, &u2) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn levy_far_diracs_saturate_at_one() {
        let d0 = RealMeasure::dirac(int(0));
        let d5 = RealMeasure::dirac(int(5));
        assert!((levy_distance(&d5, &d0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_examples() {
        let m = half_half(0, 1);
        let c = condition(&m, &BorelWindow::point(int(0))).unwrap();
        assert_eq!(c, RealMeasure::dirac(int(0)));
        assert!((levy_distance(&c, &m) - 0.5).abs() < 1e-12);

        let u = RealMeasure::uniform(int(0), int(1)).unwrap();
        let half = condition(&u, &BorelWindow::left_open(int(0), ratio(1, 2)).unwrap()).unwrap();
        assert_eq!(half, RealMeasure::uniform(int(0), ratio(1, 2)).unwrap());

        assert_eq!(
            condition(&m, &BorelWindow::point(int(7))).unwrap_err(),
            Error::ZeroMassWindow
        );
    }

    #[test]
    fn scale_examples() {
        let m = half_half(-1, 3);
        assert_eq!(scale(&m, &int(1)).unwrap(), m);
        assert_eq!(scale(&RealMeasure::dirac(int(4)), &int(4)).unwrap(), RealMeasure::dirac(int(1)));
        let u = RealMeasure::uniform(int(0), int(2)).unwrap();
        assert_eq!(scale(&u, &int(2)).unwrap(), RealMeasure::uniform(int(0), int(1)).unwrap());
        assert!(matches!(scale(&m, &int(0)), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(RealMeasure::dirac(int(0)).mean(), int(0));
        assert_eq!(half_half(-1, 1).mean(), int(0));
        let m = RealMeasure::new(
            vec![Atom { at: int(-2), mass: ratio(1, 4) }],
            vec![Segment { lo: int(0), hi: ratio(4, 3), mass: ratio(3, 4) }],
        )
        .unwrap();
        assert_eq!(m.mean(), int(0));
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(RealMeasure::atomic([(int(0), ratio(1, 2))]).is_err());
        assert!(RealMeasure::uniform(int(1), int(1)).is_err());
        let overlapping = RealMeasure::new(
            vec![],
            vec![
                Segment { lo: int(0), hi: int(2), mass: ratio(1, 2) },
                Segment { lo: int(1), hi: int(3), mass: ratio(1, 2) },
            ],
        );
        assert!(overlapping.is_err());
    }

    #[test]
    fn window_overlap_rejected() {
        let parts = vec![
            WindowPart::Interval {
                lo: Some(Bound { at: int(0), closed: true }),
                hi: Some(Bound { at: int(2), closed: true }),
            },
            WindowPart::Point(int(1)),
        ];
        assert!(BorelWindow::new(parts).is_err());
    }
}
