//! Integer-lattice approximations of zero-mean targets with exact rational
//! masses, and their realization as step functions on a base of cells.
//!
//! Pipeline for [`quantize`]:
//! 1. grid: lattice point `i` receives the target mass of
//!    `((i - 1/2)/a_n, (i + 1/2)/a_n]`; tails fold onto `+-(d - 1)`;
//! 2. rounding: the cumulative masses are rounded to multiples of `1/q`
//!    (half down), `q` running through powers of two up to `q_max`;
//! 3. mean repair: unit counts move from the outermost support point on the
//!    heavy side until the integer first moment vanishes;
//! 4. the scaled Lévy distance is recomputed and decides acceptance.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{self, RealMeasure};
use crate::rational::{self, Rational};
use crate::sequence::{smallest_multiple, SequenceSpec};

/// Mean tolerance for targets given with non-exact decimals.
pub const MEAN_TOL: f64 = 1e-12;
/// Largest tail constant searched by [`lattice_constants`].
pub const C_SEARCH_CAP: u64 = 1 << 40;

/// Finite-support measure on the integers with masses `counts[i] / q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatticeMeasure {
    pub d: u64,
    pub q: u64,
    pub counts: BTreeMap<i64, u64>,
}

impl LatticeMeasure {
    pub fn dirac_zero() -> Self {
        Self {
            d: 1,
            q: 1,
            counts: BTreeMap::from([(0, 1)]),
        }
    }

    /// Checks support bound, total count and zero first moment.
    pub fn check(&self) -> Result<()> {
        let bound = self.d as i64 - 1;
        if self.counts.iter().any(|(&i, &c)| i.abs() > bound || c == 0) {
            return Err(Error::InvalidMeasure("lattice support out of range".into()));
        }
        let total: u128 = self.counts.values().map(|&c| c as u128).sum();
        if total != self.q as u128 {
            return Err(Error::InvalidMeasure(format!("counts sum to {total}, expected q = {}", self.q)));
        }
        if self.first_moment() != 0 {
            return Err(Error::NonZeroMeanTarget(format!("{}/{}", self.first_moment(), self.q)));
        }
        Ok(())
    }

    pub fn first_moment(&self) -> i128 {
        self.counts.iter().map(|(&i, &c)| i as i128 * c as i128).sum()
    }

    pub fn mass(&self, i: i64) -> Rational {
        let c = self.counts.get(&i).copied().unwrap_or(0);
        rational::ratio(c as i64, self.q as i64)
    }

    pub fn to_real(&self) -> RealMeasure {
        let q = rational::from_u64(self.q);
        RealMeasure::atomic(
            self.counts
                .iter()
                .map(|(&i, &c)| (rational::int(i), rational::from_u64(c) / &q)),
        )
        .expect("lattice counts sum to q")
    }

    /// Values in linear slot order: value `i` repeated `counts[i]` times.
    pub fn slot_values(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.q as usize);
        for (&i, &c) in &self.counts {
            out.extend(std::iter::repeat_n(i, c as usize));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuantizerConstants {
    pub c0: u64,
    #[serde(serialize_with = "ser_biguint")]
    pub n0: BigUint,
}

fn ser_biguint<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub fn check_zero_mean(target: &RealMeasure) -> Result<()> {
    let m = target.mean();
    if rational::to_f64(&m).abs() > MEAN_TOL {
        return Err(Error::NonZeroMeanTarget(rational::fmt(&m)));
    }
    Ok(())
}

/// Tail constant `C0` and starting index `n0` for accuracy `eps`.
pub fn lattice_constants(target: &RealMeasure, eps: &Rational, seq: &SequenceSpec) -> Result<QuantizerConstants> {
    check_zero_mean(target)?;
    if !eps.is_positive() {
        return Err(Error::Config("eps must be positive".into()));
    }
    let quarter = eps / rational::int(4);
    let c0 = smallest_multiple(&BigUint::one(), &BigUint::one(), &BigUint::from(C_SEARCH_CAP), |c| {
        let c = rational::from_biguint(c);
        let edge = c - Rational::one();
        Ok(target.mass_outside(&-edge.clone(), &edge) <= quarter)
    })?
    .ok_or(Error::UnboundedTarget(C_SEARCH_CAP))?;
    let limit = match seq.max_index() {
        Some(m) => BigUint::from(m),
        None => BigUint::one() << 256,
    };
    let four = rational::int(4);
    let n0 = smallest_multiple(&BigUint::one(), &BigUint::one(), &limit, |n| Ok(seq.a(n)? * eps >= four))?
        .ok_or_else(|| Error::InvalidSequence("a_n never reaches 4/eps".into()))?;
    Ok(QuantizerConstants {
        c0: c0.to_u64().expect("below cap"),
        n0,
    })
}

/// Half-width `d = floor(a_n C) + 1`.
pub fn half_width(a_n: &Rational, c: u64) -> Result<u64> {
    rational::floor_u64(&(a_n * rational::from_u64(c)))
        .and_then(|f| f.checked_add(1))
        .ok_or_else(|| Error::BudgetExceeded("lattice half-width overflows u64".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantized {
    pub eta: LatticeMeasure,
    /// Lévy distance between `eta` scaled by `a_n` and the target.
    pub distance: f64,
}

/// Cumulative grid masses `G_i = target((-inf, (i + 1/2)/a_n])` for
/// `i = -(d-1) .. d-2`, then `G_{d-1} = 1`.
fn grid_cumulative(target: &RealMeasure, a_n: &Rational, d: u64) -> Vec<Rational> {
    let lo = -(d as i64 - 1);
    let hi = d as i64 - 1;
    let half = rational::ratio(1, 2);
    let mut out = Vec::with_capacity((2 * d - 1) as usize);
    for i in lo..hi {
        out.push(target.cdf_exact(&((rational::int(i) + &half) / a_n)));
    }
    out.push(Rational::one());
    out
}

/// `ceil(x - 1/2)`: nearest integer, ties toward the smaller one.
fn round_half_down(x: &Rational) -> BigInt {
    let shifted = x - rational::ratio(1, 2);
    let (q, r) = shifted.numer().div_mod_floor(shifted.denom());
    if r.is_zero() {
        q
    } else {
        q + 1
    }
}

fn round_counts(cum: &[Rational], q: u64, d: u64) -> BTreeMap<i64, u64> {
    let qr = rational::from_u64(q);
    let lo = -(d as i64 - 1);
    let mut counts = BTreeMap::new();
    let mut prev = BigInt::zero();
    for (k, g) in cum.iter().enumerate() {
        let c = round_half_down(&(g * &qr));
        let diff = (&c - &prev).to_u64().unwrap_or(0);
        if diff > 0 {
            counts.insert(lo + k as i64, diff);
        }
        prev = c;
    }
    counts
}

fn repair_mean(counts: &mut BTreeMap<i64, u64>, d: u64) {
    let edge = d as i64 - 1;
    let mut moment: i128 = counts.iter().map(|(&i, &c)| i as i128 * c as i128).sum();
    while moment != 0 {
        let (src, dst) = if moment > 0 {
            let src = *counts.keys().next_back().expect("nonempty");
            let dst = (src as i128 - moment).max(-(edge as i128)) as i64;
            (src, dst)
        } else {
            let src = *counts.keys().next().expect("nonempty");
            let dst = (src as i128 - moment).min(edge as i128) as i64;
            (src, dst)
        };
        debug_assert_ne!(src, dst);
        let c = counts.get_mut(&src).expect("present");
        *c -= 1;
        if *c == 0 {
            counts.remove(&src);
        }
        *counts.entry(dst).or_insert(0) += 1;
        moment -= (src - dst) as i128;
    }
}

/// Lévy distance of the unrounded grid measure (after scaling) to the target.
pub fn grid_distance(target: &RealMeasure, a_n: &Rational, c: u64) -> Result<f64> {
    let d = half_width(a_n, c)?;
    let cum = grid_cumulative(target, a_n, d);
    let lo = -(d as i64 - 1);
    let mut prev = Rational::zero();
    let mut atoms = Vec::new();
    for (k, g) in cum.iter().enumerate() {
        atoms.push((rational::int(lo + k as i64) / a_n, g - &prev));
        prev = g.clone();
    }
    Ok(measures::levy_distance(&RealMeasure::atomic(atoms)?, target))
}

/// Lattice approximation with `d = floor(a_n C) + 1` whose scaled law is
/// within `eps` of the target in the Lévy metric.
pub fn quantize(target: &RealMeasure, eps: &Rational, c: u64, a_n: &Rational, q_max: u64) -> Result<Quantized> {
    check_zero_mean(target)?;
    let d = half_width(a_n, c)?;
    if d > (1 << 26) {
        return Err(Error::BudgetExceeded(format!("lattice half-width {d} too large to materialize")));
    }
    let cum = grid_cumulative(target, a_n, d);
    let tcdf = target.cdf_table();
    let eps_f = rational::to_f64(eps);
    let mut best = f64::INFINITY;
    let mut q = 1u64;
    while q <= q_max.max(1) {
        let mut counts = round_counts(&cum, q, d);
        repair_mean(&mut counts, d);
        let eta = LatticeMeasure { d, q, counts };
        let scaled = measures::scale(&eta.to_real(), a_n)?;
        let dist = measures::levy_distance_tables(&scaled.cdf_table(), &tcdf);
        if dist <= eps_f {
            return Ok(Quantized { eta, distance: dist });
        }
        best = best.min(dist);
        q = match q.checked_mul(2) {
            Some(v) => v,
            None => break,
        };
    }
    Err(Error::QuantizationInfeasible { q_max, best })
}

/// One piece of a refined base: a sub-interval of an input cell carrying a
/// lattice value and its slot in linear order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledPiece {
    pub cell: usize,
    /// Offset of the piece inside its original cell.
    #[serde(with = "crate::rational::serde_rational")]
    pub offset: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub width: Rational,
    pub value: i64,
    pub slot: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaseLabeling {
    pub pieces: Vec<LabeledPiece>,
}

impl BaseLabeling {
    /// Total width carrying each value.
    pub fn width_by_value(&self) -> BTreeMap<i64, Rational> {
        let mut out: BTreeMap<i64, Rational> = BTreeMap::new();
        for p in &self.pieces {
            *out.entry(p.value).or_insert_with(Rational::zero) += &p.width;
        }
        out
    }
}

/// Splits the cells (in the given order, left to right) into `q` equal slots;
/// slot `r` carries the `r`-th value of `eta` in increasing order.
pub fn realize_on_base(eta: &LatticeMeasure, base_cells: &[(usize, Rational)]) -> BaseLabeling {
    let total: Rational = base_cells.iter().fold(Rational::zero(), |acc, (_, w)| acc + w);
    let values = eta.slot_values();
    let slot_w = &total / rational::from_u64(eta.q);
    let mut pieces = Vec::new();
    let mut slot = 0usize;
    let mut slot_left = slot_w.clone();
    for (id, width) in base_cells {
        let mut off = Rational::zero();
        while &off < width && slot < values.len() {
            let room = width - &off;
            let take = if room < slot_left { room } else { slot_left.clone() };
            pieces.push(LabeledPiece {
                cell: *id,
                offset: off.clone(),
                width: take.clone(),
                value: values[slot],
                slot: slot as u64,
            });
            off += &take;
            slot_left -= &take;
            if slot_left.is_zero() {
                slot += 1;
                slot_left = slot_w.clone();
            }
        }
    }
    BaseLabeling { pieces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn two_point() -> RealMeasure {
        RealMeasure::atomic([(int(-1), ratio(1, 2)), (int(1), ratio(1, 2))]).unwrap()
    }

    #[test]
    fn constants_examples() {
        let sq = SequenceSpec::sqrt();
        let k = lattice_constants(&two_point(), &ratio(1, 10), &sq).unwrap();
        assert_eq!((k.c0, k.n0.clone()), (2, BigUint::from(1600u32)));
        let k = lattice_constants(&RealMeasure::dirac(int(0)), &ratio(1, 2), &sq).unwrap();
        assert_eq!(k.c0, 1);
        assert_eq!(k.n0, BigUint::from(64u32));
        let u = RealMeasure::uniform(int(-1), int(1)).unwrap();
        let k = lattice_constants(&u, &ratio(1, 5), &sq).unwrap();
        assert_eq!((k.c0, k.n0), (2, BigUint::from(400u32)));
    }

    #[test]
    fn constants_reject_biased_target() {
        let m = RealMeasure::dirac(ratio(3, 10));
        assert!(matches!(
            lattice_constants(&m, &ratio(1, 10), &SequenceSpec::sqrt()),
            Err(Error::NonZeroMeanTarget(_))
        ));
    }

    #[test]
    fn quantize_two_point_lands_on_lattice() {
        let out = quantize(&two_point(), &ratio(1, 10), 1, &int(17), 256).unwrap();
        assert_eq!(out.eta.q, 2);
        assert_eq!(out.eta.d, 18);
        assert_eq!(out.eta.counts, BTreeMap::from([(-17, 1), (17, 1)]));
        assert_eq!(out.distance, 0.0);
    }

    #[test]
    fn quantize_dirac() {
        let out = quantize(&RealMeasure::dirac(int(0)), &ratio(1, 10), 3, &int(5), 16).unwrap();
        assert_eq!(out.eta.q, 1);
        assert_eq!(out.eta.counts, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn quantize_uniform() {
        let u = RealMeasure::uniform(int(-1), int(1)).unwrap();
        let out = quantize(&u, &ratio(1, 10), 2, &int(32), 256).unwrap();
        out.eta.check().unwrap();
        assert_eq!(out.eta.d, 65);
        assert!(out.eta.counts.keys().all(|i| i.abs() <= 63));
        let scaled = measures::scale(&out.eta.to_real(), &int(32)).unwrap();
        assert!(measures::levy_distance(&scaled, &u) <= 0.1);
    }

    #[test]
    fn quantize_reports_best_distance_when_infeasible() {
        let u = RealMeasure::uniform(int(-1), int(1)).unwrap();
        match quantize(&u, &ratio(1, 1000), 2, &int(32), 2) {
            Err(Error::QuantizationInfeasible { q_max, best }) => {
                assert_eq!(q_max, 2);
                assert!(best > 0.001);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_repair_zeroes_moment() {
        let mut c = BTreeMap::from([(-3, 1u64), (5, 2)]);
        repair_mean(&mut c, 6);
        let m: i128 = c.iter().map(|(&i, &k)| i as i128 * k as i128).sum();
        assert_eq!(m, 0);
        assert_eq!(c.values().sum::<u64>(), 3);
    }

    #[test]
    fn realize_examples() {
        let eta = LatticeMeasure::dirac_zero();
        let lab = realize_on_base(&eta, &[(0, int(1))]);
        assert_eq!(lab.pieces.len(), 1);
        assert_eq!(lab.pieces[0].value, 0);

        let eta = LatticeMeasure {
            d: 18,
            q: 2,
            counts: BTreeMap::from([(-17, 1), (17, 1)]),
        };
        let lab = realize_on_base(&eta, &[(0, int(1))]);
        let w: Vec<_> = lab.pieces.iter().map(|p| (p.value, p.width.clone())).collect();
        assert_eq!(w, vec![(-17, ratio(1, 2)), (17, ratio(1, 2))]);

        let eta = LatticeMeasure {
            d: 2,
            q: 4,
            counts: BTreeMap::from([(-1, 1), (0, 2), (1, 1)]),
        };
        let lab = realize_on_base(&eta, &[(0, ratio(1, 3)), (1, ratio(2, 3))]);
        let by = lab.width_by_value();
        assert_eq!(by[&-1], ratio(1, 4));
        assert_eq!(by[&0], ratio(1, 2));
        assert_eq!(by[&1], ratio(1, 4));
        // the value-0 mass straddles the cell boundary at 1/3
        assert!(lab.pieces.iter().any(|p| p.value == 0 && p.cell == 0));
        assert!(lab.pieces.iter().any(|p| p.value == 0 && p.cell == 1));
    }
}
