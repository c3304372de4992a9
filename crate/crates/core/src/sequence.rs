//! Normalizing sequences `a_n` with `a_n -> inf` and `a_n / n -> 0`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSpec {
    /// `a_n = n^theta`, evaluated in double precision. The float is then used
    /// as an exact dyadic rational everywhere downstream.
    Power {
        #[serde(with = "crate::rational::serde_rational")]
        theta: Rational,
    },
    /// Explicit values; indices outside the table are errors.
    Table(BTreeMap<u64, String>),
}

impl SequenceSpec {
    pub fn sqrt() -> Self {
        SequenceSpec::Power { theta: rational::ratio(1, 2) }
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        match self {
            SequenceSpec::Power { theta } => {
                if theta <= &Rational::zero() || theta >= &Rational::one() {
                    return Err(Error::InvalidSequence("power exponent must lie in (0, 1)".into()));
                }
            }
            SequenceSpec::Table(t) => {
                let mut prev: Option<(u64, Rational)> = None;
                for (&n, v) in t {
                    let v = rational::parse(v)?;
                    if n == 0 || v <= Rational::zero() {
                        return Err(Error::InvalidSequence(format!("a_{n} must be positive with n >= 1")));
                    }
                    if let Some((pn, pv)) = &prev {
                        if &v <= pv {
                            return Err(Error::InvalidSequence(format!("a_n not increasing at n = {n}")));
                        }
                        if v.clone() / rational::from_u64(n) > pv.clone() / rational::from_u64(*pn) {
                            warnings.push(format!("a_n / n increases at n = {n}"));
                        }
                    }
                    prev = Some((n, v));
                }
            }
        }
        Ok(warnings)
    }

    pub fn a_f64(&self, n: &BigUint) -> Result<f64> {
        match self {
            SequenceSpec::Power { theta } => {
                let x = n.to_f64().ok_or_else(|| Error::InvalidSequence("index too large".into()))?;
                if *theta == rational::ratio(1, 2) {
                    Ok(x.sqrt())
                } else {
                    Ok(x.powf(rational::to_f64(theta)))
                }
            }
            SequenceSpec::Table(_) => Ok(rational::to_f64(&self.a(n)?)),
        }
    }

    /// `a_n` as an exact rational.
    pub fn a(&self, n: &BigUint) -> Result<Rational> {
        match self {
            SequenceSpec::Power { .. } => rational::from_f64(self.a_f64(n)?),
            SequenceSpec::Table(t) => {
                let key = n
                    .to_u64()
                    .ok_or_else(|| Error::InvalidSequence(format!("index {n} outside table")))?;
                let v = t
                    .get(&key)
                    .ok_or_else(|| Error::InvalidSequence(format!("index {n} outside table")))?;
                rational::parse(v)
            }
        }
    }

    pub fn a_u64(&self, n: u64) -> Result<Rational> {
        self.a(&BigUint::from(n))
    }

    /// Largest index available, if bounded.
    pub fn max_index(&self) -> Option<u64> {
        match self {
            SequenceSpec::Power { .. } => None,
            SequenceSpec::Table(t) => t.keys().next_back().copied(),
        }
    }
}

/// Smallest `n = t * step` with `t >= 1`, `n >= floor`, satisfying a predicate
/// that is monotone (false then true) along multiples of `step`.
///
/// Exponential search followed by bisection. `limit` caps the search; `None`
/// is returned when no admissible multiple exists below it.
pub fn smallest_multiple(
    step: &BigUint,
    floor: &BigUint,
    limit: &BigUint,
    mut pred: impl FnMut(&BigUint) -> Result<bool>,
) -> Result<Option<BigUint>> {
    debug_assert!(!step.is_zero());
    let mut t_lo = (floor + step - BigUint::one()) / step;
    if t_lo.is_zero() {
        t_lo = BigUint::one();
    }
    let max_t = limit / step;
    if t_lo > max_t {
        return Ok(None);
    }
    if pred(&(&t_lo * step))? {
        return Ok(Some(&t_lo * step));
    }
    // invariant: pred(t_lo * step) is false
    let mut stride = BigUint::one();
    let t_hi = loop {
        let cand = &t_lo + &stride;
        if cand > max_t {
            if pred(&(&max_t * step))? {
                break max_t.clone();
            }
            return Ok(None);
        }
        if pred(&(&cand * step))? {
            break cand;
        }
        t_lo = cand;
        stride <<= 1;
    };
    let (mut lo, mut hi) = (t_lo, t_hi);
    while &hi - &lo > BigUint::one() {
        let mid: BigUint = (&lo + &hi) >> 1;
        if pred(&(&mid * step))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi * step))
}
