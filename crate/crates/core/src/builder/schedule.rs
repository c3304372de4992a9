//! Stage constants: accuracies, set budgets, tower heights and lattice data.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::RealMeasure;
use crate::quantizer::{self, LatticeMeasure};
use crate::rational::{self, Rational};
use crate::sequence::{smallest_multiple, SequenceSpec};

/// Largest half-width for which the lattice approximation is materialized.
pub const MATERIALIZE_D_MAX: u64 = 1 << 20;
/// Search cap for tower heights.
const N_SEARCH_BITS: u64 = 1024;
/// Below this many candidate multiples the smallest admissible one is found
/// by a linear scan, since `d/n <= alpha` is not exactly monotone in `n`.
const LINEAR_SCAN: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    #[default]
    Relaxed,
}

#[derive(Debug, Clone)]
pub struct ScheduleInput {
    pub targets: Vec<RealMeasure>,
    pub eps: Rational,
    pub seq: SequenceSpec,
    pub mode: Mode,
    /// 1-based stage index to alpha (relaxed mode only).
    pub alpha_overrides: BTreeMap<usize, Rational>,
    pub q_max: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StagePlan {
    pub k: usize,
    #[serde(with = "crate::rational::serde_rational")]
    pub eps_k: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub alpha_k: Rational,
    pub alpha_source: String,
    #[serde(with = "crate::rational::serde_rational")]
    pub beta_k: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub gamma_k: Rational,
    pub c_k: u64,
    #[serde(serialize_with = "ser_big")]
    pub n_k: BigUint,
    #[serde(with = "crate::rational::serde_rational")]
    pub a_n: Rational,
    #[serde(serialize_with = "ser_big")]
    pub d_k: BigUint,
    pub q_k: u64,
    /// "quantizer" when `eta` was built and checked, "a_priori" otherwise.
    pub q_source: String,
    #[serde(serialize_with = "ser_big")]
    pub p_k: BigUint,
    pub binding: Vec<String>,
    pub quantization_distance: Option<f64>,
    #[serde(skip)]
    pub eta: Option<LatticeMeasure>,
    #[serde(skip)]
    pub target: RealMeasure,
}

fn ser_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl StagePlan {
    pub fn n_u64(&self) -> Result<u64> {
        self.n_k
            .to_u64()
            .ok_or_else(|| Error::BudgetExceeded(format!("n_{} = {} does not fit in 64 bits", self.k, self.n_k)))
    }

    pub fn d_u64(&self) -> Result<u64> {
        self.d_k
            .to_u64()
            .ok_or_else(|| Error::BudgetExceeded(format!("d_{} = {} does not fit in 64 bits", self.k, self.d_k)))
    }

    pub fn p_u64(&self) -> Result<u64> {
        self.p_k
            .to_u64()
            .ok_or_else(|| Error::BudgetExceeded(format!("p_{} = {} does not fit in 64 bits", self.k, self.p_k)))
    }
}

/// Stages `1..=K` plus the closing entry `K + 1` against the point mass at 0.
#[derive(Debug, Clone, Serialize)]
pub struct ConstructionSchedule {
    #[serde(with = "crate::rational::serde_rational")]
    pub eps: Rational,
    pub k: usize,
    pub mode: Mode,
    pub stages: Vec<StagePlan>,
    /// Constraints not enforced in relaxed mode.
    pub substitutions: Vec<String>,
    pub warnings: Vec<String>,
}

impl ConstructionSchedule {
    /// 1-based access.
    pub fn stage(&self, k: usize) -> &StagePlan {
        &self.stages[k - 1]
    }

    /// Residual certified for the truncated correction passes.
    pub fn residual(&self) -> Rational {
        self.stages.last().map(|s| s.alpha_k.clone()).unwrap_or_else(Rational::zero)
    }
}

/// `d = floor(a_n C) + 1` as an exact integer.
pub fn lattice_half_width(a_n: &Rational, c: u64) -> BigUint {
    let v = (a_n * rational::from_u64(c)).floor().to_integer();
    v.to_biguint().unwrap_or_default() + BigUint::one()
}

/// The constraints a tower height `n` must meet at one stage.
struct Constraints<'a> {
    seq: &'a SequenceSpec,
    c: u64,
    alpha: &'a Rational,
    /// `(m, b)` when the previous-block bound `m / a_n <= b` applies.
    eq2: Option<(BigUint, Rational)>,
}

impl Constraints<'_> {
    fn eq1(&self, n: &BigUint) -> Result<bool> {
        let a = self.seq.a(n)?;
        let d = rational::from_biguint(&lattice_half_width(&a, self.c));
        Ok(d / rational::from_biguint(n) <= *self.alpha)
    }

    fn eq2(&self, n: &BigUint) -> Result<bool> {
        match &self.eq2 {
            None => Ok(true),
            Some((m, b)) => Ok(rational::from_biguint(m) / self.seq.a(n)? <= *b),
        }
    }

    fn ok(&self, n: &BigUint) -> Result<bool> {
        Ok(self.eq1(n)? && self.eq2(n)?)
    }
}

/// Smallest multiple of `step`, at least `floor`, meeting the constraints.
fn smallest_admissible(cons: &Constraints, step: &BigUint, floor: &BigUint) -> Result<BigUint> {
    let limit = BigUint::one() << N_SEARCH_BITS;
    let found = smallest_multiple(step, floor, &limit, |n| cons.ok(n))?
        .ok_or_else(|| Error::BudgetExceeded(format!("no admissible height below 2^{N_SEARCH_BITS}")))?;
    let first = floor.max(step).div_ceil(step) * step;
    let span = (&found - &first) / step;
    if span < BigUint::from(LINEAR_SCAN) {
        let mut n = first;
        while n < found {
            if cons.ok(&n)? {
                return Ok(n);
            }
            n += step;
        }
    }
    Ok(found)
}

/// Smallest `n >= floor`, multiple of `step`, with `(floor(a_n C) + 1)/n <= alpha`.
pub fn smallest_height(seq: &SequenceSpec, c: u64, alpha: &Rational, step: u64, floor: u64) -> Result<BigUint> {
    let cons = Constraints {
        seq,
        c,
        alpha,
        eq2: None,
    };
    smallest_admissible(&cons, &BigUint::from(step), &BigUint::from(floor))
}

fn binding_constraints(cons: &Constraints, n: &BigUint, step: &BigUint, n0: &BigUint, n_prev: &BigUint) -> Result<Vec<String>> {
    let mut out = Vec::new();
    if n <= step {
        out.push("multiple".to_string());
        return Ok(out);
    }
    let prev = n - step;
    if &prev < n0 {
        out.push("n0".to_string());
    }
    if &prev <= n_prev {
        out.push("increasing".to_string());
    }
    if !cons.eq1(&prev)? {
        out.push("density d/n <= alpha".to_string());
    }
    if !cons.eq2(&prev)? {
        out.push("previous block bound".to_string());
    }
    if out.is_empty() {
        out.push("monotone search".to_string());
    }
    Ok(out)
}

fn a_priori_q(alpha: &Rational) -> u64 {
    // cumulative rounding error 1/(2q) within alpha/4
    let need = rational::int(2) / alpha;
    let mut q = 1u64;
    while rational::from_u64(q) < need {
        q *= 2;
    }
    q
}

fn is_dirac_zero(m: &RealMeasure) -> bool {
    m.segments().is_empty() && m.atoms().len() == 1 && m.atoms()[0].at.is_zero()
}

/// Computes all stage constants; `n_k` is the smallest admissible multiple.
pub fn plan_schedule(input: &ScheduleInput) -> Result<ConstructionSchedule> {
    if input.eps <= Rational::zero() || input.eps >= Rational::one() {
        return Err(Error::Config("eps out of range".into()));
    }
    if input.mode == Mode::Strict && !input.alpha_overrides.is_empty() {
        return Err(Error::Config("alpha overrides require relaxed mode".into()));
    }
    let warnings = input.seq.validate()?;
    let big_k = input.targets.len();
    let mut substitutions = Vec::new();
    if input.mode == Mode::Relaxed && big_k > 0 {
        substitutions.push(
            "previous-block bound q_{k-1} n_{k-1} / a_{n_k} <= alpha_k replaced by q_{k-1} d_{k-1} / a_{n_k} <= alpha_k \
             for k <= K and dropped for the closing entry"
                .to_string(),
        );
    }
    let mut targets = input.targets.clone();
    if big_k > 0 {
        targets.push(RealMeasure::dirac(Rational::zero()));
    }
    let mut stages: Vec<StagePlan> = Vec::new();
    for (idx, target) in targets.iter().enumerate() {
        let k = idx + 1;
        quantizer::check_zero_mean(target)?;
        let eps_k = &input.eps / rational::from_biguint(&(BigUint::one() << (k + 1)));
        let prev = stages.last();
        let (alpha, alpha_source) = match (input.alpha_overrides.get(&k), prev) {
            (Some(a), _) => {
                substitutions.push(format!("alpha_{k} = {} supplied", rational::fmt(a)));
                (a.clone(), "override".to_string())
            }
            (None, None) => (&eps_k / rational::int(8), "eps_1/8".to_string()),
            (None, Some(p)) => (
                &p.a_n / (rational::int(2) * rational::from_biguint(&p.n_k)) * &eps_k,
                "a_{n_{k-1}} eps_k / (2 n_{k-1})".to_string(),
            ),
        };
        if alpha <= Rational::zero() {
            return Err(Error::Config(format!("alpha_{k} must be positive")));
        }
        let consts = quantizer::lattice_constants(target, &alpha, &input.seq)?;
        let c_k = consts.c0.max(prev.map(|p| p.c_k).unwrap_or(1));
        let (step, n_prev) = match prev {
            Some(p) => (BigUint::from(p.q_k) * &p.n_k, p.n_k.clone()),
            None => (BigUint::one(), BigUint::zero()),
        };
        let floor = consts.n0.clone().max(&n_prev + BigUint::one());
        let eq2 = match (input.mode, prev) {
            (_, None) => None,
            (Mode::Strict, Some(_)) => Some((step.clone(), alpha.clone())),
            (Mode::Relaxed, Some(p)) if k <= big_k => {
                Some((BigUint::from(p.q_k) * &p.d_k, alpha.clone()))
            }
            (Mode::Relaxed, Some(_)) => None,
        };
        let cons = Constraints {
            seq: &input.seq,
            c: c_k,
            alpha: &alpha,
            eq2,
        };
        let n_k = smallest_admissible(&cons, &step, &floor)?;
        let binding = binding_constraints(&cons, &n_k, &step, &consts.n0, &n_prev)?;
        let a_n = input.seq.a(&n_k)?;
        let d_k = lattice_half_width(&a_n, c_k);
        let (eta, q_k, q_source, dist) = if is_dirac_zero(target) {
            let d = d_k.to_u64().unwrap_or(u64::MAX);
            let eta = LatticeMeasure {
                d,
                q: 1,
                counts: BTreeMap::from([(0, 1)]),
            };
            (Some(eta), 1, "quantizer".to_string(), Some(0.0))
        } else if d_k <= BigUint::from(MATERIALIZE_D_MAX) {
            let out = quantizer::quantize(target, &alpha, c_k, &a_n, input.q_max)?;
            let q = out.eta.q;
            (Some(out.eta), q, "quantizer".to_string(), Some(out.distance))
        } else {
            (None, a_priori_q(&alpha), "a_priori".to_string(), None)
        };
        stages.push(StagePlan {
            k,
            eps_k,
            alpha_k: alpha,
            alpha_source,
            beta_k: Rational::zero(),
            gamma_k: Rational::zero(),
            c_k,
            n_k,
            a_n,
            d_k,
            q_k,
            q_source,
            p_k: BigUint::one(),
            binding,
            quantization_distance: dist,
            eta,
            target: target.clone(),
        });
    }
    let len = stages.len();
    for i in 0..len {
        if i + 1 < len {
            stages[i].p_k = &stages[i + 1].n_k / &stages[i].n_k;
            stages[i].beta_k = &stages[i].alpha_k - &stages[i + 1].alpha_k;
        } else {
            stages[i].p_k = BigUint::one();
            stages[i].beta_k = stages[i].alpha_k.clone();
        }
    }
    for i in 0..len {
        stages[i].gamma_k = if i + 1 < len {
            let nx = &stages[i + 1];
            let t1 = &nx.beta_k / (rational::int(2) * rational::from_biguint(&nx.p_k));
            let t2 = &nx.a_n / rational::from_biguint(&nx.n_k) * &nx.alpha_k;
            [t1, t2, stages[i].alpha_k.clone()].into_iter().min().expect("nonempty")
        } else {
            stages[i].alpha_k.clone()
        };
        if stages[i].gamma_k <= Rational::zero() {
            return Err(Error::Config(format!(
                "gamma_{} is not positive; alpha values must decrease",
                i + 1
            )));
        }
    }
    Ok(ConstructionSchedule {
        eps: input.eps.clone(),
        k: big_k,
        mode: input.mode,
        stages,
        substitutions,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// Re-checks every schedule relation arithmetically. Relations that relaxed
/// mode does not enforce are reported but marked as not applicable.
pub fn check_schedule(s: &ConstructionSchedule, seq: &SequenceSpec) -> Result<Vec<InvariantCheck>> {
    let mut out = Vec::new();
    let mut push = |name: String, holds: bool, detail: String| out.push(InvariantCheck { name, holds, detail });
    let strict = s.mode == Mode::Strict;
    let eps_sum = s.stages.iter().fold(Rational::zero(), |a, p| a + &p.eps_k);
    push("eps_sum_below_eps".into(), eps_sum < s.eps, rational::fmt(&eps_sum));
    for (i, p) in s.stages.iter().enumerate() {
        let k = p.k;
        if i > 0 {
            let q = &s.stages[i - 1];
            push(format!("eps_{k}_decreasing"), p.eps_k < q.eps_k, String::new());
            push(format!("n_{k}_increasing"), p.n_k > q.n_k, format!("{} > {}", p.n_k, q.n_k));
            let step = BigUint::from(q.q_k) * &q.n_k;
            push(
                format!("n_{k}_multiple_of_q_n_prev"),
                (&p.n_k % &step).is_zero(),
                format!("{} mod {}", p.n_k, step),
            );
            push(format!("c_{k}_monotone"), p.c_k >= q.c_k, format!("{} >= {}", p.c_k, q.c_k));
            let p_prev = &p.n_k / &q.n_k;
            push(format!("p_{}_ratio", k - 1), p_prev == q.p_k, q.p_k.to_string());
            push(
                format!("p_{}_multiple_of_q", k - 1),
                (&q.p_k % BigUint::from(q.q_k)).is_zero(),
                String::new(),
            );
            let bound = rational::from_biguint(&step) / &p.a_n;
            let holds = bound <= p.alpha_k;
            push(
                format!("eq2_{k}"),
                holds || !strict,
                format!("{} <= {}{}", rational::to_f64(&bound), rational::to_f64(&p.alpha_k), if strict { "" } else { " (relaxed)" }),
            );
            if !strict && i < s.k {
                let relaxed = rational::from_biguint(&(BigUint::from(q.q_k) * &q.d_k)) / &p.a_n;
                push(
                    format!("eq2_relaxed_{k}"),
                    relaxed <= p.alpha_k,
                    format!("{} <= {}", rational::to_f64(&relaxed), rational::to_f64(&p.alpha_k)),
                );
            }
            if strict {
                let want = &q.a_n / (rational::int(2) * rational::from_biguint(&q.n_k)) * &p.eps_k;
                push(format!("alpha_{k}_formula"), want == p.alpha_k, String::new());
            }
        } else if strict {
            push("alpha_1_formula".into(), p.alpha_k == &p.eps_k / rational::int(8), String::new());
        }
        let a = seq.a(&p.n_k)?;
        push(format!("a_{k}_consistent"), a == p.a_n, String::new());
        push(format!("d_{k}_formula"), lattice_half_width(&a, p.c_k) == p.d_k, p.d_k.to_string());
        let dens = rational::from_biguint(&p.d_k) / rational::from_biguint(&p.n_k);
        push(
            format!("eq1_{k}"),
            dens <= p.alpha_k,
            format!("{} <= {}", rational::to_f64(&dens), rational::to_f64(&p.alpha_k)),
        );
        let tail = s.stages[i..].iter().fold(Rational::zero(), |a, x| a + &x.beta_k);
        push(format!("beta_tail_{k}"), tail <= p.alpha_k, rational::fmt(&tail));
        if i + 1 < s.stages.len() {
            let nx = &s.stages[i + 1];
            let t1 = &nx.beta_k / (rational::int(2) * rational::from_biguint(&nx.p_k));
            let t2 = &nx.a_n / rational::from_biguint(&nx.n_k) * &nx.alpha_k;
            let g = [t1, t2, p.alpha_k.clone()].into_iter().min().expect("nonempty");
            push(format!("gamma_{k}_formula"), g == p.gamma_k, String::new());
            push(format!("beta_{k}_difference"), p.beta_k == &p.alpha_k - &nx.alpha_k, String::new());
        }
    }
    Ok(out)
}
