//! Experiment configuration: raw JSON shape, defaults and validation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::builder::{Mode, RUN_MAX};
use crate::error::{Error, Result};
use crate::measures::{Atom, RealMeasure, Segment};
use crate::quantizer::check_zero_mean;
use crate::rational::{self, Rational};
use crate::sequence::SequenceSpec;

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_OUTPUT_DIR: &str = "indlim-out";

/// A rational given either as a string ("1/3", "0.25") or a JSON number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RationalLit {
    Text(String),
    Number(serde_json::Number),
}

impl RationalLit {
    fn value(&self, field: &str) -> Result<Rational> {
        let s = match self {
            RationalLit::Text(s) => s.clone(),
            RationalLit::Number(n) => n.to_string(),
        };
        if s.contains(['e', 'E']) {
            return Err(Error::Config(format!("{field}: exponent notation is not accepted ({s})")));
        }
        rational::parse(&s).map_err(|_| Error::Config(format!("{field}: cannot parse {s:?} as a rational")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomLit {
    pub at: RationalLit,
    pub mass: RationalLit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformLit {
    pub lo: RationalLit,
    pub hi: RationalLit,
    pub mass: RationalLit,
}

/// One entry of a measure literal.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceLit {
    Atom(AtomLit),
    Uniform(UniformLit),
}

pub fn measure_from_literal(pieces: &[PieceLit], field: &str) -> Result<RealMeasure> {
    let mut atoms = Vec::new();
    let mut segments = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        let f = format!("{field}[{i}]");
        match p {
            PieceLit::Atom(a) => atoms.push(Atom {
                at: a.at.value(&format!("{f}.at"))?,
                mass: a.mass.value(&format!("{f}.mass"))?,
            }),
            PieceLit::Uniform(u) => segments.push(Segment {
                lo: u.lo.value(&format!("{f}.lo"))?,
                hi: u.hi.value(&format!("{f}.hi"))?,
                mass: u.mass.value(&format!("{f}.mass"))?,
            }),
        }
    }
    RealMeasure::new(atoms, segments).map_err(|e| Error::Config(format!("{field}: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Single,
    NonergodicPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryFamily {
    /// `1/2 delta_{-c} + 1/2 delta_c` for `c = 1, 2, ...`.
    TwoPoint,
    /// Uniform on `(-c, c]` for `c = 1, 2, ...`.
    Uniform,
    /// The configured targets, in order.
    Targets,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBattery {
    family: BatteryFamily,
    cycles: usize,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBudgets {
    n_max: Option<u64>,
    cell_max: Option<usize>,
    run_max: Option<usize>,
    wrap_max: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMonteCarlo {
    samples: Option<u64>,
    seeds: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sequence: Option<SequenceSpec>,
    targets: Vec<Vec<PieceLit>>,
    eps: RationalLit,
    #[serde(rename = "K")]
    k: Option<usize>,
    mode: Option<Mode>,
    #[serde(default)]
    alpha_overrides: BTreeMap<String, RationalLit>,
    #[serde(default)]
    budgets: RawBudgets,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    preset: Option<Preset>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    q_max: Option<u64>,
    initial_gamma: Option<RationalLit>,
    battery: Option<RawBattery>,
    #[serde(default)]
    dump_castles: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Budgets {
    pub n_max: u64,
    pub cell_max: usize,
    pub run_max: usize,
    pub wrap_max: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            n_max: 1 << 40,
            cell_max: 1 << 20,
            run_max: RUN_MAX,
            wrap_max: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarlo {
    pub samples: u64,
    /// Independent seeds `seed, seed + 1, ...`; zero disables sampling.
    pub seeds: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Battery {
    pub family: BatteryFamily,
    pub cycles: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub sequence: SequenceSpec,
    pub targets: Vec<RealMeasure>,
    #[serde(with = "crate::rational::serde_rational")]
    pub eps: Rational,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: Mode,
    #[serde(serialize_with = "ser_alpha")]
    pub alpha_overrides: BTreeMap<usize, Rational>,
    pub budgets: Budgets,
    pub monte_carlo: MonteCarlo,
    pub preset: Preset,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
    pub q_max: u64,
    #[serde(serialize_with = "ser_opt_rational")]
    pub initial_gamma: Option<Rational>,
    pub battery: Option<Battery>,
    pub dump_castles: bool,
}

fn ser_alpha<S: serde::Serializer>(m: &BTreeMap<usize, Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k.to_string(), rational::fmt(v))))
}

fn ser_opt_rational<S: serde::Serializer>(v: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_some(&rational::fmt(r)),
        None => s.serialize_none(),
    }
}

fn positive<T: PartialOrd + Default + Copy>(v: Option<T>, default: T, field: &str) -> Result<T> {
    let v = v.unwrap_or(default);
    if v <= T::default() {
        return Err(Error::Config(format!("{field} must be positive")));
    }
    Ok(v)
}

/// Parses and validates a configuration, filling defaults.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let r: RawConfig = serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
    let eps = r.eps.value("eps")?;
    if eps <= Rational::zero() || eps >= Rational::one() {
        return Err(Error::Config(format!("eps out of range (0, 1): {}", rational::fmt(&eps))));
    }
    let sequence = r.sequence.unwrap_or_else(SequenceSpec::sqrt);
    sequence.validate().map_err(|e| Error::Config(format!("sequence: {e}")))?;
    let mut targets = Vec::with_capacity(r.targets.len());
    for (i, t) in r.targets.iter().enumerate() {
        let m = measure_from_literal(t, &format!("targets[{i}]"))?;
        check_zero_mean(&m)?;
        targets.push(m);
    }
    let k = r.k.unwrap_or(targets.len());
    if k != targets.len() {
        return Err(Error::Config(format!("K = {k} but {} targets are given", targets.len())));
    }
    let mut alpha_overrides = BTreeMap::new();
    for (key, v) in &r.alpha_overrides {
        let field = format!("alpha_overrides.{key}");
        let idx: usize = key
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| Error::Config(format!("{field}: keys are stage indices >= 1")))?;
        let a = v.value(&field)?;
        if a <= Rational::zero() || a >= Rational::one() {
            return Err(Error::Config(format!("{field} out of range (0, 1)")));
        }
        alpha_overrides.insert(idx, a);
    }
    let d = Budgets::default();
    let budgets = Budgets {
        n_max: positive(r.budgets.n_max, d.n_max, "budgets.n_max")?,
        cell_max: positive(r.budgets.cell_max, d.cell_max, "budgets.cell_max")?,
        run_max: positive(r.budgets.run_max, d.run_max, "budgets.run_max")?,
        wrap_max: positive(r.budgets.wrap_max, d.wrap_max, "budgets.wrap_max")?,
    };
    let monte_carlo = MonteCarlo {
        samples: positive(r.monte_carlo.samples, DEFAULT_SAMPLES, "monte_carlo.samples")?,
        seeds: r.monte_carlo.seeds.unwrap_or(1),
    };
    let initial_gamma = match &r.initial_gamma {
        Some(g) => {
            let g = g.value("initial_gamma")?;
            if g <= Rational::zero() || g >= Rational::one() {
                return Err(Error::Config("initial_gamma out of range (0, 1)".into()));
            }
            Some(g)
        }
        None => None,
    };
    let battery = match r.battery {
        Some(b) => {
            if b.cycles == 0 {
                return Err(Error::Config("battery.cycles must be positive".into()));
            }
            if b.family == BatteryFamily::Targets && targets.is_empty() {
                return Err(Error::Config("battery.family = targets needs at least one target".into()));
            }
            Some(Battery {
                family: b.family,
                cycles: b.cycles,
            })
        }
        None => None,
    };
    Ok(ExperimentConfig {
        sequence,
        targets,
        eps,
        k,
        mode: r.mode.unwrap_or_default(),
        alpha_overrides,
        budgets,
        monte_carlo,
        preset: r.preset.unwrap_or_default(),
        output_dir: r.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        seed: r.seed.unwrap_or(0),
        q_max: positive(r.q_max, 4096, "q_max")?,
        initial_gamma,
        battery,
        dump_castles: r.dump_castles,
    })
}
