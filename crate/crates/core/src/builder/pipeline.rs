//! Drives a schedule through castle construction, stage placement,
//! refinements and assembly.

use num_traits::{One, Zero};
use serde::Serialize;

use super::schedule::ConstructionSchedule;
use super::stage::{Construction, RUN_MAX};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::tower_space::{build_initial_components, initial_widths, TowerSet};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Independent castle cascades of equal weight.
    pub components: usize,
    /// Requested junk bound of the first castle; derived when absent.
    pub initial_gamma: Option<Rational>,
    pub run_max: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            components: 1,
            initial_gamma: None,
            run_max: RUN_MAX,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CastleSummary {
    pub stage: usize,
    pub main_height: u64,
    pub columns: usize,
    pub cells: usize,
    #[serde(with = "crate::rational::serde_rational")]
    pub junk: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub gamma: Rational,
}

#[derive(Debug, Clone)]
pub struct ConstructionOutput {
    pub construction: Construction,
    pub set: TowerSet,
    pub initial_gamma: Rational,
    pub castles: Vec<CastleSummary>,
}

/// Largest dyadic junk width `y <= gamma` such that every refinement of
/// the height chain `heights` can keep the junk column as is.
pub fn feasible_initial_gamma(heights: &[u64], gamma: &Rational) -> Result<Rational> {
    let mut y = rational::dyadic_floor(gamma);
    let floor = rational::ratio(1, 1 << 62);
    'outer: while y > floor {
        let (mut x, y0) = initial_widths(heights[0], &y)?;
        for w in heights.windows(2) {
            if w[1] % w[0] != 0 {
                return Err(Error::RefinementInfeasible(format!("height {} does not divide {}", w[0], w[1])));
            }
            let m = w[1] / w[0];
            x = (x - rational::from_u64(m - 1) * &y0) / rational::from_u64(m);
            if x <= Rational::zero() {
                y /= rational::int(2);
                continue 'outer;
            }
        }
        return Ok(y0);
    }
    Err(Error::RefinementInfeasible("no junk width keeps the refinement chain feasible".into()))
}

/// Builds all `K` stages of the schedule on one castle cascade: castle `k`
/// has main height `n_{k+1}`, stage `k` is placed on it, and each
/// refinement is followed by correction passes of the earlier stages.
pub fn run_construction(schedule: &ConstructionSchedule, opts: &PipelineOptions) -> Result<ConstructionOutput> {
    let k_max = schedule.k;
    let mut heights = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        heights.push(schedule.stage(k + 1).n_u64()?);
    }
    let min_gamma = (1..=k_max)
        .map(|k| schedule.stage(k).gamma_k.clone())
        .min()
        .unwrap_or_else(Rational::one);
    let gamma0 = match &opts.initial_gamma {
        Some(g) => g.clone(),
        None => feasible_initial_gamma(&heights, &min_gamma)?,
    };
    let castle = build_initial_components(heights[0], &gamma0, opts.components)?;
    let mut c = Construction::new(castle).with_run_max(opts.run_max);
    let mut castles = Vec::new();
    for k in 1..=k_max {
        let plan = schedule.stage(k);
        if k > 1 {
            c.refine_to(heights[k - 1], &plan.gamma_k)?;
        }
        let eta = plan.eta.as_ref().ok_or_else(|| {
            Error::BudgetExceeded(format!("stage {k}: lattice law not materialized (d = {})", plan.d_k))
        })?;
        c.add_stage(k, eta, plan.n_u64()?, plan.d_u64()?)?;
        let castle = c.castle();
        castles.push(CastleSummary {
            stage: k,
            main_height: castle.main_height(),
            columns: castle.columns().len(),
            cells: castle.num_cells(),
            junk: castle.junk_measure(),
            gamma: if k == 1 { gamma0.clone() } else { plan.gamma_k.clone() },
        });
    }
    let set = c.assemble()?;
    Ok(ConstructionOutput {
        construction: c,
        set,
        initial_gamma: gamma0,
        castles,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::builder::{plan_schedule, Mode, ScheduleInput};
    use crate::measures::RealMeasure;
    use crate::rational::{int, ratio};
    use crate::sequence::SequenceSpec;

    fn two_point() -> RealMeasure {
        RealMeasure::atomic([(int(-1), ratio(1, 2)), (int(1), ratio(1, 2))]).unwrap()
    }

    fn schedule(targets: Vec<RealMeasure>, alphas: &[(usize, Rational)]) -> ConstructionSchedule {
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

    #[test]
    fn junk_width_shrinks_until_chain_is_feasible() {
        let y = feasible_initial_gamma(&[16, 64], &ratio(1, 64)).unwrap();
        assert_eq!(y, ratio(1, 128));
        assert_eq!(feasible_initial_gamma(&[16], &ratio(1, 64)).unwrap(), ratio(1, 64));
    }

    #[test]
    fn single_stage_run() {
        let s = schedule(vec![two_point()], &[(1, ratio(1, 4)), (2, ratio(1, 8))]);
        let out = run_construction(&s, &PipelineOptions::default()).unwrap();
        let st = &out.construction.stages()[0];
        let castle = out.construction.castle();
        let p = castle.main_height() / st.n;
        let expect = rational::from_u64(p * st.d) * castle.base_measure();
        assert_eq!(out.set.measure(castle), expect);
        assert!(out.set.measure(castle) <= s.stage(1).alpha_k);
    }

    #[test]
    fn two_component_run_is_balanced() {
        let s = schedule(vec![two_point()], &[(1, ratio(1, 4)), (2, ratio(1, 8))]);
        let opts = PipelineOptions {
            components: 2,
            ..Default::default()
        };
        let out = run_construction(&s, &opts).unwrap();
        let castle = out.construction.castle();
        let total = out.set.measure(castle);
        for comp in 0..2 {
            assert_eq!(out.set.measure_in_component(castle, comp) * int(2), total);
        }
    }
}
