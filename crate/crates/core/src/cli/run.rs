//! Orchestration: schedule, construction, checks and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{BatteryFamily, ExperimentConfig, Preset};
use crate::builder::{
    check_schedule, plan_schedule, run_construction, ConstructionOutput, ConstructionSchedule, InvariantCheck,
    PipelineOptions, ScheduleInput,
};
use crate::error::{Error, Result};
use crate::measures::{kolmogorov_distance, levy_distance, RealMeasure};
use crate::rational::{self, int, ratio};
use crate::verifier::{
    cdf_csv, check_components, check_stage_lemmas, check_theorem, compute_laws, dkw_band, empirical_sum_law,
    unbalanced_demo, Check, CheckReport, LawTable,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_FAILED: i32 = 4;

/// Confidence level of the Monte Carlo band.
pub const MC_DELTA: f64 = 0.01;

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::NonZeroMeanTarget(_) | Error::InvalidMeasure(_) | Error::InvalidSequence(_) => {
            EXIT_CONFIG
        }
        Error::BudgetExceeded(_) | Error::UnboundedTarget(_) | Error::QuantizationInfeasible { .. } => EXIT_BUDGET,
        _ => EXIT_INTERNAL,
    }
}

fn schedule_input(cfg: &ExperimentConfig, targets: Vec<RealMeasure>) -> ScheduleInput {
    let k = targets.len();
    ScheduleInput {
        targets,
        eps: cfg.eps.clone(),
        seq: cfg.sequence.clone(),
        mode: cfg.mode,
        alpha_overrides: cfg
            .alpha_overrides
            .iter()
            .filter(|(&i, _)| i <= k + 1)
            .map(|(&i, a)| (i, a.clone()))
            .collect(),
        q_max: cfg.q_max,
    }
}

/// Stages whose window exceeds `n_max`, as `(k, n_k)`.
fn over_budget(s: &ConstructionSchedule, n_max: u64) -> Vec<(usize, BigUint)> {
    s.stages
        .iter()
        .filter(|p| p.n_k > BigUint::from(n_max))
        .map(|p| (p.k, p.n_k.clone()))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DryRun {
    pub schedule: ConstructionSchedule,
    pub invariants: Vec<InvariantCheck>,
    pub over_budget: Vec<String>,
}

/// Plans the schedule without building anything. The exit code is 3 when
/// a window exceeds `n_max`; the schedule is returned either way.
pub fn dry_run(cfg: &ExperimentConfig) -> Result<(DryRun, i32)> {
    let schedule = plan_schedule(&schedule_input(cfg, cfg.targets.clone()))?;
    let invariants = check_schedule(&schedule, &cfg.sequence)?;
    let over = over_budget(&schedule, cfg.budgets.n_max);
    let code = if over.is_empty() { EXIT_OK } else { EXIT_BUDGET };
    let over_budget = over
        .iter()
        .map(|(k, n)| format!("n_{k} = {n} exceeds n_max = {}", cfg.budgets.n_max))
        .collect();
    Ok((
        DryRun {
            schedule,
            invariants,
            over_budget,
        },
        code,
    ))
}

pub fn write_dry_run(dir: &Path, d: &DryRun) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("schedule.json");
    fs::write(&path, to_pretty(d)?)?;
    Ok(path)
}

fn to_pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

/// Report under construction; flushed to disk on success and on failure.
struct Report {
    dir: PathBuf,
    body: Map<String, Value>,
}

impl Report {
    fn set(&mut self, key: &str, v: Value) {
        self.body.insert(key.to_string(), v);
    }

    fn flush(&mut self, partial: bool, code: i32) -> Result<PathBuf> {
        self.set("partial", Value::Bool(partial));
        self.set("exit_code", json!(code));
        let path = self.dir.join("report.json");
        fs::write(&path, to_pretty(&self.body)?)?;
        Ok(path)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: PathBuf,
    pub failures: Vec<String>,
    pub error: Option<String>,
}

/// Runs the whole experiment and writes `report.json`, `cdf_{k}.csv` and,
/// on request, `castles.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut rep = Report {
        dir: cfg.output_dir.clone(),
        body: Map::new(),
    };
    rep.set("tool", json!({"name": "indlim", "version": env!("CARGO_PKG_VERSION")}));
    rep.set("config", to_value(cfg)?);
    let mut failures = Vec::new();
    match execute(cfg, &mut rep, &mut failures) {
        Ok(()) => {
            let code = if failures.is_empty() { EXIT_OK } else { EXIT_FAILED };
            rep.set("status", json!(if code == EXIT_OK { "pass" } else { "fail" }));
            rep.set("failures", json!(failures));
            let report = rep.flush(false, code)?;
            Ok(RunOutcome {
                exit_code: code,
                report,
                failures,
                error: None,
            })
        }
        Err(e) => {
            let code = exit_code_for(&e);
            rep.set("status", json!("error"));
            rep.set("error", json!(e.to_string()));
            rep.set("failures", json!(failures));
            let report = rep.flush(true, code)?;
            Ok(RunOutcome {
                exit_code: code,
                report,
                failures,
                error: Some(e.to_string()),
            })
        }
    }
}

fn execute(cfg: &ExperimentConfig, rep: &mut Report, failures: &mut Vec<String>) -> Result<()> {
    let schedule = plan_schedule(&schedule_input(cfg, cfg.targets.clone()))?;
    let invariants = check_schedule(&schedule, &cfg.sequence)?;
    rep.set("schedule", to_value(&schedule)?);
    rep.set("schedule_invariants", to_value(&invariants)?);
    rep.set("residual", json!(rational::fmt(&schedule.residual())));
    failures.extend(invariants.iter().filter(|c| !c.holds).map(|c| format!("schedule.{}", c.name)));
    if let Some((k, n)) = over_budget(&schedule, cfg.budgets.n_max).into_iter().next() {
        return Err(Error::BudgetExceeded(format!("n_{k} = {n} exceeds n_max = {}", cfg.budgets.n_max)));
    }
    let mut reports = Vec::new();
    if cfg.k > 0 {
        let (out, laws) = build(cfg, &schedule)?;
        rep.set("construction", construction_json(&out, &schedule)?);
        if cfg.dump_castles {
            fs::write(cfg.output_dir.join("castles.json"), to_pretty(&out.construction.castle().dump())?)?;
        }
        reports.push(check_stage_lemmas(&out, &schedule, &laws, &cfg.sequence, cfg.budgets.wrap_max)?);
        reports.push(check_theorem(&out, &schedule, &laws));
        let castle = out.construction.castle();
        if cfg.preset == Preset::NonergodicPair {
            reports.push(check_components(castle, &out.set));
            reports.push(unbalanced_demo(castle, &out.set, &laws.windows, &cfg.sequence, cfg.budgets.wrap_max)?);
        }
        let (mc, empirical) = monte_carlo(cfg, &out, &laws)?;
        rep.set("monte_carlo", mc.1);
        reports.push(mc.0);
        for k in 1..=cfg.k {
            let csv = cdf_csv(&laws.union[k - 1].law, &cfg.targets[k - 1], empirical.get(k - 1));
            fs::write(cfg.output_dir.join(format!("cdf_{k}.csv")), csv)?;
        }
    } else {
        rep.set("construction", Value::Null);
    }
    if let Some(b) = &cfg.battery {
        let (r, cycles) = battery(cfg, b.family, b.cycles)?;
        rep.set("battery", cycles);
        reports.push(r);
    }
    for r in &reports {
        failures.extend(r.failures().map(|c| format!("{}.{}", r.section, c.name)));
    }
    rep.set("checks", to_value(&reports)?);
    Ok(())
}

fn build(cfg: &ExperimentConfig, schedule: &ConstructionSchedule) -> Result<(ConstructionOutput, LawTable)> {
    let opts = PipelineOptions {
        components: if cfg.preset == Preset::NonergodicPair { 2 } else { 1 },
        initial_gamma: cfg.initial_gamma.clone(),
        run_max: cfg.budgets.run_max,
    };
    let out = run_construction(schedule, &opts)?;
    let cells = out.construction.castle().num_cells();
    if cells > cfg.budgets.cell_max {
        return Err(Error::BudgetExceeded(format!("{cells} cells exceed the cap {}", cfg.budgets.cell_max)));
    }
    out.set.check_budget(cfg.budgets.run_max)?;
    let laws = compute_laws(&out, schedule, &cfg.sequence, cfg.budgets.wrap_max)?;
    Ok((out, laws))
}

fn construction_json(out: &ConstructionOutput, schedule: &ConstructionSchedule) -> Result<Value> {
    let castle = out.construction.castle();
    let stages: Vec<Value> = out
        .construction
        .stages()
        .iter()
        .map(|s| {
            json!({
                "k": s.k,
                "n": s.n,
                "d": s.d,
                "q": schedule.stage(s.k).q_k,
                "measure": rational::fmt(&s.set.measure(castle)),
                "runs": s.set.num_runs(),
            })
        })
        .collect();
    Ok(json!({
        "initial_gamma": rational::fmt(&out.initial_gamma),
        "castles": to_value(&out.castles)?,
        "corrections": to_value(out.construction.corrections())?,
        "stages": stages,
        "measure": rational::fmt(&out.set.measure(castle)),
        "cells": castle.num_cells(),
        "runs": out.set.num_runs(),
    }))
}

/// Empirical laws of `A` at every `n_k` against the exact laws. Returns the
/// check section, its JSON record and the first seed's law per window.
fn monte_carlo(
    cfg: &ExperimentConfig,
    out: &ConstructionOutput,
    laws: &LawTable,
) -> Result<((CheckReport, Value), Vec<RealMeasure>)> {
    let mut r = CheckReport::new("monte_carlo");
    let mut rows = Vec::new();
    let mut first = Vec::new();
    let n_samples = cfg.monte_carlo.samples;
    let band = dkw_band(n_samples, MC_DELTA);
    if cfg.monte_carlo.seeds == 0 {
        return Ok(((r, json!([])), first));
    }
    let castle = out.construction.castle();
    for k in 1..=cfg.k {
        let exact = &laws.union[k - 1];
        let mut excursions = 0u64;
        for i in 0..cfg.monte_carlo.seeds {
            let seed = cfg.seed.wrapping_add(i);
            let emp = empirical_sum_law(castle, &out.set, exact.n, &exact.a_n, &exact.mu_a, n_samples, seed)?;
            let dist = kolmogorov_distance(&emp.law, &exact.law);
            if dist > band {
                excursions += 1;
            }
            rows.push(json!({
                "k": k,
                "n": exact.n,
                "seed": seed,
                "samples": n_samples,
                "kolmogorov": format!("{dist:.6e}"),
                "band": format!("{band:.6e}"),
            }));
            if i == 0 {
                first.push(emp.law);
            }
        }
        r.push(
            Check::count_le(format!("n{k}.excursions"), excursions, cfg.monte_carlo.seeds / 20)
                .with_note(format!("Kolmogorov distance above the DKW band {band:.5} at level {MC_DELTA}")),
        );
    }
    Ok(((r, Value::Array(rows)), first))
}

/// The `c`-th member (from 1) of a battery family.
pub fn battery_target(cfg: &ExperimentConfig, family: BatteryFamily, c: usize) -> Result<RealMeasure> {
    let x = int(c as i64);
    match family {
        BatteryFamily::TwoPoint => RealMeasure::atomic([(-x.clone(), ratio(1, 2)), (x, ratio(1, 2))]),
        BatteryFamily::Uniform => RealMeasure::uniform(-x.clone(), x),
        BatteryFamily::Targets => Ok(cfg.targets[(c - 1) % cfg.targets.len()].clone()),
    }
}

/// One single-target pipeline per cycle; reports the distance of the exact
/// law at `n_1` to the cycle's target.
fn battery(cfg: &ExperimentConfig, family: BatteryFamily, cycles: usize) -> Result<(CheckReport, Value)> {
    let mut r = CheckReport::new("battery");
    let mut rows = Vec::new();
    for c in 1..=cycles {
        let target = battery_target(cfg, family, c)?;
        let schedule = plan_schedule(&schedule_input(cfg, vec![target.clone()]))?;
        if let Some((k, n)) = over_budget(&schedule, cfg.budgets.n_max).into_iter().next() {
            return Err(Error::BudgetExceeded(format!("battery cycle {c}: n_{k} = {n} exceeds n_max")));
        }
        let (out, laws) = build(cfg, &schedule)?;
        let lemmas = check_stage_lemmas(&out, &schedule, &laws, &cfg.sequence, cfg.budgets.wrap_max)?;
        let theorem = check_theorem(&out, &schedule, &laws);
        let dist = levy_distance(&laws.union[0].law, &target);
        let bound = rational::to_f64(&(int(2) * &schedule.stage(1).eps_k));
        let failed: Vec<String> = lemmas.failures().chain(theorem.failures()).map(|c| c.name.clone()).collect();
        r.push(Check::float_le(format!("cycle{c}.distance"), dist, bound));
        r.push(Check {
            name: format!("cycle{c}.checks"),
            claimed: "all pass".into(),
            achieved: if failed.is_empty() { "all pass".into() } else { failed.join(", ") },
            margin: 0.0,
            pass: failed.is_empty(),
            note: None,
        });
        rows.push(json!({
            "cycle": c,
            "target": to_value(&target)?,
            "n1": schedule.stage(1).n_k.to_string(),
            "d1": schedule.stage(1).d_k.to_string(),
            "q1": schedule.stage(1).q_k,
            "measure": rational::fmt(&out.set.measure(out.construction.castle())),
            "distance": format!("{dist:.9}"),
            "bound": rational::fmt(&(int(2) * &schedule.stage(1).eps_k)),
        }));
    }
    Ok((r, Value::Array(rows)))
}
