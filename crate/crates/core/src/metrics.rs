//! Post-run analytics and export.
//!
//! Cost and convenience are recomputed here from the rate matrix alone, which
//! gives an independent check on the totals the driver accumulated during the
//! run.

use std::io::Write;

use serde::Serialize;

use crate::error::{EvError, Result};
use crate::model::{FleetState, Scenario, TimeGrid};
use crate::objectives::{total_convenience, total_cost};
use crate::sim::{RunResult, Schedule, SlotStats};

/// Per-EV charging durations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingTimes {
    /// Hours from arrival to reaching the target; `None` if the EV never got there.
    pub hours: Vec<Option<f64>>,
    pub unfinished: Vec<usize>,
}

impl ChargingTimes {
    pub fn finished_hours(&self) -> Vec<f64> {
        self.hours.iter().flatten().copied().collect()
    }

    /// Mean over EVs that finished; zero if none did.
    pub fn mean_hours(&self) -> f64 {
        let v = self.finished_hours();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn cdf(&self) -> Vec<(f64, f64)> {
        empirical_cdf(&self.finished_hours())
    }
}

pub fn charging_times(scenario: &Scenario, fleet: &FleetState) -> ChargingTimes {
    let h = scenario.grid.slot_hours();
    let hours: Vec<Option<f64>> = scenario
        .evs
        .iter()
        .map(|ev| fleet.finished_slot[ev.id].map(|f| (f - ev.arrival_slot) as f64 * h))
        .collect();
    let unfinished = hours
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(i, _)| i)
        .collect();
    ChargingTimes { hours, unfinished }
}

/// `(value, fraction of samples <= value)` at each distinct value, ascending.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in v.iter().enumerate() {
        let p = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    out
}

pub fn peak_load_kw(schedule: &Schedule) -> f64 {
    schedule.load_kw().into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest relative gap between the energy an EV was given and its SOC gain.
pub fn energy_mismatch(scenario: &Scenario, run: &RunResult) -> f64 {
    let h = scenario.grid.slot_hours();
    scenario
        .evs
        .iter()
        .map(|ev| {
            let given: f64 = run.schedule.rates_kw[ev.id].iter().map(|r| r * h).sum();
            let gained = (run.fleet.soc[ev.id] - ev.soc_init) * ev.capacity_kwh;
            (given - gained).abs() / given.abs().max(gained.abs()).max(1e-9)
        })
        .fold(0.0, f64::max)
}

/// Flat summary of one run; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub method: String,
    pub evs: usize,
    /// Recomputed from the rate matrix.
    pub cost: f64,
    /// Accumulated during the run.
    pub cost_incremental: f64,
    pub convenience: f64,
    pub mean_charging_time_h: f64,
    pub peak_load_kw: f64,
    pub peak_cap_kw: Option<f64>,
    pub delivered_kwh: f64,
    pub finished: usize,
    pub missed: usize,
    pub max_bisection_iterations: usize,
    pub max_ring_rounds: usize,
    pub messages_ev_sa: Option<u64>,
    pub messages_sa_ca: Option<u64>,
    pub messages_sa_sa: Option<u64>,
}

pub fn evaluate(scenario: &Scenario, run: &RunResult) -> Result<RunMetrics> {
    check_shape(scenario, run)?;
    let schedule = &run.schedule;
    let cost = total_cost(&scenario.cost_model(), &schedule.load_kw(), &schedule.base_kw, &scenario.grid)?;
    let convenience = total_convenience(scenario, &schedule.rates_kw)?;
    let times = charging_times(scenario, &run.fleet);
    let h = scenario.grid.slot_hours();
    let delivered_kwh = schedule.rates_kw.iter().flatten().map(|r| r * h).sum();
    Ok(RunMetrics {
        method: run.method.clone(),
        evs: scenario.evs.len(),
        cost,
        cost_incremental: run.cost,
        convenience,
        mean_charging_time_h: times.mean_hours(),
        peak_load_kw: peak_load_kw(schedule),
        peak_cap_kw: scenario.peak_cap_kw,
        delivered_kwh,
        finished: scenario.evs.len() - times.unfinished.len(),
        missed: run.missed.len(),
        max_bisection_iterations: run.slot_stats.iter().map(|s| s.bisection_iterations).max().unwrap_or(0),
        max_ring_rounds: run.slot_stats.iter().map(|s| s.ring_rounds).max().unwrap_or(0),
        messages_ev_sa: run.ledger.as_ref().map(|l| l.ev_sa),
        messages_sa_ca: run.ledger.as_ref().map(|l| l.sa_ca),
        messages_sa_sa: run.ledger.as_ref().map(|l| l.sa_sa),
    })
}

fn check_shape(scenario: &Scenario, run: &RunResult) -> Result<()> {
    let s = &run.schedule;
    let t = scenario.grid.horizon_slots;
    let ok = s.rates_kw.len() == scenario.evs.len()
        && s.rates_kw.iter().all(|r| r.len() == t)
        && s.base_kw == scenario.base_load_kw
        && run.fleet.soc.len() == scenario.evs.len();
    if ok {
        Ok(())
    } else {
        Err(EvError::InvalidScenario(format!("run '{}' was not produced on this scenario", run.method)))
    }
}

/// The compared quantities, in column order.
pub const COMPARED: [&str; 4] = ["cost", "convenience", "mean_charging_time_h", "peak_load_kw"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub raw: [f64; 4],
    pub normalized: [f64; 4],
}

/// Divides each column by its largest value. A column whose largest value is
/// not positive is left unchanged.
pub fn normalize_columns(rows: &[[f64; 4]]) -> Vec<[f64; 4]> {
    let mut max = [f64::NEG_INFINITY; 4];
    for r in rows {
        for (m, v) in max.iter_mut().zip(r) {
            *m = m.max(*v);
        }
    }
    rows.iter()
        .map(|r| {
            let mut out = *r;
            for (o, m) in out.iter_mut().zip(&max) {
                if *m > 0.0 {
                    *o /= m;
                }
            }
            out
        })
        .collect()
}

/// Side-by-side table of runs on the same scenario.
pub fn compare_methods(scenario: &Scenario, runs: &[RunResult]) -> Result<Vec<ComparisonRow>> {
    if runs.len() < 2 {
        return Err(EvError::InvalidConfig("comparison needs at least two runs".into()));
    }
    let mut raw = Vec::with_capacity(runs.len());
    for run in runs {
        let m = evaluate(scenario, run)?;
        raw.push([m.cost, m.convenience, m.mean_charging_time_h, m.peak_load_kw]);
    }
    let norm = normalize_columns(&raw);
    Ok(runs
        .iter()
        .zip(raw.into_iter().zip(norm))
        .map(|(run, (raw, normalized))| ComparisonRow {
            method: run.method.clone(),
            raw,
            normalized,
        })
        .collect())
}

/// Writes summary rows as CSV with one header line.
pub fn write_summary_csv<W: Write>(rows: &[RunMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The metrics file written next to a schedule.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a> {
    pub summary: &'a RunMetrics,
    pub forecast: &'a str,
    pub seed: Option<u64>,
    pub charging_time_cdf: Vec<(f64, f64)>,
    pub slots: &'a [SlotStats],
}

pub fn report_json(report: &RunReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| EvError::Io(e.to_string()))
}

/// Writes the schedule as CSV: one row per slot with base, planned and realized
/// load, headroom and each EV's rate in columns `ev_<id>`.
pub fn write_schedule_csv<W: Write>(schedule: &Schedule, grid: &TimeGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "slot".to_string(),
        "clock".into(),
        "base_kw".into(),
        "z_star_kw".into(),
        "headroom_kw".into(),
        "load_kw".into(),
    ];
    header.extend((0..schedule.rates_kw.len()).map(|i| format!("ev_{i}")));
    w.write_record(&header)?;
    let load = schedule.load_kw();
    for t in 0..schedule.horizon() {
        let mut row = vec![
            t.to_string(),
            grid.clock_label(t),
            schedule.base_kw[t].to_string(),
            schedule.z_star_kw[t].to_string(),
            schedule.headroom_kw[t].to_string(),
            load[t].to_string(),
        ];
        row.extend(schedule.rates_kw.iter().map(|r| r[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
