//! The slot-by-slot driver shared by all schedulers.
//!
//! A scheduler decides the rates for one slot through [`SlotPolicy`]; the driver
//! applies them, advances SOC and accumulates cost and convenience as it goes.

use serde::Serialize;

use crate::distributed::ledger::{MessageLedger, TraceEntry};
use crate::error::{EvError, Result};
use crate::forecast::ForecastMode;
use crate::model::{active_sets, update_soc, ActiveSets, FleetState, Scenario, SOC_TOL};
use crate::objectives::{convenience, parked_bonus, slot_cost};

/// Defaults shared by every run.
pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Rates and per-slot load decisions of a complete run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `rates_kw[i][t]` for EV `i`.
    pub rates_kw: Vec<Vec<f64>>,
    /// Planned total load per slot; equals base load where nothing was planned.
    pub z_star_kw: Vec<f64>,
    /// Actual base load.
    pub base_kw: Vec<f64>,
    /// Charging power offered to the EVs per slot.
    pub headroom_kw: Vec<f64>,
}

impl Schedule {
    fn empty(scenario: &Scenario) -> Self {
        let t = scenario.grid.horizon_slots;
        Schedule {
            rates_kw: vec![vec![0.0; t]; scenario.evs.len()],
            z_star_kw: scenario.base_load_kw.clone(),
            base_kw: scenario.base_load_kw.clone(),
            headroom_kw: vec![0.0; t],
        }
    }

    pub fn horizon(&self) -> usize {
        self.base_kw.len()
    }

    /// Realized total load: base plus all charging, summed in EV id order.
    pub fn load_kw(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| {
                let mut z = self.base_kw[t];
                for row in &self.rates_kw {
                    z += row[t];
                }
                z
            })
            .collect()
    }
}

/// Per-slot bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SlotStats {
    pub slot: usize,
    pub present: usize,
    pub headroom_kw: f64,
    pub used_kw: f64,
    /// Bisection iterations of the ring protocol.
    pub bisection_iterations: usize,
    /// All ring rounds, including discovery, settling and dissemination.
    pub ring_rounds: usize,
    /// The flat-profile plan fell back to the union of windows.
    pub union_fallback: bool,
    /// Mandatory deadline floors exceeded the offered headroom.
    pub overcommit: bool,
}

/// What a scheduler decided for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub z_star_kw: f64,
    pub headroom_kw: f64,
    /// `(ev id, rate)` pairs; EVs not listed get zero.
    pub rates: Vec<(usize, f64)>,
    pub stats: SlotStats,
}

/// Read-only view handed to a scheduler at slot `t`.
pub struct SlotContext<'a> {
    pub scenario: &'a Scenario,
    pub fleet: &'a FleetState,
    pub t: usize,
    pub sets: &'a ActiveSets,
    pub forecast: &'a ForecastMode,
}

impl SlotContext<'_> {
    /// Base load from `t` through `end`, actual now and forecast afterwards.
    pub fn base_window(&self, end: usize) -> Result<Vec<f64>> {
        self.forecast.base_window(
            &self.scenario.load_history_kw,
            &self.scenario.base_load_kw,
            self.t,
            end + 1 - self.t,
        )
    }
}

pub trait SlotPolicy {
    fn decide(&mut self, ctx: &SlotContext) -> Result<SlotOutcome>;

    /// Message accounting collected during the run, if the scheduler keeps any.
    fn take_ledger(&mut self) -> Option<(MessageLedger, Vec<TraceEntry>)> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: String,
    pub schedule: Schedule,
    pub fleet: FleetState,
    /// Cost accumulated slot by slot during the run.
    pub cost: f64,
    /// Convenience accumulated during the run, parked bonus included.
    pub convenience: f64,
    pub slot_stats: Vec<SlotStats>,
    /// EVs that left without reaching their target.
    pub missed: Vec<usize>,
    pub ledger: Option<MessageLedger>,
    pub trace: Vec<TraceEntry>,
}

/// Runs `policy` over the whole horizon.
pub fn simulate(
    scenario: &Scenario,
    method: &str,
    forecast: &ForecastMode,
    policy: &mut dyn SlotPolicy,
) -> Result<RunResult> {
    scenario.validate()?;
    let grid = scenario.grid;
    let h = grid.slot_hours();
    let cost_model = scenario.cost_model();
    cost_model.validate()?;
    let n = scenario.evs.len();
    let mut fleet = FleetState::new(&scenario.evs);
    let mut schedule = Schedule::empty(scenario);
    let mut column = vec![0.0; n];
    let mut cost = 0.0;
    let mut conv = 0.0;
    let mut slot_stats = Vec::with_capacity(grid.horizon_slots);

    for t in 0..grid.horizon_slots {
        let sets = active_sets(scenario, &fleet, t);
        column.fill(0.0);
        let stats = if sets.all.is_empty() {
            SlotStats {
                slot: t,
                ..SlotStats::default()
            }
        } else {
            for &i in &sets.all {
                conv += convenience(&scenario.evs[i], &fleet, t, &grid)?.u;
            }
            let ctx = SlotContext {
                scenario,
                fleet: &fleet,
                t,
                sets: &sets,
                forecast,
            };
            let outcome = policy.decide(&ctx)?;
            for &(i, r) in &outcome.rates {
                column[i] = r;
            }
            schedule.z_star_kw[t] = outcome.z_star_kw;
            schedule.headroom_kw[t] = outcome.headroom_kw;
            outcome.stats
        };
        update_soc(&mut fleet, &scenario.evs, &column, t, &grid)?;
        let mut load = scenario.base_load_kw[t];
        for (row, &r) in schedule.rates_kw.iter_mut().zip(&column) {
            row[t] = r;
            load += r;
        }
        cost += slot_cost(&cost_model, load, scenario.base_load_kw[t], h)?;
        slot_stats.push(stats);
    }
    conv += parked_bonus(&scenario.evs, &fleet);

    let missed = scenario
        .evs
        .iter()
        .filter(|ev| !fleet.is_finished(ev.id) && fleet.residual_kwh(ev) > SOC_TOL * ev.capacity_kwh)
        .map(|ev| ev.id)
        .collect();
    let (ledger, trace) = match policy.take_ledger() {
        Some((l, tr)) => (Some(l), tr),
        None => (None, Vec::new()),
    };
    Ok(RunResult {
        method: method.to_string(),
        schedule,
        fleet,
        cost,
        convenience: conv,
        slot_stats,
        missed,
        ledger,
        trace,
    })
}

/// Fails with the first EV that missed its target.
pub fn require_all_finished(result: &RunResult, scenario: &Scenario) -> Result<()> {
    match result.missed.first() {
        Some(&id) => Err(EvError::MissedDeadline {
            id,
            slot: scenario.evs[id].deadline_slot,
        }),
        None => Ok(()),
    }
}
