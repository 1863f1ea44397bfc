//! The distributed scheduler.
//!
//! Per slot, EVs report to their station aggregator (SA), each SA sends the CA
//! its total demand and window, the CA answers with the slot's headroom from a
//! flat-profile plan, and the SAs split that headroom among themselves by
//! passing a threshold around a ring. Every exchange goes through a
//! [`MessageBus`](bus::MessageBus) so the traffic can be counted.

pub mod bus;
pub mod ducm;
pub mod lccm;
pub mod ledger;

use crate::centralized::{Candidate, SlotDecision};
use crate::error::{EvError, Result};
use crate::forecast::ForecastMode;
use crate::model::{active_sets, update_soc, FleetState, Scenario};
use crate::sim::{simulate, RunResult, SlotContext, SlotOutcome, SlotPolicy, SlotStats, DEFAULT_EPSILON};

use bus::{MessageBus, Payload, SaSummary};
use ducm::{ducm, BisectionState};
use lccm::{lccm, LccmPlan};
use ledger::{MessageLedger, Node, Protocol, TraceEntry};

#[derive(Debug, Clone, Copy)]
pub struct DcsaOptions {
    /// Bisection stops once the threshold bracket is narrower than this.
    pub epsilon: f64,
    pub trace_messages: bool,
}

impl Default for DcsaOptions {
    fn default() -> Self {
        DcsaOptions {
            epsilon: DEFAULT_EPSILON,
            trace_messages: false,
        }
    }
}

/// What one distributed slot produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DcsaSlot {
    pub decision: SlotDecision,
    pub plan: Option<LccmPlan>,
    pub z_star_kw: f64,
    pub bisection: BisectionState,
    pub ring_rounds: usize,
    pub overcommit: bool,
}

/// Runs the message exchange for slot `t` and returns the rates.
pub fn dcsa_decide(ctx: &SlotContext, options: &DcsaOptions, bus: &mut MessageBus) -> Result<DcsaSlot> {
    let sc = ctx.scenario;
    let t = ctx.t;
    let grid = &sc.grid;
    let h = grid.slot_hours();
    let m = sc.stations();
    bus.begin_slot(t);

    // EVs report deadline and target to their SA.
    for &i in &ctx.sets.all {
        let ev = &sc.evs[i];
        let report = Payload::EvReport {
            deadline_slot: ev.deadline_slot,
            soc_target: ev.soc_target,
        };
        bus.send(Node::Ev(i), Node::Sa(ev.station), report);
    }
    let mut summaries = Vec::with_capacity(m);
    for k in 0..m {
        let reports = bus.take(Node::Sa(k));
        let mut demand = 0.0;
        let mut end: Option<usize> = None;
        for env in &reports {
            let Node::Ev(i) = env.from else { continue };
            if let Payload::EvReport { deadline_slot, .. } = env.payload {
                demand += ctx.fleet.residual_kwh(&sc.evs[i]);
                end = Some(end.map_or(deadline_slot, |e| e.max(deadline_slot)));
            }
        }
        let summary = SaSummary {
            station: k,
            demand_kwh: demand,
            window: end.map(|e| (t, e)),
        };
        bus.send(Node::Sa(k), Node::Ca, Payload::Summary(summary.clone()));
        summaries.push(summary);
    }
    bus.take(Node::Ca);

    let window_sizes: Vec<usize> = summaries.iter().map(SaSummary::window_len).collect();
    let present: Vec<usize> = ctx.sets.by_station.iter().map(Vec::len).collect();
    let (plan, z_star_kw) = match summaries.iter().filter_map(|s| s.window).map(|w| w.1).max() {
        Some(end) => {
            let base = ctx.base_window(end)?;
            let plan = lccm(&summaries, &base, t, h, sc.peak_cap_kw)?;
            let z = plan.z_at(t);
            (Some(plan), z)
        }
        None => (None, sc.base_load_kw[t]),
    };
    let headroom_kw = (z_star_kw - sc.base_load_kw[t]).max(0.0);
    for k in 0..m {
        bus.send(Node::Ca, Node::Sa(k), Payload::Headroom(headroom_kw));
    }
    let mut stations = vec![Vec::new(); m];
    for (k, cands) in stations.iter_mut().enumerate() {
        bus.take(Node::Sa(k));
        for &i in &ctx.sets.by_station[k] {
            cands.push(Candidate::new(&sc.evs[i], ctx.fleet, t, grid, true)?);
        }
    }

    let p_max = sc.evs.iter().map(|ev| ev.p_max_kw).fold(0.0, f64::max);
    let outcome = ducm(t, headroom_kw, &stations, p_max, options.epsilon, bus);

    for &(i, r) in &outcome.decision.rates {
        bus.send(Node::Sa(sc.evs[i].station), Node::Ev(i), Payload::Rate(r));
    }
    bus.drain_all();
    bus.end_slot(Protocol::Distributed, present, window_sizes, outcome.rounds);

    Ok(DcsaSlot {
        decision: outcome.decision,
        plan,
        z_star_kw,
        bisection: outcome.state,
        ring_rounds: outcome.rounds,
        overcommit: outcome.overcommit,
    })
}

/// Runs slot `t` and advances the fleet.
pub fn dcsa_step(
    scenario: &Scenario,
    fleet: &mut FleetState,
    t: usize,
    forecast: &ForecastMode,
    options: &DcsaOptions,
    bus: &mut MessageBus,
) -> Result<DcsaSlot> {
    let sets = active_sets(scenario, fleet, t);
    let ctx = SlotContext {
        scenario,
        fleet,
        t,
        sets: &sets,
        forecast,
    };
    let slot = dcsa_decide(&ctx, options, bus)?;
    let mut column = vec![0.0; scenario.evs.len()];
    for &(i, r) in &slot.decision.rates {
        column[i] = r;
    }
    update_soc(fleet, &scenario.evs, &column, t, &scenario.grid)?;
    Ok(slot)
}

struct DcsaPolicy {
    options: DcsaOptions,
    bus: MessageBus,
}

impl SlotPolicy for DcsaPolicy {
    fn decide(&mut self, ctx: &SlotContext) -> Result<SlotOutcome> {
        let slot = dcsa_decide(ctx, &self.options, &mut self.bus)?;
        Ok(SlotOutcome {
            z_star_kw: slot.z_star_kw,
            headroom_kw: slot.decision.headroom_kw,
            stats: SlotStats {
                slot: ctx.t,
                present: ctx.sets.all.len(),
                headroom_kw: slot.decision.headroom_kw,
                used_kw: slot.decision.headroom_used_kw,
                bisection_iterations: slot.bisection.iterations,
                ring_rounds: slot.ring_rounds,
                union_fallback: slot.plan.as_ref().is_some_and(|p| p.union_fallback),
                overcommit: slot.overcommit,
            },
            rates: slot.decision.rates,
        })
    }

    fn take_ledger(&mut self) -> Option<(MessageLedger, Vec<TraceEntry>)> {
        let bus = std::mem::take(&mut self.bus);
        Some((bus.ledger, bus.trace))
    }
}

/// Runs the distributed scheduler over the whole horizon.
pub fn run_dcsa(scenario: &Scenario, forecast: &ForecastMode, options: &DcsaOptions) -> Result<RunResult> {
    if !(options.epsilon > 0.0 && options.epsilon < 1.0) {
        return Err(EvError::InvalidConfig(format!(
            "bisection tolerance must lie in (0, 1), got {}",
            options.epsilon
        )));
    }
    let mut policy = DcsaPolicy {
        options: *options,
        bus: MessageBus::new(options.trace_messages),
    };
    simulate(scenario, "dcsa", forecast, &mut policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorConfig};

    #[test]
    fn small_run_finishes_and_reconciles() {
        let sc = generate_scenario(3, 30, &GeneratorConfig::default()).unwrap();
        let opts = DcsaOptions {
            trace_messages: true,
            ..DcsaOptions::default()
        };
        let run = run_dcsa(&sc, &ForecastMode::Perfect, &opts).unwrap();
        let ledger = run.ledger.as_ref().unwrap();
        ledger.reconcile().unwrap();
        let from_trace = MessageLedger::totals_from_trace(&run.trace).unwrap();
        assert_eq!(from_trace, (ledger.ev_sa, ledger.sa_ca, ledger.sa_sa));
        assert!(run.slot_stats.iter().all(|s| s.bisection_iterations <= 15));
    }

    #[test]
    fn rejects_bad_epsilon() {
        let sc = generate_scenario(3, 5, &GeneratorConfig::default()).unwrap();
        let opts = DcsaOptions {
            epsilon: 0.0,
            ..DcsaOptions::default()
        };
        assert!(run_dcsa(&sc, &ForecastMode::Perfect, &opts).is_err());
    }
}
