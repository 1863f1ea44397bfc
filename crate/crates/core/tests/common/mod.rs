//! Brute-force oracles and tiny instance builders shared by the integration tests.
//!
//! Everything here is deliberately naive: exhaustive enumeration on a rate grid
//! of one tenth of `p_max`, with no use of the solvers under test.

#![allow(dead_code)]

use std::collections::HashSet;

use evsched::model::{EvRequest, Scenario, TimeGrid};
use evsched::objectives::{slot_cost, CostModel};
use rand::Rng;

/// Rate grid step as a fraction of `p_max`.
pub const STEP: f64 = 0.1;
pub const STEPS_PER_PMAX: usize = 10;

/// Every way to place `units` into the allowed slots, at most `cap` per slot.
/// Each result has one entry per slot.
pub fn compositions(units: usize, allowed: &[bool], cap: usize) -> Vec<Vec<usize>> {
    fn rec(s: usize, left: usize, allowed: &[bool], cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if s == allowed.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let top = if allowed[s] { left.min(cap) } else { 0 };
        for x in 0..=top {
            cur.push(x);
            rec(s + 1, left - x, allowed, cap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, units, allowed, cap, &mut Vec::new(), &mut out);
    out
}

/// Cheapest total cost over all grid schedules, by enumerating the reachable
/// per-slot totals one EV at a time.
///
/// `unit_kw` is the rate of one grid step for every EV.
pub fn brute_min_cost(
    base_kw: &[f64],
    available: &[Vec<bool>],
    demand_units: &[usize],
    unit_kw: f64,
    slot_hours: f64,
    cost: &CostModel,
) -> f64 {
    let l = base_kw.len();
    let mut reachable: HashSet<Vec<usize>> = HashSet::from([vec![0; l]]);
    for (k, &m) in demand_units.iter().enumerate() {
        let comps = compositions(m, &available[k], STEPS_PER_PMAX);
        let mut next = HashSet::new();
        for totals in &reachable {
            for c in &comps {
                next.insert(totals.iter().zip(c).map(|(a, b)| a + b).collect::<Vec<_>>());
            }
        }
        reachable = next;
    }
    reachable
        .iter()
        .map(|totals| {
            totals
                .iter()
                .zip(base_kw)
                .map(|(&u, &b)| slot_cost(cost, b + u as f64 * unit_kw, b, slot_hours).unwrap())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Calls `visit` with every grid schedule that delivers each EV's demand in
/// its available slots. Rates are in kW, `rates[i][t]` over the whole horizon.
pub fn for_each_schedule(scenario: &Scenario, demand_units: &[usize], mut visit: impl FnMut(&[Vec<f64>])) {
    let t_len = scenario.grid.horizon_slots;
    let per_ev: Vec<(f64, Vec<Vec<usize>>)> = scenario
        .evs
        .iter()
        .zip(demand_units)
        .map(|(ev, &m)| {
            let allowed: Vec<bool> = (0..t_len).map(|t| ev.arrival_slot <= t && t < ev.deadline_slot).collect();
            (ev.p_max_kw * STEP, compositions(m, &allowed, STEPS_PER_PMAX))
        })
        .collect();
    let mut rates = vec![vec![0.0; t_len]; scenario.evs.len()];
    fn rec(k: usize, per_ev: &[(f64, Vec<Vec<usize>>)], rates: &mut Vec<Vec<f64>>, visit: &mut dyn FnMut(&[Vec<f64>])) {
        if k == per_ev.len() {
            visit(rates);
            return;
        }
        let (unit, comps) = &per_ev[k];
        for c in comps {
            for (r, &x) in rates[k].iter_mut().zip(c) {
                *r = x as f64 * unit;
            }
            rec(k + 1, per_ev, rates, visit);
        }
    }
    rec(0, &per_ev, &mut rates, &mut visit);
}

/// A tiny scenario on the rate grid: 2 or 3 EVs over at most four charging
/// slots, demands of at most `max_units` grid steps and base load on the grid.
/// Returns the scenario and each EV's demand in grid steps.
pub fn tiny_scenario<R: Rng>(rng: &mut R, max_units: usize) -> (Scenario, Vec<usize>) {
    let p_max = 6.6;
    let capacity = 30.0;
    let slots = rng.random_range(2..=4usize);
    let grid = TimeGrid::new(slots + 1, 15, 18 * 60).unwrap();
    let h = grid.slot_hours();
    let unit_kwh = STEP * p_max * h;
    let n = rng.random_range(2..=3usize);
    let mut evs = Vec::new();
    let mut units = Vec::new();
    for id in 0..n {
        let arrival = rng.random_range(0..slots);
        let deadline = rng.random_range(arrival + 1..=slots);
        let m = rng.random_range(1..=max_units.min(STEPS_PER_PMAX * (deadline - arrival)));
        evs.push(EvRequest {
            id,
            station: rng.random_range(0..2),
            arrival_slot: arrival,
            deadline_slot: deadline,
            soc_init: 1.0 - m as f64 * unit_kwh / capacity,
            soc_target: 1.0,
            capacity_kwh: capacity,
            p_max_kw: p_max,
            p_min_kw: 0.0,
        });
        units.push(m);
    }
    let base_load_kw = (0..=slots)
        .map(|_| rng.random_range(0..4usize) as f64 * STEP * p_max)
        .collect();
    let cost = CostModel::default();
    let scenario = Scenario {
        grid,
        station_shares: vec![0.5, 0.5],
        evs,
        base_load_kw,
        load_history_kw: Vec::new(),
        price_k0: cost.k0,
        price_k1: cost.k1,
        peak_cap_kw: None,
    };
    scenario.validate().unwrap();
    (scenario, units)
}

/// `(J1, J2)` of a rate matrix, recomputed from scratch.
pub fn objectives(scenario: &Scenario, rates_kw: &[Vec<f64>]) -> (f64, f64) {
    let t_len = scenario.grid.horizon_slots;
    let mut load = scenario.base_load_kw.clone();
    for row in rates_kw {
        for t in 0..t_len {
            load[t] += row[t];
        }
    }
    let j1 = evsched::objectives::total_cost(&scenario.cost_model(), &load, &scenario.base_load_kw, &scenario.grid).unwrap();
    let j2 = evsched::objectives::total_convenience(scenario, rates_kw).unwrap();
    (j1, j2)
}
