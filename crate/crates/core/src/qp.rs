//! Exact cost-minimizing load plan over a sliding window.
//!
//! The problem minimizes the summed slot cost over per-slot loads, subject to
//! per-EV rate limits, availability, demand and an optional peak cap. Because
//! the cost is a strictly convex function of each slot's total load alone, the
//! optimum depends only on the aggregate charging energy per slot, and the set
//! of aggregates that some rate matrix can realize is the base polytope of a
//! flow polymatroid. The solver runs the decomposition algorithm on that
//! polytope: it levels the load over the current slot set, finds the maximal
//! violated set with one min-cut, and splits the problem there. The optimum is
//! independent of `k0` and `k1`, so the plan is exact up to floating-point
//! rounding. A final max-flow recovers a rate matrix that realizes the plan.

use crate::error::{EvError, Result};
use crate::flow::FlowGraph;
use crate::objectives::{slot_cost, CostModel};

/// One cost-minimization problem over the slots `start_slot..start_slot + base_kw.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Instance {
    pub start_slot: usize,
    /// Base load over the window; the first entry is the current slot.
    pub base_kw: Vec<f64>,
    pub ev_ids: Vec<usize>,
    /// Residual energy each EV still needs.
    pub demand_kwh: Vec<f64>,
    /// Accepted for completeness; the plan itself only uses upper bounds.
    pub p_min_kw: Vec<f64>,
    pub p_max_kw: Vec<f64>,
    /// `available[k][s]` for EV `ev_ids[k]` and window offset `s`.
    pub available: Vec<Vec<bool>>,
    pub peak_cap_kw: Option<f64>,
    pub slot_hours: f64,
    pub cost: CostModel,
}

impl P1Instance {
    pub fn window_len(&self) -> usize {
        self.base_kw.len()
    }

    pub fn total_demand_kwh(&self) -> f64 {
        self.demand_kwh.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.ev_ids.len();
        let l = self.window_len();
        let lens_ok = self.demand_kwh.len() == n
            && self.p_min_kw.len() == n
            && self.p_max_kw.len() == n
            && self.available.len() == n
            && self.available.iter().all(|row| row.len() == l);
        if !lens_ok {
            return Err(EvError::InvalidConfig("P1 instance has inconsistent dimensions".into()));
        }
        if n > 0 && l == 0 {
            return Err(EvError::InvalidConfig("P1 window is empty but EVs are present".into()));
        }
        if self.demand_kwh.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(EvError::InvalidConfig("P1 demands must be finite and non-negative".into()));
        }
        if !(self.slot_hours > 0.0) {
            return Err(EvError::InvalidConfig("slot length must be positive".into()));
        }
        Ok(())
    }

    /// Charging energy slot `s` may take under the peak cap.
    fn slot_room_kwh(&self, s: usize) -> f64 {
        match self.peak_cap_kw {
            Some(cap) => (cap - self.base_kw[s]).max(0.0) * self.slot_hours,
            None => f64::INFINITY,
        }
    }
}

/// Optimality diagnostics of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// Largest gap between delivered and requested energy over EVs.
    pub demand_residual_kwh: f64,
    /// Largest load difference between a slot an EV uses and a cheaper slot it
    /// could still move energy into. Zero at an exact optimum.
    pub valley_violation_kw: f64,
    /// Number of split steps the decomposition took.
    pub splits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P1Solution {
    pub z_star_kw: Vec<f64>,
    /// `rates_kw[k][s]` for EV `ev_ids[k]`.
    pub rates_kw: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt: KktReport,
}

/// Charging headroom `z* - base` per slot.
pub fn available_power(z_star_kw: &[f64], base_kw: &[f64]) -> Result<Vec<f64>> {
    if z_star_kw.len() != base_kw.len() {
        return Err(EvError::LengthMismatch {
            expected: base_kw.len(),
            got: z_star_kw.len(),
        });
    }
    z_star_kw
        .iter()
        .zip(base_kw)
        .map(|(&z, &b)| {
            let d = z - b;
            if d < -1e-9 * b.abs().max(1.0) {
                Err(EvError::LoadBelowBase { load_kw: z, base_kw: b })
            } else {
                Ok(d.max(0.0))
            }
        })
        .collect()
}

struct Sub {
    active: Vec<usize>,
    forced: Vec<usize>,
    forced_value: f64,
    total: f64,
}

/// Solves the instance. `tolerance` is the relative accuracy asked of the objective;
/// the method is exact, so it only sets the numerical slack of internal tests.
pub fn solve_p1(inst: &P1Instance, tolerance: f64) -> Result<P1Solution> {
    inst.validate()?;
    let n = inst.ev_ids.len();
    let l = inst.window_len();
    let h = inst.slot_hours;
    let demand = inst.total_demand_kwh();
    let scale = demand.max(1.0);
    let flow_eps = 1e-13 * scale;
    let split_tol = (tolerance * 1e-4).max(1e-11) * scale;

    if demand <= flow_eps {
        return finish(inst, vec![vec![0.0; l]; n], 0);
    }
    check_feasible(inst, demand, flow_eps)?;

    let base_e: Vec<f64> = inst.base_kw.iter().map(|b| b * h).collect();
    let mut y = vec![0.0; l];
    let mut splits = 0;
    let mut stack = vec![Sub {
        active: (0..l).collect(),
        forced: Vec::new(),
        forced_value: 0.0,
        total: demand,
    }];
    while let Some(sub) = stack.pop() {
        if sub.active.is_empty() {
            continue;
        }
        if sub.total <= split_tol {
            continue;
        }
        if sub.active.len() == 1 {
            y[sub.active[0]] = sub.total;
            continue;
        }
        let k = sub.active.len() as f64;
        let level = (sub.total + sub.active.iter().map(|&s| base_e[s]).sum::<f64>()) / k;
        let y0: Vec<f64> = sub.active.iter().map(|&s| level - base_e[s]).collect();
        let accept = |y: &mut Vec<f64>| {
            for (&s, &v) in sub.active.iter().zip(&y0) {
                y[s] = v.max(0.0);
            }
        };

        let (mut g, src, sink, out_node) = violation_network(inst, &sub, &y0, flow_eps);
        let flow = g.max_flow(src, sink);
        let positive: f64 = y0.iter().filter(|v| **v > 0.0).sum();
        let min_value = flow - sub.forced_value - positive;
        if min_value >= -split_tol {
            accept(&mut y);
            continue;
        }
        let reach = g.reachable(src);
        let (inside, outside): (Vec<usize>, Vec<usize>) = sub
            .active
            .iter()
            .copied()
            .partition(|&s| !reach[out_node[s]]);
        if inside.is_empty() || outside.is_empty() {
            accept(&mut y);
            continue;
        }
        splits += 1;
        let y0_inside: f64 = sub
            .active
            .iter()
            .zip(&y0)
            .filter(|(s, _)| !reach[out_node[**s]])
            .map(|(_, v)| v)
            .sum();
        let tight = (min_value + y0_inside).clamp(0.0, sub.total);
        let mut forced = sub.forced.clone();
        forced.extend(&inside);
        stack.push(Sub {
            active: outside,
            forced,
            forced_value: sub.forced_value + tight,
            total: sub.total - tight,
        });
        stack.push(Sub {
            active: inside,
            forced: sub.forced,
            forced_value: sub.forced_value,
            total: tight,
        });
    }

    let rates = recover_rates(inst, &y, flow_eps);
    finish(inst, rates, splits)
}

/// Network whose min cut minimizes `rho(X + forced) - rho(forced) - y0(X)` over
/// subsets `X` of the active slots. Returns the graph, source, sink and a map
/// from window offset to the slot's output node.
fn violation_network(inst: &P1Instance, sub: &Sub, y0: &[f64], eps: f64) -> (FlowGraph, usize, usize, Vec<usize>) {
    let n = inst.ev_ids.len();
    let l = inst.window_len();
    let src = 0;
    let sink = 1;
    let mut node_count = 2 + n;
    let mut in_node = vec![usize::MAX; l];
    let mut out_node = vec![usize::MAX; l];
    let slots: Vec<usize> = sub.active.iter().chain(&sub.forced).copied().collect();
    for &s in &slots {
        in_node[s] = node_count;
        node_count += 1;
        out_node[s] = if inst.slot_room_kwh(s).is_finite() {
            node_count += 1;
            node_count - 1
        } else {
            in_node[s]
        };
    }
    let mut g = FlowGraph::new(node_count, eps);
    for k in 0..n {
        if inst.demand_kwh[k] <= 0.0 {
            continue;
        }
        g.add_edge(src, 2 + k, inst.demand_kwh[k]);
        let q = inst.p_max_kw[k] * inst.slot_hours;
        for &s in &slots {
            if inst.available[k][s] {
                g.add_edge(2 + k, in_node[s], q);
            }
        }
    }
    for &s in &slots {
        if out_node[s] != in_node[s] {
            g.add_edge(in_node[s], out_node[s], inst.slot_room_kwh(s));
        }
    }
    for &s in &sub.forced {
        g.add_edge(out_node[s], sink, f64::INFINITY);
    }
    for (&s, &v) in sub.active.iter().zip(y0) {
        if v > 0.0 {
            g.add_edge(out_node[s], sink, v);
        } else if v < 0.0 {
            g.add_edge(src, out_node[s], -v);
        }
    }
    (g, src, sink, out_node)
}

fn check_feasible(inst: &P1Instance, demand: f64, eps: f64) -> Result<()> {
    let n = inst.ev_ids.len();
    let l = inst.window_len();
    let src = 0;
    let sink = 1 + n + l;
    let mut g = FlowGraph::new(sink + 1, eps);
    let mut ev_slot_edges = Vec::new();
    for k in 0..n {
        g.add_edge(src, 1 + k, inst.demand_kwh[k]);
        let q = inst.p_max_kw[k] * inst.slot_hours;
        for s in 0..l {
            if inst.available[k][s] {
                ev_slot_edges.push((k, s));
                g.add_edge(1 + k, 1 + n + s, q);
            }
        }
    }
    for s in 0..l {
        g.add_edge(1 + n + s, sink, inst.slot_room_kwh(s));
    }
    let delivered = g.max_flow(src, sink);
    if delivered >= demand * (1.0 - 1e-12) - eps {
        return Ok(());
    }
    let reach = g.reachable(src);
    let mut binding: Vec<usize> = (0..l).filter(|&s| reach[1 + n + s]).collect();
    for &(k, s) in &ev_slot_edges {
        if reach[1 + k] && !reach[1 + n + s] {
            binding.push(s);
        }
    }
    binding.sort_unstable();
    binding.dedup();
    Err(EvError::Infeasible {
        slot: inst.start_slot,
        demand_kwh: demand,
        deliverable_kwh: delivered,
        binding_slots: binding.into_iter().map(|s| s + inst.start_slot).collect(),
    })
}

/// A rate matrix whose per-slot totals match the energy plan `y`.
fn recover_rates(inst: &P1Instance, y: &[f64], eps: f64) -> Vec<Vec<f64>> {
    // Exact slot capacities first; a hair of slack only if rounding left demand unrouted.
    let demand = inst.total_demand_kwh();
    for slack in [0.0, 1e-12] {
        let (flow, rates) = route_rates(inst, y, slack, eps);
        if flow >= demand - eps || slack > 0.0 {
            return rates;
        }
    }
    unreachable!()
}

fn route_rates(inst: &P1Instance, y: &[f64], slack: f64, eps: f64) -> (f64, Vec<Vec<f64>>) {
    let n = inst.ev_ids.len();
    let l = inst.window_len();
    let src = 0;
    let sink = 1 + n + l;
    let mut g = FlowGraph::new(sink + 1, eps);
    let mut edges = Vec::with_capacity(n);
    for k in 0..n {
        g.add_edge(src, 1 + k, inst.demand_kwh[k]);
        let q = inst.p_max_kw[k] * inst.slot_hours;
        let row: Vec<Option<usize>> = (0..l)
            .map(|s| inst.available[k][s].then(|| g.add_edge(1 + k, 1 + n + s, q)))
            .collect();
        edges.push(row);
    }
    for (s, &v) in y.iter().enumerate() {
        let cap = if slack > 0.0 { v * (1.0 + slack) + eps } else { v };
        g.add_edge(1 + n + s, sink, cap);
    }
    let flow = g.max_flow(src, sink);
    let rates = edges
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| e.map_or(0.0, |e| g.flow(e) / inst.slot_hours))
                .collect()
        })
        .collect();
    (flow, rates)
}

fn finish(inst: &P1Instance, rates_kw: Vec<Vec<f64>>, splits: usize) -> Result<P1Solution> {
    let l = inst.window_len();
    let h = inst.slot_hours;
    let mut z_star_kw = inst.base_kw.clone();
    for row in &rates_kw {
        for (z, r) in z_star_kw.iter_mut().zip(row) {
            *z += r;
        }
    }
    let mut objective = 0.0;
    for s in 0..l {
        objective += slot_cost(&inst.cost, z_star_kw[s], inst.base_kw[s], h)?;
    }
    let kkt = kkt_report(inst, &z_star_kw, &rates_kw, splits);
    Ok(P1Solution {
        z_star_kw,
        rates_kw,
        objective,
        kkt,
    })
}

fn kkt_report(inst: &P1Instance, z: &[f64], rates: &[Vec<f64>], splits: usize) -> KktReport {
    let h = inst.slot_hours;
    let slack = 1e-9 * inst.total_demand_kwh().max(1.0);
    let mut report = KktReport {
        splits,
        ..KktReport::default()
    };
    for (k, row) in rates.iter().enumerate() {
        let delivered: f64 = row.iter().sum::<f64>() * h;
        report.demand_residual_kwh = report
            .demand_residual_kwh
            .max((delivered - inst.demand_kwh[k]).abs());
        let q = inst.p_max_kw[k];
        let mut highest_used = f64::NEG_INFINITY;
        let mut lowest_open = f64::INFINITY;
        for (s, &r) in row.iter().enumerate() {
            if !inst.available[k][s] {
                continue;
            }
            if r * h > slack {
                highest_used = highest_used.max(z[s]);
            }
            let room = inst.slot_room_kwh(s) - (z[s] - inst.base_kw[s]) * h;
            if (q - r) * h > slack && room > slack {
                lowest_open = lowest_open.min(z[s]);
            }
        }
        if highest_used > lowest_open {
            report.valley_violation_kw = report.valley_violation_kw.max(highest_used - lowest_open);
        }
    }
    report
}
