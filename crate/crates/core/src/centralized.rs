//! The centralized two-phase scheduler.
//!
//! Each slot it plans the cheapest total-load profile over the sliding window,
//! then hands the current slot's headroom to EVs in descending convenience.
//! Two allocation rules live here:
//!
//! * [`ucm`], the plain greedy: sort by convenience and give each EV as much as
//!   its rate cap and the remaining headroom allow;
//! * [`guarded_allocation`], the same greedy order, but each EV may only take
//!   what still leaves the rest of the plan deliverable. It starts from the
//!   planned rate matrix and raises one EV at a time along augmenting cycles
//!   that keep every slot total and every other EV's energy fixed.
//!
//! By default the scheduler uses [`ucm`] with deadline floors, so no EV falls
//! behind the point where it can still finish. The guarded rule is available
//! through [`Allocation::Guarded`].

use crate::distributed::bus::{MessageBus, Payload};
use crate::distributed::ledger::{Node, Protocol};
use crate::error::{EvError, Result};
use crate::forecast::ForecastMode;
use crate::model::{EvRequest, FleetState, Scenario, TimeGrid, SOC_TOL};
use crate::objectives::convenience;
use crate::qp::{solve_p1, P1Instance, P1Solution};
use crate::sim::{simulate, RunResult, SlotContext, SlotOutcome, SlotPolicy, SlotStats, DEFAULT_TOLERANCE};

/// One EV competing for a slot's headroom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub station: usize,
    pub u: f64,
    /// Largest useful rate: `min(p_max, residual / slot_hours)`.
    pub cap_kw: f64,
    /// Rate the EV must get now to stay able to finish by its deadline.
    pub floor_kw: f64,
    pub p_min_kw: f64,
}

impl Candidate {
    /// Builds a candidate for an available EV. With `floors` off the floor is zero.
    pub fn new(ev: &EvRequest, fleet: &FleetState, t: usize, grid: &TimeGrid, floors: bool) -> Result<Self> {
        let h = grid.slot_hours();
        let u = convenience(ev, fleet, t, grid)?.u;
        let residual = fleet.residual_kwh(ev);
        let cap_kw = ev.p_max_kw.min(residual / h);
        let floor_kw = if floors {
            let later = ev.p_max_kw * h * (ev.deadline_slot - t - 1) as f64;
            ((residual - later).max(0.0) / h).min(cap_kw)
        } else {
            0.0
        };
        Ok(Candidate {
            id: ev.id,
            station: ev.station,
            u,
            cap_kw,
            floor_kw,
            p_min_kw: ev.p_min_kw,
        })
    }

    pub fn extra_kw(&self) -> f64 {
        self.cap_kw - self.floor_kw
    }
}

/// Rates chosen for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub t: usize,
    /// `(ev id, rate)` for every candidate, ascending id.
    pub rates: Vec<(usize, f64)>,
    pub headroom_kw: f64,
    pub headroom_used_kw: f64,
    /// EVs given more than their floor, in allocation order.
    pub selected: Vec<usize>,
}

/// Orders by convenience, highest first; ties go to the lower id.
pub fn convenience_order(cands: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[b].u.total_cmp(&cands[a].u).then(cands[a].id.cmp(&cands[b].id)));
    order
}

/// Orders by station, then id. Committed power is always summed in this order.
pub fn canonical_order(cands: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by_key(|&k| (cands[k].station, cands[k].id));
    order
}

/// Power committed when the EVs flagged in `full` take their cap and the rest
/// their floor, summed in canonical order.
pub(crate) fn committed_kw(cands: &[Candidate], canonical: &[usize], full: impl Fn(usize) -> bool) -> f64 {
    let mut p = 0.0;
    for &k in canonical {
        p += if full(k) { cands[k].cap_kw } else { cands[k].floor_kw };
    }
    p
}

/// Final rates given the set of full EVs and the partial EV with its leftover.
pub(crate) fn threshold_rates(
    t: usize,
    headroom_kw: f64,
    cands: &[Candidate],
    full: impl Fn(usize) -> bool,
    partial: Option<(usize, f64)>,
    order: &[usize],
) -> SlotDecision {
    let mut rate = vec![0.0; cands.len()];
    for (k, c) in cands.iter().enumerate() {
        rate[k] = if full(k) { c.cap_kw } else { c.floor_kw };
    }
    if let Some((k, leftover)) = partial {
        let c = &cands[k];
        rate[k] = if leftover >= c.extra_kw() {
            c.cap_kw
        } else if leftover > 0.0 && c.floor_kw + leftover >= c.p_min_kw {
            c.floor_kw + leftover
        } else {
            c.floor_kw
        };
    }
    let selected = order
        .iter()
        .copied()
        .filter(|&k| rate[k] > cands[k].floor_kw)
        .map(|k| cands[k].id)
        .collect();
    let mut rates: Vec<(usize, f64)> = cands.iter().map(|c| c.id).zip(rate.iter().copied()).collect();
    rates.sort_by_key(|r| r.0);
    let mut used = 0.0;
    for &k in &canonical_order(cands) {
        used += rate[k];
    }
    SlotDecision {
        t,
        rates,
        headroom_kw,
        headroom_used_kw: used,
        selected,
    }
}

/// Greedy convenience maximization for one slot.
///
/// Every EV first receives its floor. The remaining headroom then goes to EVs in
/// descending convenience, each up to its cap; the first EV that cannot be
/// filled takes what is left, unless that would put it below its minimum rate,
/// in which case it keeps its floor and the rest is left unused. If floors alone
/// exceed the headroom every EV gets exactly its floor.
pub fn ucm(t: usize, headroom_kw: f64, cands: &[Candidate]) -> SlotDecision {
    let n = cands.len();
    let order = convenience_order(cands);
    let canonical = canonical_order(cands);
    let mut rank = vec![0usize; n];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    // Headroom left when the first `j` EVs in convenience order are full.
    let leftover = |j: usize| headroom_kw - committed_kw(cands, &canonical, |k| rank[k] < j);
    // The partial EV is the first position whose fill would overshoot.
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if leftover(mid + 1) < 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let j = lo;
    if j == n {
        threshold_rates(t, headroom_kw, cands, |_| true, None, &order)
    } else {
        let rest = leftover(j);
        threshold_rates(t, headroom_kw, cands, |k| rank[k] < j, Some((order[j], rest)), &order)
    }
}

/// Builds the window plan for slot `t` from the current fleet state.
pub fn p1_instance(ctx: &SlotContext) -> Result<Option<P1Instance>> {
    let sc = ctx.scenario;
    let Some(window) = ctx.sets.window else {
        return Ok(None);
    };
    let base = ctx.base_window(window.end)?;
    let evs: Vec<&EvRequest> = ctx.sets.all.iter().map(|&i| &sc.evs[i]).collect();
    Ok(Some(P1Instance {
        start_slot: ctx.t,
        base_kw: base,
        ev_ids: evs.iter().map(|ev| ev.id).collect(),
        demand_kwh: evs
            .iter()
            .map(|ev| {
                // Rounding in the SOC updates can leave a tight EV owing a hair more
                // than its remaining slots can carry; anything within the SOC
                // tolerance of the target counts as delivered.
                let residual = ctx.fleet.residual_kwh(ev);
                let open = window.slots().filter(|&s| ctx.fleet.is_available(ev, s)).count();
                let reachable = ev.p_max_kw * sc.grid.slot_hours() * open as f64;
                if residual > reachable && residual - reachable <= SOC_TOL * ev.capacity_kwh {
                    reachable
                } else {
                    residual
                }
            })
            .collect(),
        p_min_kw: evs.iter().map(|ev| ev.p_min_kw).collect(),
        p_max_kw: evs.iter().map(|ev| ev.p_max_kw).collect(),
        available: evs
            .iter()
            .map(|ev| window.slots().map(|s| ctx.fleet.is_available(ev, s)).collect())
            .collect(),
        peak_cap_kw: sc.peak_cap_kw,
        slot_hours: sc.grid.slot_hours(),
        cost: sc.cost_model(),
    }))
}

/// Rates for the first window slot under the flow guard.
///
/// `priority` lists instance positions, most deserving first. Each EV in turn
/// takes as much of the first slot as possible while the planned per-slot totals
/// stay fixed and every EV can still receive its full demand. Returns kW per
/// instance position.
pub fn guarded_allocation(inst: &P1Instance, plan: &P1Solution, priority: &[usize]) -> Vec<f64> {
    let n = inst.ev_ids.len();
    let l = inst.window_len();
    let h = inst.slot_hours;
    let eps = 1e-12 * inst.total_demand_kwh().max(1.0);
    let q: Vec<f64> = inst.p_max_kw.iter().map(|p| p * h).collect();
    let mut x: Vec<Vec<f64>> = plan
        .rates_kw
        .iter()
        .map(|row| row.iter().map(|r| r * h).collect())
        .collect();
    let mut locked = vec![false; n];

    let mut ev_parent = vec![usize::MAX; n];
    let mut slot_parent = vec![usize::MAX; l];
    let mut queue: Vec<usize> = Vec::with_capacity(n + l);

    for &k in priority {
        let movable: f64 = (0..n).filter(|&j| !locked[j] && j != k).map(|j| x[j][0]).sum();
        if movable <= eps {
            break;
        }
        loop {
            let want = q[k].min(inst.demand_kwh[k]) - x[k][0];
            if want <= eps {
                break;
            }
            // Breadth-first search over the residual exchange graph. Queue items
            // below `l` are slots, the rest are EVs offset by `l`.
            ev_parent.fill(usize::MAX);
            slot_parent.fill(usize::MAX);
            queue.clear();
            queue.push(0);
            slot_parent[0] = n;
            let mut head = 0;
            let mut found = false;
            'bfs: while head < queue.len() {
                let node = queue[head];
                head += 1;
                if node < l {
                    let s = node;
                    for j in 0..n {
                        if ev_parent[j] != usize::MAX || x[j][s] <= eps {
                            continue;
                        }
                        if s == 0 && (locked[j] || j == k) {
                            continue;
                        }
                        ev_parent[j] = s;
                        if j == k {
                            found = true;
                            break 'bfs;
                        }
                        queue.push(l + j);
                    }
                } else {
                    let j = node - l;
                    for s in 1..l {
                        if slot_parent[s] == usize::MAX && inst.available[j][s] && x[j][s] < q[j] - eps {
                            slot_parent[s] = j;
                            queue.push(s);
                        }
                    }
                }
            }
            if !found {
                break;
            }
            // Walk back from k to slot 0 to find the bottleneck, then apply it.
            let mut delta = want;
            let mut j = k;
            loop {
                let s = ev_parent[j];
                delta = delta.min(x[j][s]);
                if s == 0 {
                    break;
                }
                let prev = slot_parent[s];
                delta = delta.min(q[prev] - x[prev][s]);
                j = prev;
            }
            let mut j = k;
            loop {
                let s = ev_parent[j];
                x[j][s] -= delta;
                if s == 0 {
                    break;
                }
                let prev = slot_parent[s];
                x[prev][s] += delta;
                j = prev;
            }
            x[k][0] += delta;
        }
        locked[k] = true;
    }
    x.iter().map(|row| row[0] / h).collect()
}

/// How the centralized scheduler splits a slot's headroom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Allocation {
    /// [`ucm`] with deadline floors.
    #[default]
    Greedy,
    /// [`guarded_allocation`]: greedy order, but the plan stays deliverable.
    Guarded,
}

impl Allocation {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "greedy" => Ok(Allocation::Greedy),
            "guarded" => Ok(Allocation::Guarded),
            other => Err(EvError::InvalidConfig(format!(
                "unknown allocation '{other}', expected greedy or guarded"
            ))),
        }
    }
}

/// Options shared by the centralized runs.
#[derive(Debug, Clone, Copy)]
pub struct CentralOptions {
    pub tolerance: f64,
    pub allocation: Allocation,
    pub trace_messages: bool,
}

impl Default for CentralOptions {
    fn default() -> Self {
        CentralOptions {
            tolerance: DEFAULT_TOLERANCE,
            allocation: Allocation::default(),
            trace_messages: false,
        }
    }
}

/// What [`csa_step`] decided for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CsaSlot {
    pub decision: SlotDecision,
    pub z_star_kw: f64,
    pub plan: Option<P1Solution>,
}

fn csa_decide(ctx: &SlotContext, options: &CentralOptions) -> Result<CsaSlot> {
    let t = ctx.t;
    let grid = &ctx.scenario.grid;
    let Some(inst) = p1_instance(ctx)? else {
        return Ok(CsaSlot {
            decision: SlotDecision {
                t,
                rates: Vec::new(),
                headroom_kw: 0.0,
                headroom_used_kw: 0.0,
                selected: Vec::new(),
            },
            z_star_kw: ctx.scenario.base_load_kw[t],
            plan: None,
        });
    };
    let plan = solve_p1(&inst, options.tolerance)?;
    let z_star_kw = plan.z_star_kw[0];
    let headroom_kw = (z_star_kw - ctx.scenario.base_load_kw[t]).max(0.0);
    let floors = options.allocation == Allocation::Greedy;
    let cands = inst
        .ev_ids
        .iter()
        .map(|&i| Candidate::new(&ctx.scenario.evs[i], ctx.fleet, t, grid, floors))
        .collect::<Result<Vec<_>>>()?;
    if options.allocation == Allocation::Greedy {
        return Ok(CsaSlot {
            decision: ucm(t, headroom_kw, &cands),
            z_star_kw,
            plan: Some(plan),
        });
    }
    let order = convenience_order(&cands);
    let rates_kw = guarded_allocation(&inst, &plan, &order);
    let mut used = 0.0;
    for r in &rates_kw {
        used += r;
    }
    let selected = order
        .iter()
        .filter(|&&k| rates_kw[k] > 0.0)
        .map(|&k| inst.ev_ids[k])
        .collect();
    let mut rates: Vec<(usize, f64)> = inst.ev_ids.iter().copied().zip(rates_kw).collect();
    rates.sort_by_key(|r| r.0);
    Ok(CsaSlot {
        decision: SlotDecision {
            t,
            rates,
            headroom_kw,
            headroom_used_kw: used,
            selected,
        },
        z_star_kw,
        plan: Some(plan),
    })
}

/// Plans slot `t`, allocates its headroom and advances the fleet state.
pub fn csa_step(
    scenario: &Scenario,
    fleet: &mut FleetState,
    t: usize,
    forecast: &ForecastMode,
    options: &CentralOptions,
) -> Result<CsaSlot> {
    let sets = crate::model::active_sets(scenario, fleet, t);
    let ctx = SlotContext {
        scenario,
        fleet,
        t,
        sets: &sets,
        forecast,
    };
    let slot = csa_decide(&ctx, options)?;
    let mut column = vec![0.0; scenario.evs.len()];
    for &(i, r) in &slot.decision.rates {
        column[i] = r;
    }
    crate::model::update_soc(fleet, &scenario.evs, &column, t, &scenario.grid)?;
    Ok(slot)
}

/// Centralized per-EV message exchange for one slot.
pub(crate) fn central_messages(bus: &mut MessageBus, ctx: &SlotContext, rates: &[(usize, f64)]) {
    let sc = ctx.scenario;
    bus.begin_slot(ctx.t);
    for &i in &ctx.sets.all {
        let ev = &sc.evs[i];
        bus.send(
            Node::Ev(i),
            Node::Sa(ev.station),
            Payload::EvReport {
                deadline_slot: ev.deadline_slot,
                soc_target: ev.soc_target,
            },
        );
    }
    for &i in &ctx.sets.all {
        let ev = &sc.evs[i];
        let report = [
            ev.arrival_slot as f64,
            ev.deadline_slot as f64,
            ctx.fleet.soc[i],
            ev.soc_target,
            ev.capacity_kwh,
            ev.p_max_kw,
            ev.p_min_kw,
        ];
        bus.send(Node::Sa(ev.station), Node::Ca, Payload::CentralReport(report));
    }
    bus.take(Node::Ca);
    for &(i, r) in rates {
        bus.send(Node::Ca, Node::Sa(sc.evs[i].station), Payload::Rate(r));
    }
    for m in 0..sc.stations() {
        bus.take(Node::Sa(m));
    }
    for &(i, r) in rates {
        bus.send(Node::Sa(sc.evs[i].station), Node::Ev(i), Payload::Rate(r));
    }
    bus.drain_all();
    let present = ctx.sets.by_station.iter().map(Vec::len).collect::<Vec<_>>();
    let m = present.len();
    bus.end_slot(Protocol::Centralized, present, vec![0; m], 0);
}

struct CsaPolicy {
    options: CentralOptions,
    bus: MessageBus,
}

impl SlotPolicy for CsaPolicy {
    fn decide(&mut self, ctx: &SlotContext) -> Result<SlotOutcome> {
        let slot = csa_decide(ctx, &self.options).map_err(|e| match e {
            EvError::Infeasible {
                demand_kwh,
                deliverable_kwh,
                binding_slots,
                ..
            } => EvError::Infeasible {
                slot: ctx.t,
                demand_kwh,
                deliverable_kwh,
                binding_slots,
            },
            other => other,
        })?;
        central_messages(&mut self.bus, ctx, &slot.decision.rates);
        Ok(SlotOutcome {
            z_star_kw: slot.z_star_kw,
            headroom_kw: slot.decision.headroom_kw,
            stats: SlotStats {
                slot: ctx.t,
                present: ctx.sets.all.len(),
                headroom_kw: slot.decision.headroom_kw,
                used_kw: slot.decision.headroom_used_kw,
                ..SlotStats::default()
            },
            rates: slot.decision.rates,
        })
    }

    fn take_ledger(&mut self) -> Option<(crate::distributed::ledger::MessageLedger, Vec<crate::distributed::ledger::TraceEntry>)> {
        let bus = std::mem::take(&mut self.bus);
        Some((bus.ledger, bus.trace))
    }
}

/// Runs the centralized scheduler over the whole horizon.
pub fn run_csa(scenario: &Scenario, forecast: &ForecastMode, options: &CentralOptions) -> Result<RunResult> {
    let mut policy = CsaPolicy {
        options: *options,
        bus: MessageBus::new(options.trace_messages),
    };
    simulate(scenario, "csa", forecast, &mut policy)
}
