//! Comparison schedulers.
//!
//! Both are reconstructions that serve as reference points, not faithful
//! reimplementations of any published method.
//!
//! * `cost-min` follows the same cost-minimizing load plan as the centralized
//!   scheduler but has no notion of convenience: it spreads each slot's
//!   headroom in proportion to the rate each EV would need to finish exactly at
//!   its deadline, so EVs tend to finish late.
//! * `convenience-max` ignores cost: every slot it hands out everything up to
//!   the peak cap, greedily by convenience.
//!
//! Both give every EV at least its deadline floor, the rate below which it
//! could no longer finish in time.

use crate::centralized::{p1_instance, ucm, Candidate};
use crate::error::{EvError, Result};
use crate::forecast::ForecastMode;
use crate::qp::solve_p1;
use crate::sim::{simulate, RunResult, SlotContext, SlotOutcome, SlotPolicy, SlotStats, DEFAULT_TOLERANCE};
use crate::model::Scenario;

pub const COST_MIN: &str = "cost-min";
pub const CONVENIENCE_MAX: &str = "convenience-max";

/// Splits `headroom_kw` so that EV `k` gets `clamp(theta * weight_k, floor_k, cap_k)`.
///
/// `theta` is chosen so the rates sum to the headroom. When floors alone
/// exceed it every EV gets its floor; when caps fall short every EV gets its cap.
pub fn proportional_split(headroom_kw: f64, weights: &[f64], cands: &[Candidate]) -> Vec<f64> {
    let rate = |theta: f64| -> Vec<f64> {
        cands
            .iter()
            .zip(weights)
            .map(|(c, &w)| (theta * w).clamp(c.floor_kw, c.cap_kw))
            .collect()
    };
    let total = |r: &[f64]| r.iter().sum::<f64>();
    let floors: f64 = cands.iter().map(|c| c.floor_kw).sum();
    let caps: f64 = cands.iter().map(|c| c.cap_kw).sum();
    if headroom_kw <= floors {
        return cands.iter().map(|c| c.floor_kw).collect();
    }
    if headroom_kw >= caps {
        return cands.iter().map(|c| c.cap_kw).collect();
    }
    // Smallest theta at which every EV with a positive weight is at its cap.
    let mut hi = cands
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, &w)| c.cap_kw / w)
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    if total(&rate(hi)) < headroom_kw {
        // Zero-weight EVs cannot absorb anything beyond their floor.
        return rate(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(&rate(mid)) < headroom_kw {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    rate(lo)
}

fn candidates(ctx: &SlotContext) -> Result<Vec<Candidate>> {
    let sc = ctx.scenario;
    ctx.sets
        .all
        .iter()
        .map(|&i| Candidate::new(&sc.evs[i], ctx.fleet, ctx.t, &sc.grid, true))
        .collect()
}

struct CostMin {
    tolerance: f64,
}

impl SlotPolicy for CostMin {
    fn decide(&mut self, ctx: &SlotContext) -> Result<SlotOutcome> {
        let sc = ctx.scenario;
        let t = ctx.t;
        let h = sc.grid.slot_hours();
        let cands = candidates(ctx)?;
        let weights: Vec<f64> = ctx
            .sets
            .all
            .iter()
            .map(|&i| {
                let ev = &sc.evs[i];
                ctx.fleet.residual_kwh(ev) / ((ev.deadline_slot - t) as f64 * h)
            })
            .collect();
        let inst = p1_instance(ctx)?.expect("present EVs give a window");
        let (z_star_kw, infeasible) = match solve_p1(&inst, self.tolerance) {
            Ok(plan) => (plan.z_star_kw[0], false),
            // Earlier spreading can leave the plan unable to fit under the cap;
            // the floors still keep every EV on track.
            Err(EvError::Infeasible { .. }) => (sc.base_load_kw[t], true),
            Err(e) => return Err(e),
        };
        let headroom_kw = (z_star_kw - sc.base_load_kw[t]).max(0.0);
        let rates_kw = proportional_split(headroom_kw, &weights, &cands);
        let mut used = 0.0;
        for r in &rates_kw {
            used += r;
        }
        Ok(SlotOutcome {
            z_star_kw,
            headroom_kw,
            rates: cands.iter().map(|c| c.id).zip(rates_kw).collect(),
            stats: SlotStats {
                slot: t,
                present: cands.len(),
                headroom_kw,
                used_kw: used,
                overcommit: infeasible || used > headroom_kw * (1.0 + 1e-12) + 1e-12,
                ..SlotStats::default()
            },
        })
    }
}

struct ConvenienceMax;

impl SlotPolicy for ConvenienceMax {
    fn decide(&mut self, ctx: &SlotContext) -> Result<SlotOutcome> {
        let sc = ctx.scenario;
        let t = ctx.t;
        let cands = candidates(ctx)?;
        let headroom_kw = match sc.peak_cap_kw {
            Some(cap) => (cap - sc.base_load_kw[t]).max(0.0),
            None => cands.iter().map(|c| c.cap_kw).sum(),
        };
        let decision = ucm(t, headroom_kw, &cands);
        Ok(SlotOutcome {
            z_star_kw: sc.base_load_kw[t] + decision.headroom_used_kw,
            headroom_kw,
            stats: SlotStats {
                slot: t,
                present: cands.len(),
                headroom_kw,
                used_kw: decision.headroom_used_kw,
                overcommit: decision.headroom_used_kw > headroom_kw,
                ..SlotStats::default()
            },
            rates: decision.rates,
        })
    }
}

/// Runs the cost-only reference scheduler.
pub fn run_cost_min(scenario: &Scenario, forecast: &ForecastMode) -> Result<RunResult> {
    let mut policy = CostMin {
        tolerance: DEFAULT_TOLERANCE,
    };
    simulate(scenario, COST_MIN, forecast, &mut policy)
}

/// Runs the convenience-only reference scheduler.
pub fn run_convenience_max(scenario: &Scenario) -> Result<RunResult> {
    simulate(scenario, CONVENIENCE_MAX, &ForecastMode::Perfect, &mut ConvenienceMax)
}
