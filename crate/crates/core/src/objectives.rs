//! Charging cost and user convenience.
//!
//! The slot cost integrates a linear-plus-quadratic price density over the
//! charging share of the load, measured in per-slot energy. Convenience rewards
//! EVs that need few slots and sit close to their deadline.

use serde::{Deserialize, Serialize};

use crate::error::{EvError, Result};
use crate::model::{update_soc, EvRequest, FleetState, Scenario, TimeGrid};

/// Relative slack when checking that a load is not below base load.
const BASE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Price per kWh.
    pub k0: f64,
    /// Price slope per kWh squared.
    pub k1: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { k0: 1e-4, k1: 1.2e-4 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 >= 0.0) || !(self.k1 > 0.0) {
            return Err(EvError::InvalidConfig(format!(
                "cost model needs k0 >= 0 and k1 > 0, got k0={} k1={}",
                self.k0, self.k1
            )));
        }
        Ok(())
    }
}

/// Cost of serving total load `z_kw` on top of `base_kw` for one slot.
pub fn slot_cost(model: &CostModel, z_kw: f64, base_kw: f64, slot_hours: f64) -> Result<f64> {
    if z_kw < base_kw - BASE_SLACK * base_kw.abs().max(1.0) {
        return Err(EvError::LoadBelowBase {
            load_kw: z_kw,
            base_kw,
        });
    }
    let z = z_kw.max(base_kw) * slot_hours;
    let b = base_kw * slot_hours;
    Ok(model.k0 * (z - b) + 0.5 * model.k1 * (z * z - b * b))
}

/// `J1`: slot costs summed in slot order.
pub fn total_cost(model: &CostModel, load_kw: &[f64], base_kw: &[f64], grid: &TimeGrid) -> Result<f64> {
    if load_kw.len() != base_kw.len() {
        return Err(EvError::LengthMismatch {
            expected: base_kw.len(),
            got: load_kw.len(),
        });
    }
    let h = grid.slot_hours();
    let mut acc = 0.0;
    for (&z, &b) in load_kw.iter().zip(base_kw) {
        acc += slot_cost(model, z, b, h)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvenienceTerms {
    /// Slots needed at full rate to reach the target.
    pub w_star: f64,
    /// Slots left before the deadline.
    pub w_remaining: f64,
    pub u: f64,
}

/// Convenience of an available EV at slot `t`.
pub fn convenience(ev: &EvRequest, fleet: &FleetState, t: usize, grid: &TimeGrid) -> Result<ConvenienceTerms> {
    if t >= ev.deadline_slot && !fleet.is_finished(ev.id) {
        return Err(EvError::MissedDeadline { id: ev.id, slot: t });
    }
    if !fleet.is_available(ev, t) {
        return Err(EvError::InvalidRequest {
            id: ev.id,
            reason: format!("not available for charging at slot {t}"),
        });
    }
    let w_star = fleet.residual_kwh(ev) / (ev.p_max_kw * grid.slot_hours());
    let w_remaining = (ev.deadline_slot - t) as f64;
    Ok(ConvenienceTerms {
        w_star,
        w_remaining,
        u: 1.0 / (w_star * w_remaining),
    })
}

/// `J2` of a complete rate matrix (`rates_kw[i][t]`).
///
/// Available EVs contribute their convenience at each slot; an EV that finished
/// before its deadline contributes 1 for each slot it stays parked.
pub fn total_convenience(scenario: &Scenario, rates_kw: &[Vec<f64>]) -> Result<f64> {
    let grid = &scenario.grid;
    let evs = &scenario.evs;
    if rates_kw.len() != evs.len() {
        return Err(EvError::LengthMismatch {
            expected: evs.len(),
            got: rates_kw.len(),
        });
    }
    let mut fleet = FleetState::new(evs);
    let mut acc = 0.0;
    let mut column = vec![0.0; evs.len()];
    for t in 0..grid.horizon_slots {
        for ev in evs {
            if fleet.is_available(ev, t) {
                acc += convenience(ev, &fleet, t, grid)?.u;
            }
        }
        for (c, row) in column.iter_mut().zip(rates_kw) {
            *c = row[t];
        }
        update_soc(&mut fleet, evs, &column, t, grid)?;
    }
    acc += parked_bonus(evs, &fleet);
    Ok(acc)
}

/// Unit convenience for every slot a finished EV stays parked before its deadline.
pub fn parked_bonus(evs: &[EvRequest], fleet: &FleetState) -> f64 {
    evs.iter()
        .filter_map(|ev| {
            fleet.finished_slot[ev.id].map(|f| ev.deadline_slot.saturating_sub(f) as f64)
        })
        .sum()
}
