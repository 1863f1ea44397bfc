//! Time grid, EV requests, fleet state and the scenario container.
//!
//! Slots are 0-based. An EV with `arrival_slot = a` and `deadline_slot = r` may draw
//! power in slots `a..r`; the deadline slot itself belongs to its station's sliding
//! window but carries no charging. Power is in kW, energy in kWh, and every
//! power-to-energy conversion goes through [`TimeGrid::slot_hours`].

use crate::error::{EvError, Result};

/// SOC tolerance used for completion and overflow checks.
pub const SOC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    pub horizon_slots: usize,
    pub slot_minutes: u32,
    /// Wall-clock minute (after midnight) of slot 0. Informational only.
    pub origin_minutes: u32,
}

impl TimeGrid {
    pub fn new(horizon_slots: usize, slot_minutes: u32, origin_minutes: u32) -> Result<Self> {
        let grid = TimeGrid {
            horizon_slots,
            slot_minutes,
            origin_minutes,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 96 slots of 15 minutes starting at 18:00.
    pub fn overnight() -> Self {
        TimeGrid {
            horizon_slots: 96,
            slot_minutes: 15,
            origin_minutes: 18 * 60,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_slots == 0 {
            return Err(EvError::InvalidGrid("horizon must have at least one slot".into()));
        }
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return Err(EvError::InvalidGrid(format!(
                "slot length {} min does not divide a day",
                self.slot_minutes
            )));
        }
        if self.origin_minutes >= 1440 {
            return Err(EvError::InvalidGrid(format!(
                "origin {} is not a minute of the day",
                self.origin_minutes
            )));
        }
        Ok(())
    }

    pub fn slot_hours(&self) -> f64 {
        f64::from(self.slot_minutes) / 60.0
    }

    pub fn slots_per_day(&self) -> usize {
        (1440 / self.slot_minutes) as usize
    }

    /// Wall-clock label of a slot start, e.g. `"18:15"`.
    pub fn clock_label(&self, slot: usize) -> String {
        let minutes = (self.origin_minutes as usize + slot * self.slot_minutes as usize) % 1440;
        format!("{:02}:{:02}", minutes / 60, minutes % 60)
    }

    /// Number of whole slots from the origin to the given wall-clock minute,
    /// wrapping past midnight.
    pub fn slot_at_clock(&self, minute_of_day: u32) -> usize {
        let delta = (minute_of_day + 1440 - self.origin_minutes) % 1440;
        (delta / self.slot_minutes) as usize
    }
}

/// One vehicle's charging job.
#[derive(Debug, Clone, PartialEq)]
pub struct EvRequest {
    pub id: usize,
    pub station: usize,
    pub arrival_slot: usize,
    pub deadline_slot: usize,
    pub soc_init: f64,
    pub soc_target: f64,
    pub capacity_kwh: f64,
    pub p_max_kw: f64,
    pub p_min_kw: f64,
}

impl EvRequest {
    /// Energy still owed at the requested target from the initial SOC.
    pub fn demand_kwh(&self) -> f64 {
        (self.soc_target - self.soc_init).max(0.0) * self.capacity_kwh
    }

    /// Largest energy the EV can absorb between arrival and deadline.
    pub fn deliverable_kwh(&self, grid: &TimeGrid) -> f64 {
        self.p_max_kw * grid.slot_hours() * (self.deadline_slot - self.arrival_slot) as f64
    }

    pub fn is_feasible(&self, grid: &TimeGrid) -> bool {
        self.demand_kwh() <= self.deliverable_kwh(grid) * (1.0 + 1e-12)
    }

    pub fn validate(&self, grid: &TimeGrid, stations: usize) -> Result<()> {
        let fail = |reason: String| Err(EvError::InvalidRequest { id: self.id, reason });
        if !(0.0..=1.0).contains(&self.soc_init) || !(0.0..=1.0).contains(&self.soc_target) {
            return fail("SOC values must lie in [0, 1]".into());
        }
        if self.soc_init > self.soc_target {
            return fail("initial SOC exceeds target".into());
        }
        if self.arrival_slot >= self.deadline_slot {
            return fail("arrival must precede deadline".into());
        }
        if self.deadline_slot >= grid.horizon_slots {
            return fail(format!(
                "deadline slot {} outside horizon of {} slots",
                self.deadline_slot, grid.horizon_slots
            ));
        }
        if !(self.capacity_kwh > 0.0) || !(self.p_max_kw > 0.0) || self.p_min_kw < 0.0 {
            return fail("capacity and rates must be positive".into());
        }
        if self.p_min_kw > self.p_max_kw {
            return fail("p_min exceeds p_max".into());
        }
        if self.station >= stations {
            return fail(format!("station {} does not exist", self.station));
        }
        if !self.is_feasible(grid) {
            return fail(format!(
                "demand {:.4} kWh exceeds deliverable {:.4} kWh",
                self.demand_kwh(),
                self.deliverable_kwh(grid)
            ));
        }
        Ok(())
    }
}

/// Contiguous inclusive range of slots `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotWindow {
    pub start: usize,
    pub end: usize,
}

impl SlotWindow {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, slot: usize) -> bool {
        (self.start..=self.end).contains(&slot)
    }

    pub fn slots(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Mutable per-run state of all EVs.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub soc: Vec<f64>,
    /// Slot at whose start the EV first held its target SOC.
    pub finished_slot: Vec<Option<usize>>,
}

impl FleetState {
    pub fn new(evs: &[EvRequest]) -> Self {
        let soc = evs.iter().map(|ev| ev.soc_init).collect();
        let finished_slot = evs
            .iter()
            .map(|ev| (ev.soc_init >= ev.soc_target - SOC_TOL).then_some(ev.arrival_slot))
            .collect();
        FleetState { soc, finished_slot }
    }

    pub fn is_finished(&self, i: usize) -> bool {
        self.finished_slot[i].is_some()
    }

    /// `f_{i,t}`: the EV is parked, still charging and before its deadline.
    pub fn is_available(&self, ev: &EvRequest, t: usize) -> bool {
        let i = ev.id;
        ev.arrival_slot <= t
            && t < ev.deadline_slot
            && self.finished_slot[i].map_or(true, |f| t < f)
    }

    pub fn residual_kwh(&self, ev: &EvRequest) -> f64 {
        ((ev.soc_target - self.soc[ev.id]) * ev.capacity_kwh).max(0.0)
    }

    /// The N x T availability matrix under the current state.
    pub fn availability_matrix(&self, evs: &[EvRequest], horizon: usize) -> Vec<Vec<bool>> {
        evs.iter()
            .map(|ev| (0..horizon).map(|t| self.is_available(ev, t)).collect())
            .collect()
    }
}

/// Full simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TimeGrid,
    /// Fraction of the fleet assigned to each station; one entry per station.
    pub station_shares: Vec<f64>,
    pub evs: Vec<EvRequest>,
    /// Actual base load per slot.
    pub base_load_kw: Vec<f64>,
    /// Per-slot load history preceding slot 0, aligned so that its first sample
    /// sits at the same clock phase as slot 0. May be empty.
    pub load_history_kw: Vec<f64>,
    pub price_k0: f64,
    pub price_k1: f64,
    pub peak_cap_kw: Option<f64>,
}

impl Scenario {
    pub fn stations(&self) -> usize {
        self.station_shares.len()
    }

    pub fn cost_model(&self) -> crate::objectives::CostModel {
        crate::objectives::CostModel {
            k0: self.price_k0,
            k1: self.price_k1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.station_shares.is_empty() {
            return Err(EvError::InvalidScenario("at least one station is required".into()));
        }
        if self.base_load_kw.len() != self.grid.horizon_slots {
            return Err(EvError::LengthMismatch {
                expected: self.grid.horizon_slots,
                got: self.base_load_kw.len(),
            });
        }
        if self
            .base_load_kw
            .iter()
            .chain(&self.load_history_kw)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(EvError::InvalidScenario("loads must be finite and non-negative".into()));
        }
        if self.price_k0 < 0.0 || !(self.price_k1 > 0.0) {
            return Err(EvError::InvalidScenario("prices need k0 >= 0 and k1 > 0".into()));
        }
        if let Some(cap) = self.peak_cap_kw {
            let max_base = self.base_load_kw.iter().cloned().fold(0.0, f64::max);
            if cap < max_base {
                return Err(EvError::InvalidScenario(format!(
                    "peak cap {cap} kW is below the base-load maximum {max_base} kW"
                )));
            }
        }
        for (i, ev) in self.evs.iter().enumerate() {
            if ev.id != i {
                return Err(EvError::InvalidScenario(format!(
                    "EV at position {i} carries id {}",
                    ev.id
                )));
            }
            ev.validate(&self.grid, self.stations())?;
        }
        Ok(())
    }
}

/// Output of [`active_sets`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSets {
    pub slot: usize,
    /// `H_{m,t}` in ascending EV id.
    pub by_station: Vec<Vec<usize>>,
    /// `H_t`.
    pub all: Vec<usize>,
    /// `W_{m,t}`; `None` for a station with no active EV.
    pub station_windows: Vec<Option<SlotWindow>>,
    /// `W_t`, the union of station windows.
    pub window: Option<SlotWindow>,
}

/// Active EV sets and sliding windows at slot `t`.
pub fn active_sets(scenario: &Scenario, fleet: &FleetState, t: usize) -> ActiveSets {
    let m = scenario.stations();
    let mut by_station = vec![Vec::new(); m];
    let mut all = Vec::new();
    let mut latest = vec![None::<usize>; m];
    for ev in &scenario.evs {
        if fleet.is_available(ev, t) {
            by_station[ev.station].push(ev.id);
            all.push(ev.id);
            let slot = &mut latest[ev.station];
            *slot = Some(slot.map_or(ev.deadline_slot, |d: usize| d.max(ev.deadline_slot)));
        }
    }
    let station_windows: Vec<Option<SlotWindow>> = latest
        .iter()
        .map(|d| d.map(|end| SlotWindow { start: t, end }))
        .collect();
    let window = station_windows
        .iter()
        .flatten()
        .map(|w| w.end)
        .max()
        .map(|end| SlotWindow { start: t, end });
    ActiveSets {
        slot: t,
        by_station,
        all,
        station_windows,
        window,
    }
}

/// Applies one slot of charging, `rates_kw[i]` for every EV.
///
/// EVs reaching their target are stamped with `finished_slot = t + 1`.
pub fn update_soc(
    fleet: &mut FleetState,
    evs: &[EvRequest],
    rates_kw: &[f64],
    t: usize,
    grid: &TimeGrid,
) -> Result<()> {
    if rates_kw.len() != evs.len() {
        return Err(EvError::LengthMismatch {
            expected: evs.len(),
            got: rates_kw.len(),
        });
    }
    let hours = grid.slot_hours();
    for (ev, &rate) in evs.iter().zip(rates_kw) {
        if rate == 0.0 {
            continue;
        }
        if rate < 0.0 || rate > ev.p_max_kw * (1.0 + 1e-12) {
            return Err(EvError::InvalidRequest {
                id: ev.id,
                reason: format!("rate {rate} kW outside [0, {}]", ev.p_max_kw),
            });
        }
        if !fleet.is_available(ev, t) {
            return Err(EvError::InvalidRequest {
                id: ev.id,
                reason: format!("charged at slot {t} while not available"),
            });
        }
        let i = ev.id;
        let next = fleet.soc[i] + rate * hours / ev.capacity_kwh;
        if next > 1.0 + SOC_TOL {
            return Err(EvError::SocOverflow { id: i, soc: next });
        }
        if next >= ev.soc_target - SOC_TOL {
            fleet.soc[i] = if next <= ev.soc_target + SOC_TOL {
                ev.soc_target
            } else {
                next
            };
            fleet.finished_slot[i] = Some(t + 1);
        } else {
            fleet.soc[i] = next;
        }
    }
    Ok(())
}
