//! Seeded random scenario generation.
//!
//! Every draw comes from one `ChaCha8Rng` stream in a fixed order, so a seed
//! fully determines the scenario.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EvError, Result};
use crate::forecast::{peak_factor, Forecaster, LoadShape, SeasonalNaive};
use crate::model::{EvRequest, Scenario, TimeGrid};

/// Base-load peak and the cap on total load for a fleet size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSetting {
    pub peak_kw: f64,
    pub cap_kw: f64,
}

/// Peak settings keyed by fleet size.
///
/// Listed sizes use their row; below the first row the 100-EV row applies, and
/// other sizes scale linearly with the fleet.
pub fn peak_setting(n_evs: usize) -> PeakSetting {
    let row = |peak: f64, cap: f64| PeakSetting {
        peak_kw: peak,
        cap_kw: cap,
    };
    match n_evs {
        100 => row(400.0, 800.0),
        200 => row(800.0, 1200.0),
        300 => row(1200.0, 1600.0),
        400 => row(1600.0, 2000.0),
        2000 => row(8000.0, 11000.0),
        n if n < 100 => row(400.0, 800.0),
        n => {
            let peak = 4.0 * n as f64;
            let cap = if n <= 400 { peak + 400.0 } else { 5.5 * n as f64 };
            row(peak, cap)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeakMode {
    /// Look the setting up from the fleet size.
    ByFleetSize,
    Fixed(PeakSetting),
    /// Scale base load to the given peak and leave total load uncapped.
    Uncapped { peak_kw: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub grid: TimeGrid,
    pub station_shares: Vec<f64>,
    pub capacity_kwh: f64,
    pub p_max_kw: f64,
    pub p_min_kw: f64,
    pub soc_target: f64,
    /// Arrival clock range `[start, end)` in minutes of the day.
    pub arrival_minutes: (u32, u32),
    /// Deadline clock range `[start, end]` in minutes of the day.
    pub deadline_minutes: (u32, u32),
    pub history_days: usize,
    pub price_k0: f64,
    pub price_k1: f64,
    pub peak: PeakMode,
    pub load_shape: LoadShape,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            grid: TimeGrid::overnight(),
            station_shares: vec![0.05, 0.10, 0.15, 0.15, 0.20, 0.35],
            capacity_kwh: 30.0,
            p_max_kw: 6.6,
            p_min_kw: 0.0,
            soc_target: 1.0,
            arrival_minutes: (18 * 60, 21 * 60),
            deadline_minutes: (4 * 60, 7 * 60),
            history_days: 7,
            price_k0: 1e-4,
            price_k1: 1.2e-4,
            peak: PeakMode::ByFleetSize,
            load_shape: LoadShape::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let sum: f64 = self.station_shares.iter().sum();
        if self.station_shares.is_empty()
            || self.station_shares.iter().any(|s| !(*s >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(EvError::InvalidConfig(format!(
                "station shares must be non-negative and sum to 1, got {:?}",
                self.station_shares
            )));
        }
        if !(0.0..=1.0).contains(&self.soc_target) || !(self.capacity_kwh > 0.0) || !(self.p_max_kw > 0.0) {
            return Err(EvError::InvalidConfig("EV model parameters out of range".into()));
        }
        if !(0.0..=self.p_max_kw).contains(&self.p_min_kw) {
            return Err(EvError::InvalidConfig("p_min must lie in [0, p_max]".into()));
        }
        let (a0, a1) = self.arrival_slots();
        let (d0, d1) = self.deadline_slots();
        if a0 >= a1 || d0 > d1 || a1 > d0 || d1 >= self.grid.horizon_slots {
            return Err(EvError::InvalidConfig(format!(
                "arrival slots {a0}..{a1} and deadline slots {d0}..={d1} do not fit the horizon"
            )));
        }
        if self.history_days == 0 {
            return Err(EvError::InvalidConfig("at least one day of history is required".into()));
        }
        Ok(())
    }

    pub fn arrival_slots(&self) -> (usize, usize) {
        (
            self.grid.slot_at_clock(self.arrival_minutes.0),
            self.grid.slot_at_clock(self.arrival_minutes.1),
        )
    }

    pub fn deadline_slots(&self) -> (usize, usize) {
        (
            self.grid.slot_at_clock(self.deadline_minutes.0),
            self.grid.slot_at_clock(self.deadline_minutes.1),
        )
    }
}

/// Splits `n` into counts proportional to `shares` by largest remainder;
/// ties go to the lower station index.
pub fn station_counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &m in order.iter().take(n.saturating_sub(assigned)) {
        counts[m] += 1;
    }
    counts
}

/// Draws a scenario with `n_evs` vehicles.
pub fn generate_scenario(seed: u64, n_evs: usize, config: &GeneratorConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = config.grid;

    let counts = station_counts(n_evs, &config.station_shares);
    let mut stations: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| std::iter::repeat_n(m, c))
        .collect();
    stations.shuffle(&mut rng);

    let (a0, a1) = config.arrival_slots();
    let (d0, d1) = config.deadline_slots();
    let mut evs = Vec::with_capacity(n_evs);
    for (id, &station) in stations.iter().enumerate() {
        loop {
            let ev = EvRequest {
                id,
                station,
                arrival_slot: rng.random_range(a0..a1),
                deadline_slot: rng.random_range(d0..=d1),
                soc_init: rng.random_range(0.0..1.0f64).min(config.soc_target),
                soc_target: config.soc_target,
                capacity_kwh: config.capacity_kwh,
                p_max_kw: config.p_max_kw,
                p_min_kw: config.p_min_kw,
            };
            if ev.is_feasible(&grid) {
                evs.push(ev);
                break;
            }
        }
    }

    let per_day = grid.slots_per_day();
    let history_len = config.history_days * per_day;
    let raw = config
        .load_shape
        .sample(&grid, history_len + grid.horizon_slots, &mut rng);
    let (history, actual) = raw.split_at(history_len);

    let (peak_kw, cap) = match &config.peak {
        PeakMode::ByFleetSize => {
            let s = peak_setting(n_evs);
            (s.peak_kw, Some(s.cap_kw))
        }
        PeakMode::Fixed(s) => (s.peak_kw, Some(s.cap_kw)),
        PeakMode::Uncapped { peak_kw } => (*peak_kw, None),
    };
    let predicted = SeasonalNaive { season: per_day }.forecast(history, grid.horizon_slots)?;
    let factor = peak_factor(&predicted, peak_kw)?;
    let base_load_kw: Vec<f64> = actual.iter().map(|v| v * factor).collect();
    let load_history_kw: Vec<f64> = history.iter().map(|v| v * factor).collect();
    let max_base = base_load_kw.iter().cloned().fold(0.0, f64::max);
    let peak_cap_kw = cap.map(|c| c.max(max_base));

    let scenario = Scenario {
        grid,
        station_shares: config.station_shares.clone(),
        evs,
        base_load_kw,
        load_history_kw,
        price_k0: config.price_k0,
        price_k1: config.price_k1,
        peak_cap_kw,
    };
    scenario.validate()?;
    Ok(scenario)
}
