//! Flat-profile cost minimization over the common window.
//!
//! With only station totals at hand, the CA spreads the aggregate demand over
//! the slots every active station still covers, raising the total load to a
//! single level wherever base load sits below it.

use crate::distributed::bus::SaSummary;
use crate::error::{EvError, Result};
use crate::model::SlotWindow;

#[derive(Debug, Clone, PartialEq)]
pub struct LccmPlan {
    /// Slots the demand is spread over.
    pub window: SlotWindow,
    /// The station windows had no common slot and their union was used.
    pub union_fallback: bool,
    /// Mean total load over the window: `(D / h + sum of base) / |window|`.
    pub average_level_kw: f64,
    /// Water level actually used; equals the mean when no slot sits above it.
    pub level_kw: f64,
    /// Planned total load from `start` through the end of the union window.
    pub z_star_kw: Vec<f64>,
    pub start: usize,
    /// The peak cap bound every slot and part of the demand did not fit.
    pub capped: bool,
}

impl LccmPlan {
    pub fn z_at(&self, slot: usize) -> f64 {
        self.z_star_kw[slot - self.start]
    }
}

/// Plans total load for the slots `t..` given station summaries.
///
/// `base_kw` holds base load from `t` through the end of the union of station
/// windows.
pub fn lccm(summaries: &[SaSummary], base_kw: &[f64], t: usize, slot_hours: f64, peak_cap_kw: Option<f64>) -> Result<LccmPlan> {
    let windows: Vec<(usize, usize)> = summaries.iter().filter_map(|s| s.window).collect();
    if windows.is_empty() {
        return Err(EvError::InvalidConfig("flat-profile plan needs at least one nonempty window".into()));
    }
    if windows.iter().any(|&(a, b)| a != t || b < a) {
        return Err(EvError::InvalidConfig(format!("station windows must start at slot {t}")));
    }
    let union_end = windows.iter().map(|w| w.1).max().unwrap_or(t);
    let common_end = windows.iter().map(|w| w.1).min().unwrap_or(t);
    if base_kw.len() != union_end + 1 - t {
        return Err(EvError::LengthMismatch {
            expected: union_end + 1 - t,
            got: base_kw.len(),
        });
    }
    let (end, union_fallback) = if common_end >= t { (common_end, false) } else { (union_end, true) };
    let window = SlotWindow { start: t, end };
    let demand_kw: f64 = summaries.iter().map(|s| s.demand_kwh).sum::<f64>() / slot_hours;
    let span = &base_kw[..window.len()];
    let average_level_kw = (demand_kw + span.iter().sum::<f64>()) / window.len() as f64;

    let (level_kw, capped) = water_level(span, demand_kw, peak_cap_kw);
    let mut z_star_kw = base_kw.to_vec();
    for (z, &b) in z_star_kw.iter_mut().zip(span) {
        let top = peak_cap_kw.map_or(f64::INFINITY, |c| c.max(b));
        *z = level_kw.clamp(b, top);
    }
    Ok(LccmPlan {
        window,
        union_fallback,
        average_level_kw,
        level_kw,
        z_star_kw,
        start: t,
        capped,
    })
}

/// Level `lambda` with `sum_s clamp(lambda, b_s, max(cap, b_s)) - b_s = fill`.
fn water_level(base: &[f64], fill: f64, cap: Option<f64>) -> (f64, bool) {
    if fill <= 0.0 {
        let lowest = base.iter().cloned().fold(f64::INFINITY, f64::min);
        return (lowest, false);
    }
    if let Some(c) = cap {
        let room: f64 = base.iter().map(|&b| (c - b).max(0.0)).sum();
        if fill >= room {
            return (c, fill > room);
        }
    }
    // Below the cap the filled amount is sum over b_s < lambda of (lambda - b_s).
    let mut sorted = base.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    for k in 0..sorted.len() {
        prefix += sorted[k];
        let level = (fill + prefix) / (k + 1) as f64;
        if k + 1 == sorted.len() || level <= sorted[k + 1] {
            return (level, false);
        }
    }
    unreachable!("the last slot always closes the fill")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn summary(station: usize, demand: f64, window: Option<(usize, usize)>) -> SaSummary {
        SaSummary {
            station,
            demand_kwh: demand,
            window,
        }
    }

    #[test]
    fn flat_level_over_window() {
        let plan = lccm(&[summary(0, 10.0, Some((0, 4)))], &[0.0; 5], 0, 1.0, None).unwrap();
        assert_eq!(plan.average_level_kw, 2.0);
        assert_eq!(plan.z_star_kw, vec![2.0; 5]);
    }

    #[test]
    fn high_base_slot_is_skipped() {
        let plan = lccm(&[summary(0, 6.0, Some((0, 2)))], &[5.0, 1.0, 1.0], 0, 1.0, None).unwrap();
        assert!((plan.average_level_kw - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(plan.z_star_kw, vec![5.0, 4.0, 4.0]);
    }

    #[test]
    fn zero_demand_keeps_base() {
        let base = [3.0, 1.0, 2.0];
        let plan = lccm(&[summary(0, 0.0, Some((0, 2)))], &base, 0, 0.25, None).unwrap();
        assert_eq!(plan.z_star_kw, base.to_vec());
    }

    #[test]
    fn intersection_limits_window() {
        let s = [summary(0, 2.0, Some((3, 4))), summary(1, 2.0, Some((3, 6))), summary(2, 0.0, None)];
        let plan = lccm(&s, &[0.0; 4], 3, 1.0, None).unwrap();
        assert_eq!(plan.window, SlotWindow { start: 3, end: 4 });
        assert_eq!(plan.z_star_kw, vec![2.0, 2.0, 0.0, 0.0]);
        assert!(!plan.union_fallback);
        assert_eq!(plan.z_at(4), 2.0);
    }

    #[test]
    fn all_empty_is_rejected() {
        assert!(lccm(&[summary(0, 0.0, None)], &[], 0, 1.0, None).is_err());
    }

    #[test]
    fn cap_bounds_the_level() {
        let plan = lccm(&[summary(0, 4.0, Some((0, 1)))], &[0.0, 1.0], 0, 1.0, Some(2.0)).unwrap();
        assert_eq!(plan.z_star_kw, vec![2.0, 2.0]);
        assert!(plan.capped);
    }

    proptest! {
        #[test]
        fn demand_is_conserved(
            base in prop::collection::vec(0.0f64..100.0, 1..40),
            demand in 0.0f64..500.0,
            hours in prop::sample::select(vec![0.25, 0.5, 1.0]),
        ) {
            let end = base.len() - 1;
            let plan = lccm(&[summary(0, demand, Some((0, end)))], &base, 0, hours, None).unwrap();
            let delivered: f64 = plan.z_star_kw.iter().zip(&base).map(|(z, b)| (z - b) * hours).sum();
            prop_assert!((delivered - demand).abs() <= 1e-9 * demand.max(1.0));
            for (z, b) in plan.z_star_kw.iter().zip(&base) {
                prop_assert!(z >= b);
                prop_assert!(*z == *b || (z - plan.level_kw).abs() <= 1e-9 * plan.level_kw.max(1.0));
            }
        }
    }
}
