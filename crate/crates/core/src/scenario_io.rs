//! Plain-text scenario format.
//!
//! ```text
//! # evsched scenario v1
//! horizon_slots = 96
//! slot_minutes = 15
//! origin = 18:00
//! price_k0 = 0.0001
//! price_k1 = 0.00012
//! peak_cap_kw = 1200          # or `none`
//! stations = 0.05 0.1 0.15 0.15 0.2 0.35
//! [base_load_kw]
//! 512.5                       # one value per slot
//! [load_history_kw]
//! 498.1                       # zero or more values
//! [evs]
//! # id station arrival_slot deadline_slot soc_init soc_target capacity_kwh p_max_kw p_min_kw
//! 0 3 4 45 0.25 1 30 6.6 0
//! ```
//!
//! Keys appear in this order when written; reading accepts any order. Numbers
//! are written in shortest round-trip form, so save then load is lossless.
//! Text after `#` is a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{EvError, Result};
use crate::model::{EvRequest, Scenario, TimeGrid};

const HEADER: &str = "# evsched scenario v1";
const EV_COLUMNS: &str =
    "# id station arrival_slot deadline_slot soc_init soc_target capacity_kwh p_max_kw p_min_kw";

pub fn scenario_to_string(sc: &Scenario) -> String {
    let mut out = String::new();
    let g = &sc.grid;
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "horizon_slots = {}", g.horizon_slots);
    let _ = writeln!(out, "slot_minutes = {}", g.slot_minutes);
    let _ = writeln!(
        out,
        "origin = {:02}:{:02}",
        g.origin_minutes / 60,
        g.origin_minutes % 60
    );
    let _ = writeln!(out, "price_k0 = {}", sc.price_k0);
    let _ = writeln!(out, "price_k1 = {}", sc.price_k1);
    match sc.peak_cap_kw {
        Some(c) => {
            let _ = writeln!(out, "peak_cap_kw = {c}");
        }
        None => out.push_str("peak_cap_kw = none\n"),
    }
    let shares: Vec<String> = sc.station_shares.iter().map(f64::to_string).collect();
    let _ = writeln!(out, "stations = {}", shares.join(" "));
    out.push_str("[base_load_kw]\n");
    for v in &sc.base_load_kw {
        let _ = writeln!(out, "{v}");
    }
    out.push_str("[load_history_kw]\n");
    for v in &sc.load_history_kw {
        let _ = writeln!(out, "{v}");
    }
    out.push_str("[evs]\n");
    out.push_str(EV_COLUMNS);
    out.push('\n');
    for ev in &sc.evs {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            ev.id,
            ev.station,
            ev.arrival_slot,
            ev.deadline_slot,
            ev.soc_init,
            ev.soc_target,
            ev.capacity_kwh,
            ev.p_max_kw,
            ev.p_min_kw
        );
    }
    out
}

#[derive(PartialEq)]
enum Section {
    Keys,
    Base,
    History,
    Evs,
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| EvError::Parse {
        line,
        reason: format!("invalid {what} '{text}'"),
    })
}

fn parse_clock(line: usize, text: &str) -> Result<u32> {
    let bad = || EvError::Parse {
        line,
        reason: format!("invalid clock '{text}'"),
    };
    let (h, m) = text.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h >= 24 || m >= 60 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

/// Parses and validates a scenario.
pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let mut horizon = None;
    let mut slot_minutes = None;
    let mut origin = 0u32;
    let mut k0 = None;
    let mut k1 = None;
    let mut cap: Option<Option<f64>> = None;
    let mut shares = None;
    let mut base = Vec::new();
    let mut history = Vec::new();
    let mut evs = Vec::new();
    let mut section = Section::Keys;

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[base_load_kw]" => {
                section = Section::Base;
                continue;
            }
            "[load_history_kw]" => {
                section = Section::History;
                continue;
            }
            "[evs]" => {
                section = Section::Evs;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Keys => {
                let (key, value) = line.split_once('=').ok_or_else(|| EvError::Parse {
                    line: no,
                    reason: format!("expected 'key = value', got '{line}'"),
                })?;
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "horizon_slots" => horizon = Some(parse_num::<usize>(no, key, value)?),
                    "slot_minutes" => slot_minutes = Some(parse_num::<u32>(no, key, value)?),
                    "origin" => origin = parse_clock(no, value)?,
                    "price_k0" => k0 = Some(parse_num::<f64>(no, key, value)?),
                    "price_k1" => k1 = Some(parse_num::<f64>(no, key, value)?),
                    "peak_cap_kw" => {
                        cap = Some(if value == "none" {
                            None
                        } else {
                            Some(parse_num::<f64>(no, key, value)?)
                        })
                    }
                    "stations" => {
                        shares = Some(
                            value
                                .split_whitespace()
                                .map(|v| parse_num::<f64>(no, "station share", v))
                                .collect::<Result<Vec<f64>>>()?,
                        )
                    }
                    other => {
                        return Err(EvError::Parse {
                            line: no,
                            reason: format!("unknown key '{other}'"),
                        })
                    }
                }
            }
            Section::Base => base.push(parse_num::<f64>(no, "load", line)?),
            Section::History => history.push(parse_num::<f64>(no, "load", line)?),
            Section::Evs => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 9 {
                    return Err(EvError::Parse {
                        line: no,
                        reason: format!("EV row needs 9 columns, got {}", f.len()),
                    });
                }
                evs.push(EvRequest {
                    id: parse_num(no, "id", f[0])?,
                    station: parse_num(no, "station", f[1])?,
                    arrival_slot: parse_num(no, "arrival_slot", f[2])?,
                    deadline_slot: parse_num(no, "deadline_slot", f[3])?,
                    soc_init: parse_num(no, "soc_init", f[4])?,
                    soc_target: parse_num(no, "soc_target", f[5])?,
                    capacity_kwh: parse_num(no, "capacity_kwh", f[6])?,
                    p_max_kw: parse_num(no, "p_max_kw", f[7])?,
                    p_min_kw: parse_num(no, "p_min_kw", f[8])?,
                });
            }
        }
    }

    let missing = |key: &str| EvError::InvalidScenario(format!("missing key '{key}'"));
    let grid = TimeGrid::new(
        horizon.ok_or_else(|| missing("horizon_slots"))?,
        slot_minutes.ok_or_else(|| missing("slot_minutes"))?,
        origin,
    )?;
    let scenario = Scenario {
        grid,
        station_shares: shares.ok_or_else(|| missing("stations"))?,
        evs,
        base_load_kw: base,
        load_history_kw: history,
        price_k0: k0.ok_or_else(|| missing("price_k0"))?,
        price_k1: k1.ok_or_else(|| missing("price_k1"))?,
        peak_cap_kw: cap.ok_or_else(|| missing("peak_cap_kw"))?,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn save_scenario(sc: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario_to_string(sc))?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_str(&std::fs::read_to_string(path)?)
}
