//! Acceptance criteria, one line per criterion.
//!
//! Built without the default test harness so every line is printed on a normal
//! `cargo test` run. The process exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use evsched::baselines::run_cost_min;
use evsched::centralized::{run_csa, ucm, Candidate, CentralOptions};
use evsched::distributed::bus::{MessageBus, SaSummary};
use evsched::distributed::ducm::ducm;
use evsched::distributed::lccm::lccm;
use evsched::distributed::ledger::{closed_form_centralized, MessageLedger};
use evsched::distributed::{dcsa_step, run_dcsa, DcsaOptions};
use evsched::forecast::{mape, ForecastMode};
use evsched::metrics::{charging_times, energy_mismatch};
use evsched::model::{FleetState, Scenario, SOC_TOL};
use evsched::objectives::{slot_cost, CostModel};
use evsched::qp::{solve_p1, P1Instance};
use evsched::scenario::{generate_scenario, GeneratorConfig};
use evsched::sim::RunResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn flat_profile() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cost = CostModel::default();
    let h = 0.25;
    let mut worst_level = 0.0f64;
    let mut worst_obj = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=5usize);
        let l = rng.random_range(1..=10usize);
        let base: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..10.0)).collect();
        let top = base.iter().cloned().fold(0.0, f64::max);
        // Enough demand to lift every slot above the highest base value.
        let fill_kw: f64 = base.iter().map(|b| top - b).sum::<f64>() + l as f64 * rng.random_range(0.5..5.0);
        let shares: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let share_sum: f64 = shares.iter().sum();
        let demand: Vec<f64> = shares.iter().map(|s| fill_kw * h * s / share_sum).collect();
        let inst = P1Instance {
            start_slot: 0,
            base_kw: base.clone(),
            ev_ids: (0..n).collect(),
            demand_kwh: demand.clone(),
            p_min_kw: vec![0.0; n],
            p_max_kw: vec![1e4; n],
            available: vec![vec![true; l]; n],
            peak_cap_kw: None,
            slot_hours: h,
            cost,
        };
        let plan = solve_p1(&inst, 1e-9).unwrap();
        let c = (demand.iter().sum::<f64>() / h + base.iter().sum::<f64>()) / l as f64;
        for z in &plan.z_star_kw {
            worst_level = worst_level.max((z - c).abs() / c);
        }
        let summaries: Vec<SaSummary> = demand
            .iter()
            .enumerate()
            .map(|(m, &d)| SaSummary {
                station: m,
                demand_kwh: d,
                window: Some((0, l - 1)),
            })
            .collect();
        let flat = lccm(&summaries, &base, 0, h, None).unwrap();
        let flat_obj: f64 = flat
            .z_star_kw
            .iter()
            .zip(&base)
            .map(|(&z, &b)| slot_cost(&cost, z, b, h).unwrap())
            .sum();
        worst_obj = worst_obj.max((flat_obj - plan.objective).abs() / plan.objective);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_level <= 1e-5 && worst_obj <= 1e-6 && secs < 1.0,
        format!("max |z*-c|/c = {worst_level:.2e}, max objective gap = {worst_obj:.2e}, {secs:.3} s"),
    )
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cost = CostModel::default();
    let h = 0.25;
    let p_max = 6.6;
    let unit_kw = common::STEP * p_max;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = rng.random_range(1..=3usize);
        let l = rng.random_range(1..=4usize);
        let base: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut available = Vec::new();
        let mut units = Vec::new();
        for _ in 0..n {
            let mut row: Vec<bool> = (0..l).map(|_| rng.random_bool(0.7)).collect();
            let k = rng.random_range(0..l);
            row[k] = true;
            let open = row.iter().filter(|a| **a).count();
            units.push(rng.random_range(1..=(common::STEPS_PER_PMAX * open).min(14)));
            available.push(row);
        }
        let inst = P1Instance {
            start_slot: 0,
            base_kw: base.clone(),
            ev_ids: (0..n).collect(),
            demand_kwh: units.iter().map(|&m| m as f64 * unit_kw * h).collect(),
            p_min_kw: vec![0.0; n],
            p_max_kw: vec![p_max; n],
            available: available.clone(),
            peak_cap_kw: None,
            slot_hours: h,
            cost,
        };
        let plan = solve_p1(&inst, 1e-9).unwrap();
        let brute = common::brute_min_cost(&base, &available, &units, unit_kw, h, &cost);
        worst = worst.max((plan.objective - brute) / brute);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-3 && secs < 30.0,
        format!("max (solver - exhaustive)/exhaustive = {worst:.2e}, {secs:.3} s"),
    )
}

fn pareto() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut dominated = 0;
    let mut below_max = 0;
    let mut accepted = 0;
    let mut worst_gap = 0.0f64;
    let mut enumerated = 0usize;
    while accepted < 25 {
        let (sc, units) = common::tiny_scenario(&mut rng, 4);
        let run = run_csa(&sc, &ForecastMode::Perfect, &CentralOptions::default()).unwrap();
        // Keep instances whose planned per-slot charging lies on the rate grid,
        // so schedules with the same per-slot totals can be enumerated.
        let unit_kw = common::STEP * 6.6;
        let totals: Vec<f64> = (0..sc.grid.horizon_slots)
            .map(|t| run.schedule.rates_kw.iter().map(|r| r[t]).sum::<f64>() / unit_kw)
            .collect();
        if totals.iter().any(|v| (v - v.round()).abs() > 1e-9) {
            continue;
        }
        accepted += 1;
        let totals: Vec<i64> = totals.iter().map(|v| v.round() as i64).collect();
        let (j1, j2) = common::objectives(&sc, &run.schedule.rates_kw);
        let tol1 = 1e-9 * j1;
        let tol2 = 1e-9 * j2.max(1.0);
        let mut is_dominated = false;
        let mut best_same_load = f64::NEG_INFINITY;
        common::for_each_schedule(&sc, &units, |rates| {
            enumerated += 1;
            let (e1, e2) = common::objectives(&sc, rates);
            let weakly = e1 <= j1 + tol1 && e2 >= j2 - tol2;
            if weakly && (e1 < j1 - tol1 || e2 > j2 + tol2) {
                is_dominated = true;
            }
            let same = (0..sc.grid.horizon_slots)
                .all(|t| (rates.iter().map(|r| r[t]).sum::<f64>() / unit_kw).round() as i64 == totals[t]);
            if same {
                best_same_load = best_same_load.max(e2);
            }
        });
        if is_dominated {
            dominated += 1;
        }
        if best_same_load > j2 + tol2 {
            below_max += 1;
            worst_gap = worst_gap.max((best_same_load - j2) / best_same_load);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        dominated == 0 && below_max == 0 && secs < 60.0,
        format!(
            "{dominated}/25 dominated, {below_max}/25 below the enumerated J2 maximum at the same load \
             (worst shortfall {:.1}%), {enumerated} schedules, {secs:.2} s",
            100.0 * worst_gap
        ),
    )
}

fn ring_equals_greedy() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    let mut max_iter = 0;
    for _ in 0..200 {
        let m = 6;
        let n = rng.random_range(1..=80usize);
        let mut us: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1.0)).collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        let mut cands: Vec<Candidate> = us
            .iter()
            .enumerate()
            .map(|(id, &u)| {
                let cap = if rng.random_bool(0.8) { 6.6 } else { rng.random_range(0.1..6.6) };
                let floor = if rng.random_bool(0.1) { rng.random_range(0.0..cap) } else { 0.0 };
                Candidate {
                    id,
                    station: rng.random_range(0..m),
                    u,
                    cap_kw: cap,
                    floor_kw: floor,
                    p_min_kw: 0.0,
                }
            })
            .collect();
        // Present ids in a scrambled order so pooling order is exercised too.
        for k in (1..cands.len()).rev() {
            cands.swap(k, rng.random_range(0..=k));
        }
        let caps: f64 = cands.iter().map(|c| c.cap_kw).sum();
        let headroom = rng.random_range(0.0..caps * 1.2);
        let mut stations = vec![Vec::new(); m];
        for c in &cands {
            stations[c.station].push(*c);
        }
        let mut bus = MessageBus::new(false);
        let out = ducm(0, headroom, &stations, 6.6, 1e-4, &mut bus);
        let reference = ucm(0, headroom, &cands);
        if out.decision.rates != reference.rates {
            mismatches += 1;
        }
        max_iter = max_iter.max(out.state.iterations);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && max_iter <= 15 && secs < 5.0,
        format!("{mismatches}/200 rate vectors differ, max bisection iterations {max_iter}, {secs:.3} s"),
    )
}

/// Runs of the three schedulers on one generated scenario.
struct Replication {
    scenario: Scenario,
    csa: RunResult,
    dcsa: RunResult,
    cost_min: RunResult,
}

struct Batch {
    n: usize,
    reps: Vec<Replication>,
    secs: f64,
}

fn monte_carlo(n: usize, reps: u64) -> Batch {
    let start = Instant::now();
    let config = GeneratorConfig::default();
    let reps = (0..reps)
        .map(|seed| {
            let scenario = generate_scenario(seed, n, &config).unwrap();
            let forecast = ForecastMode::from_name("seasonal-naive", scenario.grid.slots_per_day()).unwrap();
            let csa = run_csa(&scenario, &forecast, &CentralOptions::default()).unwrap();
            let dcsa = run_dcsa(&scenario, &forecast, &DcsaOptions::default()).unwrap();
            let cost_min = run_cost_min(&scenario, &forecast).unwrap();
            Replication {
                scenario,
                csa,
                dcsa,
                cost_min,
            }
        })
        .collect();
    Batch {
        n,
        reps,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    s / k as f64
}

fn cost_gap(batch: &Batch) -> Verdict {
    let csa = mean(batch.reps.iter().map(|r| r.csa.cost));
    let dcsa = mean(batch.reps.iter().map(|r| r.dcsa.cost));
    let gap = (dcsa - csa) / csa;
    verdict(
        gap <= 0.05,
        format!("N={}, mean cost CSA {csa:.3}, DCSA {dcsa:.3}, gap {:.2}%", batch.n, 100.0 * gap),
    )
}

fn mean_time(rep_runs: &[(&Scenario, &RunResult)]) -> f64 {
    mean(rep_runs.iter().map(|(sc, run)| charging_times(sc, &run.fleet).mean_hours()))
}

fn charging_time(batches: &[&Batch]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for b in batches {
        let pick = |f: fn(&Replication) -> &RunResult| -> f64 {
            let runs: Vec<(&Scenario, &RunResult)> = b.reps.iter().map(|r| (&r.scenario, f(r))).collect();
            mean_time(&runs)
        };
        let csa = pick(|r| &r.csa);
        let dcsa = pick(|r| &r.dcsa);
        let base = pick(|r| &r.cost_min);
        let rc = 1.0 - csa / base;
        let rd = 1.0 - dcsa / base;
        pass &= rc >= 0.25 && rd >= 0.25;
        secs += b.secs;
        parts.push(format!(
            "N={}: CSA {csa:.2} h ({:.1}% less), DCSA {dcsa:.2} h ({:.1}% less), cost-min {base:.2} h",
            b.n,
            100.0 * rc,
            100.0 * rd
        ));
    }
    pass &= secs < 600.0;
    verdict(pass, format!("{}; batch time {secs:.1} s", parts.join("; ")))
}

fn message_accounting() -> Verdict {
    let present = [10usize, 20, 30, 30, 40, 70];
    let (_, central, _) = closed_form_centralized(&present);
    let mut api = MessageLedger::default();
    api.record_distributed_slot(0, &present, &[96; 6], 10);
    let api_dist = api.aggregator_traffic();

    // A real slot: all 200 EVs present from slot 0 with deadline at the last slot,
    // so every station window spans all 96 slots.
    let mut sc = generate_scenario(7, 200, &GeneratorConfig::default()).unwrap();
    for ev in &mut sc.evs {
        ev.arrival_slot = 0;
        ev.deadline_slot = sc.grid.horizon_slots - 1;
    }
    let counts = evsched::scenario::station_counts(200, &sc.station_shares);
    let csa = run_csa(&sc, &ForecastMode::Perfect, &CentralOptions::default()).unwrap();
    let dcsa = run_dcsa(&sc, &ForecastMode::Perfect, &DcsaOptions::default()).unwrap();
    let c0 = csa.ledger.as_ref().unwrap().slot(0).unwrap().clone();
    let d0 = dcsa.ledger.as_ref().unwrap().slot(0).unwrap().clone();
    let real_ok = c0.present == counts
        && c0.sa_ca == 1600
        && d0.window_sizes == vec![96; 6]
        && d0.sa_ca == 588
        && d0.sa_sa == 8 * 6 * d0.ring_rounds as u64
        && csa.ledger.as_ref().unwrap().reconcile().is_ok()
        && dcsa.ledger.as_ref().unwrap().reconcile().is_ok();
    verdict(
        central == 1600 && api_dist == 1068 && real_ok,
        format!(
            "closed form: CSA {central}, DCSA {api_dist} (a=10); simulated slot 0: CSA {}, DCSA {} + {} with a={}",
            c0.sa_ca, d0.sa_ca, d0.sa_sa, d0.ring_rounds
        ),
    )
}

fn scaling() -> Verdict {
    let start = Instant::now();
    let sc = generate_scenario(8, 2000, &GeneratorConfig::default()).unwrap();
    let forecast = ForecastMode::from_name("seasonal-naive", sc.grid.slots_per_day()).unwrap();
    let mut fleet = FleetState::new(&sc.evs);
    let mut bus = MessageBus::new(false);
    let mut worst = 0.0f64;
    for t in 0..sc.grid.horizon_slots {
        let slot_start = Instant::now();
        dcsa_step(&sc, &mut fleet, t, &forecast, &DcsaOptions::default(), &mut bus).unwrap();
        worst = worst.max(slot_start.elapsed().as_secs_f64());
    }
    let unfinished = sc.evs.iter().filter(|ev| !fleet.is_finished(ev.id)).count();
    verdict(
        worst < 1.0 && unfinished == 0,
        format!(
            "2000 EVs x 96 slots in {:.2} s, slowest slot {:.4} s, {unfinished} unfinished",
            start.elapsed().as_secs_f64(),
            worst
        ),
    )
}

fn conservation(batches: &[&Batch]) -> Verdict {
    let mut runs = 0;
    let mut failures = Vec::new();
    let mut worst_energy = 0.0f64;
    let mut max_iter = 0;
    for b in batches {
        for rep in &b.reps {
            for run in [&rep.csa, &rep.dcsa, &rep.cost_min] {
                runs += 1;
                let sc = &rep.scenario;
                let late = sc.evs.iter().filter(|ev| {
                    ev.is_feasible(&sc.grid)
                        && run.fleet.finished_slot[ev.id].is_none_or(|f| f > ev.deadline_slot)
                });
                let late = late.count();
                let over = run.fleet.soc.iter().filter(|&&s| s > 1.0 + SOC_TOL).count();
                let energy = energy_mismatch(sc, run);
                worst_energy = worst_energy.max(energy);
                max_iter = max_iter.max(run.slot_stats.iter().map(|s| s.bisection_iterations).max().unwrap_or(0));
                if late > 0 || over > 0 || energy > 1e-6 {
                    failures.push(format!("{} N={} late={late} over={over} energy={energy:.1e}", run.method, b.n));
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{runs} runs, {} failing, worst energy mismatch {worst_energy:.1e}, max DCSA bisection iterations {max_iter}{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn mape_fixtures() -> Verdict {
    let actual = [10.0, 20.0, 40.0, 80.0];
    let perfect = mape(&actual, &actual).unwrap();
    let high = mape(&[11.0, 22.0, 44.0, 88.0], &actual).unwrap();
    let low = mape(&[9.0, 18.0, 36.0, 72.0], &actual).unwrap();
    verdict(
        perfect == 0.0 && high == 0.10 && low == 0.10,
        format!("perfect {perfect}, +10% {high}, -10% {low}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &dyn Fn() -> Verdict| {
        let v = f();
        println!("criterion {id:>2} [{name}]: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    run(1, "flat-profile exactness", &flat_profile);
    run(2, "oracle equivalence", &oracle_equivalence);
    run(3, "pareto optimality", &pareto);
    run(4, "ring protocol equals greedy", &ring_equals_greedy);
    let b200 = monte_carlo(200, 100);
    let b100 = monte_carlo(100, 100);
    run(5, "cost gap", &|| cost_gap(&b200));
    run(6, "charging-time reduction", &|| charging_time(&[&b100, &b200]));
    run(7, "message accounting", &message_accounting);
    run(8, "scaling", &scaling);
    run(9, "conservation", &|| conservation(&[&b100, &b200]));
    run(10, "mape fixtures", &mape_fixtures);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
