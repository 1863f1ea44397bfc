//! Runs every scheduler on one generated scenario and prints a comparison.
//!
//! `cargo run --release -p evsched --example compare -- [evs] [seed]`

use std::time::Instant;

use evsched::baselines::{run_convenience_max, run_cost_min};
use evsched::centralized::{run_csa, CentralOptions};
use evsched::distributed::{run_dcsa, DcsaOptions};
use evsched::forecast::ForecastMode;
use evsched::metrics::evaluate;
use evsched::scenario::{generate_scenario, GeneratorConfig};

fn main() -> evsched::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let sc = generate_scenario(seed, n, &GeneratorConfig::default())?;
    let forecast = ForecastMode::from_name("seasonal-naive", sc.grid.slots_per_day())?;
    println!("{:<16} {:>10} {:>12} {:>8} {:>10} {:>6} {:>8}", "method", "cost", "convenience", "time_h", "peak_kw", "missed", "secs");
    let runs: Vec<(&str, Box<dyn Fn() -> evsched::Result<evsched::sim::RunResult>>)> = vec![
        ("csa", Box::new(|| run_csa(&sc, &forecast, &CentralOptions::default()))),
        ("dcsa", Box::new(|| run_dcsa(&sc, &forecast, &DcsaOptions::default()))),
        ("cost-min", Box::new(|| run_cost_min(&sc, &forecast))),
        ("convenience-max", Box::new(|| run_convenience_max(&sc))),
    ];
    for (name, run) in runs {
        if n > 1000 && name != "dcsa" {
            continue;
        }
        let start = Instant::now();
        let result = run()?;
        let secs = start.elapsed().as_secs_f64();
        let m = evaluate(&sc, &result)?;
        println!(
            "{:<16} {:>10.4} {:>12.2} {:>8.3} {:>10.1} {:>6} {:>8.3}",
            name, m.cost, m.convenience, m.mean_charging_time_h, m.peak_load_kw, m.missed, secs
        );
    }
    Ok(())
}
