//! Base-load forecasting, peak scaling, MAPE and a synthetic daily load.
//!
//! History series are per-slot samples whose first entry sits at the same
//! clock phase as the slot the forecast is anchored to, so a forecast `k` steps
//! past a history of length `n` has season phase `(n + k) % season`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{EvError, Result};
use crate::model::TimeGrid;

/// A per-slot forecasting strategy.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;

    /// Predicts the next `horizon` samples following `history`.
    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>>;
}

/// Repeats the sample one season back.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    pub season: usize,
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> &str {
        "seasonal-naive"
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let n = history.len();
        if self.season == 0 || n < self.season {
            return Err(EvError::InsufficientHistory {
                needed: self.season.max(1),
                got: n,
            });
        }
        let last = &history[n - self.season..];
        Ok((0..horizon).map(|k| last[k % self.season]).collect())
    }
}

/// Per-phase mean over the most recent complete seasons.
#[derive(Debug, Clone, Copy)]
pub struct PreviousDaysAverage {
    pub season: usize,
    /// Number of seasons to average; `None` uses every complete season.
    pub days: Option<usize>,
}

impl Forecaster for PreviousDaysAverage {
    fn name(&self) -> &str {
        "previous-days-average"
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let n = history.len();
        let needed = self.season * self.days.unwrap_or(1).max(1);
        if self.season == 0 || n < needed {
            return Err(EvError::InsufficientHistory {
                needed: needed.max(1),
                got: n,
            });
        }
        let available = n / self.season;
        let days = self.days.map_or(available, |d| d.min(available));
        let profile: Vec<f64> = (0..self.season)
            .map(|j| {
                let sum: f64 = (1..=days).map(|d| history[n - d * self.season + j]).sum();
                sum / days as f64
            })
            .collect();
        Ok((0..horizon).map(|k| profile[k % self.season]).collect())
    }
}

/// How a scheduler sees future base load.
pub enum ForecastMode {
    /// Future base load is known exactly.
    Perfect,
    Model(Box<dyn Forecaster>),
}

impl std::fmt::Debug for ForecastMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl ForecastMode {
    pub const NAMES: [&'static str; 3] = ["perfect", "seasonal-naive", "previous-days-average"];

    pub fn from_name(name: &str, season: usize) -> Result<Self> {
        match name {
            "perfect" => Ok(ForecastMode::Perfect),
            "seasonal-naive" => Ok(ForecastMode::Model(Box::new(SeasonalNaive { season }))),
            "previous-days-average" => Ok(ForecastMode::Model(Box::new(PreviousDaysAverage {
                season,
                days: None,
            }))),
            other => Err(EvError::InvalidConfig(format!(
                "unknown forecaster '{other}', expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ForecastMode::Perfect => "perfect",
            ForecastMode::Model(m) => m.name(),
        }
    }

    /// Base load over `t..t + len`: the actual value at `t`, predictions after it.
    ///
    /// The model sees the scenario history followed by the actual load up to and
    /// including slot `t`.
    pub fn base_window(&self, history: &[f64], actual: &[f64], t: usize, len: usize) -> Result<Vec<f64>> {
        if len == 0 {
            return Ok(Vec::new());
        }
        match self {
            ForecastMode::Perfect => Ok(actual[t..t + len].to_vec()),
            ForecastMode::Model(model) => {
                let mut seen = Vec::with_capacity(history.len() + t + 1);
                seen.extend_from_slice(history);
                seen.extend_from_slice(&actual[..=t]);
                let mut out = Vec::with_capacity(len);
                out.push(actual[t]);
                let predicted = model.forecast(&seen, len - 1)?;
                out.extend(predicted.into_iter().map(|v| v.max(0.0)));
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub values_kw: Vec<f64>,
    pub source: String,
}

impl ForecastSeries {
    pub fn horizon(&self) -> usize {
        self.values_kw.len()
    }
}

/// Runs a strategy and clamps negative predictions to zero.
pub fn forecast(history: &[f64], strategy: &dyn Forecaster, horizon: usize) -> Result<ForecastSeries> {
    let values_kw = strategy
        .forecast(history, horizon)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    Ok(ForecastSeries {
        values_kw,
        source: strategy.name().to_string(),
    })
}

/// Multiplier that maps the series maximum onto `peak_kw`.
pub fn peak_factor(values: &[f64], peak_kw: f64) -> Result<f64> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(EvError::ZeroForecast);
    }
    Ok(peak_kw / max)
}

/// Rescales a series so that its maximum equals `peak_kw`.
pub fn scale_to_peak(series: &ForecastSeries, peak_kw: f64) -> Result<ForecastSeries> {
    let max = series.values_kw.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(EvError::ZeroForecast);
    }
    let values_kw = series
        .values_kw
        .iter()
        .map(|&v| if v == max { peak_kw } else { v * peak_kw / max })
        .collect();
    Ok(ForecastSeries {
        values_kw,
        source: series.source.clone(),
    })
}

/// Mean absolute percentage error, as a fraction.
pub fn mape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(EvError::LengthMismatch {
            expected: actual.len(),
            got: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvError::InsufficientHistory { needed: 1, got: 0 });
    }
    let mut acc = 0.0;
    for (i, (&f, &a)) in forecast.iter().zip(actual).enumerate() {
        if !(a > 0.0) {
            return Err(EvError::ZeroActual(i));
        }
        acc += (f - a).abs() / a;
    }
    Ok(acc / actual.len() as f64)
}

const HISTORY_HEADER: &str = "# load-history v1";

/// Serializes a load series as `index,HH:MM,kW` lines.
pub fn write_history(values: &[f64], grid: &TimeGrid) -> String {
    let mut out = String::new();
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    out.push_str("# index,clock,kw\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{v}", grid.clock_label(i));
    }
    out
}

/// Parses the text produced by [`write_history`]. Indices must run 0, 1, 2, ...
pub fn parse_history(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == HISTORY_HEADER => {}
        _ => {
            return Err(EvError::Parse {
                line: 1,
                reason: format!("expected header '{HISTORY_HEADER}'"),
            })
        }
    }
    let mut values = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |reason: String| EvError::Parse { line: no + 1, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(fail(format!("expected 3 fields, got {}", fields.len())));
        }
        let index: usize = fields[0].parse().map_err(|_| fail(format!("bad index '{}'", fields[0])))?;
        if index != values.len() {
            return Err(fail(format!("index {index} out of sequence")));
        }
        let clock_ok = fields[1].len() == 5
            && fields[1].as_bytes()[2] == b':'
            && fields[1][..2].parse::<u32>().is_ok_and(|h| h < 24)
            && fields[1][3..].parse::<u32>().is_ok_and(|m| m < 60);
        if !clock_ok {
            return Err(fail(format!("bad clock '{}'", fields[1])));
        }
        let v: f64 = fields[2].parse().map_err(|_| fail(format!("bad value '{}'", fields[2])))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(fail(format!("load {v} must be finite and non-negative")));
        }
        values.push(v);
    }
    Ok(values)
}

/// Shape of the synthetic daily load: two Gaussian bumps on a floor.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadShape {
    pub floor: f64,
    pub morning_peak_minute: f64,
    pub morning_amplitude: f64,
    pub morning_width_hours: f64,
    pub evening_peak_minute: f64,
    pub evening_amplitude: f64,
    pub evening_width_hours: f64,
    /// Standard deviation of the per-day multiplicative level.
    pub day_noise: f64,
    /// Standard deviation of the per-slot multiplicative noise.
    pub slot_noise: f64,
}

impl Default for LoadShape {
    fn default() -> Self {
        LoadShape {
            floor: 0.5,
            morning_peak_minute: 8.5 * 60.0,
            morning_amplitude: 0.3,
            morning_width_hours: 1.8,
            evening_peak_minute: 19.0 * 60.0,
            evening_amplitude: 0.5,
            evening_width_hours: 3.2,
            day_noise: 0.03,
            slot_noise: 0.02,
        }
    }
}

impl LoadShape {
    /// Noise-free load at a minute of the day.
    pub fn value_at(&self, minute_of_day: f64) -> f64 {
        let bump = |peak: f64, width_h: f64| {
            let mut d = (minute_of_day - peak).abs() % 1440.0;
            if d > 720.0 {
                d = 1440.0 - d;
            }
            let x = d / (width_h * 60.0);
            (-0.5 * x * x).exp()
        };
        self.floor
            + self.morning_amplitude * bump(self.morning_peak_minute, self.morning_width_hours)
            + self.evening_amplitude * bump(self.evening_peak_minute, self.evening_width_hours)
    }

    /// `len` consecutive per-slot samples starting at the grid origin, with
    /// day-level and slot-level noise.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, len: usize, rng: &mut R) -> Vec<f64> {
        let per_day = grid.slots_per_day();
        let day_dist = Normal::new(1.0, self.day_noise).expect("finite noise level");
        let slot_dist = Normal::new(1.0, self.slot_noise).expect("finite noise level");
        let mut level = 1.0;
        (0..len)
            .map(|i| {
                if i % per_day == 0 {
                    level = day_dist.sample(rng);
                }
                let minute = grid.origin_minutes as f64 + (i * grid.slot_minutes as usize) as f64;
                let v = self.value_at(minute) * level * slot_dist.sample(rng);
                v.max(0.0)
            })
            .collect()
    }
}
