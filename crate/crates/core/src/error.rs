use thiserror::Error;

/// Errors produced by the scheduling library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid EV request {id}: {reason}")]
    InvalidRequest { id: usize, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("SOC of EV {id} would reach {soc:.12}, above 1")]
    SocOverflow { id: usize, soc: f64 },

    #[error("load {load_kw} kW is below base load {base_kw} kW")]
    LoadBelowBase { load_kw: f64, base_kw: f64 },

    #[error("EV {id} is past its deadline at slot {slot} with charge still missing")]
    MissedDeadline { id: usize, slot: usize },

    #[error(
        "infeasible charging problem at slot {slot}: demand {demand_kwh:.6} kWh, deliverable \
         {deliverable_kwh:.6} kWh; binding slots {binding_slots:?}"
    )]
    Infeasible {
        slot: usize,
        demand_kwh: f64,
        deliverable_kwh: f64,
        binding_slots: Vec<usize>,
    },

    #[error("insufficient history: need {needed} samples, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("forecast series has no positive value to scale")]
    ZeroForecast,

    #[error("actual load is zero at slot {0}")]
    ZeroActual(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvError {
    fn from(err: std::io::Error) -> Self {
        EvError::Io(err.to_string())
    }
}

impl From<csv::Error> for EvError {
    fn from(err: csv::Error) -> Self {
        EvError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EvError>;
