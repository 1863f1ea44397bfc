//! Electric-vehicle charge scheduling for a micro-grid.
//!
//! The crate offers a centralized two-phase scheduler (cost-minimizing load
//! plan, then convenience-ordered allocation of each slot's headroom), a
//! distributed variant built on a flat-profile plan and a ring bisection
//! protocol between station aggregators, plus scenario generation,
//! forecasting baselines and metrics.

pub mod error;
pub mod flow;
pub mod model;
pub mod objectives;
pub mod qp;
pub mod forecast;
pub mod scenario;
pub mod scenario_io;
pub mod sim;
pub mod centralized;
pub mod distributed;
pub mod baselines;
pub mod metrics;

pub use error::{EvError, Result};
