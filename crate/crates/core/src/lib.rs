//! Core library for the forecourt digital twin: a deterministic simulator
//! of a retail fuel station (tank, dispensers, customers, exogenous market
//! conditions) plus the decision and monitoring stack that runs against it
//! — demand forecasting, reinforcement-learned pricing, basket
//! recommendations, sensor anomaly detection, inventory and maintenance
//! policy, and a replayable telemetry format.
//!
//! Everything downstream of a `(config, seed)` pair is reproducible:
//! integer state, explicit RNG substreams, and fixed iteration orders mean
//! two runs produce byte-identical telemetry on any platform.

pub mod forecast;
pub mod monitor;
pub mod ops;
pub mod pricing;
pub mod recommender;
pub mod rng;
pub mod sim;
pub mod telemetry;
pub mod units;

pub use rng::Rng64;
pub use units::{Money, Price, Volume};
