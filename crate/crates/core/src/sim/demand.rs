//! The hourly customer arrival rate.
//!
//! Demand is multiplicative: a daypart-shaped base rate, damped by bad
//! weather, lifted by passing traffic, and scaled exponentially in the
//! price gap over the competitor. The exponential term is the price
//! elasticity: one dollar over the competitor at `elasticity_beta = 2`
//! cuts arrivals to e⁻² ≈ 13.5%.

use super::{ExogenousState, StationParams};
use crate::units::Price;

/// Expected customer arrivals per hour at `posted_price` under `exo`.
/// Never negative.
pub fn demand_rate(posted_price: Price, exo: &ExogenousState, params: &StationParams) -> f64 {
    let daypart = params.daypart_multipliers[exo.hour_of_day as usize];
    let weather = 1.0 - params.weather_damping * exo.weather_index();
    let traffic = 1.0 + params.traffic_gain * exo.traffic_index();
    let gap = posted_price.gap_dollars(exo.competitor_price);
    let price = (-params.elasticity_beta * gap).exp();
    (params.base_arrival_rate * daypart * weather * traffic * price).max(0.0)
}
