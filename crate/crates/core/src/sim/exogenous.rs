//! Exogenous market state: bounded mean-reverting walks on a fixed clock.
//!
//! Weather and traffic live on `[0, 1]` and revert toward hour-of-day means
//! (quiet nights, busy rush hours). Wholesale cost follows a geometric walk;
//! the competitor prices at wholesale plus a mean-reverting margin and never
//! sells below cost. All stored values are quantized — basis points for the
//! indices, mills for prices — so the state survives a telemetry round trip
//! unchanged.

use super::{tag, ExogenousState, StationParams};
use crate::rng::Rng64;
use crate::units::Price;

/// Hour-of-day targets the weather index reverts toward (mild diurnal
/// shape; storms are excursions, not the mean).
const WEATHER_MEANS: [f64; 24] = [
    0.34, 0.35, 0.36, 0.36, 0.35, 0.33, 0.31, 0.29, 0.27, 0.26, 0.25, 0.25, //
    0.26, 0.27, 0.28, 0.29, 0.30, 0.31, 0.32, 0.33, 0.33, 0.34, 0.34, 0.34,
];

/// Hour-of-day targets for the traffic index: commuter double peak.
const TRAFFIC_MEANS: [f64; 24] = [
    0.10, 0.07, 0.05, 0.05, 0.08, 0.20, 0.45, 0.70, 0.75, 0.55, 0.45, 0.45, //
    0.50, 0.48, 0.45, 0.50, 0.60, 0.75, 0.70, 0.50, 0.35, 0.25, 0.18, 0.12,
];

/// Tank temperature targets, hundredths of °C: cool nights, warm afternoons.
const TEMP_MEANS_CDEG: [i32; 24] = [
    1380, 1350, 1330, 1310, 1300, 1310, 1350, 1420, 1500, 1580, 1660, 1730, //
    1780, 1810, 1820, 1800, 1760, 1700, 1630, 1560, 1500, 1460, 1420, 1400,
];

fn quantize_bp(x: f64) -> u16 {
    (x.clamp(0.0, 1.0) * 10_000.0).round() as u16
}

/// Whether `day` carries the local-event flag: a pure function of the seed,
/// so no walk state is needed.
pub(crate) fn event_day(seed: u64, day: u32, prob: f64) -> bool {
    Rng64::substream(seed, tag::EVENT, day as u64).next_f64() < prob
}

fn event_flag_for(seed: u64, hour_index: u32, prob: f64) -> bool {
    let hour_of_day = hour_index % 24;
    (8..=20).contains(&hour_of_day) && event_day(seed, hour_index / 24, prob)
}

/// State for hour zero: indices and temperature start on their hour-0
/// means, wholesale at its configured start, the competitor at wholesale
/// plus the mean margin.
pub fn initial_exogenous(params: &StationParams, seed: u64) -> ExogenousState {
    let e = &params.exo;
    ExogenousState {
        hour_of_day: 0,
        day_of_week: 0,
        weather_bp: quantize_bp(WEATHER_MEANS[0]),
        traffic_bp: quantize_bp(TRAFFIC_MEANS[0]),
        competitor_price: Price(e.wholesale_start.mills() + e.competitor_margin_mean.mills()),
        wholesale_cost: e.wholesale_start,
        temp_cdeg: 1_500,
        event_flag: event_flag_for(seed, 0, e.event_day_prob),
    }
}

/// Advance the market state to `next_hour_index`. The draw order inside the
/// hour's substream is fixed (weather, traffic, wholesale, margin,
/// temperature) and is part of the determinism contract.
pub fn step_exogenous(
    state: &ExogenousState,
    params: &StationParams,
    seed: u64,
    next_hour_index: u32,
) -> ExogenousState {
    let e = &params.exo;
    let mut rng = Rng64::substream(seed, tag::EXO, next_hour_index as u64);

    let hour_of_day = (next_hour_index % 24) as u8;
    let day_of_week = ((next_hour_index / 24) % 7) as u8;
    let h = hour_of_day as usize;

    let weather = {
        let v = state.weather_index();
        let target = WEATHER_MEANS[h];
        let stepped = v + e.weather_reversion * (target - v) + rng.gaussian(0.0, e.weather_step_sd);
        quantize_bp(stepped)
    };

    let traffic = {
        let v = state.traffic_index();
        let target = TRAFFIC_MEANS[h];
        let stepped = v + e.traffic_reversion * (target - v) + rng.gaussian(0.0, e.traffic_step_sd);
        quantize_bp(stepped)
    };

    // Geometric walk, hourly step calibrated so 24 steps compound to the
    // configured daily sd.
    let wholesale = {
        let hourly_sd = e.wholesale_daily_sd / (24.0f64).sqrt();
        let factor = rng.gaussian(0.0, hourly_sd).exp();
        let mills = (state.wholesale_cost.mills() as f64 * factor).round() as i64;
        Price(mills.max(1))
    };

    // Competitor margin reverts toward its mean at a fixed 0.1/hour; the
    // competitor never posts below wholesale.
    let competitor = {
        let margin = (state.competitor_price.mills() - state.wholesale_cost.mills()) as f64;
        let target = e.competitor_margin_mean.mills() as f64;
        let stepped =
            margin + 0.1 * (target - margin) + rng.gaussian(0.0, e.competitor_margin_step_sd);
        let m = stepped.round().max(0.0) as i64;
        Price(wholesale.mills() + m)
    };

    let temp_cdeg = {
        let t = state.temp_cdeg as f64;
        let target = TEMP_MEANS_CDEG[h] as f64;
        (t + 0.05 * (target - t) + rng.gaussian(0.0, 30.0)).round() as i32
    };

    ExogenousState {
        hour_of_day,
        day_of_week,
        weather_bp: weather,
        traffic_bp: traffic,
        competitor_price: competitor,
        wholesale_cost: wholesale,
        temp_cdeg,
        event_flag: event_flag_for(seed, next_hour_index, e.event_day_prob),
    }
}
