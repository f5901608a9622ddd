//! Station digital twin: market state, customer flow, tank physics.
//!
//! The simulator advances in one-hour ticks. Each tick steps the exogenous
//! market state (weather, traffic, competitor and wholesale prices), asks a
//! pricing policy for the posted price, draws customer visits from the
//! resulting demand rate, moves fuel out of the tank (and deliveries in),
//! and records everything in an [`EpisodeLog`].
//!
//! Two invariants are load-bearing and enforced by construction:
//!
//! * **Determinism** — every draw comes from per-(subsystem, hour) derived
//!   [`Rng64`](crate::rng::Rng64) streams, so one seed pins the run, and a
//!   change in one subsystem's draw count cannot shift another's sequence.
//! * **Conservation** — tank levels, sales, deliveries, and injected leaks
//!   are integer thousandths of a gallon. Over any run,
//!   `Σ deliveries − Σ sales − Σ leaked == final − initial level` exactly.

mod catalog;
mod demand;
mod episode;
mod exogenous;
mod retention;

pub use catalog::{
    basket_margin, item, user_preferences, CatalogItem, UserPrefs, CATALOG, N_CATEGORIES, N_ITEMS,
};
pub use demand::demand_rate;
pub use episode::{
    run_episode, vibration_frame, InventoryContext, InventoryDecider, PricingContext,
    PricingPolicy, Simulation, VIB_FRAME_LEN, VIB_SAMPLE_HZ,
};
pub use exogenous::{initial_exogenous, step_exogenous};
pub use retention::RetentionModel;

use crate::units::{Money, Price, Volume};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Substream tags: one namespace per stochastic subsystem.
pub(crate) mod tag {
    pub const EXO: u32 = 1;
    pub const ARRIVALS: u32 = 2;
    pub const VISITS: u32 = 3;
    pub const METER: u32 = 4;
    pub const VIBRATION: u32 = 5;
    pub const EVENT: u32 = 6;
    pub const PREFS: u32 = 7;
    pub const EPISODE: u32 = 8;
    pub const VEHICLE_INIT: u32 = 9;
    pub const FRAUD: u32 = 10;
    pub const EXPLORE: u32 = 11;
}

#[derive(Debug, Error)]
pub enum SimError {
    /// A station parameter violates its documented range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam {
        field: &'static str,
        reason: String,
    },
    /// Episodes shorter than one day have no day boundary to review
    /// inventory on.
    #[error("horizon must be at least 24 hours, got {0}")]
    HorizonTooShort(u32),
}

/// Checkout hardware installed at the station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckoutMode {
    /// Attendant-operated payment for every customer.
    Manual,
    /// Camera/RFID recognition; unrecognized customers fall back to the
    /// manual lane.
    Smart,
}

/// Random-walk coefficients for the exogenous market state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExoParams {
    /// Mean-reversion rate per hour for the weather index.
    pub weather_reversion: f64,
    /// Gaussian step sd per hour for the weather index.
    pub weather_step_sd: f64,
    /// Mean-reversion rate per hour for the traffic index.
    pub traffic_reversion: f64,
    /// Gaussian step sd per hour for the traffic index.
    pub traffic_step_sd: f64,
    /// Wholesale cost at hour zero, $/gal.
    pub wholesale_start: Price,
    /// Daily sd of the geometric wholesale walk (0.005 = 0.5%).
    pub wholesale_daily_sd: f64,
    /// Competitor margin over wholesale reverts toward this, $/gal.
    pub competitor_margin_mean: Price,
    /// Gaussian step sd of the competitor margin walk, mills/hour.
    pub competitor_margin_step_sd: f64,
    /// Probability that a day carries a local-event flag.
    pub event_day_prob: f64,
}

impl Default for ExoParams {
    fn default() -> Self {
        ExoParams {
            weather_reversion: 0.1,
            weather_step_sd: 0.05,
            traffic_reversion: 0.1,
            traffic_step_sd: 0.05,
            wholesale_start: Price(2_750),
            wholesale_daily_sd: 0.005,
            competitor_margin_mean: Price(250),
            competitor_margin_step_sd: 5.0,
            event_day_prob: 0.06,
        }
    }
}

/// Checkout service-time model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckoutParams {
    pub mode: CheckoutMode,
    /// Probability the smart lane recognizes a customer.
    pub recognition_success_prob: f64,
    /// Mean manual service time, seconds (exponential).
    pub manual_mean_s: f64,
    /// Mean smart-lane service time, seconds (exponential).
    pub smart_mean_s: f64,
}

impl Default for CheckoutParams {
    fn default() -> Self {
        CheckoutParams {
            mode: CheckoutMode::Smart,
            recognition_success_prob: 0.979,
            manual_mean_s: 150.0,
            smart_mean_s: 55.0,
        }
    }
}

/// Everything fixed about the station and its demand environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationParams {
    /// Peak arrival rate, customers/hour, scaled by the daypart profile.
    pub base_arrival_rate: f64,
    /// Hour-of-day multipliers on the base rate (index = hour 0..23).
    pub daypart_multipliers: [f64; 24],
    /// Demand damping per unit of weather index (1 = rate reaches zero in
    /// the worst weather).
    pub weather_damping: f64,
    /// Demand gain per unit of traffic index.
    pub traffic_gain: f64,
    /// Exponential price sensitivity per dollar of gap over the competitor.
    pub elasticity_beta: f64,
    /// Mean fill volume per customer, gallons.
    pub gallons_mean: f64,
    /// Fill volume sd, gallons. Draws are truncated to stay positive, so
    /// `gallons_mean - 3 * gallons_sd` must be positive.
    pub gallons_sd: f64,
    /// Probability a fueling customer also buys from the shop.
    pub shop_attach_prob: f64,
    /// Tank capacity, gallons.
    pub tank_capacity: Volume,
    /// Tank level at hour zero, gallons.
    pub initial_level: Volume,
    /// Hours between placing an order and the truck arriving.
    pub delivery_lead_time: u32,
    /// Size of the recurring-customer population.
    pub n_users: u32,
    /// Number of dispensers on the forecourt.
    pub n_dispensers: u32,
    /// Probability a visit reports vehicle diagnostics (battery, tires).
    pub vehicle_telemetry_prob: f64,
    /// Sd of the hourly sales-totalizer error, gallons. Models pump meter
    /// calibration drift plus uncorrected thermal expansion; the tank level
    /// gauge itself is exact.
    pub meter_noise_sd_gal: f64,
    pub checkout: CheckoutParams,
    pub exo: ExoParams,
}

/// Hour-of-day profile for a commuter-corridor station: morning and evening
/// rush peaks, quiet overnight. The base rate is the peak.
pub const DEFAULT_DAYPARTS: [f64; 24] = [
    0.06, 0.05, 0.04, 0.04, 0.05, 0.15, // 0-5
    0.45, 0.85, 1.00, 0.70, 0.50, 0.50, // 6-11
    0.55, 0.50, 0.45, 0.50, 0.70, 0.95, // 12-17
    0.85, 0.55, 0.35, 0.25, 0.15, 0.09, // 18-23
];

impl Default for StationParams {
    fn default() -> Self {
        StationParams {
            base_arrival_rate: 20.0,
            daypart_multipliers: DEFAULT_DAYPARTS,
            weather_damping: 0.4,
            traffic_gain: 0.5,
            elasticity_beta: 2.0,
            gallons_mean: 10.0,
            gallons_sd: 2.0,
            shop_attach_prob: 0.35,
            tank_capacity: Volume(12_000_000),
            initial_level: Volume(8_000_000),
            delivery_lead_time: 4,
            n_users: 200,
            n_dispensers: 8,
            vehicle_telemetry_prob: 0.6,
            meter_noise_sd_gal: 2.0,
            checkout: CheckoutParams::default(),
            exo: ExoParams::default(),
        }
    }
}

impl StationParams {
    /// Validate every documented parameter range; the field name in the
    /// error is the config key.
    pub fn validate(&self) -> Result<(), SimError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> SimError {
            SimError::InvalidParam {
                field,
                reason: reason.into(),
            }
        }
        if !(self.base_arrival_rate > 0.0) {
            return Err(bad("station.base_arrival_rate", "must be positive"));
        }
        for (h, m) in self.daypart_multipliers.iter().enumerate() {
            if !(*m > 0.0) {
                return Err(bad(
                    "station.daypart_multipliers",
                    format!("hour {h} multiplier must be positive, got {m}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.weather_damping) {
            return Err(bad("station.weather_damping", "must lie in [0, 1]"));
        }
        if !(self.traffic_gain >= 0.0) {
            return Err(bad("station.traffic_gain", "must be non-negative"));
        }
        if !(self.elasticity_beta >= 0.0) {
            return Err(bad("station.elasticity_beta", "must be non-negative"));
        }
        if !(self.gallons_sd >= 0.0) {
            return Err(bad("station.gallons_sd", "must be non-negative"));
        }
        if !(self.gallons_mean - 3.0 * self.gallons_sd > 0.0) {
            return Err(bad(
                "station.gallons_mean",
                "mean minus three sd must stay positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.shop_attach_prob) {
            return Err(bad("station.shop_attach_prob", "must lie in [0, 1]"));
        }
        if self.tank_capacity.mgal() <= 0 {
            return Err(bad("station.tank_capacity", "must be positive"));
        }
        if self.initial_level.mgal() < 0 || self.initial_level > self.tank_capacity {
            return Err(bad(
                "station.initial_level",
                "must lie within [0, tank_capacity]",
            ));
        }
        if self.delivery_lead_time < 1 {
            return Err(bad("station.delivery_lead_time", "must be at least 1 hour"));
        }
        if self.n_users == 0 {
            return Err(bad("station.n_users", "must be at least 1"));
        }
        if self.n_dispensers == 0 {
            return Err(bad("station.n_dispensers", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.vehicle_telemetry_prob) {
            return Err(bad("station.vehicle_telemetry_prob", "must lie in [0, 1]"));
        }
        if !(self.meter_noise_sd_gal >= 0.0) {
            return Err(bad("station.meter_noise_sd_gal", "must be non-negative"));
        }
        let c = &self.checkout;
        if !(0.0..=1.0).contains(&c.recognition_success_prob) {
            return Err(bad(
                "station.checkout.recognition_success_prob",
                "must lie in [0, 1]",
            ));
        }
        if !(c.manual_mean_s > 0.0) || !(c.smart_mean_s > 0.0) {
            return Err(bad("station.checkout", "service means must be positive"));
        }
        if c.smart_mean_s >= c.manual_mean_s {
            return Err(bad(
                "station.checkout.smart_mean_s",
                "smart mean must be below manual mean",
            ));
        }
        let e = &self.exo;
        if !(0.0..=1.0).contains(&e.weather_reversion) || !(0.0..=1.0).contains(&e.traffic_reversion)
        {
            return Err(bad("station.exo", "reversion rates must lie in [0, 1]"));
        }
        if e.weather_step_sd < 0.0
            || e.traffic_step_sd < 0.0
            || e.wholesale_daily_sd < 0.0
            || e.competitor_margin_step_sd < 0.0
        {
            return Err(bad("station.exo", "step sds must be non-negative"));
        }
        if e.wholesale_start.mills() <= 0 {
            return Err(bad("station.exo.wholesale_start", "must be positive"));
        }
        if e.competitor_margin_mean.mills() < 0 {
            return Err(bad(
                "station.exo.competitor_margin_mean",
                "must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&e.event_day_prob) {
            return Err(bad("station.exo.event_day_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Market and environment state for one hour. All fields are quantized
/// (indices in basis points, prices in mills) so a telemetry round trip
/// reproduces the state bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExogenousState {
    pub hour_of_day: u8,
    pub day_of_week: u8,
    /// Weather severity in basis points: 0 = clear, 10000 = worst.
    pub weather_bp: u16,
    /// Road traffic intensity in basis points.
    pub traffic_bp: u16,
    /// Competitor's posted price.
    pub competitor_price: Price,
    /// Our wholesale cost.
    pub wholesale_cost: Price,
    /// Tank temperature, hundredths of °C (observational).
    pub temp_cdeg: i32,
    /// Local event day (roadworks, game day) during business hours.
    pub event_flag: bool,
}

impl ExogenousState {
    pub fn weather_index(&self) -> f64 {
        self.weather_bp as f64 / 10_000.0
    }

    pub fn traffic_index(&self) -> f64 {
        self.traffic_bp as f64 / 10_000.0
    }
}

/// What a customer did during one visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitKind {
    /// Dispensed fuel (possibly a partial fill if the tank ran low).
    Fuel,
    /// Arrived to an empty tank and left; a lost sale.
    TurnedAway,
}

/// Vehicle diagnostics transmitted during a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleReading {
    /// Battery voltage, millivolts.
    pub battery_mv: i32,
    /// Tire pressure, hundredths of psi (lowest of the four tires).
    pub tire_cpsi: i32,
}

/// One customer visit. `gallons` is zero only for turn-aways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerVisit {
    pub hour: u32,
    /// Arrival offset within the hour, milliseconds.
    pub offset_ms: u32,
    pub user_id: u32,
    pub dispenser: u8,
    pub kind: VisitKind,
    pub gallons: Volume,
    pub unit_price: Price,
    /// Fuel charge at the pump, rounded to the cent.
    pub fuel_charge: Money,
    /// Wholesale cost of the dispensed volume, rounded to the cent.
    pub fuel_cost: Money,
    /// Shop items bought (catalog ids, possibly empty, duplicates allowed).
    pub basket: Vec<u16>,
    /// Payment interaction time, milliseconds (zero for turn-aways).
    pub checkout_ms: u32,
    pub vehicle: Option<VehicleReading>,
}

/// A dispenser flow event with no matching authorization; injected by the
/// fraud fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanFlow {
    pub hour: u32,
    pub offset_ms: u32,
    pub dispenser: u8,
    pub gallons: Volume,
}

/// Fault classes the scenario can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Tank loses `magnitude` (fraction) of its level every hour.
    Leak,
    /// A dispenser motor develops a tone at `magnitude` × baseline amplitude.
    VibrationFault,
    /// A vehicle's battery voltage drops by `magnitude` volts and stays low.
    Battery,
    /// A vehicle's tire deflates by `magnitude` psi per day.
    Tire,
    /// Unauthorized dispensing: `magnitude` orphan flow events per day.
    Fraud,
}

/// One injected fault. `target` selects the dispenser (vibration, fraud) or
/// recurring-customer id (battery, tire); it is ignored for leaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub start_hour: u32,
    pub magnitude: f64,
    #[serde(default)]
    pub target: u32,
}

/// Aggregates for one simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour: u32,
    pub exo: ExogenousState,
    pub posted_price: Price,
    /// Price move this hour vs. the previous posted price, mills.
    pub price_delta: i64,
    /// True when the policy's price was clamped up to wholesale cost.
    pub clamped: bool,
    pub visits: u32,
    pub turned_away: u32,
    /// Ground-truth gallons dispensed (sum of visit records).
    pub gallons_sold: Volume,
    pub fuel_revenue: Money,
    pub fuel_cost: Money,
    pub shop_revenue: Money,
    pub shop_cost: Money,
    /// Totalizer reading for the hour: true sales plus meter error.
    pub metered_sales: Volume,
    /// Delivery volume applied this hour.
    pub delivered: Volume,
    /// Volume lost to an injected leak this hour.
    pub leaked: Volume,
    /// Ground-truth tank level at end of hour.
    pub tank_level: Volume,
    /// Order placed this hour: quantity and arrival hour.
    pub order_placed: Option<(Volume, u32)>,
}

/// Complete, replayable record of one simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    /// Digest of the fully-defaulted scenario this episode ran under.
    pub config_digest: u64,
    pub horizon_hours: u32,
    /// Faults the episode ran with. Stored so that everything derived from
    /// the run — vibration frames included — can be recomputed from the log
    /// alone.
    pub faults: Vec<FaultSpec>,
    pub initial_level: Volume,
    pub hours: Vec<HourRecord>,
    pub visits: Vec<CustomerVisit>,
    pub orphan_flows: Vec<OrphanFlow>,
}

impl EpisodeLog {
    /// Visits that fall in `hour`, in arrival order. The visit list is
    /// sorted by (hour, offset) at construction, so this is a slice scan.
    pub fn visits_in_hour(&self, hour: u32) -> impl Iterator<Item = &CustomerVisit> {
        self.visits.iter().filter(move |v| v.hour == hour)
    }

    /// Ground-truth hourly demand series in gallons, the forecasting target.
    pub fn demand_series(&self) -> Vec<f64> {
        self.hours
            .iter()
            .map(|h| h.gallons_sold.as_gallons())
            .collect()
    }

    /// Exogenous state series aligned with the demand series.
    pub fn exo_series(&self) -> Vec<ExogenousState> {
        self.hours.iter().map(|h| h.exo).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        StationParams::default().validate().unwrap();
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut p = StationParams::default();
        p.gallons_sd = 5.0; // mean 10 − 3·5 < 0
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("station.gallons_mean"), "{err}");

        let mut p = StationParams::default();
        p.initial_level = Volume(99_000_000);
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("station.initial_level"), "{err}");

        let mut p = StationParams::default();
        p.checkout.smart_mean_s = 200.0;
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("smart_mean_s"), "{err}");
    }
}
