//! The hourly simulation engine.
//!
//! [`Simulation`] is a stepper: construct it from station parameters, a
//! seed, and a fault schedule, then feed it one posted price per hour. It
//! owns the tank, the outstanding fuel order, per-customer vehicle state,
//! and the growing [`EpisodeLog`]. [`run_episode`] drives the stepper with
//! a pricing policy and an inventory decider for a fixed horizon, reviewing
//! inventory at every day boundary.
//!
//! Hour order of operations (fixed; changing it changes every seeded run):
//! inventory review (day boundaries) → price posting (clamped at wholesale)
//! → customer visits → delivery arrival → leak → record.

use super::catalog::{basket_margin, sample_basket, user_preferences, UserPrefs};
use super::demand::demand_rate;
use super::exogenous::{initial_exogenous, step_exogenous};
use super::{
    tag, CheckoutMode, CustomerVisit, EpisodeLog, ExogenousState, FaultKind, FaultSpec,
    HourRecord, OrphanFlow, SimError, StationParams, VehicleReading, VisitKind,
};
use crate::rng::Rng64;
use crate::units::{transaction_cents, Money, Price, Volume};

/// Samples per vibration frame (power of two, required by the spectral
/// monitor's FFT).
pub const VIB_FRAME_LEN: usize = 1024;
/// Vibration sampling rate, Hz.
pub const VIB_SAMPLE_HZ: f64 = 1_000.0;

/// Everything a pricing policy may look at when posting the hour's price.
pub struct PricingContext<'a> {
    pub hour: u32,
    pub exo: &'a ExogenousState,
    /// Price posted last hour (hour 0: the competitor's opening price).
    pub prev_posted: Price,
    pub params: &'a StationParams,
}

/// Hourly price-setting strategy.
pub trait PricingPolicy {
    fn post_price(&mut self, ctx: &PricingContext<'_>) -> Price;
}

/// State visible to an inventory decider at a day-boundary review.
pub struct InventoryContext<'a> {
    pub hour: u32,
    pub tank_level: Volume,
    /// History up to (not including) this hour.
    pub log: &'a EpisodeLog,
    pub params: &'a StationParams,
}

/// Decides order quantities at day boundaries. Consulted only when no
/// order is outstanding, which enforces the one-outstanding-order rule.
pub trait InventoryDecider {
    fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume>;
}

/// Per-customer vehicle condition, advanced on each visit.
#[derive(Debug, Clone, Copy)]
struct VehicleState {
    battery_base_mv: f64,
    battery_mv: f64,
    tire_cpsi: f64,
}

impl VehicleState {
    fn init(seed: u64, user_id: u32) -> Self {
        let mut rng = Rng64::substream(seed, tag::VEHICLE_INIT, user_id as u64);
        let base = 12_600.0 + rng.gaussian(0.0, 100.0);
        VehicleState {
            battery_base_mv: base,
            battery_mv: base,
            tire_cpsi: 3_200.0 + rng.gaussian(0.0, 150.0),
        }
    }
}

/// The hour-stepping digital twin.
pub struct Simulation<'a> {
    params: &'a StationParams,
    seed: u64,
    faults: Vec<FaultSpec>,
    hour: u32,
    exo: ExogenousState,
    tank_level: Volume,
    prev_posted: Price,
    /// Outstanding order: (quantity, arrival hour).
    pending: Option<(Volume, u32)>,
    /// Order placed at the current (not yet simulated) hour, waiting to be
    /// attached to that hour's record.
    order_note: Option<(Volume, u32)>,
    prefs: Vec<UserPrefs>,
    vehicles: Vec<VehicleState>,
    log: EpisodeLog,
}

impl<'a> Simulation<'a> {
    pub fn new(
        params: &'a StationParams,
        seed: u64,
        faults: &[FaultSpec],
    ) -> Result<Self, SimError> {
        params.validate()?;
        let exo = initial_exogenous(params, seed);
        let prefs = (0..params.n_users)
            .map(|u| user_preferences(seed, u))
            .collect();
        let vehicles = (0..params.n_users)
            .map(|u| VehicleState::init(seed, u))
            .collect();
        Ok(Simulation {
            params,
            seed,
            faults: faults.to_vec(),
            hour: 0,
            prev_posted: exo.competitor_price,
            exo,
            tank_level: params.initial_level,
            pending: None,
            order_note: None,
            prefs,
            vehicles,
            log: EpisodeLog {
                seed,
                config_digest: 0,
                horizon_hours: 0,
                faults: faults.to_vec(),
                initial_level: params.initial_level,
                hours: Vec::new(),
                visits: Vec::new(),
                orphan_flows: Vec::new(),
            },
        })
    }

    /// Stamp the log with the scenario digest it was produced under.
    pub fn set_config_digest(&mut self, digest: u64) {
        self.log.config_digest = digest;
    }

    /// The hour about to be simulated.
    pub fn hour(&self) -> u32 {
        self.hour
    }

    /// Market state for the hour about to be simulated.
    pub fn exo(&self) -> &ExogenousState {
        &self.exo
    }

    pub fn tank_level(&self) -> Volume {
        self.tank_level
    }

    pub fn prev_posted(&self) -> Price {
        self.prev_posted
    }

    /// Outstanding (undelivered) order volume.
    pub fn pending_volume(&self) -> Volume {
        self.pending.map(|(q, _)| q).unwrap_or(Volume::ZERO)
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    /// Place a fuel order arriving `delivery_lead_time` hours from now.
    /// Returns false (and places nothing) if an order is already
    /// outstanding or the quantity is not positive.
    pub fn place_order(&mut self, qty: Volume) -> bool {
        if self.pending.is_some() || qty.mgal() <= 0 {
            return false;
        }
        let eta = self.hour + self.params.delivery_lead_time;
        self.pending = Some((qty, eta));
        self.order_note = Some((qty, eta));
        true
    }

    fn fault_leak_rate(&self, hour: u32) -> f64 {
        self.faults
            .iter()
            .filter(|f| f.kind == FaultKind::Leak && hour >= f.start_hour)
            .map(|f| f.magnitude)
            .sum()
    }

    fn fault_battery_drop_mv(&self, user: u32, hour: u32) -> f64 {
        self.faults
            .iter()
            .filter(|f| {
                f.kind == FaultKind::Battery && f.target == user && hour >= f.start_hour
            })
            .map(|f| f.magnitude * 1_000.0)
            .sum()
    }

    fn fault_tire_drop_cpsi(&self, user: u32, hour: u32) -> f64 {
        self.faults
            .iter()
            .filter(|f| f.kind == FaultKind::Tire && f.target == user && hour >= f.start_hour)
            .map(|f| f.magnitude * 100.0 * ((hour - f.start_hour) as f64 / 24.0))
            .sum()
    }

    /// Fraud faults inject `magnitude` orphan flow events per day for three
    /// days, starting at `start_hour`.
    fn fraud_flow_count(&self, hour: u32) -> Vec<(u8, u32)> {
        let mut out = Vec::new();
        for f in &self.faults {
            if f.kind != FaultKind::Fraud {
                continue;
            }
            if hour >= f.start_hour && hour < f.start_hour + 72 && (hour - f.start_hour) % 24 == 0
            {
                out.push((f.target as u8, f.magnitude.round().max(1.0) as u32));
            }
        }
        out
    }

    /// Simulate one hour at `posted` (clamped to wholesale cost) and return
    /// the finished record.
    pub fn step_hour(&mut self, posted: Price) -> &HourRecord {
        let h = self.hour;
        let params = self.params;
        let wholesale = self.exo.wholesale_cost;

        let clamped = posted < wholesale;
        let price = if clamped { wholesale } else { posted };
        let price_delta = price.mills() - self.prev_posted.mills();

        // --- customer visits ---
        let rate = demand_rate(price, &self.exo, params);
        let n = Rng64::substream(self.seed, tag::ARRIVALS, h as u64).poisson(rate) as u32;
        let mut vrng = Rng64::substream(self.seed, tag::VISITS, h as u64);
        let mut offsets: Vec<u32> = (0..n)
            .map(|_| vrng.next_below(3_600_000) as u32)
            .collect();
        offsets.sort_unstable();

        let mut visits = 0u32;
        let mut turned_away = 0u32;
        let mut gallons_sold = Volume::ZERO;
        let mut fuel_revenue = Money::ZERO;
        let mut fuel_cost = Money::ZERO;
        let mut shop_revenue = Money::ZERO;
        let mut shop_cost = Money::ZERO;

        for offset_ms in offsets {
            visits += 1;
            let user_id = vrng.next_below(params.n_users as u64) as u32;
            let dispenser = vrng.next_below(params.n_dispensers as u64) as u8;

            if self.tank_level.is_zero() {
                turned_away += 1;
                self.log.visits.push(CustomerVisit {
                    hour: h,
                    offset_ms,
                    user_id,
                    dispenser,
                    kind: VisitKind::TurnedAway,
                    gallons: Volume::ZERO,
                    unit_price: price,
                    fuel_charge: Money::ZERO,
                    fuel_cost: Money::ZERO,
                    basket: Vec::new(),
                    checkout_ms: 0,
                    vehicle: None,
                });
                continue;
            }

            // Fill volume: positive-truncated Gaussian (redraw; the
            // parameter invariant mean − 3sd > 0 makes retries rare).
            let mut gallons = 0.0;
            for _ in 0..64 {
                gallons = vrng.gaussian(params.gallons_mean, params.gallons_sd);
                if gallons > 0.0 {
                    break;
                }
            }
            if gallons <= 0.0 {
                gallons = params.gallons_mean;
            }
            let desired = Volume::from_gallons(gallons).max(Volume(1));
            let dispensed = desired.min(self.tank_level);
            self.tank_level -= dispensed;

            let fuel_charge = transaction_cents(price, dispensed);
            let cost = transaction_cents(wholesale, dispensed);
            gallons_sold += dispensed;
            fuel_revenue += fuel_charge;
            fuel_cost += cost;

            let basket = if vrng.next_f64() < params.shop_attach_prob {
                sample_basket(&self.prefs[user_id as usize], &mut vrng)
            } else {
                Vec::new()
            };
            let (b_rev, b_margin) = basket_margin(&basket);
            shop_revenue += b_rev;
            shop_cost += b_rev - b_margin;

            let checkout_s = match params.checkout.mode {
                CheckoutMode::Manual => vrng.exponential(params.checkout.manual_mean_s),
                CheckoutMode::Smart => {
                    if vrng.next_f64() < params.checkout.recognition_success_prob {
                        vrng.exponential(params.checkout.smart_mean_s)
                    } else {
                        vrng.exponential(params.checkout.manual_mean_s)
                    }
                }
            };
            let checkout_ms = (checkout_s * 1_000.0).round().min(3_600_000.0) as u32;

            let vehicle = if vrng.next_f64() < params.vehicle_telemetry_prob {
                let battery_drop = self.fault_battery_drop_mv(user_id, h);
                let tire_drop = self.fault_tire_drop_cpsi(user_id, h);
                let v = &mut self.vehicles[user_id as usize];
                v.battery_mv =
                    v.battery_base_mv + 0.9 * (v.battery_mv - v.battery_base_mv)
                        + vrng.gaussian(0.0, 20.0);
                v.tire_cpsi += 0.02 * (3_200.0 - v.tire_cpsi) + vrng.gaussian(0.0, 10.0);
                Some(VehicleReading {
                    battery_mv: (v.battery_mv - battery_drop).round() as i32,
                    tire_cpsi: (v.tire_cpsi - tire_drop).max(1_500.0).round() as i32,
                })
            } else {
                None
            };

            self.log.visits.push(CustomerVisit {
                hour: h,
                offset_ms,
                user_id,
                dispenser,
                kind: VisitKind::Fuel,
                gallons: dispensed,
                unit_price: price,
                fuel_charge,
                fuel_cost: cost,
                basket,
                checkout_ms,
                vehicle,
            });
        }

        // --- totalizer reading: truth plus meter/thermal error ---
        // The error lives on the cumulative totalizer REGISTER, not on each
        // hour independently: reading(h) = true_cumulative(h) + err(h), so
        // the hourly sales figure carries err(h) − err(h−1). Differenced
        // errors telescope — they cannot accumulate into a phantom drift,
        // which is exactly why a mass-balance monitor can run a tight drift
        // threshold without false leak alarms. err(−1) is zero: the register
        // is calibrated at commissioning.
        let metered_sales = {
            let register_err = |hour: i64| -> f64 {
                if hour < 0 {
                    return 0.0;
                }
                Rng64::substream(self.seed, tag::METER, hour as u64)
                    .gaussian(0.0, params.meter_noise_sd_gal)
            };
            let noise = register_err(h as i64) - register_err(h as i64 - 1);
            (gallons_sold + Volume::from_gallons(noise)).max(Volume::ZERO)
        };

        // --- delivery arrival (after the hour's sales) ---
        let mut delivered = Volume::ZERO;
        if let Some((qty, eta)) = self.pending {
            if eta == h {
                let applied = qty.min(self.params.tank_capacity - self.tank_level);
                self.tank_level += applied;
                delivered = applied;
                self.pending = None;
            }
        }

        // --- injected leak, proportional to the standing level ---
        let leak_rate = self.fault_leak_rate(h);
        let leaked = if leak_rate > 0.0 {
            let lost = Volume((self.tank_level.mgal() as f64 * leak_rate).round() as i64)
                .min(self.tank_level)
                .max(Volume::ZERO);
            self.tank_level -= lost;
            lost
        } else {
            Volume::ZERO
        };

        // --- unauthorized dispenser activity (flow signal only; the pump
        //     is in bypass/test so no metered sale is booked) ---
        for (dispenser, count) in self.fraud_flow_count(h) {
            let mut frng = Rng64::substream(self.seed, tag::FRAUD, h as u64);
            for _ in 0..count {
                let offset_ms = frng.next_below(3_600_000) as u32;
                let gallons = Volume::from_gallons(5.0 + frng.next_f64() * 10.0);
                self.log.orphan_flows.push(OrphanFlow {
                    hour: h,
                    offset_ms,
                    dispenser,
                    gallons,
                });
            }
        }

        self.log.hours.push(HourRecord {
            hour: h,
            exo: self.exo,
            posted_price: price,
            price_delta,
            clamped,
            visits,
            turned_away,
            gallons_sold,
            fuel_revenue,
            fuel_cost,
            shop_revenue,
            shop_cost,
            metered_sales,
            delivered,
            leaked,
            tank_level: self.tank_level,
            order_placed: self.order_note.take(),
        });
        self.log.horizon_hours = h + 1;

        self.prev_posted = price;
        self.hour = h + 1;
        self.exo = step_exogenous(&self.exo, params, self.seed, self.hour);

        self.log.hours.last().expect("just pushed")
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }
}

/// Deterministic vibration frame for one dispenser on one day: three fixed
/// rotor tones plus white noise, quantized to i16 at ±4096 per unit.
/// An active vibration fault on that dispenser adds a 120 Hz tone at
/// `magnitude` × the primary tone's amplitude.
pub fn vibration_frame(seed: u64, day: u32, dispenser: u8, faults: &[FaultSpec]) -> Vec<i16> {
    let mut rng = Rng64::substream(
        seed,
        tag::VIBRATION,
        (day as u64) << 8 | dispenser as u64,
    );
    let fault_amp: f64 = faults
        .iter()
        .filter(|f| {
            f.kind == FaultKind::VibrationFault
                && f.target == dispenser as u32
                && day * 24 >= f.start_hour
        })
        .map(|f| f.magnitude)
        .sum();
    let tones = [(60.0, 1.0), (180.0, 0.6), (300.0, 0.3)];
    (0..VIB_FRAME_LEN)
        .map(|n| {
            let t = n as f64 / VIB_SAMPLE_HZ;
            let mut x = 0.0;
            for (f, a) in tones {
                x += a * (std::f64::consts::TAU * f * t).sin();
            }
            if fault_amp > 0.0 {
                x += fault_amp * (std::f64::consts::TAU * 120.0 * t).sin();
            }
            x += rng.gaussian(0.0, 0.2);
            (x * 4_096.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect()
}

/// Drive a full episode: hourly pricing from `pricing`, day-boundary
/// inventory reviews from `inventory`, deliveries landing exactly
/// `delivery_lead_time` hours after each order.
pub fn run_episode(
    params: &StationParams,
    seed: u64,
    faults: &[FaultSpec],
    config_digest: u64,
    pricing: &mut dyn PricingPolicy,
    inventory: &mut dyn InventoryDecider,
    horizon_hours: u32,
) -> Result<EpisodeLog, SimError> {
    if horizon_hours < 24 {
        return Err(SimError::HorizonTooShort(horizon_hours));
    }
    let mut sim = Simulation::new(params, seed, faults)?;
    sim.set_config_digest(config_digest);

    for h in 0..horizon_hours {
        if h % 24 == 0 && sim.pending.is_none() {
            let decision = {
                let ctx = InventoryContext {
                    hour: h,
                    tank_level: sim.tank_level,
                    log: &sim.log,
                    params,
                };
                inventory.decide(&ctx)
            };
            if let Some(qty) = decision {
                sim.place_order(qty);
            }
        }

        let posted = {
            let ctx = PricingContext {
                hour: h,
                exo: &sim.exo,
                prev_posted: sim.prev_posted,
                params,
            };
            pricing.post_price(&ctx)
        };
        sim.step_hour(posted);
    }

    Ok(sim.into_log())
}
