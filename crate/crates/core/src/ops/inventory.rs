//! Fuel replenishment: the reorder-point policy and the day-boundary
//! planner the simulator consults.
//!
//! Two policies live behind one type. `forecast_driven` orders up to a
//! target whenever the inventory position falls below a reorder point
//! sized for the *protection window* — the delivery lead time plus one
//! review period, since reviews happen only once a day — with a safety
//! stock of z standard errors of the window forecast. `fixed_schedule`
//! orders up to the target on a wall-clock cadence regardless of level.

use serde::{Deserialize, Serialize};

use crate::sim::{EpisodeLog, InventoryContext, InventoryDecider};
use crate::units::{Money, Volume};

use super::forecaster::{self, REVIEW_PERIOD_HOURS, WARMUP_HOURS};
use super::OpsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ForecastDriven,
    FixedSchedule,
}

/// Replenishment policy knobs. The defaults describe a mid-size station:
/// order up to half the 12,000-gal tank, 95th-percentile service level,
/// 4-hour delivery lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InventoryPolicy {
    pub policy_kind: PolicyKind,
    /// Safety-stock multiplier on the forecast standard error.
    pub service_level_z: f64,
    /// Order-up-to target level.
    pub order_up_to: Volume,
    /// Hours between placing an order and the truck arriving, as the
    /// planner assumes it; should match the station's actual lead time.
    pub lead_time: u32,
    /// Carrying cost, microdollars per gallon per day ($0.002 ⇔ 2000).
    /// Integer so daily charges sum to period totals exactly.
    pub holding_cost_micro_per_gal_day: i64,
    /// Penalty per turned-away customer, cents.
    pub stockout_penalty: Money,
    /// Reorder cadence for `fixed_schedule`, hours.
    pub fixed_interval: u32,
}

impl Default for InventoryPolicy {
    fn default() -> Self {
        InventoryPolicy {
            policy_kind: PolicyKind::ForecastDriven,
            service_level_z: 1.64,
            order_up_to: Volume(6_000_000),
            lead_time: 4,
            holding_cost_micro_per_gal_day: 2_000,
            stockout_penalty: Money(15_00),
            fixed_interval: 168,
        }
    }
}

impl InventoryPolicy {
    /// The comparison arm KPI experiments run against: a weekly truck that
    /// fills the tank, no matter the level.
    pub fn weekly_to_capacity(tank_capacity: Volume) -> InventoryPolicy {
        InventoryPolicy {
            policy_kind: PolicyKind::FixedSchedule,
            order_up_to: tank_capacity,
            ..InventoryPolicy::default()
        }
    }

    /// Validate every field range; the error names the config key.
    pub fn validate(&self, tank_capacity: Volume) -> Result<(), OpsError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> OpsError {
            OpsError::InvalidPolicy {
                field,
                reason: reason.into(),
            }
        }
        if self.order_up_to.mgal() <= 0 {
            return Err(bad("inventory.order_up_to", "must be positive"));
        }
        if self.order_up_to > tank_capacity {
            return Err(bad(
                "inventory.order_up_to",
                format!(
                    "{} gal exceeds tank capacity {} gal",
                    self.order_up_to.as_gallons(),
                    tank_capacity.as_gallons()
                ),
            ));
        }
        if !(self.service_level_z.is_finite() && self.service_level_z >= 0.0) {
            return Err(bad("inventory.service_level_z", "must be finite and >= 0"));
        }
        if self.lead_time == 0 {
            return Err(bad("inventory.lead_time", "must be at least 1 hour"));
        }
        if self.holding_cost_micro_per_gal_day < 0 {
            return Err(bad(
                "inventory.holding_cost_micro_per_gal_day",
                "must be >= 0",
            ));
        }
        if self.stockout_penalty.cents() < 0 {
            return Err(bad("inventory.stockout_penalty", "must be >= 0"));
        }
        if self.fixed_interval == 0 {
            return Err(bad("inventory.fixed_interval", "must be at least 1 hour"));
        }
        Ok(())
    }

    /// Nightly stocktake charge for an end-of-day tank level, microdollars.
    /// `level` is thousandths of gallons, the rate is per whole gallon.
    pub fn daily_holding_micro(&self, level: Volume) -> i64 {
        level.mgal().max(0) * self.holding_cost_micro_per_gal_day / 1000
    }
}

/// Safety-stock reorder point: expected demand over the protection window
/// plus z standard errors of that forecast. All gallons.
pub fn reorder_point(window_demand_gal: f64, sigma_gal: f64, z: f64) -> f64 {
    debug_assert!(window_demand_gal >= 0.0 && sigma_gal >= 0.0 && z >= 0.0);
    window_demand_gal + z * sigma_gal
}

/// One review-point decision, given the forecast. Returns the order
/// quantity, or `None` to hold.
///
/// `forecast_driven` orders `order_up_to − level − pending` when the
/// position falls below the reorder point; `fixed_schedule` orders the
/// same top-up at every review that a scheduled cadence point has passed
/// since (reviews are daily, so a cadence point inside the last day fires
/// this review). Neither orders when the position is already at or above
/// the target.
pub fn inventory_decision(
    policy: &InventoryPolicy,
    hour: u32,
    tank_level: Volume,
    pending: Volume,
    window_demand_gal: f64,
    sigma_gal: f64,
) -> Option<Volume> {
    let position = tank_level + pending;
    let room = policy.order_up_to - position;
    if room.mgal() <= 0 {
        return None;
    }
    match policy.policy_kind {
        PolicyKind::FixedSchedule => {
            (hour % policy.fixed_interval < REVIEW_PERIOD_HOURS).then_some(room)
        }
        PolicyKind::ForecastDriven => {
            let rop = reorder_point(window_demand_gal, sigma_gal, policy.service_level_z);
            (position.as_gallons() < rop).then_some(room)
        }
    }
}

/// What the planner saw and decided at its latest review.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub hour: u32,
    pub window_demand_gal: f64,
    pub sigma_gal: f64,
    pub reorder_point_gal: f64,
    pub ordered: Option<Volume>,
}

/// Day-boundary replenishment planner. Forecast-driven mode fits the
/// operating forecaster on the episode's own history at each review;
/// the first week runs on a persistence estimate while history accrues.
#[derive(Debug, Clone)]
pub struct ReplenishmentPlanner {
    policy: InventoryPolicy,
    last_review: Option<ReviewRecord>,
}

impl ReplenishmentPlanner {
    pub fn new(policy: InventoryPolicy) -> ReplenishmentPlanner {
        ReplenishmentPlanner {
            policy,
            last_review: None,
        }
    }

    pub fn policy(&self) -> &InventoryPolicy {
        &self.policy
    }

    pub fn last_review(&self) -> Option<&ReviewRecord> {
        self.last_review.as_ref()
    }

    /// Expected demand and its standard error over the protection window
    /// starting at `hour`, from the log's history alone.
    fn window_estimate(&self, log: &EpisodeLog, hour: u32, window: u32) -> (f64, f64) {
        let history = log.demand_series();
        debug_assert_eq!(history.len(), hour as usize);
        if hour >= WARMUP_HOURS {
            let exo = log.exo_series();
            if let Ok(fitted) = forecaster::fit_at(&history, &exo, hour as usize) {
                if let Ok(demand) =
                    forecaster::project_window(&fitted, &history, &exo, hour as usize, window)
                {
                    return (demand, fitted.sigma1 * (window as f64).sqrt());
                }
            }
            // A failed fit (degenerate history) falls back to persistence
            // rather than silently holding orders with an empty tank.
        }
        let demand = forecaster::warmup_window_demand(&history, window);
        (demand, 0.2 * demand)
    }
}

impl InventoryDecider for ReplenishmentPlanner {
    fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume> {
        // The simulation consults at day boundaries with no order
        // outstanding, so the inventory position is just the tank level.
        let window = self.policy.lead_time + REVIEW_PERIOD_HOURS;
        let (demand, sigma) = match self.policy.policy_kind {
            PolicyKind::FixedSchedule => (0.0, 0.0),
            PolicyKind::ForecastDriven => self.window_estimate(ctx.log, ctx.hour, window),
        };
        let ordered = inventory_decision(
            &self.policy,
            ctx.hour,
            ctx.tank_level,
            Volume::ZERO,
            demand,
            sigma,
        );
        self.last_review = Some(ReviewRecord {
            hour: ctx.hour,
            window_demand_gal: demand,
            sigma_gal: sigma,
            reorder_point_gal: reorder_point(demand, sigma, self.policy.service_level_z),
            ordered,
        });
        ordered
    }
}
