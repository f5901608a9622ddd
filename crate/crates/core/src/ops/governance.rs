//! The daily governance loop that runs the whole station.
//!
//! Each simulated day the coordinator works through a fixed agenda:
//!
//! 1. refit the demand forecaster on the history so far (inside the
//!    replenishment planner),
//! 2. place a fuel order if the inventory policy calls for one,
//! 3. refresh the pricing policy's decision snapshot,
//! 4. feed the finished day through every monitor,
//! 5. book maintenance slots for the findings, most urgent first,
//! 6. append the day's KPI row.
//!
//! Stages 4–6 only read the log, so a governed run produces the exact same
//! episode log as a bare simulation driven by the same planner and pricing
//! policy — the differential property the tests pin down.

use thiserror::Error;

use crate::monitor::Alert;
use crate::sim::{
    EpisodeLog, FaultSpec, InventoryContext, InventoryDecider, PricingContext, PricingPolicy,
    SimError, Simulation, StationParams,
};
use crate::units::Volume;

use super::inventory::{InventoryPolicy, ReplenishmentPlanner};
use super::kpi::{kpis_over, KpiReport, KpiRow};
use super::monitors::{MonitorSuite, MonitorThresholds};
use super::schedule::{daily_slots, schedule_service, Booking, MaintenanceSlot};
use super::OpsError;

#[derive(Debug, Error)]
pub enum GovernanceError {
    #[error("sim: {0}")]
    Sim(#[from] SimError),
    #[error("ops: {0}")]
    Ops(#[from] OpsError),
}

/// Everything a governed run produces.
#[derive(Debug, Clone)]
pub struct GovernanceOutcome {
    pub log: EpisodeLog,
    /// All alerts, in the order the monitor bank raised them.
    pub alerts: Vec<Alert>,
    /// Maintenance bookings, in the order they were made.
    pub bookings: Vec<Booking>,
    /// The full slot calendar, booked and open.
    pub slots: Vec<MaintenanceSlot>,
    /// Daily KPI rows as emitted live, plus the period aggregate.
    pub report: KpiReport,
}

/// Run the station for `horizon_hours` (a positive multiple of 24) under
/// the daily governance agenda, with the default monitor sensitivities.
pub fn run_governed(
    params: &StationParams,
    policy: &InventoryPolicy,
    pricing: &mut dyn PricingPolicy,
    seed: u64,
    faults: &[FaultSpec],
    config_digest: u64,
    horizon_hours: u32,
) -> Result<GovernanceOutcome, GovernanceError> {
    run_governed_with(
        params,
        policy,
        pricing,
        &MonitorThresholds::default(),
        seed,
        faults,
        config_digest,
        horizon_hours,
    )
}

/// [`run_governed`] with scenario-supplied monitor thresholds.
#[allow(clippy::too_many_arguments)]
pub fn run_governed_with(
    params: &StationParams,
    policy: &InventoryPolicy,
    pricing: &mut dyn PricingPolicy,
    monitors: &MonitorThresholds,
    seed: u64,
    faults: &[FaultSpec],
    config_digest: u64,
    horizon_hours: u32,
) -> Result<GovernanceOutcome, GovernanceError> {
    if horizon_hours == 0 || horizon_hours % 24 != 0 {
        return Err(OpsError::HorizonNotWholeDays(horizon_hours).into());
    }
    policy.validate(params.tank_capacity)?;
    let days = horizon_hours / 24;

    let mut sim = Simulation::new(params, seed, faults)?;
    sim.set_config_digest(config_digest);
    let mut planner = ReplenishmentPlanner::new(policy.clone());
    let mut suite = MonitorSuite::with_thresholds(params.n_dispensers, monitors)?;

    let mut alerts: Vec<Alert> = Vec::new();
    let mut backlog: Vec<Alert> = Vec::new();
    let mut slots: Vec<MaintenanceSlot> = Vec::new();
    let mut bookings: Vec<Booking> = Vec::new();
    let mut rows: Vec<KpiRow> = Vec::new();

    for day in 0..days {
        // Stages 1–2: at the day boundary, refit and review inventory —
        // but only when no order is outstanding, matching the bare
        // simulation's one-outstanding-order consult rule exactly.
        if sim.pending_volume() == Volume::ZERO {
            let decision = {
                let ctx = InventoryContext {
                    hour: sim.hour(),
                    tank_level: sim.tank_level(),
                    log: sim.log(),
                    params,
                };
                planner.decide(&ctx)
            };
            if let Some(qty) = decision {
                sim.place_order(qty);
            }
        }

        // Stage 3: refresh the pricing decision snapshot. Policies here
        // are trained offline and post from a frozen table, so the daily
        // refresh has nothing to recompute; the hourly posting below is
        // the whole of their runtime behavior.
        for _ in 0..24 {
            let posted = {
                let ctx = PricingContext {
                    hour: sim.hour(),
                    exo: sim.exo(),
                    prev_posted: sim.prev_posted(),
                    params,
                };
                pricing.post_price(&ctx)
            };
            sim.step_hour(posted);
        }

        // Stage 4: the monitor bank digests the finished day.
        let day_alerts = suite.observe_day(sim.log(), day)?;

        // Stage 5: open today's slots and book the most urgent findings
        // first. Alerts that found no feasible slot (an evening finding,
        // a full calendar) stay in the backlog for tomorrow.
        slots.extend(daily_slots(day));
        backlog.extend(day_alerts.iter().cloned());
        let new_bookings = schedule_service(&backlog, &mut slots);
        for b in &new_bookings {
            let i = backlog
                .iter()
                .position(|a| {
                    a.hour == b.alert_hour
                        && a.asset == b.asset
                        && a.kind == b.kind
                        && a.severity == b.severity
                })
                .expect("every booking corresponds to a backlog alert");
            backlog.remove(i);
        }
        bookings.extend(new_bookings);
        alerts.extend(day_alerts);

        // Stage 6: the day's KPI row, straight from the growing log.
        rows.push(KpiRow {
            day,
            kpis: kpis_over(sim.log(), policy, &alerts, day * 24, day * 24 + 24)?,
        });
    }

    let log = sim.into_log();
    let period = kpis_over(&log, policy, &alerts, 0, horizon_hours)?;
    Ok(GovernanceOutcome {
        log,
        alerts,
        bookings,
        slots,
        report: KpiReport {
            start_day: 0,
            end_day: days,
            rows,
            period,
        },
    })
}
