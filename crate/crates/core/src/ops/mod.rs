//! Station operations: replenishment planning, maintenance scheduling from
//! monitor alerts, KPI reporting over finished episodes, and the daily
//! governance loop that drives all of it against the simulator.
//!
//! Layout:
//! * [`forecaster`] — the operating forecaster protocol: when the demand
//!   model refits, on how much history, and how it projects forward. The
//!   replenishment planner and KPI reporting share it so both sides agree
//!   on what "the forecast" was at any hour.
//! * [`inventory`] — the reorder-point policy and the day-boundary planner
//!   the simulator consults.
//! * [`schedule`] — maintenance slot booking from alerts.
//! * [`monitors`] — the stateful monitor bank, run day-by-day over a log.
//! * [`kpi`] — daily and period KPI aggregation, CSV and table rendering.
//! * [`governance`] — the once-per-day orchestration loop tying the above
//!   together around a stepping simulation.

mod forecaster;
mod governance;
mod inventory;
pub(crate) mod kpi;
pub(crate) mod monitors;
mod schedule;

pub use forecaster::{
    fit_at, one_step_predictions, project_window, warmup_window_demand, FittedForecaster,
    MAX_FIT_WINDOW, REVIEW_PERIOD_HOURS, WARMUP_HOURS,
};
pub use governance::{run_governed, run_governed_with, GovernanceError, GovernanceOutcome};
pub use inventory::{
    inventory_decision, reorder_point, InventoryPolicy, PolicyKind, ReplenishmentPlanner,
    ReviewRecord,
};
pub use kpi::{emit_kpi_report, kpis_over, KpiReport, KpiRow, Kpis, KPI_CSV_HEADER};
pub use monitors::{episode_alerts, MonitorSuite, MonitorThresholds};
pub use schedule::{daily_slots, schedule_service, Booking, MaintenanceSlot, SLOT_HOURS_PER_DAY};

use crate::forecast::ForecastError;
use crate::monitor::MonitorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpsError {
    /// A policy field violates its documented range; the field name is the
    /// config key.
    #[error("invalid policy `{field}`: {reason}")]
    InvalidPolicy { field: &'static str, reason: String },
    /// KPI aggregation over zero hours has no defined ratios.
    #[error("empty KPI period")]
    EmptyPeriod,
    /// The requested period reaches past the end of the log.
    #[error("period hours {start}..{end} outside the log's {len} recorded hours")]
    PeriodOutOfRange { start: u32, end: u32, len: u32 },
    /// The governance loop plans and reports in whole days.
    #[error("horizon must be a positive multiple of 24 hours, got {0}")]
    HorizonNotWholeDays(u32),
    /// Monitor days must be replayed in order; the bank is stateful.
    #[error("monitor days must be observed in order: expected day {expected}, got {got}")]
    OutOfOrderDay { expected: u32, got: u32 },
    /// The caller must supply one vibration frame per monitored dispenser.
    #[error("expected {expected} vibration frames for the day, got {got}")]
    FrameCount { expected: usize, got: usize },
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("monitor: {0}")]
    Monitor(#[from] MonitorError),
}
