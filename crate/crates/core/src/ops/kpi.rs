//! Station KPIs, computed from the episode log after the fact.
//!
//! Every figure is a pure function of the log (plus the cost constants in
//! the inventory policy), so daily rows emitted live during a governed run
//! and a report recomputed later from the saved log agree exactly — the
//! property the replay tool checks.

use std::fmt::Write as _;

use crate::monitor::{Alert, ALERT_KINDS};
use crate::sim::{EpisodeLog, StationParams, VisitKind};
use crate::units::{Money, Volume};

use super::forecaster::one_step_predictions;
use super::inventory::InventoryPolicy;
use super::monitors::episode_alerts;
use super::OpsError;

/// Performance figures for one stretch of hours.
#[derive(Debug, Clone, PartialEq)]
pub struct Kpis {
    /// Fuel margin plus shop margin, cents.
    pub total_margin: Money,
    pub gallons_sold: Volume,
    /// Customers turned away by an empty tank.
    pub stockout_customers: u32,
    /// Inventory holding cost, microdollars; charged at the nightly
    /// stocktake, so partial trailing days contribute nothing.
    pub holding_micro_usd: i64,
    /// Mean squared error of the governance one-step demand forecasts
    /// over the period (gallons²).
    pub forecast_mse: f64,
    /// Share of fueling customers who also bought shop items.
    pub attach_rate: f64,
    /// Mean payment interaction time across fueling customers, seconds.
    pub mean_checkout_seconds: f64,
    /// Alert counts in [`ALERT_KINDS`] order.
    pub alerts_by_kind: [u32; 5],
}

/// One day's KPIs.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiRow {
    pub day: u32,
    pub kpis: Kpis,
}

/// Daily KPI rows plus the whole-period aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub start_day: u32,
    /// Exclusive.
    pub end_day: u32,
    pub rows: Vec<KpiRow>,
    pub period: Kpis,
}

/// Compute KPIs over hours `[start_hour, end_hour)` of the log. `alerts`
/// is the full alert list; only those inside the window are counted.
pub fn kpis_over(
    log: &EpisodeLog,
    policy: &InventoryPolicy,
    alerts: &[Alert],
    start_hour: u32,
    end_hour: u32,
) -> Result<Kpis, OpsError> {
    if start_hour >= end_hour {
        return Err(OpsError::EmptyPeriod);
    }
    if end_hour as usize > log.hours.len() {
        return Err(OpsError::PeriodOutOfRange {
            start: start_hour,
            end: end_hour,
            len: log.hours.len() as u32,
        });
    }

    let mut total_margin = Money::ZERO;
    let mut gallons_sold = Volume::ZERO;
    let mut stockout_customers = 0u32;
    let mut holding_micro_usd = 0i64;
    for rec in &log.hours[start_hour as usize..end_hour as usize] {
        total_margin += rec.fuel_revenue - rec.fuel_cost + rec.shop_revenue - rec.shop_cost;
        gallons_sold += rec.gallons_sold;
        stockout_customers += rec.turned_away;
        if rec.hour % 24 == 23 {
            holding_micro_usd += policy.daily_holding_micro(rec.tank_level);
        }
    }

    let demand = log.demand_series();
    let exo = log.exo_series();
    let preds = one_step_predictions(&demand, &exo, start_hour as usize, end_hour as usize)?;
    let n = (end_hour - start_hour) as f64;
    let forecast_mse = demand[start_hour as usize..end_hour as usize]
        .iter()
        .zip(&preds)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / n;

    let mut fuel_visits = 0u64;
    let mut attached = 0u64;
    let mut checkout_ms_sum = 0u64;
    for v in log
        .visits
        .iter()
        .filter(|v| v.hour >= start_hour && v.hour < end_hour && v.kind == VisitKind::Fuel)
    {
        fuel_visits += 1;
        if !v.basket.is_empty() {
            attached += 1;
        }
        checkout_ms_sum += v.checkout_ms as u64;
    }
    let attach_rate = if fuel_visits == 0 {
        0.0
    } else {
        attached as f64 / fuel_visits as f64
    };
    let mean_checkout_seconds = if fuel_visits == 0 {
        0.0
    } else {
        checkout_ms_sum as f64 / fuel_visits as f64 / 1_000.0
    };

    let mut alerts_by_kind = [0u32; 5];
    for a in alerts
        .iter()
        .filter(|a| a.hour >= start_hour && a.hour < end_hour)
    {
        let i = ALERT_KINDS.iter().position(|&k| k == a.kind).unwrap();
        alerts_by_kind[i] += 1;
    }

    Ok(Kpis {
        total_margin,
        gallons_sold,
        stockout_customers,
        holding_micro_usd,
        forecast_mse,
        attach_rate,
        mean_checkout_seconds,
        alerts_by_kind,
    })
}

/// Build the daily KPI report for days `[start_day, end_day)`, running the
/// monitor bank over the log to count alerts.
pub fn emit_kpi_report(
    log: &EpisodeLog,
    params: &StationParams,
    policy: &InventoryPolicy,
    start_day: u32,
    end_day: u32,
) -> Result<KpiReport, OpsError> {
    let alerts = episode_alerts(log, params.n_dispensers)?;
    let mut rows = Vec::with_capacity((end_day.saturating_sub(start_day)) as usize);
    for day in start_day..end_day {
        rows.push(KpiRow {
            day,
            kpis: kpis_over(log, policy, &alerts, day * 24, day * 24 + 24)?,
        });
    }
    let period = kpis_over(log, policy, &alerts, start_day * 24, end_day * 24)?;
    Ok(KpiReport {
        start_day,
        end_day,
        rows,
        period,
    })
}

/// Column order of [`KpiReport::to_csv`]. The five alert columns follow
/// [`ALERT_KINDS`].
pub const KPI_CSV_HEADER: &str = "day,margin_cents,gallons_mgal,stockout_customers,holding_microusd,forecast_mse_micro,attach_bp,checkout_ms,alerts_leak,alerts_vibration_fault,alerts_battery,alerts_tire,alerts_fraud";

/// [`Kpis`] with every real-valued figure scaled to an integer (µgal² MSE,
/// basis-point attach rate, millisecond checkout) so emitted files are
/// byte-stable across platforms. Shared by the CSV writer and the telemetry
/// wire format so both apply one rounding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ScaledKpis {
    pub margin_cents: i64,
    pub gallons_mgal: i64,
    pub stockout: u32,
    pub holding_micro: i64,
    pub mse_micro: i64,
    pub attach_bp: i64,
    pub checkout_ms: i64,
    pub alerts: [u32; 5],
}

impl Kpis {
    pub(crate) fn scaled(&self) -> ScaledKpis {
        ScaledKpis {
            margin_cents: self.total_margin.cents(),
            gallons_mgal: self.gallons_sold.mgal(),
            stockout: self.stockout_customers,
            holding_micro: self.holding_micro_usd,
            mse_micro: (self.forecast_mse * 1e6).round() as i64,
            attach_bp: (self.attach_rate * 1e4).round() as i64,
            checkout_ms: (self.mean_checkout_seconds * 1e3).round() as i64,
            alerts: self.alerts_by_kind,
        }
    }

    /// The CSV cells after the day column.
    fn csv_cells(&self) -> String {
        let s = self.scaled();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.margin_cents,
            s.gallons_mgal,
            s.stockout,
            s.holding_micro,
            s.mse_micro,
            s.attach_bp,
            s.checkout_ms,
            s.alerts[0],
            s.alerts[1],
            s.alerts[2],
            s.alerts[3],
            s.alerts[4],
        )
    }
}

impl KpiReport {
    /// One header line, one line per day, one `total` line for the period.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(KPI_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{},{}", row.day, row.kpis.csv_cells());
        }
        let _ = writeln!(out, "total,{}", self.period.csv_cells());
        out
    }

    /// Human-readable aligned table with a TOTAL row.
    pub fn to_table(&self) -> String {
        let header = [
            "day", "margin_$", "gallons", "stockout", "holding_$", "mse", "attach_%", "chk_s",
            "alerts",
        ];
        let mut rows: Vec<[String; 9]> = Vec::with_capacity(self.rows.len() + 1);
        let fmt = |k: &Kpis, day: String| -> [String; 9] {
            [
                day,
                format!("{:.2}", k.total_margin.cents() as f64 / 100.0),
                format!("{:.1}", k.gallons_sold.as_gallons()),
                k.stockout_customers.to_string(),
                format!("{:.2}", k.holding_micro_usd as f64 / 1e6),
                format!("{:.1}", k.forecast_mse),
                format!("{:.1}", k.attach_rate * 100.0),
                format!("{:.1}", k.mean_checkout_seconds),
                k.alerts_by_kind.iter().sum::<u32>().to_string(),
            ]
        };
        for row in &self.rows {
            rows.push(fmt(&row.kpis, row.day.to_string()));
        }
        rows.push(fmt(&self.period, "TOTAL".into()));

        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for (i, name) in header.iter().enumerate() {
            let _ = write!(out, "{:>width$}  ", name, width = widths[i]);
        }
        out.push('\n');
        for row in &rows {
            for (i, cell) in row.iter().enumerate() {
                let _ = write!(out, "{:>width$}  ", cell, width = widths[i]);
            }
            out.push('\n');
        }
        out
    }
}
