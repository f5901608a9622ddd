//! Replay: rebuild an episode from its event log and re-derive everything
//! the log claims.
//!
//! The wire format is complete: every field of the original episode log is
//! either on the wire or a pure function of what is. Replay reconstructs
//! the episode record-for-record, then re-runs the monitors over the
//! reconstruction (vibration waveforms come from the sidecar files) and
//! recomputes every daily KPI row. Differences from the alerts and KPI
//! rows embedded in the log come back as human-readable mismatch strings —
//! an empty list certifies the log is internally consistent.
//!
//! Hard structural violations (a vehicle record with no visit to join to,
//! a missing hourly price, days out of order) are errors; disagreements in
//! *values* (a doctored gallons figure, a forged KPI row) are mismatches,
//! because the point of replay is to report them, not choke on them.

use std::collections::BTreeMap;

use crate::monitor::{Alert, AlertKind, AssetId, Severity};
use crate::ops::monitors::AUTH_TO_FLOW_MS;
use crate::ops::{kpis_over, InventoryPolicy, KpiReport, KpiRow, Kpis, MonitorSuite};
use crate::sim::{
    basket_margin, CustomerVisit, EpisodeLog, ExogenousState, HourRecord, OrphanFlow, VisitKind,
};
use crate::units::{Money, Price, Volume};

use super::{
    EventLog, FrameRefRecord, KpiRecord, PriceRecord, TankRecord, TelemetryError,
    TelemetryRecord,
};

/// Source of vibration waveforms named by `vibration_frame_ref` records.
pub trait FrameStore {
    fn frame(&self, path: &str) -> Result<Vec<i16>, TelemetryError>;
}

impl FrameStore for BTreeMap<String, Vec<i16>> {
    fn frame(&self, path: &str) -> Result<Vec<i16>, TelemetryError> {
        self.get(path)
            .cloned()
            .ok_or_else(|| TelemetryError::MissingFrame {
                path: path.to_string(),
            })
    }
}

/// Convenience for replaying straight from [`super::RunArtifacts::frames`].
impl FrameStore for Vec<(String, Vec<i16>)> {
    fn frame(&self, path: &str) -> Result<Vec<i16>, TelemetryError> {
        self.iter()
            .find(|(p, _)| p == path)
            .map(|(_, f)| f.clone())
            .ok_or_else(|| TelemetryError::MissingFrame {
                path: path.to_string(),
            })
    }
}

/// Everything a replay re-derives.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    /// The episode reconstructed from the wire (fault specs are not on the
    /// wire, so `faults` is empty; monitors re-run from data alone).
    pub log: EpisodeLog,
    /// Alerts recomputed by re-running the monitors.
    pub alerts: Vec<Alert>,
    /// KPI report recomputed from the reconstruction.
    pub report: KpiReport,
    /// Human-readable disagreements between the log's embedded claims and
    /// the recomputation. Empty means the log is internally consistent.
    pub mismatches: Vec<String>,
}

/// Per-hour wire data accumulated during the structural walk.
#[derive(Default)]
struct HourWire {
    price: Option<PriceRecord>,
    close: Option<TankRecord>,
    order: Option<(Volume, u32)>,
    /// Indices into the reconstructed visit vector.
    visits: Vec<usize>,
    auths: Vec<(u64, u8, u32)>,
    flows: Vec<(u64, u8, i64)>,
}

struct Walk {
    opening: Option<TankRecord>,
    hours: Vec<HourWire>,
    visits: Vec<CustomerVisit>,
    frame_refs: Vec<Vec<FrameRefRecord>>,
    alerts: Vec<Alert>,
    kpi_rows: Vec<KpiRecord>,
    /// Index of the visit the next `vehicle` record may join to.
    joinable_visit: Option<usize>,
}

fn invalid(seq: u64, reason: String) -> TelemetryError {
    TelemetryError::Invalid { seq, reason }
}

impl Walk {
    fn new() -> Walk {
        Walk {
            opening: None,
            hours: Vec::new(),
            visits: Vec::new(),
            frame_refs: Vec::new(),
            alerts: Vec::new(),
            kpi_rows: Vec::new(),
            joinable_visit: None,
        }
    }

    /// Hours fully closed so far.
    fn closed(&self) -> u32 {
        self.hours
            .iter()
            .take_while(|h| h.close.is_some())
            .count() as u32
    }

    /// The hour currently open (priced but not closed), if any.
    fn open_hour(&self, seq: u64, stream: &str, t: u32) -> Result<usize, TelemetryError> {
        let h = t as usize;
        let ok = h < self.hours.len()
            && self.hours[h].price.is_some()
            && self.hours[h].close.is_none()
            && h + 1 == self.hours.len();
        if ok {
            Ok(h)
        } else {
            Err(invalid(
                seq,
                format!("{stream} record for hour {t}, which is not the open hour"),
            ))
        }
    }

    fn take(&mut self, rec: &TelemetryRecord) -> Result<(), TelemetryError> {
        let seq = rec.seq();
        // Vehicle records must sit directly behind their visit; seeing any
        // other record closes the join window.
        let joinable = self.joinable_visit.take();
        match rec {
            TelemetryRecord::Tank(r) => {
                if self.opening.is_none() {
                    if r.t != 0 || !self.hours.is_empty() {
                        return Err(invalid(
                            seq,
                            "the first record must be the opening tank stocktake at t=0"
                                .to_string(),
                        ));
                    }
                    if r.sales_mgal != 0 || r.deliv_mgal != 0 {
                        return Err(invalid(
                            seq,
                            "the opening stocktake has zero sales and deliveries".to_string(),
                        ));
                    }
                    self.opening = Some(r.clone());
                } else {
                    let h = self.open_hour(seq, "tank close", r.t)?;
                    self.hours[h].close = Some(r.clone());
                }
            }
            TelemetryRecord::Price(r) => {
                if self.opening.is_none() {
                    return Err(invalid(
                        seq,
                        "price record before the opening stocktake".to_string(),
                    ));
                }
                // An order record may have opened this hour's slot already.
                let provisional = self
                    .hours
                    .last()
                    .is_some_and(|hw| hw.price.is_none() && hw.close.is_none());
                if provisional {
                    if r.t as usize != self.hours.len() - 1 {
                        return Err(invalid(
                            seq,
                            format!(
                                "price record for hour {} does not close the pending order's hour {}",
                                r.t,
                                self.hours.len() - 1
                            ),
                        ));
                    }
                    self.hours.last_mut().unwrap().price = Some(r.clone());
                } else {
                    if r.t as usize != self.hours.len() {
                        return Err(invalid(
                            seq,
                            format!(
                                "price record for hour {}, expected hour {}",
                                r.t,
                                self.hours.len()
                            ),
                        ));
                    }
                    self.hours.push(HourWire {
                        price: Some(r.clone()),
                        ..HourWire::default()
                    });
                }
            }
            TelemetryRecord::Order(r) => {
                // Orders precede their hour's price record, so the order
                // opens a provisional slot the price record then fills.
                if self.opening.is_none()
                    || r.t as usize != self.hours.len()
                    || self.closed() as usize != self.hours.len()
                {
                    return Err(invalid(
                        seq,
                        format!(
                            "order record for hour {}, which is not the next hour to open",
                            r.t
                        ),
                    ));
                }
                self.hours.push(HourWire {
                    order: Some((Volume(r.gallons_mgal), r.eta_hour)),
                    ..HourWire::default()
                });
            }
            TelemetryRecord::Auth(r) => {
                let h = self.open_hour(seq, "auth", r.t)?;
                self.hours[h].auths.push((r.t_ms, r.dispenser, r.user));
            }
            TelemetryRecord::Visit(r) => {
                let h = self.open_hour(seq, "visit", r.t)?;
                let kind = super::visit_kind_parse(&r.kind)
                    .ok_or_else(|| invalid(seq, format!("unknown visit kind {:?}", r.kind)))?;
                self.visits.push(CustomerVisit {
                    hour: r.t,
                    offset_ms: r.offset_ms,
                    user_id: r.user,
                    dispenser: r.dispenser,
                    kind,
                    gallons: Volume(r.gallons_mgal),
                    unit_price: Price::from_mills(r.unit_price_mills),
                    fuel_charge: Money::from_cents(r.fuel_charge_cents),
                    fuel_cost: Money::from_cents(r.fuel_cost_cents),
                    basket: r.basket.clone(),
                    checkout_ms: r.checkout_ms,
                    vehicle: None,
                });
                let idx = self.visits.len() - 1;
                self.hours[h].visits.push(idx);
                self.joinable_visit = Some(idx);
            }
            TelemetryRecord::Vehicle(r) => {
                let Some(idx) = joinable else {
                    return Err(invalid(
                        seq,
                        "vehicle record does not directly follow a visit".to_string(),
                    ));
                };
                let v = &mut self.visits[idx];
                if v.hour != r.t || v.offset_ms != r.offset_ms || v.user_id != r.user {
                    return Err(invalid(
                        seq,
                        "vehicle record does not match the visit it follows".to_string(),
                    ));
                }
                v.vehicle = Some(crate::sim::VehicleReading {
                    battery_mv: r.battery_mv,
                    tire_cpsi: r.tire_cpsi,
                });
            }
            TelemetryRecord::Flow(r) => {
                let h = self.open_hour(seq, "dispenser flow", r.t)?;
                self.hours[h].flows.push((r.t_ms, r.dispenser, r.gallons_mgal));
            }
            TelemetryRecord::FrameRef(r) => {
                let day = r.t / 24;
                if self.opening.is_none() || r.t as usize != self.hours.len() {
                    return Err(invalid(
                        seq,
                        format!("frame ref for day {day} must precede the day's first hour"),
                    ));
                }
                if day as usize >= self.frame_refs.len() {
                    self.frame_refs.resize_with(day as usize + 1, Vec::new);
                }
                let refs = &mut self.frame_refs[day as usize];
                if refs.last().map_or(0, |p| p.dispenser + 1) != r.dispenser {
                    return Err(invalid(
                        seq,
                        format!(
                            "day {day} frame refs must cover dispensers 0,1,… in order; got {}",
                            r.dispenser
                        ),
                    ));
                }
                refs.push(r.clone());
            }
            TelemetryRecord::Alert(r) => {
                if (r.t as usize) >= self.hours.len() {
                    return Err(invalid(
                        seq,
                        format!("alert for hour {} which the log has not reached", r.t),
                    ));
                }
                self.alerts.push(Alert {
                    asset: r.asset.parse::<AssetId>().expect("validated at decode"),
                    kind: AlertKind::parse(&r.kind).expect("validated at decode"),
                    severity: Severity::parse(&r.severity).expect("validated at decode"),
                    hour: r.t,
                    detail: r.detail.clone(),
                    estimated_cost: Money::from_cents(r.cost_cents),
                });
            }
            TelemetryRecord::Kpi(r) => {
                if r.day as usize != self.kpi_rows.len() {
                    return Err(invalid(
                        seq,
                        format!(
                            "kpi row for day {}, expected day {}",
                            r.day,
                            self.kpi_rows.len()
                        ),
                    ));
                }
                if self.closed() < (r.day + 1) * 24 {
                    return Err(invalid(
                        seq,
                        format!("kpi row for day {} before the day is closed", r.day),
                    ));
                }
                if let Some(prev) = self.kpi_rows.last() {
                    if prev.holding_rate_micro != r.holding_rate_micro {
                        return Err(invalid(
                            seq,
                            "holding-cost rate changes between kpi rows".to_string(),
                        ));
                    }
                }
                self.kpi_rows.push(r.clone());
            }
        }
        Ok(())
    }
}

/// Rebuild the episode, re-run the monitors, recompute the KPIs, and
/// report every disagreement with the log's embedded claims.
pub fn replay(events: &EventLog, frames: &dyn FrameStore) -> Result<ReplayOutcome, TelemetryError> {
    if events.records.is_empty() {
        return Ok(empty_outcome(events));
    }

    let mut walk = Walk::new();
    for rec in &events.records {
        walk.take(rec)?;
    }

    let horizon = walk.hours.len() as u32;
    let opening = walk.opening.clone().expect("records begin with opening");
    if walk.closed() != horizon {
        return Err(invalid(0, "log ends with an hour still open".to_string()));
    }
    if horizon == 0 || horizon % 24 != 0 {
        return Err(TelemetryError::PartialDays(horizon));
    }
    let days = horizon / 24;
    if walk.kpi_rows.len() != days as usize {
        return Err(invalid(
            0,
            format!("{} kpi rows for a {days}-day log", walk.kpi_rows.len()),
        ));
    }
    if walk.frame_refs.len() != days as usize
        || walk.frame_refs.iter().any(|r| r.is_empty())
    {
        return Err(invalid(
            0,
            "every day needs vibration frame refs for every dispenser".to_string(),
        ));
    }
    let n_dispensers = walk.frame_refs[0].len() as u32;
    if let Some(d) = walk
        .frame_refs
        .iter()
        .position(|r| r.len() as u32 != n_dispensers)
    {
        return Err(invalid(
            0,
            format!(
                "day {d} references {} vibration frames, day 0 references {n_dispensers}",
                walk.frame_refs[d].len()
            ),
        ));
    }

    let mut mismatches: Vec<String> = Vec::new();

    // --- rebuild hour records and orphan flows -------------------------
    let mut hour_records: Vec<HourRecord> = Vec::with_capacity(horizon as usize);
    let mut orphan_flows: Vec<OrphanFlow> = Vec::new();
    let mut prev_level = Volume(opening.level_mgal);
    let mut prev_posted: Option<Price> = None;

    for (h, hw) in walk.hours.iter().enumerate() {
        let h32 = h as u32;
        let price = hw.price.as_ref().expect("merged slots all carry a price");
        let close = hw.close.as_ref().expect("all hours closed");
        let posted = Price::from_mills(price.posted_mills);
        let competitor = Price::from_mills(price.competitor_mills);
        let exo = ExogenousState {
            hour_of_day: (h32 % 24) as u8,
            day_of_week: ((h32 / 24) % 7) as u8,
            weather_bp: price.weather_bp,
            traffic_bp: price.traffic_bp,
            competitor_price: competitor,
            wholesale_cost: Price::from_mills(price.wholesale_mills),
            temp_cdeg: close.temp_cdeg,
            event_flag: price.event == 1,
        };

        let mut visits = 0u32;
        let mut turned_away = 0u32;
        let mut gallons_sold = Volume::ZERO;
        let mut fuel_revenue = Money::ZERO;
        let mut fuel_cost = Money::ZERO;
        let mut shop_revenue = Money::ZERO;
        let mut shop_cost = Money::ZERO;
        let mut expect_auths: Vec<(u64, u8, u32)> = Vec::new();
        let mut expect_flows: Vec<(u64, u8, i64)> = Vec::new();
        for &vi in &hw.visits {
            let v = &walk.visits[vi];
            visits += 1;
            match v.kind {
                VisitKind::Fuel => {
                    gallons_sold += v.gallons;
                    fuel_revenue += v.fuel_charge;
                    fuel_cost += v.fuel_cost;
                    let (rev, margin) = basket_margin(&v.basket);
                    shop_revenue += rev;
                    shop_cost += rev - margin;
                    expect_auths.push((
                        h32 as u64 * 3_600_000 + v.offset_ms as u64,
                        v.dispenser,
                        v.user_id,
                    ));
                    expect_flows.push((
                        h32 as u64 * 3_600_000
                            + (v.offset_ms + AUTH_TO_FLOW_MS).min(3_599_999) as u64,
                        v.dispenser,
                        v.gallons.mgal(),
                    ));
                }
                VisitKind::TurnedAway => turned_away += 1,
            }
        }

        if hw.auths != expect_auths {
            mismatches.push(format!(
                "hour {h32}: auth records disagree with the hour's fueling visits \
                 ({} recorded, {} expected)",
                hw.auths.len(),
                expect_auths.len()
            ));
        }

        // Flows from paying customers account for part of the hour's flow
        // records; whatever is left over is an orphan flow.
        let mut remaining: Vec<Option<(u64, u8, i64)>> =
            hw.flows.iter().copied().map(Some).collect();
        for want in &expect_flows {
            match remaining.iter_mut().find(|s| s.as_ref() == Some(want)) {
                Some(slot) => *slot = None,
                None => mismatches.push(format!(
                    "hour {h32}: no dispenser flow matches the visit at {}ms on dispenser {}",
                    want.0 % 3_600_000,
                    want.1
                )),
            }
        }
        for (t_ms, dispenser, gallons) in remaining.into_iter().flatten() {
            let hour_start = h32 as u64 * 3_600_000;
            if t_ms < hour_start || t_ms >= hour_start + 3_600_000 {
                mismatches.push(format!(
                    "hour {h32}: flow record at t_ms={t_ms} lies outside its hour"
                ));
                continue;
            }
            orphan_flows.push(OrphanFlow {
                hour: h32,
                offset_ms: (t_ms - hour_start) as u32,
                dispenser,
                gallons: Volume(gallons),
            });
        }

        let level = Volume(close.level_mgal);
        let delivered = Volume(close.deliv_mgal);
        let leaked = prev_level - level + delivered - gallons_sold;
        if leaked.mgal() < 0 {
            mismatches.push(format!(
                "hour {h32}: tank conservation violated (level rose {} mgal more than \
                 deliveries minus sales explain)",
                -leaked.mgal()
            ));
        }
        let delta_base = prev_posted.unwrap_or(competitor);
        hour_records.push(HourRecord {
            hour: h32,
            exo,
            posted_price: posted,
            price_delta: posted.mills() - delta_base.mills(),
            clamped: price.clamped == 1,
            visits,
            turned_away,
            gallons_sold,
            fuel_revenue,
            fuel_cost,
            shop_revenue,
            shop_cost,
            metered_sales: Volume(close.sales_mgal),
            delivered,
            leaked,
            tank_level: level,
            order_placed: hw.order,
        });
        prev_level = level;
        prev_posted = Some(posted);
    }

    let log = EpisodeLog {
        seed: events.header.seed,
        config_digest: events.header.config_digest,
        horizon_hours: horizon,
        faults: Vec::new(),
        initial_level: Volume(opening.level_mgal),
        hours: hour_records,
        visits: walk.visits.clone(),
        orphan_flows,
    };

    // --- re-run the monitors over the reconstruction -------------------
    let mut suite = MonitorSuite::new(n_dispensers);
    let mut alerts: Vec<Alert> = Vec::new();
    for day in 0..days {
        let day_frames = walk.frame_refs[day as usize]
            .iter()
            .map(|r| frames.frame(&r.file))
            .collect::<Result<Vec<_>, _>>()?;
        alerts.extend(suite.observe_day_frames(&log, day, &day_frames)?);
    }
    if alerts != walk.alerts {
        let detail = alerts
            .iter()
            .zip(&walk.alerts)
            .position(|(a, b)| a != b)
            .map(|i| format!("first difference at index {i}"))
            .unwrap_or_else(|| "they differ in length".to_string());
        mismatches.push(format!(
            "monitors recomputed {} alerts, the log embeds {} ({detail})",
            alerts.len(),
            walk.alerts.len()
        ));
    }

    // --- recompute the KPI rows -----------------------------------------
    let policy = InventoryPolicy {
        holding_cost_micro_per_gal_day: walk.kpi_rows[0].holding_rate_micro,
        ..InventoryPolicy::default()
    };
    let mut rows: Vec<KpiRow> = Vec::with_capacity(days as usize);
    for day in 0..days {
        let kpis = kpis_over(&log, &policy, &alerts, day * 24, (day + 1) * 24)?;
        let got = kpis.scaled();
        let r = &walk.kpi_rows[day as usize];
        let stored = crate::ops::kpi::ScaledKpis {
            margin_cents: r.margin_cents,
            gallons_mgal: r.gallons_mgal,
            stockout: r.stockout,
            holding_micro: r.holding_microusd,
            mse_micro: r.mse_micro,
            attach_bp: r.attach_bp,
            checkout_ms: r.checkout_ms,
            alerts: [
                r.alerts_leak,
                r.alerts_vibration_fault,
                r.alerts_battery,
                r.alerts_tire,
                r.alerts_fraud,
            ],
        };
        if got != stored {
            mismatches.push(format!(
                "day {day}: kpi row disagrees with the recomputation \
                 (stored {stored:?}, recomputed {got:?})"
            ));
        }
        rows.push(KpiRow { day, kpis });
    }
    let period = kpis_over(&log, &policy, &alerts, 0, horizon)?;
    let report = KpiReport {
        start_day: 0,
        end_day: days,
        rows,
        period,
    };

    Ok(ReplayOutcome {
        log,
        alerts,
        report,
        mismatches,
    })
}

fn empty_outcome(events: &EventLog) -> ReplayOutcome {
    ReplayOutcome {
        log: EpisodeLog {
            seed: events.header.seed,
            config_digest: events.header.config_digest,
            horizon_hours: 0,
            faults: Vec::new(),
            initial_level: Volume::ZERO,
            hours: Vec::new(),
            visits: Vec::new(),
            orphan_flows: Vec::new(),
        },
        alerts: Vec::new(),
        report: KpiReport {
            start_day: 0,
            end_day: 0,
            rows: Vec::new(),
            period: Kpis {
                total_margin: Money::ZERO,
                gallons_sold: Volume::ZERO,
                stockout_customers: 0,
                holding_micro_usd: 0,
                forecast_mse: 0.0,
                attach_rate: 0.0,
                mean_checkout_seconds: 0.0,
                alerts_by_kind: [0; 5],
            },
        },
        mismatches: Vec::new(),
    }
}
