//! The station's event-log wire format and its strict codec.
//!
//! A run serializes to newline-delimited JSON: one header line, then one
//! object per record, every line terminated by a single line feed. Each
//! record carries a strictly increasing `seq`, its simulation hour `t`, and
//! a `stream` tag naming one of ten record shapes (tank stocktakes, posted
//! prices, payment authorizations, customer visits, vehicle diagnostics,
//! dispenser flows, vibration-frame references, fuel orders, alerts, and
//! daily KPI rows).
//!
//! # Canonical form
//!
//! Every record has exactly one accepted byte representation: fixed key
//! order per stream, integer-only numerics (fixed-point units, never
//! floats), no insignificant whitespace, and minimal string escapes. The
//! decoder parses each line, re-encodes it, and rejects any byte
//! difference, so `decode` accepts exactly the image of `encode`:
//! decode∘encode and encode∘decode are both identities, byte for byte.
//! That property is what lets a saved log be checksummed, diffed, and
//! replayed with confidence.
//!
//! # Layout of a run log
//!
//! After the header comes the opening tank stocktake at `t = 0` (seq 1).
//! Then, for each day: one `vibration_frame_ref` per dispenser (waveforms
//! live in binary sidecar files, see [`encode_vib`]); for each hour an
//! optional `order`, the hour's `price`, then each visit in arrival order
//! as `auth` (fueling visits only), `visit`, `vehicle` (when diagnostics
//! were sampled — always immediately after its visit), and
//! `dispenser_flow` (fueling visits only), then any unattributed orphan
//! flows, then the hour's closing `tank` record; after the day's last
//! hour, the day's `alert` records in the order they were raised and its
//! `kpi` row. Flow records lag their authorization by the same fixed
//! offset the fraud monitor assumes, so the monitors can be re-run from
//! the wire data alone.

mod replay;
mod vib;

pub use replay::{replay, FrameStore, ReplayOutcome};
pub use vib::{decode_vib, encode_vib, VIB_MAGIC};

use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::monitor::{Alert, AlertKind, AssetId, Severity};
use crate::ops::monitors::AUTH_TO_FLOW_MS;
use crate::ops::{KpiRow, OpsError};
use crate::sim::{vibration_frame, EpisodeLog, VisitKind};

/// Things that can go wrong writing, reading, or replaying an event log.
#[derive(Debug, Error)]
pub enum TelemetryError {
    /// A line that is not the canonical encoding of any record. `offset`
    /// is the byte position of the line's first character.
    #[error("malformed line at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("sequence numbers out of order: {prev} then {next}")]
    OutOfOrderSeq { prev: u64, next: u64 },
    #[error("unsupported format version {got} (this codec reads version 1)")]
    Version { got: u64 },
    /// A well-formed record that violates the documented log layout.
    #[error("record {seq}: {reason}")]
    Invalid { seq: u64, reason: String },
    #[error("cannot serialize run: {reason}")]
    Build { reason: String },
    /// Logs cover whole days; the last day's KPI row closes the file.
    #[error("log covers {0} hours, which is not a whole number of days")]
    PartialDays(u32),
    #[error("missing vibration frame {path}")]
    MissingFrame { path: String },
    #[error("vibration sidecar: {reason}")]
    Sidecar { reason: String },
    #[error("ops: {0}")]
    Ops(#[from] OpsError),
}

// ---------------------------------------------------------------------------
// Header
// ---------------------------------------------------------------------------

/// First line of every log: format version, scenario digest, and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub config_digest: u64,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderWire {
    format_version: u64,
    config_digest: u64,
    seed: u64,
}

impl Header {
    fn encode_into(&self, out: &mut String) {
        let _ = write!(
            out,
            r#"{{"format_version":1,"config_digest":{},"seed":{}}}"#,
            self.config_digest, self.seed
        );
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Tank stocktake: ground-truth level plus the hour's totalizer and
/// delivery readings. The opening stocktake (seq 1, `t = 0`) has zero
/// sales and deliveries; every later one closes hour `t`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankRecord {
    pub seq: u64,
    pub t: u32,
    pub level_mgal: i64,
    pub temp_cdeg: i32,
    pub sales_mgal: i64,
    pub deliv_mgal: i64,
}

/// The price posted for hour `t`, with the market context it was set in.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceRecord {
    pub seq: u64,
    pub t: u32,
    pub posted_mills: i64,
    /// 1 when the policy's ask was clamped up to wholesale cost.
    pub clamped: u8,
    pub wholesale_mills: i64,
    pub competitor_mills: i64,
    pub weather_bp: u16,
    pub traffic_bp: u16,
    /// 1 on local-event hours.
    pub event: u8,
}

/// Payment authorization at the pump, `t_ms` milliseconds from hour zero.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthRecord {
    pub seq: u64,
    pub t: u32,
    pub t_ms: u64,
    pub dispenser: u8,
    pub user: u32,
}

/// One customer, fueled or turned away.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisitRecord {
    pub seq: u64,
    pub t: u32,
    pub offset_ms: u32,
    pub user: u32,
    pub dispenser: u8,
    /// `"fuel"` or `"turned_away"`.
    pub kind: String,
    pub gallons_mgal: i64,
    pub unit_price_mills: i64,
    pub fuel_charge_cents: i64,
    pub fuel_cost_cents: i64,
    pub basket: Vec<u16>,
    pub checkout_ms: u32,
}

/// Vehicle diagnostics sampled during a visit; always emitted immediately
/// after its `visit` record, which it is joined to by `(t, offset_ms,
/// user)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleRecord {
    pub seq: u64,
    pub t: u32,
    pub offset_ms: u32,
    pub user: u32,
    pub battery_mv: i32,
    pub tire_cpsi: i32,
}

/// Metered fuel flow at a dispenser. Flows from paying customers lag
/// their authorization by a fixed pump delay; flows with no matching
/// authorization are what the fraud monitor hunts for.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRecord {
    pub seq: u64,
    pub t: u32,
    pub t_ms: u64,
    pub dispenser: u8,
    pub gallons_mgal: i64,
}

/// Points at the day's vibration waveform for one dispenser, stored in a
/// binary sidecar file. Emitted at each day boundary (`t` multiple of 24).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRefRecord {
    pub seq: u64,
    pub t: u32,
    pub dispenser: u8,
    pub file: String,
}

/// A fuel order placed at hour `t`, arriving at `eta_hour`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderRecord {
    pub seq: u64,
    pub t: u32,
    pub gallons_mgal: i64,
    pub eta_hour: u32,
}

/// A monitor finding. `t` is the hour the finding refers to; the record
/// itself sits in its day's end-of-day block.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRecord {
    pub seq: u64,
    pub t: u32,
    pub kind: String,
    pub severity: String,
    pub asset: String,
    pub cost_cents: i64,
    pub detail: String,
}

/// One day's KPI row, integer-scaled exactly like the KPI CSV, plus the
/// holding-cost rate so a replay can recompute the dollars column.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiRecord {
    pub seq: u64,
    pub t: u32,
    pub day: u32,
    pub margin_cents: i64,
    pub gallons_mgal: i64,
    pub stockout: u32,
    pub holding_microusd: i64,
    /// Carrying cost, microdollars per gallon per day.
    pub holding_rate_micro: i64,
    pub mse_micro: i64,
    pub attach_bp: i64,
    pub checkout_ms: i64,
    pub alerts_leak: u32,
    pub alerts_vibration_fault: u32,
    pub alerts_battery: u32,
    pub alerts_tire: u32,
    pub alerts_fraud: u32,
}

/// Any record in the log.
#[derive(Debug, Clone, PartialEq)]
pub enum TelemetryRecord {
    Tank(TankRecord),
    Price(PriceRecord),
    Auth(AuthRecord),
    Visit(VisitRecord),
    Vehicle(VehicleRecord),
    Flow(FlowRecord),
    FrameRef(FrameRefRecord),
    Order(OrderRecord),
    Alert(AlertRecord),
    Kpi(KpiRecord),
}

/// JSON string literal (quotes and escapes included) for a Rust string.
fn esc(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl TelemetryRecord {
    pub fn seq(&self) -> u64 {
        match self {
            TelemetryRecord::Tank(r) => r.seq,
            TelemetryRecord::Price(r) => r.seq,
            TelemetryRecord::Auth(r) => r.seq,
            TelemetryRecord::Visit(r) => r.seq,
            TelemetryRecord::Vehicle(r) => r.seq,
            TelemetryRecord::Flow(r) => r.seq,
            TelemetryRecord::FrameRef(r) => r.seq,
            TelemetryRecord::Order(r) => r.seq,
            TelemetryRecord::Alert(r) => r.seq,
            TelemetryRecord::Kpi(r) => r.seq,
        }
    }

    fn seq_mut(&mut self) -> &mut u64 {
        match self {
            TelemetryRecord::Tank(r) => &mut r.seq,
            TelemetryRecord::Price(r) => &mut r.seq,
            TelemetryRecord::Auth(r) => &mut r.seq,
            TelemetryRecord::Visit(r) => &mut r.seq,
            TelemetryRecord::Vehicle(r) => &mut r.seq,
            TelemetryRecord::Flow(r) => &mut r.seq,
            TelemetryRecord::FrameRef(r) => &mut r.seq,
            TelemetryRecord::Order(r) => &mut r.seq,
            TelemetryRecord::Alert(r) => &mut r.seq,
            TelemetryRecord::Kpi(r) => &mut r.seq,
        }
    }

    /// Simulation hour the record belongs to.
    pub fn t(&self) -> u32 {
        match self {
            TelemetryRecord::Tank(r) => r.t,
            TelemetryRecord::Price(r) => r.t,
            TelemetryRecord::Auth(r) => r.t,
            TelemetryRecord::Visit(r) => r.t,
            TelemetryRecord::Vehicle(r) => r.t,
            TelemetryRecord::Flow(r) => r.t,
            TelemetryRecord::FrameRef(r) => r.t,
            TelemetryRecord::Order(r) => r.t,
            TelemetryRecord::Alert(r) => r.t,
            TelemetryRecord::Kpi(r) => r.t,
        }
    }

    pub fn stream(&self) -> &'static str {
        match self {
            TelemetryRecord::Tank(_) => "tank",
            TelemetryRecord::Price(_) => "price",
            TelemetryRecord::Auth(_) => "auth",
            TelemetryRecord::Visit(_) => "visit",
            TelemetryRecord::Vehicle(_) => "vehicle",
            TelemetryRecord::Flow(_) => "dispenser_flow",
            TelemetryRecord::FrameRef(_) => "vibration_frame_ref",
            TelemetryRecord::Order(_) => "order",
            TelemetryRecord::Alert(_) => "alert",
            TelemetryRecord::Kpi(_) => "kpi",
        }
    }

    /// Append the record's canonical line (no trailing newline).
    pub fn encode_into(&self, out: &mut String) {
        match self {
            TelemetryRecord::Tank(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"tank","level_mgal":{},"temp_cdeg":{},"sales_mgal":{},"deliv_mgal":{}}}"#,
                    r.seq, r.t, r.level_mgal, r.temp_cdeg, r.sales_mgal, r.deliv_mgal
                );
            }
            TelemetryRecord::Price(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"price","posted_mills":{},"clamped":{},"wholesale_mills":{},"competitor_mills":{},"weather_bp":{},"traffic_bp":{},"event":{}}}"#,
                    r.seq,
                    r.t,
                    r.posted_mills,
                    r.clamped,
                    r.wholesale_mills,
                    r.competitor_mills,
                    r.weather_bp,
                    r.traffic_bp,
                    r.event
                );
            }
            TelemetryRecord::Auth(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"auth","t_ms":{},"dispenser":{},"user":{}}}"#,
                    r.seq, r.t, r.t_ms, r.dispenser, r.user
                );
            }
            TelemetryRecord::Visit(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"visit","offset_ms":{},"user":{},"dispenser":{},"kind":{},"gallons_mgal":{},"unit_price_mills":{},"fuel_charge_cents":{},"fuel_cost_cents":{},"basket":["#,
                    r.seq,
                    r.t,
                    r.offset_ms,
                    r.user,
                    r.dispenser,
                    esc(&r.kind),
                    r.gallons_mgal,
                    r.unit_price_mills,
                    r.fuel_charge_cents,
                    r.fuel_cost_cents
                );
                for (i, id) in r.basket.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{id}");
                }
                let _ = write!(out, r#"],"checkout_ms":{}}}"#, r.checkout_ms);
            }
            TelemetryRecord::Vehicle(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"vehicle","offset_ms":{},"user":{},"battery_mv":{},"tire_cpsi":{}}}"#,
                    r.seq, r.t, r.offset_ms, r.user, r.battery_mv, r.tire_cpsi
                );
            }
            TelemetryRecord::Flow(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"dispenser_flow","t_ms":{},"dispenser":{},"gallons_mgal":{}}}"#,
                    r.seq, r.t, r.t_ms, r.dispenser, r.gallons_mgal
                );
            }
            TelemetryRecord::FrameRef(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"vibration_frame_ref","dispenser":{},"file":{}}}"#,
                    r.seq,
                    r.t,
                    r.dispenser,
                    esc(&r.file)
                );
            }
            TelemetryRecord::Order(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"order","gallons_mgal":{},"eta_hour":{}}}"#,
                    r.seq, r.t, r.gallons_mgal, r.eta_hour
                );
            }
            TelemetryRecord::Alert(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"alert","kind":{},"severity":{},"asset":{},"cost_cents":{},"detail":{}}}"#,
                    r.seq,
                    r.t,
                    esc(&r.kind),
                    esc(&r.severity),
                    esc(&r.asset),
                    r.cost_cents,
                    esc(&r.detail)
                );
            }
            TelemetryRecord::Kpi(r) => {
                let _ = write!(
                    out,
                    r#"{{"seq":{},"t":{},"stream":"kpi","day":{},"margin_cents":{},"gallons_mgal":{},"stockout":{},"holding_microusd":{},"holding_rate_micro":{},"mse_micro":{},"attach_bp":{},"checkout_ms":{},"alerts_leak":{},"alerts_vibration_fault":{},"alerts_battery":{},"alerts_tire":{},"alerts_fraud":{}}}"#,
                    r.seq,
                    r.t,
                    r.day,
                    r.margin_cents,
                    r.gallons_mgal,
                    r.stockout,
                    r.holding_microusd,
                    r.holding_rate_micro,
                    r.mse_micro,
                    r.attach_bp,
                    r.checkout_ms,
                    r.alerts_leak,
                    r.alerts_vibration_fault,
                    r.alerts_battery,
                    r.alerts_tire,
                    r.alerts_fraud
                );
            }
        }
    }

    /// Field constraints beyond what the types enforce.
    fn validate(&self) -> Result<(), String> {
        match self {
            TelemetryRecord::Price(r) => {
                if r.clamped > 1 {
                    return Err(format!("clamped must be 0 or 1, got {}", r.clamped));
                }
                if r.event > 1 {
                    return Err(format!("event must be 0 or 1, got {}", r.event));
                }
            }
            TelemetryRecord::Visit(r) => {
                if visit_kind_parse(&r.kind).is_none() {
                    return Err(format!("unknown visit kind {:?}", r.kind));
                }
            }
            TelemetryRecord::FrameRef(r) => {
                if r.t % 24 != 0 {
                    return Err(format!(
                        "vibration frame refs sit at day boundaries, got t={}",
                        r.t
                    ));
                }
            }
            TelemetryRecord::Alert(r) => {
                if AlertKind::parse(&r.kind).is_none() {
                    return Err(format!("unknown alert kind {:?}", r.kind));
                }
                if Severity::parse(&r.severity).is_none() {
                    return Err(format!("unknown severity {:?}", r.severity));
                }
                if r.asset.parse::<AssetId>().is_err() {
                    return Err(format!("unrecognized asset {:?}", r.asset));
                }
            }
            TelemetryRecord::Kpi(r) => {
                if r.t != r.day * 24 + 23 {
                    return Err(format!(
                        "kpi row for day {} must carry t={}, got {}",
                        r.day,
                        r.day * 24 + 23,
                        r.t
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn visit_kind_str(kind: VisitKind) -> &'static str {
    match kind {
        VisitKind::Fuel => "fuel",
        VisitKind::TurnedAway => "turned_away",
    }
}

fn visit_kind_parse(s: &str) -> Option<VisitKind> {
    match s {
        "fuel" => Some(VisitKind::Fuel),
        "turned_away" => Some(VisitKind::TurnedAway),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

fn decode_body<T>(body: Value, offset: usize) -> Result<T, TelemetryError>
where
    T: serde::de::DeserializeOwned,
{
    serde_json::from_value(body).map_err(|e| TelemetryError::Malformed {
        offset,
        reason: e.to_string(),
    })
}

/// Parse one record line (no trailing newline). `offset` is the byte
/// position of the line's start, used in error messages.
pub fn decode_record(line: &str, offset: usize) -> Result<TelemetryRecord, TelemetryError> {
    let malformed = |reason: String| TelemetryError::Malformed { offset, reason };
    let mut value: Value =
        serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| malformed("record is not a JSON object".to_string()))?;
    let stream = match obj.remove("stream") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(malformed("field `stream` must be a string".to_string())),
        None => return Err(malformed("missing field `stream`".to_string())),
    };
    let record = match stream.as_str() {
        "tank" => TelemetryRecord::Tank(decode_body(value, offset)?),
        "price" => TelemetryRecord::Price(decode_body(value, offset)?),
        "auth" => TelemetryRecord::Auth(decode_body(value, offset)?),
        "visit" => TelemetryRecord::Visit(decode_body(value, offset)?),
        "vehicle" => TelemetryRecord::Vehicle(decode_body(value, offset)?),
        "dispenser_flow" => TelemetryRecord::Flow(decode_body(value, offset)?),
        "vibration_frame_ref" => TelemetryRecord::FrameRef(decode_body(value, offset)?),
        "order" => TelemetryRecord::Order(decode_body(value, offset)?),
        "alert" => TelemetryRecord::Alert(decode_body(value, offset)?),
        "kpi" => TelemetryRecord::Kpi(decode_body(value, offset)?),
        other => return Err(malformed(format!("unknown stream {other:?}"))),
    };
    let mut canon = String::new();
    record.encode_into(&mut canon);
    if canon != line {
        return Err(malformed(
            "line is not in canonical form (key order, spacing, or numeral shape)".to_string(),
        ));
    }
    record.validate().map_err(malformed)?;
    Ok(record)
}

fn decode_header(line: &str, offset: usize) -> Result<Header, TelemetryError> {
    let malformed = |reason: String| TelemetryError::Malformed { offset, reason };
    let value: Value =
        serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let wire: HeaderWire = decode_body(value, offset)?;
    if wire.format_version != 1 {
        return Err(TelemetryError::Version {
            got: wire.format_version,
        });
    }
    let header = Header {
        config_digest: wire.config_digest,
        seed: wire.seed,
    };
    let mut canon = String::new();
    header.encode_into(&mut canon);
    if canon != line {
        return Err(malformed("header is not in canonical form".to_string()));
    }
    Ok(header)
}

// ---------------------------------------------------------------------------
// Whole logs
// ---------------------------------------------------------------------------

/// A parsed event log: header plus records in sequence order.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: Header,
    pub records: Vec<TelemetryRecord>,
}

impl EventLog {
    /// Serialize to the canonical text form.
    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(64 + self.records.len() * 96);
        self.header.encode_into(&mut out);
        out.push('\n');
        for r in &self.records {
            r.encode_into(&mut out);
            out.push('\n');
        }
        out
    }

    /// Strict parse: canonical lines only, strictly increasing `seq`,
    /// trailing newline required.
    pub fn decode(text: &str) -> Result<EventLog, TelemetryError> {
        let mut lines: Vec<(usize, &str)> = Vec::new();
        let mut offset = 0;
        while offset < text.len() {
            match text[offset..].find('\n') {
                Some(rel) => {
                    lines.push((offset, &text[offset..offset + rel]));
                    offset += rel + 1;
                }
                None => {
                    return Err(TelemetryError::Malformed {
                        offset,
                        reason: "unterminated final line (logs end with a line feed)".to_string(),
                    })
                }
            }
        }
        let Some(&(hoff, hline)) = lines.first() else {
            return Err(TelemetryError::Malformed {
                offset: 0,
                reason: "empty log: missing header line".to_string(),
            });
        };
        let header = decode_header(hline, hoff)?;
        let mut records = Vec::with_capacity(lines.len() - 1);
        let mut prev_seq = 0u64;
        for &(off, line) in &lines[1..] {
            if line.is_empty() {
                return Err(TelemetryError::Malformed {
                    offset: off,
                    reason: "empty line".to_string(),
                });
            }
            let record = decode_record(line, off)?;
            let seq = record.seq();
            if seq <= prev_seq {
                return Err(TelemetryError::OutOfOrderSeq {
                    prev: prev_seq,
                    next: seq,
                });
            }
            prev_seq = seq;
            records.push(record);
        }
        Ok(EventLog { header, records })
    }
}

// ---------------------------------------------------------------------------
// Building a log from a run
// ---------------------------------------------------------------------------

/// An encoded run: the event log plus the vibration sidecar frames it
/// references, as `(relative path, samples)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub events: EventLog,
    pub frames: Vec<(String, Vec<i16>)>,
}

/// Relative path of the sidecar file for one day's frame on one dispenser.
pub fn frame_path(day: u32, dispenser: u8) -> String {
    format!("frames/day{day:04}_d{dispenser}.vib")
}

fn auth_ms(hour: u32, offset_ms: u32) -> u64 {
    hour as u64 * 3_600_000 + offset_ms as u64
}

fn flow_ms(hour: u32, offset_ms: u32) -> u64 {
    hour as u64 * 3_600_000 + (offset_ms + AUTH_TO_FLOW_MS).min(3_599_999) as u64
}

/// Serialize a finished run — episode log, its alerts, and its daily KPI
/// rows — into the wire format. `holding_rate_micro` is the carrying-cost
/// rate the KPI rows were computed with, embedded so a replay can rebuild
/// the same report.
pub fn log_run(
    log: &EpisodeLog,
    alerts: &[Alert],
    rows: &[KpiRow],
    holding_rate_micro: i64,
    n_dispensers: u32,
) -> Result<RunArtifacts, TelemetryError> {
    let build = |reason: String| TelemetryError::Build { reason };
    let horizon = log.horizon_hours;
    if horizon == 0 || horizon % 24 != 0 {
        return Err(TelemetryError::PartialDays(horizon));
    }
    if log.hours.len() != horizon as usize {
        return Err(build(format!(
            "log states {horizon} hours but carries {} hour records",
            log.hours.len()
        )));
    }
    let days = horizon / 24;
    if rows.len() != days as usize {
        return Err(build(format!(
            "expected {days} KPI rows for {days} days, got {}",
            rows.len()
        )));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(i, r)| r.day != *i as u32) {
        return Err(build(format!(
            "KPI row {i} is for day {}, expected day {i}",
            row.day
        )));
    }
    if n_dispensers == 0 {
        return Err(build("a station has at least one dispenser".to_string()));
    }
    if let Some(a) = alerts.iter().find(|a| a.hour >= horizon) {
        return Err(build(format!(
            "alert at hour {} lies outside the {horizon}-hour log",
            a.hour
        )));
    }

    let mut visits_by_hour: Vec<Vec<&crate::sim::CustomerVisit>> =
        vec![Vec::new(); horizon as usize];
    for v in &log.visits {
        if v.hour >= horizon {
            return Err(build(format!(
                "visit at hour {} lies outside the {horizon}-hour log",
                v.hour
            )));
        }
        visits_by_hour[v.hour as usize].push(v);
    }
    let mut orphans_by_hour: Vec<Vec<&crate::sim::OrphanFlow>> =
        vec![Vec::new(); horizon as usize];
    for o in &log.orphan_flows {
        if o.hour >= horizon {
            return Err(build(format!(
                "orphan flow at hour {} lies outside the {horizon}-hour log",
                o.hour
            )));
        }
        orphans_by_hour[o.hour as usize].push(o);
    }

    let mut records: Vec<TelemetryRecord> = Vec::new();
    let mut frames: Vec<(String, Vec<i16>)> = Vec::new();

    records.push(TelemetryRecord::Tank(TankRecord {
        seq: 0,
        t: 0,
        level_mgal: log.initial_level.mgal(),
        temp_cdeg: log.hours[0].exo.temp_cdeg,
        sales_mgal: 0,
        deliv_mgal: 0,
    }));

    for day in 0..days {
        for d in 0..n_dispensers {
            let path = frame_path(day, d as u8);
            frames.push((
                path.clone(),
                vibration_frame(log.seed, day, d as u8, &log.faults),
            ));
            records.push(TelemetryRecord::FrameRef(FrameRefRecord {
                seq: 0,
                t: day * 24,
                dispenser: d as u8,
                file: path,
            }));
        }
        for h in day * 24..day * 24 + 24 {
            let hr = &log.hours[h as usize];
            if let Some((qty, eta)) = hr.order_placed {
                records.push(TelemetryRecord::Order(OrderRecord {
                    seq: 0,
                    t: h,
                    gallons_mgal: qty.mgal(),
                    eta_hour: eta,
                }));
            }
            records.push(TelemetryRecord::Price(PriceRecord {
                seq: 0,
                t: h,
                posted_mills: hr.posted_price.mills(),
                clamped: hr.clamped as u8,
                wholesale_mills: hr.exo.wholesale_cost.mills(),
                competitor_mills: hr.exo.competitor_price.mills(),
                weather_bp: hr.exo.weather_bp,
                traffic_bp: hr.exo.traffic_bp,
                event: hr.exo.event_flag as u8,
            }));
            for v in &visits_by_hour[h as usize] {
                if v.kind == VisitKind::Fuel {
                    records.push(TelemetryRecord::Auth(AuthRecord {
                        seq: 0,
                        t: h,
                        t_ms: auth_ms(h, v.offset_ms),
                        dispenser: v.dispenser,
                        user: v.user_id,
                    }));
                }
                records.push(TelemetryRecord::Visit(VisitRecord {
                    seq: 0,
                    t: h,
                    offset_ms: v.offset_ms,
                    user: v.user_id,
                    dispenser: v.dispenser,
                    kind: visit_kind_str(v.kind).to_string(),
                    gallons_mgal: v.gallons.mgal(),
                    unit_price_mills: v.unit_price.mills(),
                    fuel_charge_cents: v.fuel_charge.cents(),
                    fuel_cost_cents: v.fuel_cost.cents(),
                    basket: v.basket.clone(),
                    checkout_ms: v.checkout_ms,
                }));
                if let Some(veh) = &v.vehicle {
                    records.push(TelemetryRecord::Vehicle(VehicleRecord {
                        seq: 0,
                        t: h,
                        offset_ms: v.offset_ms,
                        user: v.user_id,
                        battery_mv: veh.battery_mv,
                        tire_cpsi: veh.tire_cpsi,
                    }));
                }
                if v.kind == VisitKind::Fuel {
                    records.push(TelemetryRecord::Flow(FlowRecord {
                        seq: 0,
                        t: h,
                        t_ms: flow_ms(h, v.offset_ms),
                        dispenser: v.dispenser,
                        gallons_mgal: v.gallons.mgal(),
                    }));
                }
            }
            for o in &orphans_by_hour[h as usize] {
                records.push(TelemetryRecord::Flow(FlowRecord {
                    seq: 0,
                    t: h,
                    t_ms: auth_ms(h, o.offset_ms),
                    dispenser: o.dispenser,
                    gallons_mgal: o.gallons.mgal(),
                }));
            }
            records.push(TelemetryRecord::Tank(TankRecord {
                seq: 0,
                t: h,
                level_mgal: hr.tank_level.mgal(),
                temp_cdeg: hr.exo.temp_cdeg,
                sales_mgal: hr.metered_sales.mgal(),
                deliv_mgal: hr.delivered.mgal(),
            }));
        }
        for a in alerts.iter().filter(|a| a.hour / 24 == day) {
            records.push(TelemetryRecord::Alert(AlertRecord {
                seq: 0,
                t: a.hour,
                kind: a.kind.as_str().to_string(),
                severity: a.severity.as_str().to_string(),
                asset: a.asset.to_string(),
                cost_cents: a.estimated_cost.cents(),
                detail: a.detail.clone(),
            }));
        }
        let s = rows[day as usize].kpis.scaled();
        records.push(TelemetryRecord::Kpi(KpiRecord {
            seq: 0,
            t: day * 24 + 23,
            day,
            margin_cents: s.margin_cents,
            gallons_mgal: s.gallons_mgal,
            stockout: s.stockout,
            holding_microusd: s.holding_micro,
            holding_rate_micro,
            mse_micro: s.mse_micro,
            attach_bp: s.attach_bp,
            checkout_ms: s.checkout_ms,
            alerts_leak: s.alerts[0],
            alerts_vibration_fault: s.alerts[1],
            alerts_battery: s.alerts[2],
            alerts_tire: s.alerts[3],
            alerts_fraud: s.alerts[4],
        }));
    }

    for (i, r) in records.iter_mut().enumerate() {
        *r.seq_mut() = i as u64 + 1;
    }

    Ok(RunArtifacts {
        events: EventLog {
            header: Header {
                config_digest: log.config_digest,
                seed: log.seed,
            },
            records,
        },
        frames,
    })
}
