//! The station's monitor bank: every detector, run day-by-day over an
//! episode log.
//!
//! The bank is stateful — the leak CUSUM accumulates from hour zero, each
//! dispenser's first vibration frame is its healthy baseline, vehicle
//! series grow visit by visit — so days must be observed in order. Because
//! every detector input is reconstructed from the log (tank readings from
//! hour records, vibration frames regenerated from the logged seed and
//! faults, vehicle readings and payment events from visits), a fresh bank
//! replayed over the same log yields byte-identical alerts: monitoring is
//! a pure projection of the log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::monitor::{
    battery_anomaly, dispenser_fraud, tire_check, Alert, AuthEvent, FlowEvent, LeakMonitor,
    Severity, TankReading, VibrationMonitor, BATTERY_MIN_SERIES, DEFAULT_CUSUM_H, DEFAULT_CUSUM_K,
    DEFAULT_FRAUD_WINDOW_S, DEFAULT_VIBRATION_RATIO,
};
use crate::sim::{vibration_frame, EpisodeLog, VisitKind, VIB_SAMPLE_HZ};
use crate::units::Volume;

use super::OpsError;

/// Milliseconds from a visit's arrival (payment authorization) to its
/// metered flow pulse — the time to walk to the pump and start it. Flows
/// are capped inside their visit's hour so day slicing stays aligned.
pub(crate) const AUTH_TO_FLOW_MS: u32 = 8_000;

/// Per-vehicle telemetry accumulated across visits.
#[derive(Debug, Clone, Default)]
struct VehicleTrack {
    volts: Vec<f64>,
    last_hour: u32,
    /// New readings since the battery model last looked.
    dirty: bool,
    battery_reported: bool,
    /// Highest tire severity already alerted; repeats at the same level
    /// are suppressed, escalation (advisory → urgent) is not.
    tire_reported: Option<Severity>,
}

/// Detector sensitivity knobs — the `monitor` section of a scenario file.
/// Defaults match the constructors the monitor bank uses when no scenario
/// overrides them, so an absent section changes nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorThresholds {
    /// CUSUM slack `k` for the nightly leak test, in residual sigma units.
    pub leak_cusum_k: f64,
    /// CUSUM decision threshold `h` for the leak test, in sigma units.
    pub leak_cusum_h: f64,
    /// Band-power ratio over a dispenser's own baseline frame that flags a
    /// bearing fault.
    pub vibration_ratio: f64,
}

impl Default for MonitorThresholds {
    fn default() -> Self {
        MonitorThresholds {
            leak_cusum_k: DEFAULT_CUSUM_K,
            leak_cusum_h: DEFAULT_CUSUM_H,
            vibration_ratio: DEFAULT_VIBRATION_RATIO,
        }
    }
}

impl MonitorThresholds {
    pub fn validate(&self) -> Result<(), OpsError> {
        if !(self.leak_cusum_k.is_finite() && self.leak_cusum_k >= 0.0) {
            return Err(OpsError::InvalidPolicy {
                field: "monitor.leak_cusum_k",
                reason: "must be finite and >= 0".into(),
            });
        }
        if !(self.leak_cusum_h.is_finite() && self.leak_cusum_h > 0.0) {
            return Err(OpsError::InvalidPolicy {
                field: "monitor.leak_cusum_h",
                reason: "must be finite and > 0".into(),
            });
        }
        if !(self.vibration_ratio.is_finite() && self.vibration_ratio > 0.0) {
            return Err(OpsError::InvalidPolicy {
                field: "monitor.vibration_ratio",
                reason: "must be finite and > 0".into(),
            });
        }
        Ok(())
    }
}

/// Every detector the governance loop runs, with their cross-day state.
#[derive(Debug, Clone)]
pub struct MonitorSuite {
    leak: LeakMonitor,
    leak_primed: bool,
    vib: Vec<VibrationMonitor>,
    vehicles: BTreeMap<u32, VehicleTrack>,
    next_day: u32,
}

impl MonitorSuite {
    pub fn new(n_dispensers: u32) -> MonitorSuite {
        MonitorSuite::with_thresholds(n_dispensers, &MonitorThresholds::default())
            .expect("default thresholds are valid")
    }

    /// A monitor bank with scenario-supplied sensitivity knobs.
    pub fn with_thresholds(
        n_dispensers: u32,
        thresholds: &MonitorThresholds,
    ) -> Result<MonitorSuite, OpsError> {
        thresholds.validate()?;
        Ok(MonitorSuite {
            leak: LeakMonitor::new(thresholds.leak_cusum_k, thresholds.leak_cusum_h)?,
            leak_primed: false,
            vib: (0..n_dispensers)
                .map(|d| VibrationMonitor::new(d as u8, thresholds.vibration_ratio))
                .collect(),
            vehicles: BTreeMap::new(),
            next_day: 0,
        })
    }

    /// Run every monitor over one finished day of the log, regenerating
    /// each dispenser's daily vibration frame from the log's seed and
    /// fault specs. Days must be observed in order, each exactly once.
    pub fn observe_day(&mut self, log: &EpisodeLog, day: u32) -> Result<Vec<Alert>, OpsError> {
        let frames: Vec<Vec<i16>> = self
            .vib
            .iter()
            .map(|m| vibration_frame(log.seed, day, m.dispenser(), &log.faults))
            .collect();
        self.observe_day_frames(log, day, &frames)
    }

    /// [`observe_day`](Self::observe_day) with the day's vibration frames
    /// supplied by the caller — one per dispenser, in dispenser order.
    /// This is the replay path, where frames come from recorded sidecar
    /// files rather than the generator.
    pub fn observe_day_frames(
        &mut self,
        log: &EpisodeLog,
        day: u32,
        frames: &[Vec<i16>],
    ) -> Result<Vec<Alert>, OpsError> {
        if day != self.next_day {
            return Err(OpsError::OutOfOrderDay {
                expected: self.next_day,
                got: day,
            });
        }
        if frames.len() != self.vib.len() {
            return Err(OpsError::FrameCount {
                expected: self.vib.len(),
                got: frames.len(),
            });
        }
        let start = day * 24;
        let end = start + 24;
        if end as usize > log.hours.len() {
            return Err(OpsError::PeriodOutOfRange {
                start,
                end,
                len: log.hours.len() as u32,
            });
        }
        self.next_day = day + 1;

        let mut alerts = Vec::new();

        // --- tank mass balance ---
        if !self.leak_primed {
            // The monitor's first reading only establishes the level; feed
            // it the opening gauge so hour 0's residual is not lost.
            self.leak.observe(&TankReading {
                hour: 0,
                level: log.initial_level,
                temp_cdeg: log.hours[0].exo.temp_cdeg,
                metered_sales: Volume::ZERO,
                deliveries: Volume::ZERO,
            });
            self.leak_primed = true;
        }
        for rec in &log.hours[start as usize..end as usize] {
            let reading = TankReading {
                hour: rec.hour,
                level: rec.tank_level,
                temp_cdeg: rec.exo.temp_cdeg,
                metered_sales: rec.metered_sales,
                deliveries: rec.delivered,
            };
            if let Some(alert) = self.leak.observe(&reading) {
                alerts.push(alert);
            }
        }

        // --- dispenser vibration (one frame per dispenser per day) ---
        for (monitor, frame) in self.vib.iter_mut().zip(frames) {
            if let Some(alert) = monitor.observe_frame(frame, VIB_SAMPLE_HZ, start)? {
                alerts.push(alert);
            }
        }

        // --- vehicle telemetry ---
        for v in log.visits.iter().filter(|v| v.hour >= start && v.hour < end) {
            let Some(reading) = v.vehicle else { continue };
            let track = self.vehicles.entry(v.user_id).or_default();
            track.volts.push(reading.battery_mv as f64 / 1_000.0);
            track.last_hour = v.hour;
            track.dirty = true;

            let psi = reading.tire_cpsi as f64 / 100.0;
            if let Some(alert) = tire_check(psi, v.user_id, v.hour) {
                let escalates = track
                    .tire_reported
                    .map_or(true, |prev| alert.severity > prev);
                if escalates {
                    track.tire_reported = Some(alert.severity);
                    alerts.push(alert);
                }
            }
        }
        for (&user, track) in self.vehicles.iter_mut() {
            if !track.dirty || track.battery_reported || track.volts.len() < BATTERY_MIN_SERIES {
                continue;
            }
            track.dirty = false;
            if let Some(alert) = battery_anomaly(&track.volts, user, track.last_hour)? {
                track.battery_reported = true;
                alerts.push(alert);
            }
        }

        // --- payment/flow reconciliation ---
        // Flows from this day's visits plus injected orphans; paired
        // against authorizations reaching back one lookback window into
        // yesterday so a flow in the first seconds of the day still finds
        // its auth.
        let day_start_ms = start as u64 * 3_600_000;
        let lookback_ms = day_start_ms.saturating_sub(DEFAULT_FRAUD_WINDOW_S as u64 * 1_000);
        let auth_from_hour = if start == 0 { 0 } else { start - 1 };

        let mut flows: Vec<FlowEvent> = Vec::new();
        let mut auths: Vec<AuthEvent> = Vec::new();
        for v in log
            .visits
            .iter()
            .filter(|v| v.hour >= auth_from_hour && v.hour < end)
        {
            if v.kind != VisitKind::Fuel {
                continue;
            }
            let t_auth = v.hour as u64 * 3_600_000 + v.offset_ms as u64;
            if t_auth >= lookback_ms {
                auths.push(AuthEvent {
                    t_ms: t_auth,
                    dispenser: v.dispenser,
                    user_id: v.user_id,
                });
            }
            if v.hour >= start {
                flows.push(FlowEvent {
                    t_ms: v.hour as u64 * 3_600_000
                        + (v.offset_ms + AUTH_TO_FLOW_MS).min(3_599_999) as u64,
                    dispenser: v.dispenser,
                    gallons: v.gallons,
                });
            }
        }
        for o in log
            .orphan_flows
            .iter()
            .filter(|o| o.hour >= start && o.hour < end)
        {
            flows.push(FlowEvent {
                t_ms: o.hour as u64 * 3_600_000 + o.offset_ms as u64,
                dispenser: o.dispenser,
                gallons: o.gallons,
            });
        }
        flows.sort_by_key(|f| f.t_ms);
        auths.sort_by_key(|a| a.t_ms);
        alerts.extend(dispenser_fraud(&flows, &auths, DEFAULT_FRAUD_WINDOW_S)?);

        Ok(alerts)
    }
}

/// All alerts the monitor bank raises over the log's whole-day span — the
/// pure-projection form of day-by-day observation.
pub fn episode_alerts(log: &EpisodeLog, n_dispensers: u32) -> Result<Vec<Alert>, OpsError> {
    let mut suite = MonitorSuite::new(n_dispensers);
    let mut out = Vec::new();
    for day in 0..log.horizon_hours / 24 {
        out.extend(suite.observe_day(log, day)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::AlertKind;
    use crate::pricing::FixedMarginPolicy;
    use crate::sim::{
        run_episode, EpisodeLog, FaultKind, FaultSpec, InventoryContext, InventoryDecider,
        StationParams,
    };
    use crate::units::Volume;

    struct KeepFull;
    impl InventoryDecider for KeepFull {
        fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume> {
            let target = Volume((ctx.params.tank_capacity.mgal() * 4) / 5);
            let d = target - ctx.tank_level;
            (d.mgal() > 0).then_some(d)
        }
    }

    fn episode(seed: u64, days: u32, faults: &[FaultSpec]) -> (StationParams, EpisodeLog) {
        let params = StationParams::default();
        let log = run_episode(
            &params,
            seed,
            faults,
            0,
            &mut FixedMarginPolicy::default(),
            &mut KeepFull,
            days * 24,
        )
        .unwrap();
        (params, log)
    }

    /// A fault-free fleet can still contain vehicles whose tires genuinely
    /// sit outside the pressure band — flagging those is the rule working,
    /// not a false alarm. Every other channel must stay silent.
    #[test]
    fn healthy_episodes_raise_no_alerts_beyond_genuine_tire_advisories() {
        for seed in [31, 32] {
            let (params, log) = episode(seed, 45, &[]);
            let alerts = episode_alerts(&log, params.n_dispensers).unwrap();
            for a in &alerts {
                assert_eq!(a.kind, AlertKind::Tire, "seed {seed}: {a:?}");
                assert_eq!(a.severity, Severity::Advisory, "seed {seed}: {a:?}");
                // The flagged vehicle really is outside the band.
                let crate::monitor::AssetId::Vehicle(user) = a.asset else {
                    panic!("tire alert on non-vehicle: {a:?}");
                };
                let genuine = log.visits.iter().any(|v| {
                    v.user_id == user
                        && v.vehicle
                            .is_some_and(|r| r.tire_cpsi < 2_800 || r.tire_cpsi > 3_600)
                });
                assert!(genuine, "seed {seed}: advisory without cause {a:?}");
            }
        }
    }

    #[test]
    fn leak_fault_raises_exactly_one_tank_alert_quickly() {
        let fault = FaultSpec {
            kind: FaultKind::Leak,
            start_hour: 200,
            magnitude: 0.005,
            target: 0,
        };
        let (params, log) = episode(33, 20, &[fault]);
        let alerts = episode_alerts(&log, params.n_dispensers).unwrap();
        let leaks: Vec<&Alert> = alerts
            .iter()
            .filter(|a| a.kind == AlertKind::Leak)
            .collect();
        assert_eq!(leaks.len(), 1);
        assert!(leaks[0].hour >= 200 && leaks[0].hour <= 272, "{}", leaks[0].hour);
        assert_eq!(leaks[0].severity, Severity::Urgent);
        // Nothing else fires except possibly genuine tire advisories from
        // the drawn vehicle population.
        assert!(alerts
            .iter()
            .all(|a| a.kind == AlertKind::Leak
                || (a.kind == AlertKind::Tire && a.severity == Severity::Advisory)));
    }

    #[test]
    fn vibration_fault_is_flagged_on_the_right_dispenser() {
        let fault = FaultSpec {
            kind: FaultKind::VibrationFault,
            start_hour: 24,
            magnitude: 3.0,
            target: 5,
        };
        let (params, log) = episode(34, 6, &[fault]);
        let alerts = episode_alerts(&log, params.n_dispensers).unwrap();
        let vibs: Vec<&Alert> = alerts
            .iter()
            .filter(|a| a.kind == AlertKind::VibrationFault)
            .collect();
        assert_eq!(vibs.len(), 1, "{alerts:?}");
        assert_eq!(vibs[0].asset, crate::monitor::AssetId::Dispenser(5));
        // Day 0 was the healthy baseline; the fault starts with day 1's
        // frame and is caught there.
        assert_eq!(vibs[0].hour, 24);
    }

    #[test]
    fn fraud_fault_raises_dispenser_alerts_every_day() {
        let fault = FaultSpec {
            kind: FaultKind::Fraud,
            start_hour: 0,
            magnitude: 3.0,
            target: 2,
        };
        let (params, log) = episode(35, 10, &[fault]);
        assert!(!log.orphan_flows.is_empty());
        let alerts = episode_alerts(&log, params.n_dispensers).unwrap();
        let frauds: Vec<&Alert> = alerts
            .iter()
            .filter(|a| a.kind == AlertKind::Fraud)
            .collect();
        assert_eq!(frauds.len(), log.orphan_flows.len(), "{alerts:?}");
        for f in &frauds {
            assert_eq!(f.asset, crate::monitor::AssetId::Dispenser(2));
            assert_eq!(f.severity, Severity::Urgent);
        }
        assert!(alerts
            .iter()
            .all(|a| a.kind == AlertKind::Fraud
                || (a.kind == AlertKind::Tire && a.severity == Severity::Advisory)));
    }

    #[test]
    fn vehicle_faults_raise_battery_and_tire_alerts() {
        let faults = [
            FaultSpec {
                kind: FaultKind::Battery,
                start_hour: 24 * 30,
                magnitude: 0.9,
                target: 7,
            },
            FaultSpec {
                kind: FaultKind::Tire,
                start_hour: 0,
                magnitude: 1.5,
                target: 11,
            },
        ];
        let (params, log) = episode(36, 80, &faults);
        let alerts = episode_alerts(&log, params.n_dispensers).unwrap();
        let battery: Vec<&Alert> = alerts
            .iter()
            .filter(|a| a.kind == AlertKind::Battery)
            .collect();
        assert_eq!(battery.len(), 1, "{alerts:?}");
        assert_eq!(battery[0].asset, crate::monitor::AssetId::Vehicle(7));
        assert!(battery[0].hour >= 24 * 30);

        // Other vehicles in the drawn population may genuinely sit just
        // outside the pressure band and earn their own advisory, so the
        // assertions are scoped to the deflating vehicle.
        let tire: Vec<&Alert> = alerts
            .iter()
            .filter(|a| {
                a.kind == AlertKind::Tire && a.asset == crate::monitor::AssetId::Vehicle(11)
            })
            .collect();
        assert!(!tire.is_empty(), "{alerts:?}");
        // At most one advisory and one urgent escalation — never a stream
        // of repeats while the tire stays flat.
        assert!(tire.len() <= 2, "{tire:?}");
        if tire.len() == 2 {
            assert_eq!(tire[0].severity, Severity::Advisory);
            assert_eq!(tire[1].severity, Severity::Urgent);
            assert!(tire[0].hour < tire[1].hour);
        }
    }

    #[test]
    fn replaying_the_bank_reproduces_identical_alerts() {
        let fault = FaultSpec {
            kind: FaultKind::Leak,
            start_hour: 100,
            magnitude: 0.004,
            target: 0,
        };
        let (params, log) = episode(37, 12, &[fault]);
        let a = episode_alerts(&log, params.n_dispensers).unwrap();
        let b = episode_alerts(&log, params.n_dispensers).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn days_must_be_observed_in_order() {
        let (params, log) = episode(38, 3, &[]);
        let mut suite = MonitorSuite::new(params.n_dispensers);
        suite.observe_day(&log, 0).unwrap();
        let err = suite.observe_day(&log, 2).unwrap_err();
        assert!(matches!(
            err,
            OpsError::OutOfOrderDay {
                expected: 1,
                got: 2
            }
        ));
        // And a day past the log errors out rather than panicking.
        let mut fresh = MonitorSuite::new(params.n_dispensers);
        fresh.observe_day(&log, 0).unwrap();
        fresh.observe_day(&log, 1).unwrap();
        fresh.observe_day(&log, 2).unwrap();
        assert!(matches!(
            fresh.observe_day(&log, 3),
            Err(OpsError::PeriodOutOfRange { .. })
        ));
    }
}
