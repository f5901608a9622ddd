//! Asset-health analytics over station telemetry.
//!
//! Five independent detectors, each a pure state machine:
//!
//! * **Leak** — hourly tank mass-balance residuals, standardized and fed to
//!   a two-sided CUSUM; a persistent negative drift (fuel leaving the tank
//!   that neither sales nor deliveries explain) raises an urgent alarm.
//! * **Vibration** — FFT band-energy ratio of each dispenser's daily
//!   accelerometer frame against its own day-zero baseline.
//! * **Battery** — AR(1) residual rule with a robust z-score over each
//!   vehicle's reported voltage series.
//! * **Tire** — static pressure bands.
//! * **Fraud** — dispenser flow events with no authorization shortly before.
//!
//! Detectors only observe; acting on their alerts (booking service slots,
//! costing repairs) happens in the ops layer. Each alert carries the fixed
//! estimated service cost for its kind so downstream scheduling needs no
//! lookup table of its own.

pub mod fft;

use crate::units::{Money, Volume};
use std::fmt;
use std::ops::Range;
use thiserror::Error;

/// CUSUM slack per sample: drifts smaller than k·σ are ignored.
pub const DEFAULT_CUSUM_K: f64 = 0.5;
/// CUSUM alarm threshold in σ-accumulated units.
pub const DEFAULT_CUSUM_H: f64 = 5.0;
/// Hours of residuals used to estimate the mass-balance noise scale.
pub const LEAK_WARMUP_HOURS: usize = 48;
/// Dispenser-motor fault band, Hz. The failure mode of interest is a
/// bearing tone near 120 Hz, between the 60 Hz and 180 Hz rotor harmonics.
pub const VIB_BAND_LO_HZ: f64 = 110.0;
pub const VIB_BAND_HI_HZ: f64 = 130.0;
/// Band-energy ratio over baseline that counts as a vibration fault.
pub const DEFAULT_VIBRATION_RATIO: f64 = 4.0;
/// Robust z-score threshold for battery-voltage anomalies.
pub const BATTERY_Z_THRESHOLD: f64 = 6.0;
/// Minimum voltage series length the battery rule accepts.
pub const BATTERY_MIN_SERIES: usize = 20;
/// Tire-pressure advisory band, psi: outside [28, 36] is worth a look.
pub const TIRE_ADVISORY_LO_PSI: f64 = 28.0;
pub const TIRE_ADVISORY_HI_PSI: f64 = 36.0;
/// Below this pressure the tire is unsafe to drive on.
pub const TIRE_URGENT_PSI: f64 = 22.0;
/// Authorization lookback for dispenser flows, seconds.
pub const DEFAULT_FRAUD_WINDOW_S: u32 = 120;

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("window length {n} is not a power of two >= 8")]
    BadWindowLength { n: usize },
    #[error("complex buffers differ in length: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },
    #[error("spectra disagree: n {n_left} vs {n_right}, sample rate {rate_left} vs {rate_right}")]
    MismatchedSpectra {
        n_left: usize,
        n_right: usize,
        rate_left: f64,
        rate_right: f64,
    },
    #[error("band {lo}..{hi} is empty or outside the {bins} available bins")]
    BadBand { lo: usize, hi: usize, bins: usize },
    #[error("{field}: {reason}")]
    InvalidParam {
        field: &'static str,
        reason: &'static str,
    },
    #[error("voltage series needs at least {required} samples, got {got}")]
    SeriesTooShort { required: usize, got: usize },
    #[error("{stream} events out of order at index {index}")]
    UnorderedEvents {
        stream: &'static str,
        index: usize,
    },
}

type Result<T> = std::result::Result<T, MonitorError>;

// ---------------------------------------------------------------------------
// Alerts
// ---------------------------------------------------------------------------

/// What kind of problem a detector found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlertKind {
    Leak,
    VibrationFault,
    Battery,
    Tire,
    Fraud,
}

/// All kinds, in the order KPI columns report them.
pub const ALERT_KINDS: [AlertKind; 5] = [
    AlertKind::Leak,
    AlertKind::VibrationFault,
    AlertKind::Battery,
    AlertKind::Tire,
    AlertKind::Fraud,
];

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::Leak => "leak",
            AlertKind::VibrationFault => "vibration_fault",
            AlertKind::Battery => "battery",
            AlertKind::Tire => "tire",
            AlertKind::Fraud => "fraud",
        }
    }

    pub fn parse(s: &str) -> Option<AlertKind> {
        ALERT_KINDS.into_iter().find(|k| k.as_str() == s)
    }

    /// Position in [`ALERT_KINDS`], for fixed-width per-kind counters.
    pub fn index(self) -> usize {
        ALERT_KINDS.iter().position(|&k| k == self).unwrap()
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Flat-rate estimated service cost per alert kind. Fraud costs nothing to
/// "repair" — it triggers an investigation, not a work order.
pub fn alert_cost(kind: AlertKind) -> Money {
    match kind {
        AlertKind::Leak => Money(2_500_00),
        AlertKind::VibrationFault => Money(400_00),
        AlertKind::Battery => Money(180_00),
        AlertKind::Tire => Money(25_00),
        AlertKind::Fraud => Money(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Advisory,
    Urgent,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Advisory => "advisory",
            Severity::Urgent => "urgent",
        }
    }

    pub fn parse(s: &str) -> Option<Severity> {
        match s {
            "advisory" => Some(Severity::Advisory),
            "urgent" => Some(Severity::Urgent),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which physical asset an alert is about. The ordering (tank, then
/// dispensers, then vehicles) is the tie-break order used by service
/// scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssetId {
    Tank,
    Dispenser(u8),
    Vehicle(u32),
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetId::Tank => f.write_str("tank"),
            AssetId::Dispenser(d) => write!(f, "dispenser_{d}"),
            AssetId::Vehicle(v) => write!(f, "vehicle_{v}"),
        }
    }
}

impl std::str::FromStr for AssetId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "tank" {
            return Ok(AssetId::Tank);
        }
        if let Some(d) = s.strip_prefix("dispenser_") {
            return d
                .parse()
                .map(AssetId::Dispenser)
                .map_err(|_| format!("bad dispenser id in {s:?}"));
        }
        if let Some(v) = s.strip_prefix("vehicle_") {
            return v
                .parse()
                .map(AssetId::Vehicle)
                .map_err(|_| format!("bad vehicle id in {s:?}"));
        }
        Err(format!("unrecognized asset id {s:?}"))
    }
}

/// One detector finding, ready for the maintenance scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub asset: AssetId,
    pub kind: AlertKind,
    pub severity: Severity,
    /// Simulation hour the finding refers to.
    pub hour: u32,
    pub detail: String,
    pub estimated_cost: Money,
}

impl Alert {
    pub fn new(kind: AlertKind, severity: Severity, asset: AssetId, hour: u32, detail: String) -> Alert {
        Alert {
            asset,
            kind,
            severity,
            hour,
            detail,
            estimated_cost: alert_cost(kind),
        }
    }
}

// ---------------------------------------------------------------------------
// Tank mass balance + CUSUM leak detection
// ---------------------------------------------------------------------------

/// One hourly tank observation as the monitor sees it: the gauge level,
/// the sales totalizer (which carries meter error), and deliveries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TankReading {
    pub hour: u32,
    pub level: Volume,
    /// Tank temperature, hundredths of °C. Recorded, not corrected for.
    pub temp_cdeg: i32,
    pub metered_sales: Volume,
    pub deliveries: Volume,
}

/// Mass-balance residual for one interval:
/// (level − prev_level) − (deliveries − metered_sales).
///
/// A healthy tank balances to meter noise around zero; fuel leaving through
/// a leak shows up as a persistently negative residual.
pub fn mass_balance_residual(reading: &TankReading, prev_level: Volume) -> Volume {
    (reading.level - prev_level) - (reading.deliveries - reading.metered_sales)
}

/// Two-sided CUSUM over standardized residuals. Pure value type: `update`
/// returns the successor state, so histories can be replayed or forked
/// freely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    pub s_pos: f64,
    pub s_neg: f64,
    /// Slack per sample; drifts below k are absorbed.
    pub k: f64,
    /// Alarm threshold.
    pub h: f64,
    pub alarmed: bool,
    /// Index of the sample that first crossed h; fixed once set.
    pub alarm_index: Option<u32>,
    samples_seen: u32,
}

impl CusumState {
    pub fn new(k: f64, h: f64) -> Result<CusumState> {
        if !(k >= 0.0) {
            return Err(MonitorError::InvalidParam {
                field: "monitor.cusum_k",
                reason: "must be >= 0",
            });
        }
        if !(h >= 0.0) {
            return Err(MonitorError::InvalidParam {
                field: "monitor.cusum_h",
                reason: "must be >= 0",
            });
        }
        Ok(CusumState {
            s_pos: 0.0,
            s_neg: 0.0,
            k,
            h,
            alarmed: false,
            alarm_index: None,
            samples_seen: 0,
        })
    }
}

/// Advance the detector by one standardized sample.
///
/// s_pos accumulates upward drift (x above +k), s_neg downward drift
/// (x below −k); either exceeding h raises the alarm. Leak monitoring
/// feeds x = residual/σ̂, so a leak's negative residuals drive s_neg.
pub fn cusum_update(state: CusumState, x: f64) -> CusumState {
    let mut next = state;
    next.s_pos = (state.s_pos + x - state.k).max(0.0);
    next.s_neg = (state.s_neg - x - state.k).max(0.0);
    next.samples_seen = state.samples_seen + 1;
    if !next.alarmed && (next.s_pos > next.h || next.s_neg > next.h) {
        next.alarmed = true;
        next.alarm_index = Some(state.samples_seen);
    }
    next
}

/// Streaming leak detector over hourly tank readings.
///
/// The first [`LEAK_WARMUP_HOURS`] residuals — assumed leak-free — estimate
/// the noise scale σ̂; after that each residual is standardized and fed to
/// the CUSUM. Emits at most one alert.
#[derive(Debug, Clone)]
pub struct LeakMonitor {
    cusum: CusumState,
    prev_level: Option<Volume>,
    warmup: Vec<f64>,
    sigma: Option<f64>,
    reported: bool,
}

impl Default for LeakMonitor {
    fn default() -> Self {
        LeakMonitor::new(DEFAULT_CUSUM_K, DEFAULT_CUSUM_H).unwrap()
    }
}

impl LeakMonitor {
    pub fn new(k: f64, h: f64) -> Result<LeakMonitor> {
        Ok(LeakMonitor {
            cusum: CusumState::new(k, h)?,
            prev_level: None,
            warmup: Vec::with_capacity(LEAK_WARMUP_HOURS),
            sigma: None,
            reported: false,
        })
    }

    /// The standardized-residual detector state (for diagnostics).
    pub fn cusum(&self) -> &CusumState {
        &self.cusum
    }

    /// Estimated residual noise scale once warmed up, gallons.
    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn observe(&mut self, reading: &TankReading) -> Option<Alert> {
        let prev = match self.prev_level.replace(reading.level) {
            Some(prev) => prev,
            None => return None, // first reading only establishes the level
        };
        let residual = mass_balance_residual(reading, prev).as_gallons();

        let sigma = match self.sigma {
            Some(s) => s,
            None => {
                self.warmup.push(residual);
                if self.warmup.len() < LEAK_WARMUP_HOURS {
                    return None;
                }
                let n = self.warmup.len() as f64;
                let mean = self.warmup.iter().sum::<f64>() / n;
                let var = self
                    .warmup
                    .iter()
                    .map(|r| (r - mean) * (r - mean))
                    .sum::<f64>()
                    / (n - 1.0);
                // Floor keeps a noiseless synthetic feed from dividing by
                // zero; any real meter has far more jitter than this.
                let sigma = var.sqrt().max(1e-6);
                self.sigma = Some(sigma);
                sigma
            }
        };

        self.cusum = cusum_update(self.cusum, residual / sigma);
        if self.cusum.alarmed && !self.reported && self.cusum.s_neg > self.cusum.h {
            self.reported = true;
            return Some(Alert::new(
                AlertKind::Leak,
                Severity::Urgent,
                AssetId::Tank,
                reading.hour,
                format!(
                    "mass-balance drift: cusum {:.1} over threshold {:.1} (sigma {:.2} gal)",
                    self.cusum.s_neg, self.cusum.h, sigma
                ),
            ));
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Vibration spectra
// ---------------------------------------------------------------------------

/// One-sided magnitude spectrum of a real frame: bins 0..=n/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    magnitudes: Vec<f64>,
    sample_rate: f64,
    n: usize,
}

impl Spectrum {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn window_len(&self) -> usize {
        self.n
    }

    /// Center frequency of bin `k`, Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.n as f64
    }
}

/// Magnitude spectrum of a real signal via the radix-2 FFT.
pub fn dft(signal: &[f64], sample_rate: f64) -> Result<Spectrum> {
    let n = signal.len();
    let mut re = signal.to_vec();
    let mut im = vec![0.0; n];
    fft::fft_in_place(&mut re, &mut im)?;
    let magnitudes: Vec<f64> = (0..=n / 2)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect();

    #[cfg(debug_assertions)]
    {
        // Parseval: time-domain energy equals spectrum energy / n. For a
        // real signal the full spectrum folds onto bins 0..=n/2 with the
        // interior bins counted twice.
        let time: f64 = signal.iter().map(|x| x * x).sum();
        let mut freq = magnitudes[0] * magnitudes[0] + magnitudes[n / 2] * magnitudes[n / 2];
        for m in &magnitudes[1..n / 2] {
            freq += 2.0 * m * m;
        }
        freq /= n as f64;
        debug_assert!(
            (time - freq).abs() <= 1e-6 * time.max(1e-12),
            "energy identity violated: {time} vs {freq}"
        );
    }

    Ok(Spectrum {
        magnitudes,
        sample_rate,
        n,
    })
}

/// Convert a quantized accelerometer frame back to engineering units.
pub fn frame_to_signal(frame: &[i16]) -> Vec<f64> {
    frame.iter().map(|&q| q as f64 / 4096.0).collect()
}

/// Bin range covering [lo_hz, hi_hz] for an n-point window at sample_rate.
pub fn hz_band(n: usize, sample_rate: f64, lo_hz: f64, hi_hz: f64) -> Range<usize> {
    let per_bin = sample_rate / n as f64;
    let lo = (lo_hz / per_bin).ceil() as usize;
    let hi = (hi_hz / per_bin).floor() as usize + 1;
    lo..hi
}

/// Compare band energy against a baseline spectrum of the same shape.
/// Returns a vibration-fault alert when the ratio exceeds the threshold.
pub fn spectral_fault(
    current: &Spectrum,
    baseline: &Spectrum,
    band: Range<usize>,
    ratio_threshold: f64,
    dispenser: u8,
    hour: u32,
) -> Result<Option<Alert>> {
    if current.n != baseline.n || current.sample_rate != baseline.sample_rate {
        return Err(MonitorError::MismatchedSpectra {
            n_left: current.n,
            n_right: baseline.n,
            rate_left: current.sample_rate,
            rate_right: baseline.sample_rate,
        });
    }
    if band.is_empty() || band.end > current.magnitudes.len() {
        return Err(MonitorError::BadBand {
            lo: band.start,
            hi: band.end,
            bins: current.magnitudes.len(),
        });
    }
    let energy = |s: &Spectrum| -> f64 { s.magnitudes[band.clone()].iter().map(|m| m * m).sum() };
    let e_now = energy(current);
    let e_base = energy(baseline);
    let faulty = if e_base == 0.0 {
        e_now > 0.0
    } else {
        e_now / e_base > ratio_threshold
    };
    if !faulty {
        return Ok(None);
    }
    let ratio = if e_base == 0.0 { f64::INFINITY } else { e_now / e_base };
    Ok(Some(Alert::new(
        AlertKind::VibrationFault,
        Severity::Advisory,
        AssetId::Dispenser(dispenser),
        hour,
        format!(
            "band {:.0}-{:.0} Hz energy {ratio:.1}x baseline",
            current.bin_hz(band.start),
            current.bin_hz(band.end - 1),
        ),
    )))
}

/// Per-dispenser vibration watcher. The first frame observed (the
/// commissioning measurement) becomes the healthy baseline; later frames
/// are compared in the fault band. Reports each dispenser at most once.
#[derive(Debug, Clone)]
pub struct VibrationMonitor {
    dispenser: u8,
    threshold: f64,
    baseline: Option<Spectrum>,
    reported: bool,
}

impl VibrationMonitor {
    pub fn new(dispenser: u8, threshold: f64) -> VibrationMonitor {
        VibrationMonitor {
            dispenser,
            threshold,
            baseline: None,
            reported: false,
        }
    }

    /// Which dispenser this monitor watches.
    pub fn dispenser(&self) -> u8 {
        self.dispenser
    }

    pub fn observe_frame(&mut self, frame: &[i16], sample_rate: f64, hour: u32) -> Result<Option<Alert>> {
        let spectrum = dft(&frame_to_signal(frame), sample_rate)?;
        let baseline = match &self.baseline {
            None => {
                self.baseline = Some(spectrum);
                return Ok(None);
            }
            Some(b) => b,
        };
        if self.reported {
            return Ok(None);
        }
        let band = hz_band(baseline.n, sample_rate, VIB_BAND_LO_HZ, VIB_BAND_HI_HZ);
        let alert = spectral_fault(
            &spectrum,
            baseline,
            band,
            self.threshold,
            self.dispenser,
            hour,
        )?;
        if alert.is_some() {
            self.reported = true;
        }
        Ok(alert)
    }
}

// ---------------------------------------------------------------------------
// Vehicle rules
// ---------------------------------------------------------------------------

/// AR(1)-residual anomaly rule over a vehicle's battery-voltage history
/// (volts). The model v_t ≈ a + b·v_{t−1} is fitted by least squares on the
/// first 80% of the series; the remaining points alert when their residual's
/// robust z-score exceeds [`BATTERY_Z_THRESHOLD`].
///
/// The z denominator is max(1.4826·MAD, sample sd) of the training
/// residuals: MAD gives outlier robustness, while the sd guard stops the
/// scale collapsing on the short (≈15-residual) windows that exist right
/// at [`BATTERY_MIN_SERIES`], where a 6σ rule on MAD alone false-alarms.
/// Each evaluation point's denominator is further inflated by the
/// regression prediction factor √(1 + 1/m + (v_{t−1} − x̄)²/Sxx), so a
/// residual judged far outside the training regressor range — where the
/// fitted line is extrapolating and the in-window scale understates the
/// real uncertainty — needs a proportionally larger move to alert.
/// Real battery failures move the voltage by tens of noise sd while the
/// lag regressor is still in-sample, so neither guard costs detections.
pub fn battery_anomaly(series_v: &[f64], vehicle: u32, hour: u32) -> Result<Option<Alert>> {
    let n = series_v.len();
    if n < BATTERY_MIN_SERIES {
        return Err(MonitorError::SeriesTooShort {
            required: BATTERY_MIN_SERIES,
            got: n,
        });
    }
    let train_len = (n as f64 * 0.8).floor() as usize;

    // Least-squares AR(1) over (v_{t-1}, v_t) pairs in the training prefix.
    let pairs = train_len - 1;
    let (mut sx, mut sy) = (0.0, 0.0);
    for t in 1..train_len {
        sx += series_v[t - 1];
        sy += series_v[t];
    }
    let (mx, my) = (sx / pairs as f64, sy / pairs as f64);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 1..train_len {
        let dx = series_v[t - 1] - mx;
        sxx += dx * dx;
        sxy += dx * (series_v[t] - my);
    }
    // A constant prefix has no slope information; fall back to the mean.
    let slope = if sxx > 1e-18 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;

    let residual = |t: usize| series_v[t] - (intercept + slope * series_v[t - 1]);
    let mut train_res: Vec<f64> = (1..train_len).map(residual).collect();
    train_res.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = median_of_sorted(&train_res);
    let mut deviations: Vec<f64> = train_res.iter().map(|r| (r - median).abs()).collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = train_res.iter().sum::<f64>() / pairs as f64;
    let sd = (train_res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / (pairs - 1).max(1) as f64)
        .sqrt();
    let scale = (1.4826 * median_of_sorted(&deviations)).max(sd).max(1e-12);

    for t in train_len..n {
        let dx = series_v[t - 1] - mx;
        let spread = if sxx > 1e-18 { dx * dx / sxx } else { 0.0 };
        let se = scale * (1.0 + 1.0 / pairs as f64 + spread).sqrt();
        let z = (residual(t) - median) / se;
        if z.abs() > BATTERY_Z_THRESHOLD {
            return Ok(Some(Alert::new(
                AlertKind::Battery,
                Severity::Advisory,
                AssetId::Vehicle(vehicle),
                hour,
                format!(
                    "voltage residual z {:.1} at sample {t} ({:.2} V)",
                    z, series_v[t]
                ),
            )));
        }
    }
    Ok(None)
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Static tire-pressure bands: comfortable inside [28, 36] psi, advisory
/// outside it, urgent below 22 psi.
pub fn tire_check(pressure_psi: f64, vehicle: u32, hour: u32) -> Option<Alert> {
    let (severity, what) = if pressure_psi < TIRE_URGENT_PSI {
        (Severity::Urgent, "critically low")
    } else if pressure_psi < TIRE_ADVISORY_LO_PSI {
        (Severity::Advisory, "low")
    } else if pressure_psi > TIRE_ADVISORY_HI_PSI {
        (Severity::Advisory, "high")
    } else {
        return None;
    };
    Some(Alert::new(
        AlertKind::Tire,
        severity,
        AssetId::Vehicle(vehicle),
        hour,
        format!("tire pressure {pressure_psi:.1} psi {what}"),
    ))
}

// ---------------------------------------------------------------------------
// Dispenser fraud
// ---------------------------------------------------------------------------

/// A metered flow pulse at a dispenser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowEvent {
    /// Absolute time, milliseconds since simulation start.
    pub t_ms: u64,
    pub dispenser: u8,
    pub gallons: Volume,
}

/// A payment authorization at a dispenser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthEvent {
    pub t_ms: u64,
    pub dispenser: u8,
    pub user_id: u32,
}

/// Flag every flow with no authorization on the same dispenser within
/// `window_s` seconds before it. Both inputs must be time-ordered.
pub fn dispenser_fraud(
    flows: &[FlowEvent],
    auths: &[AuthEvent],
    window_s: u32,
) -> Result<Vec<Alert>> {
    for (i, pair) in flows.windows(2).enumerate() {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(MonitorError::UnorderedEvents {
                stream: "flow",
                index: i + 1,
            });
        }
    }
    for (i, pair) in auths.windows(2).enumerate() {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(MonitorError::UnorderedEvents {
                stream: "auth",
                index: i + 1,
            });
        }
    }

    // Per-dispenser authorization timelines (already sorted).
    let mut by_dispenser: std::collections::HashMap<u8, Vec<u64>> = std::collections::HashMap::new();
    for a in auths {
        by_dispenser.entry(a.dispenser).or_default().push(a.t_ms);
    }

    let window_ms = window_s as u64 * 1000;
    let mut alerts = Vec::new();
    for f in flows {
        let authorized = by_dispenser.get(&f.dispenser).is_some_and(|times| {
            let earliest = f.t_ms.saturating_sub(window_ms);
            let i = times.partition_point(|&t| t < earliest);
            times.get(i).is_some_and(|&t| t <= f.t_ms)
        });
        if !authorized {
            alerts.push(Alert::new(
                AlertKind::Fraud,
                Severity::Urgent,
                AssetId::Dispenser(f.dispenser),
                (f.t_ms / 3_600_000) as u32,
                format!(
                    "{:.1} gal dispensed with no authorization in the prior {window_s}s",
                    f.gallons.as_gallons()
                ),
            ));
        }
    }
    Ok(alerts)
}
