//! The operating forecaster protocol.
//!
//! Inventory reviews and KPI reporting both need "the demand forecast as
//! of hour H". This module pins that down as one deterministic protocol —
//! persistence for the first week, then a daily refit of the ridge demand
//! model on a trailing window — so every consumer asks the same question
//! of the same model and nothing ever peeks at data from after H.

use crate::forecast::{self, ForecastModel};
use crate::sim::ExogenousState;

use super::OpsError;

/// Inventory reviews happen once per day.
pub const REVIEW_PERIOD_HOURS: u32 = 24;

/// Hours of persistence-style operation before the first model fit. One
/// week gives 168 − 24 = 144 regression rows, comfortably more than the
/// 58 coefficients the model carries.
pub const WARMUP_HOURS: u32 = 168;

/// Longest trailing history a refit sees.
pub const MAX_FIT_WINDOW: usize = forecast::DEFAULT_TRAIN_WINDOW;

/// A fitted operating model plus its in-window one-step error scale.
#[derive(Debug, Clone)]
pub struct FittedForecaster {
    pub model: ForecastModel,
    /// Root-mean-square one-step residual over the fit window, gallons.
    pub sigma1: f64,
    /// The hour the fit happened; training saw history strictly before it.
    pub fit_hour: u32,
}

/// Fit the operating model at hour `end` on the trailing
/// [`MAX_FIT_WINDOW`] (or everything, if shorter). `history` and `exo` are
/// the full hourly series so far; rows at `end` and beyond are never read.
pub fn fit_at(
    history: &[f64],
    exo: &[ExogenousState],
    end: usize,
) -> Result<FittedForecaster, OpsError> {
    let start = end.saturating_sub(MAX_FIT_WINDOW);
    let (x, y) = forecast::build_features(
        &history[start..end],
        &exo[start..end],
        forecast::DEFAULT_N_LAGS,
    )?;
    let model = forecast::fit_arx(&x, &y, forecast::DEFAULT_N_LAGS, forecast::DEFAULT_RIDGE_LAMBDA)?;

    let mut sse = 0.0;
    for r in 0..x.rows() {
        let pred: f64 = x
            .row(r)
            .iter()
            .zip(model.coefficients())
            .map(|(a, w)| a * w)
            .sum();
        let e = y[r] - pred;
        sse += e * e;
    }
    let sigma1 = (sse / x.rows() as f64).sqrt();

    Ok(FittedForecaster {
        model,
        sigma1,
        fit_hour: end as u32,
    })
}

/// Expected total demand over the `window` hours starting at `end`, by
/// recursive one-step prediction (each step's output becomes the next
/// step's newest lag).
///
/// Future market conditions are unknown at `end`, so each future hour
/// borrows the most recent *observed* state with the same hour of day —
/// yesterday's, or the day before when the window wraps past tomorrow's
/// unobserved morning.
pub fn project_window(
    fitted: &FittedForecaster,
    history: &[f64],
    exo: &[ExogenousState],
    end: usize,
    window: u32,
) -> Result<f64, OpsError> {
    let n_lags = fitted.model.n_lags();
    let mut recent: Vec<f64> = history[end.saturating_sub(n_lags)..end].to_vec();
    let mut total = 0.0;
    for step in 0..window as usize {
        let t = end + step;
        let mut src = t as i64 - 24;
        while src >= end as i64 {
            src -= 24;
        }
        let proxy = &exo[src as usize];
        let y = fitted.model.predict_next(&recent, proxy)?;
        total += y;
        recent.push(y);
    }
    Ok(total)
}

/// One-step predictions for hours `[start, end)`, each made with only
/// information available when that hour begins: true demand lags, the
/// hour's own (observable) market state, and the model from the most
/// recent day-boundary refit. During the warm-up week the prediction is
/// persistence — the previous hour's demand, zero at hour 0.
pub fn one_step_predictions(
    history: &[f64],
    exo: &[ExogenousState],
    start: usize,
    end: usize,
) -> Result<Vec<f64>, OpsError> {
    let mut out = Vec::with_capacity(end - start);
    let mut fitted: Option<FittedForecaster> = None;
    for t in start..end {
        let boundary = t - t % REVIEW_PERIOD_HOURS as usize;
        if boundary >= WARMUP_HOURS as usize {
            let stale = fitted
                .as_ref()
                .map_or(true, |f| f.fit_hour as usize != boundary);
            if stale {
                fitted = Some(fit_at(history, exo, boundary)?);
            }
            let f = fitted.as_ref().expect("just fitted");
            out.push(f.model.predict_next(&history[..t], &exo[t])?);
        } else {
            out.push(if t == 0 { 0.0 } else { history[t - 1] });
        }
    }
    Ok(out)
}

/// Planner-side demand estimate before the first fit: the sum of the most
/// recent `window` observed hours, scaled up proportionally when fewer are
/// available. Zero with no history at all (a fresh station holds its
/// opening inventory until data arrives).
pub fn warmup_window_demand(history: &[f64], window: u32) -> f64 {
    if history.is_empty() || window == 0 {
        return 0.0;
    }
    let take = history.len().min(window as usize);
    let sum: f64 = history[history.len() - take..].iter().sum();
    sum * window as f64 / take as f64
}
