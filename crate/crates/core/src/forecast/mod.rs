//! Hourly demand forecasting: a ridge-regularized autoregressive model
//! with exogenous inputs (ARX). The prediction for hour t combines the
//! last `n_lags` observed demands with the hour's context — weather,
//! traffic, competitor price, calendar one-hots, and the event flag — via
//! a single linear map fit by penalized least squares.
//!
//! The model class is deliberately the simplest one that covers the
//! station's structure: daily shape lives in the hour dummies and lags,
//! weekly shape in the day-of-week dummies, and shocks in the exogenous
//! terms. Everything here is a pure function; the governance loop owns
//! refit cadence and data windows.

pub mod linalg;

use crate::sim::ExogenousState;
use linalg::Matrix;
use thiserror::Error;

/// Exogenous feature width: weather + traffic + competitor price +
/// 23 hour dummies (hour 0 is the reference level) + 6 day-of-week
/// dummies (Monday reference) + event flag.
pub const N_EXO_FEATURES: usize = 33;

/// Default lag depth: one full day of hourly demand.
pub const DEFAULT_N_LAGS: usize = 24;
/// Default ridge penalty — enough to keep collinear calendar dummies
/// tame without visibly biasing the fit.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;
/// Default training window: 28 days of hourly history.
pub const DEFAULT_TRAIN_WINDOW: usize = 672;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("history too short: need at least {required} points, got {got}")]
    HistoryTooShort { required: usize, got: usize },
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("normal matrix is singular (rank-deficient design with ridge_lambda = 0)")]
    RankDeficient,
    #[error(
        "design has {got} columns, expected {expected} (n_lags + {} exogenous + intercept)",
        N_EXO_FEATURES
    )]
    ShapeMismatch { expected: usize, got: usize },
    #[error(
        "train window too large: {train_window} + {n_lags} lags + 1 exceeds {available} points"
    )]
    WindowTooLarge {
        train_window: usize,
        n_lags: usize,
        available: usize,
    },
    #[error("bad series csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Fitted ARX model. The coefficient vector is laid out as
/// `[lag_1 … lag_n, exogenous × 33, intercept]`; accessors slice it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    n_lags: usize,
    coeffs: Vec<f64>,
    ridge_lambda: f64,
}

impl ForecastModel {
    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    /// Coefficients on demand lags, most recent first.
    pub fn lag_coeffs(&self) -> &[f64] {
        &self.coeffs[..self.n_lags]
    }

    /// Coefficients on the encoded exogenous block.
    pub fn exo_coeffs(&self) -> &[f64] {
        &self.coeffs[self.n_lags..self.n_lags + N_EXO_FEATURES]
    }

    pub fn intercept(&self) -> f64 {
        self.coeffs[self.n_lags + N_EXO_FEATURES]
    }

    /// Full coefficient vector in design-matrix order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// One-step forecast from `recent` (oldest → newest, so the last
    /// element is y_{t−1}) and the upcoming hour's context. Demand is a
    /// count-like quantity, so the raw linear output is clamped at zero.
    pub fn predict_next(
        &self,
        recent: &[f64],
        exo: &ExogenousState,
    ) -> Result<f64, ForecastError> {
        if recent.len() < self.n_lags {
            return Err(ForecastError::HistoryTooShort {
                required: self.n_lags,
                got: recent.len(),
            });
        }
        let mut acc = self.intercept();
        for (k, w) in self.lag_coeffs().iter().enumerate() {
            acc += w * recent[recent.len() - 1 - k];
        }
        let feats = encode_exo(exo);
        for (w, f) in self.exo_coeffs().iter().zip(feats.iter()) {
            acc += w * f;
        }
        Ok(acc.max(0.0))
    }
}

/// Encode one hour's context into the fixed 33-wide feature block.
/// Hour 0 and day 0 are reference levels (absorbed by the intercept), so
/// the block stays full-rank alongside the intercept column.
pub fn encode_exo(exo: &ExogenousState) -> [f64; N_EXO_FEATURES] {
    let mut f = [0.0; N_EXO_FEATURES];
    f[0] = exo.weather_index();
    f[1] = exo.traffic_index();
    f[2] = exo.competitor_price.as_dollars();
    if exo.hour_of_day > 0 {
        f[2 + exo.hour_of_day as usize] = 1.0; // columns 3..=25
    }
    if exo.day_of_week > 0 {
        f[25 + exo.day_of_week as usize] = 1.0; // columns 26..=31
    }
    f[32] = if exo.event_flag { 1.0 } else { 0.0 };
    f
}

/// Assemble the regression design: row t (for t in n_lags..len) is
/// `[y_{t−1} … y_{t−n}, encode_exo(exo[t]), 1]` with target y_t.
pub fn build_features(
    history: &[f64],
    exo: &[ExogenousState],
    n_lags: usize,
) -> Result<(Matrix, Vec<f64>), ForecastError> {
    if history.len() != exo.len() {
        return Err(ForecastError::LengthMismatch {
            left: history.len(),
            right: exo.len(),
        });
    }
    if history.len() <= n_lags {
        return Err(ForecastError::HistoryTooShort {
            required: n_lags + 1,
            got: history.len(),
        });
    }
    let n_rows = history.len() - n_lags;
    let n_cols = n_lags + N_EXO_FEATURES + 1;
    let mut x = Matrix::zeros(n_rows, n_cols);
    let mut y = Vec::with_capacity(n_rows);
    for (row, t) in (n_lags..history.len()).enumerate() {
        let r = x.row_mut(row);
        for k in 0..n_lags {
            r[k] = history[t - 1 - k];
        }
        r[n_lags..n_lags + N_EXO_FEATURES].copy_from_slice(&encode_exo(&exo[t]));
        r[n_cols - 1] = 1.0;
        y.push(history[t]);
    }
    Ok((x, y))
}

/// Fit by ridge-penalized normal equations (XᵀX + λI)w = Xᵀy, with the
/// intercept column excluded from the penalty. Cholesky first; pivoted
/// elimination if the normal matrix is not numerically positive definite.
pub fn fit_arx(
    x: &Matrix,
    y: &[f64],
    n_lags: usize,
    ridge_lambda: f64,
) -> Result<ForecastModel, ForecastError> {
    let expected = n_lags + N_EXO_FEATURES + 1;
    if x.cols() != expected {
        return Err(ForecastError::ShapeMismatch {
            expected,
            got: x.cols(),
        });
    }
    if x.rows() != y.len() {
        return Err(ForecastError::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let mut g = linalg::gram(x);
    for i in 0..x.cols() - 1 {
        g.set(i, i, g.at(i, i) + ridge_lambda);
    }
    let b = linalg::xt_y(x, y);
    let coeffs = linalg::solve_symmetric(&g, &b).ok_or(ForecastError::RankDeficient)?;
    Ok(ForecastModel {
        n_lags,
        coeffs,
        ridge_lambda,
    })
}

/// Mean squared error, the training/backtest loss.
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64, ForecastError> {
    if actual.len() != predicted.len() {
        return Err(ForecastError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean absolute error, reported alongside MSE.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, ForecastError> {
    if actual.len() != predicted.len() {
        return Err(ForecastError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// In-sample penalized objective for a fitted model: MSE·n + λ·‖w‖²
/// over the penalized coordinates. Exposed for the λ-monotonicity check.
pub fn penalized_loss(x: &Matrix, y: &[f64], model: &ForecastModel) -> f64 {
    let mut sse = 0.0;
    for r in 0..x.rows() {
        let row = x.row(r);
        let pred: f64 = row.iter().zip(model.coefficients()).map(|(a, w)| a * w).sum();
        sse += (y[r] - pred) * (y[r] - pred);
    }
    let penalty: f64 = model.coefficients()[..x.cols() - 1]
        .iter()
        .map(|w| w * w)
        .sum();
    sse + model.ridge_lambda() * penalty
}

/// Accuracy summary over one evaluation stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastMetrics {
    pub mse: f64,
    pub mae: f64,
    pub n_points: usize,
}

impl ForecastMetrics {
    pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<Self, ForecastError> {
        Ok(ForecastMetrics {
            mse: mse(actual, predicted)?,
            mae: mae(actual, predicted)?,
            n_points: actual.len(),
        })
    }
}

/// One walk-forward window: fit on `train_window` points, evaluate
/// one-step forecasts on the following `step` points.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestWindow {
    /// Index of the first evaluated point.
    pub eval_start: usize,
    pub arx: ForecastMetrics,
    pub persistence: ForecastMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub windows: Vec<BacktestWindow>,
}

impl BacktestReport {
    pub fn mean_arx_mse(&self) -> f64 {
        self.windows.iter().map(|w| w.arx.mse).sum::<f64>() / self.windows.len() as f64
    }

    pub fn mean_persistence_mse(&self) -> f64 {
        self.windows.iter().map(|w| w.persistence.mse).sum::<f64>() / self.windows.len() as f64
    }
}

/// Walk-forward backtest: slide a `train_window` fit forward by `step`
/// points at a time, always forecasting one step ahead with true lags,
/// and score the naive persistence forecast ŷ_t = y_{t−1} on the exact
/// same points.
pub fn rolling_backtest(
    history: &[f64],
    exo: &[ExogenousState],
    n_lags: usize,
    ridge_lambda: f64,
    train_window: usize,
    step: usize,
) -> Result<BacktestReport, ForecastError> {
    if history.len() != exo.len() {
        return Err(ForecastError::LengthMismatch {
            left: history.len(),
            right: exo.len(),
        });
    }
    if history.len() < train_window + n_lags + 1 {
        return Err(ForecastError::WindowTooLarge {
            train_window,
            n_lags,
            available: history.len(),
        });
    }
    let step = step.max(1);
    let mut windows = Vec::new();
    let mut start = 0usize;
    while start + train_window < history.len() {
        let fit_slice = &history[start..start + train_window];
        let fit_exo = &exo[start..start + train_window];
        let (x, y) = build_features(fit_slice, fit_exo, n_lags)?;
        let model = fit_arx(&x, &y, n_lags, ridge_lambda)?;

        let eval_start = start + train_window;
        let eval_end = (eval_start + step).min(history.len());
        let mut actual = Vec::with_capacity(eval_end - eval_start);
        let mut arx_pred = Vec::with_capacity(eval_end - eval_start);
        let mut naive_pred = Vec::with_capacity(eval_end - eval_start);
        for t in eval_start..eval_end {
            actual.push(history[t]);
            arx_pred.push(model.predict_next(&history[t - n_lags..t], &exo[t])?);
            naive_pred.push(history[t - 1]);
        }
        windows.push(BacktestWindow {
            eval_start,
            arx: ForecastMetrics::evaluate(&actual, &arx_pred)?,
            persistence: ForecastMetrics::evaluate(&actual, &naive_pred)?,
        });
        start += step;
    }
    Ok(BacktestReport { windows })
}

/// Serialize a series to the two-column CSV the CLI exchanges
/// (`time_index,value`, one row per point).
pub fn series_to_csv(series: &[f64]) -> String {
    let mut out = String::from("time_index,value\n");
    for (i, v) in series.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

/// Parse the two-column series CSV; strict about the header and shape.
pub fn series_from_csv(text: &str) -> Result<Vec<f64>, ForecastError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "time_index,value")) => {}
        Some((_, other)) => {
            return Err(ForecastError::Csv {
                line: 1,
                reason: format!("expected header 'time_index,value', got '{other}'"),
            })
        }
        None => return Err(ForecastError::EmptySeries),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (t, v) = line.split_once(',').ok_or_else(|| ForecastError::Csv {
            line: idx + 1,
            reason: "missing comma".into(),
        })?;
        let t: usize = t.parse().map_err(|_| ForecastError::Csv {
            line: idx + 1,
            reason: format!("bad time index '{t}'"),
        })?;
        if t != out.len() {
            return Err(ForecastError::Csv {
                line: idx + 1,
                reason: format!("time index {t} out of sequence (expected {})", out.len()),
            });
        }
        let v: f64 = v.parse().map_err(|_| ForecastError::Csv {
            line: idx + 1,
            reason: format!("bad value '{v}'"),
        })?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;
    use crate::units::Price;

    /// Synthetic context with randomized drivers and a real clock; varied
    /// enough to keep the full design matrix well-conditioned.
    fn synth_exo(rng: &mut Rng64, t: usize) -> ExogenousState {
        ExogenousState {
            hour_of_day: (t % 24) as u8,
            day_of_week: ((t / 24) % 7) as u8,
            weather_bp: rng.next_below(10_001) as u16,
            traffic_bp: rng.next_below(10_001) as u16,
            competitor_price: Price(2_800 + rng.next_below(400) as i64),
            wholesale_cost: Price(2_750),
            temp_cdeg: 1_500,
            event_flag: rng.next_f64() < 0.3,
        }
    }

    fn synth_exo_series(seed: u64, len: usize) -> Vec<ExogenousState> {
        let mut rng = Rng64::new(seed);
        (0..len).map(|t| synth_exo(&mut rng, t)).collect()
    }

    #[test]
    fn feature_rows_are_lags_then_context_then_intercept() {
        let history = [1.0, 2.0, 3.0, 4.0];
        let exo = synth_exo_series(3, 4);
        let (x, y) = build_features(&history, &exo, 2).unwrap();
        assert_eq!(x.rows(), 2);
        assert_eq!(x.cols(), 2 + N_EXO_FEATURES + 1);
        // Most recent lag first.
        assert_eq!([x.at(0, 0), x.at(0, 1)], [2.0, 1.0]);
        assert_eq!([x.at(1, 0), x.at(1, 1)], [3.0, 2.0]);
        assert_eq!(y, vec![3.0, 4.0]);
        // Intercept column is all ones.
        assert_eq!(x.at(0, x.cols() - 1), 1.0);
        assert_eq!(x.at(1, x.cols() - 1), 1.0);
    }

    #[test]
    fn history_no_longer_than_lags_is_rejected_with_the_minimum() {
        let history = [1.0, 2.0, 3.0];
        let exo = synth_exo_series(4, 3);
        let err = build_features(&history, &exo, 3).unwrap_err();
        match err {
            ForecastError::HistoryTooShort { required, got } => {
                assert_eq!(required, 4);
                assert_eq!(got, 3);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn exo_encoding_uses_reference_levels() {
        let mut exo = synth_exo_series(5, 1)[0];
        exo.hour_of_day = 0;
        exo.day_of_week = 0;
        exo.event_flag = false;
        let f = encode_exo(&exo);
        assert!(f[3..32].iter().all(|&v| v == 0.0), "reference hour/day encode to zero");
        assert_eq!(f[32], 0.0);

        exo.hour_of_day = 5;
        exo.day_of_week = 3;
        exo.event_flag = true;
        let f = encode_exo(&exo);
        assert_eq!(f[2 + 5], 1.0);
        assert_eq!(f[25 + 3], 1.0);
        assert_eq!(f[32], 1.0);
        assert_eq!(f.iter().filter(|&&v| v == 1.0).count() >= 3, true);
        assert_eq!(f[0], exo.weather_index());
        assert_eq!(f[2], exo.competitor_price.as_dollars());
    }

    #[test]
    fn constant_series_fits_to_its_level() {
        let history = vec![5.0; 120];
        let exo = synth_exo_series(6, 120);
        let (x, y) = build_features(&history, &exo, 4).unwrap();
        let model = fit_arx(&x, &y, 4, DEFAULT_RIDGE_LAMBDA).unwrap();
        // Ridge drives every explanatory coefficient to zero and leaves
        // the unpenalized intercept carrying the level.
        let pred = model
            .predict_next(&[5.0, 5.0, 5.0, 5.0], &synth_exo_series(7, 1)[0])
            .unwrap();
        assert!((pred - 5.0).abs() < 1e-6, "got {pred}");
        let in_sample: Vec<f64> = (0..x.rows())
            .map(|r| {
                x.row(r)
                    .iter()
                    .zip(model.coefficients())
                    .map(|(a, w)| a * w)
                    .sum()
            })
            .collect();
        assert!(mse(&y, &in_sample).unwrap() < 1e-12);
    }

    /// Data generated exactly by a member of the model class is recovered
    /// to working precision with the penalty off.
    #[test]
    fn noiseless_generator_coefficients_are_recovered() {
        let exo = synth_exo_series(8, 500);
        let mut history = vec![0.5];
        for t in 1..500 {
            let w = exo[t].weather_index();
            history.push(0.7 * history[t - 1] + 0.3 * w);
        }
        let (x, y) = build_features(&history, &exo, 1).unwrap();
        let model = fit_arx(&x, &y, 1, 0.0).unwrap();
        assert!((model.lag_coeffs()[0] - 0.7).abs() < 1e-6);
        assert!((model.exo_coeffs()[0] - 0.3).abs() < 1e-6);
        for (i, w) in model.exo_coeffs().iter().enumerate().skip(1) {
            assert!(w.abs() < 1e-6, "exo coeff {i} leaked: {w}");
        }
        assert!(model.intercept().abs() < 1e-6);
    }

    #[test]
    fn extreme_ridge_shrinks_everything_but_the_intercept() {
        let exo = synth_exo_series(9, 300);
        let mut rng = Rng64::new(10);
        let history: Vec<f64> = (0..300).map(|_| 40.0 + rng.gaussian(0.0, 5.0)).collect();
        let (x, y) = build_features(&history, &exo, 2).unwrap();
        let model = fit_arx(&x, &y, 2, 1e9).unwrap();
        for w in &model.coefficients()[..x.cols() - 1] {
            assert!(w.abs() < 1e-6, "penalized coefficient survived: {w}");
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((model.intercept() - mean).abs() < 1e-3);
    }

    #[test]
    fn rank_deficiency_is_reported_when_unpenalized() {
        // Constant context + constant series → lag columns, the constant
        // competitor-price column, and the intercept are collinear.
        let exo = vec![synth_exo_series(11, 1)[0]; 50];
        let history = vec![5.0; 50];
        let (x, y) = build_features(&history, &exo, 2).unwrap();
        let err = fit_arx(&x, &y, 2, 0.0).unwrap_err();
        assert!(matches!(err, ForecastError::RankDeficient));
        // The same design fits fine once ridged.
        assert!(fit_arx(&x, &y, 2, 1e-3).is_ok());
    }

    #[test]
    fn penalized_loss_is_monotone_in_lambda() {
        let exo = synth_exo_series(12, 240);
        let mut rng = Rng64::new(13);
        let mut history = vec![10.0];
        for t in 1..240 {
            let v = 0.6 * history[t - 1] + 4.0 * exo[t].weather_index() + rng.gaussian(0.0, 0.5);
            history.push(v);
        }
        let (x, y) = build_features(&history, &exo, 3).unwrap();
        let lambdas = [1e-4, 1e-2, 1.0, 1e2, 1e4];
        let mut prev = f64::NEG_INFINITY;
        for &l in &lambdas {
            let model = fit_arx(&x, &y, 3, l).unwrap();
            let loss = penalized_loss(&x, &y, &model);
            assert!(
                loss >= prev - 1e-9,
                "loss fell from {prev} to {loss} as lambda rose to {l}"
            );
            prev = loss;
        }
    }

    #[test]
    fn prediction_is_the_clamped_dot_product() {
        let intercept_only = ForecastModel {
            n_lags: 0,
            coeffs: {
                let mut c = vec![0.0; N_EXO_FEATURES + 1];
                c[N_EXO_FEATURES] = 7.0;
                c
            },
            ridge_lambda: 0.0,
        };
        let exo = synth_exo_series(14, 1)[0];
        assert_eq!(intercept_only.predict_next(&[], &exo).unwrap(), 7.0);

        let negative = ForecastModel {
            n_lags: 0,
            coeffs: {
                let mut c = vec![0.0; N_EXO_FEATURES + 1];
                c[N_EXO_FEATURES] = -3.0;
                c
            },
            ridge_lambda: 0.0,
        };
        assert_eq!(negative.predict_next(&[], &exo).unwrap(), 0.0);

        // Three-lag model vs a scalar-loop dot product.
        let mut rng = Rng64::new(15);
        let coeffs: Vec<f64> = (0..3 + N_EXO_FEATURES + 1)
            .map(|_| rng.gaussian(0.0, 1.0))
            .collect();
        let model = ForecastModel {
            n_lags: 3,
            coeffs: coeffs.clone(),
            ridge_lambda: 0.0,
        };
        let recent = [2.0, 4.0, 6.0];
        let feats = encode_exo(&exo);
        let mut manual = coeffs[3 + N_EXO_FEATURES];
        manual += coeffs[0] * 6.0 + coeffs[1] * 4.0 + coeffs[2] * 2.0;
        for (k, f) in feats.iter().enumerate() {
            manual += coeffs[3 + k] * f;
        }
        let pred = model.predict_next(&recent, &exo).unwrap();
        assert!((pred - manual.max(0.0)).abs() < 1e-12);

        let err = model.predict_next(&recent[..2], &exo).unwrap_err();
        assert!(matches!(err, ForecastError::HistoryTooShort { required: 3, got: 2 }));
    }

    #[test]
    fn mse_golden_values_and_errors() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap(), 4.0 / 3.0);
        assert!(matches!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(ForecastError::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(mse(&[], &[]), Err(ForecastError::EmptySeries)));
        assert_eq!(mae(&[0.0, 0.0], &[3.0, -1.0]).unwrap(), 2.0);
    }

    /// Reference implementation with compensated (Kahan) summation.
    fn mse_kahan(a: &[f64], p: &[f64]) -> f64 {
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for (x, y) in a.iter().zip(p) {
            let term = (x - y) * (x - y) - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
        }
        sum / a.len() as f64
    }

    #[test]
    fn mse_matches_compensated_summation_and_obeys_symmetries() {
        let mut rng = Rng64::new(16);
        let a: Vec<f64> = (0..100).map(|_| rng.gaussian(100.0, 30.0)).collect();
        let p: Vec<f64> = (0..100).map(|_| rng.gaussian(100.0, 30.0)).collect();
        let fast = mse(&a, &p).unwrap();
        let exact = mse_kahan(&a, &p);
        assert!((fast - exact).abs() / exact < 1e-10);

        // Permutation invariance: reverse the paired points.
        let ar: Vec<f64> = a.iter().rev().copied().collect();
        let pr: Vec<f64> = p.iter().rev().copied().collect();
        let rev = mse(&ar, &pr).unwrap();
        assert!((fast - rev).abs() / fast < 1e-12);

        // Quadratic scaling.
        let a3: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        let p3: Vec<f64> = p.iter().map(|v| 3.0 * v).collect();
        let scaled = mse(&a3, &p3).unwrap();
        assert!((scaled - 9.0 * fast).abs() / scaled < 1e-12);
    }

    #[test]
    fn backtest_on_noiseless_lag_process_is_essentially_exact() {
        let exo = synth_exo_series(17, 400);
        // Noiseless member of the model class, kept moving (and the
        // design full-rank) by the varying weather input.
        let mut history = vec![30.0];
        for t in 1..400 {
            history.push(0.8 * history[t - 1] + 6.0 + 2.0 * exo[t].weather_index());
        }
        let report = rolling_backtest(&history, &exo, 1, 0.0, 200, 24).unwrap();
        assert!(!report.windows.is_empty());
        for w in &report.windows {
            assert!(w.arx.mse < 1e-10, "window at {} mse {}", w.eval_start, w.arx.mse);
        }
    }

    #[test]
    fn persistence_baseline_squared_errors_on_a_ramp_are_one() {
        let history = [1.0, 2.0, 3.0, 4.0];
        let exo = synth_exo_series(18, 4);
        let report = rolling_backtest(&history, &exo, 1, 1e-3, 2, 1).unwrap();
        assert_eq!(report.windows.len(), 2);
        for w in &report.windows {
            assert_eq!(w.persistence.mse, 1.0);
            assert_eq!(w.persistence.mae, 1.0);
            assert_eq!(w.persistence.n_points, 1);
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let history = vec![1.0; 100];
        let exo = synth_exo_series(19, 100);
        let err = rolling_backtest(&history, &exo, 24, 1e-3, 90, 24).unwrap_err();
        assert!(matches!(err, ForecastError::WindowTooLarge { .. }));
    }

    /// On simulated station demand, the ARX forecaster beats naive
    /// persistence — the daypart swing alone guarantees persistence a
    /// large error at every shoulder hour.
    #[test]
    fn backtest_beats_persistence_on_simulated_demand() {
        use crate::sim::{self, InventoryContext, InventoryDecider, PricingContext, PricingPolicy};
        use crate::units::Volume;

        struct Margin;
        impl PricingPolicy for Margin {
            fn post_price(&mut self, ctx: &PricingContext<'_>) -> Price {
                Price(ctx.exo.wholesale_cost.mills() + 250)
            }
        }
        struct Top;
        impl InventoryDecider for Top {
            fn decide(&mut self, ctx: &InventoryContext<'_>) -> Option<Volume> {
                let d = Volume(10_000_000) - ctx.tank_level;
                (d.mgal() > 0).then_some(d)
            }
        }

        for seed in [1, 2] {
            let params = sim::StationParams::default();
            let log = sim::run_episode(&params, seed, &[], 0, &mut Margin, &mut Top, 30 * 24)
                .unwrap();
            let history = log.demand_series();
            let exo = log.exo_series();
            let report =
                rolling_backtest(&history, &exo, DEFAULT_N_LAGS, DEFAULT_RIDGE_LAMBDA, 336, 24)
                    .unwrap();
            assert!(
                report.mean_arx_mse() < report.mean_persistence_mse(),
                "seed {seed}: arx {} vs persistence {}",
                report.mean_arx_mse(),
                report.mean_persistence_mse()
            );
        }
    }

    #[test]
    fn series_csv_round_trips_and_rejects_malformed_input() {
        let series = vec![0.0, 1.5, 220.25, 3.0e-7];
        let text = series_to_csv(&series);
        assert!(text.starts_with("time_index,value\n0,0\n1,1.5\n"));
        assert_eq!(series_from_csv(&text).unwrap(), series);

        let err = series_from_csv("wrong,header\n0,1\n").unwrap_err();
        assert!(matches!(err, ForecastError::Csv { line: 1, .. }));
        let err = series_from_csv("time_index,value\n0,1\n2,3\n").unwrap_err();
        assert!(matches!(err, ForecastError::Csv { line: 3, .. }));
        let err = series_from_csv("time_index,value\n0,abc\n").unwrap_err();
        assert!(matches!(err, ForecastError::Csv { line: 2, .. }));
    }
}
