//! Per-hour ARX model for day-ahead prices.
//!
//! For delivery hour `h` of day `d` the (transformed) price is regressed on
//!
//! | column | regressor |
//! |---|---|
//! | 0–2 | price at hour `h` on days `d-1`, `d-2`, `d-7` |
//! | 3–4 | minimum and maximum price of day `d-1` |
//! | 5 | price of the last hour of day `d-1` |
//! | 6–12 | Monday..Sunday indicators |
//! | 13.. | day-ahead exogenous forecasts for `(d, h)`, in market schema order |
//!
//! There is no intercept; the seven weekday indicators span the constant.
//! Solar generation only appears for hours 9–17. All 24 hours are fitted
//! independently by least squares in the N-PIT transformed space.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::data::{DayValues, Exogenous, HourlyFrame, Market, HOURS};
use crate::error::{Error, Result};
use crate::ols::{least_squares, solve_normal_equations, OlsSolution};
use crate::vst::{VstMap, VstView};

/// Autoregressive, min/max, midnight and weekday columns.
pub const BASE_COLUMNS: usize = 13;
/// Oldest price lag, in days.
pub const MAX_LAG: usize = 7;

/// Indices (into the market schema) of the exogenous series entering `hour`.
pub fn exogenous_for_hour(market: Market, hour: usize) -> impl Iterator<Item = (usize, Exogenous)> {
    market
        .exogenous()
        .iter()
        .copied()
        .enumerate()
        .filter(move |(_, e)| e.enters_hour(hour))
}

/// Number of design columns for `hour` (zero-based) on `market`.
pub fn design_width(market: Market, hour: usize) -> usize {
    BASE_COLUMNS + exogenous_for_hour(market, hour).count()
}

fn fill_row(frame: &HourlyFrame, hour: usize, day: usize, row: &mut [f64]) {
    let price = frame.price();
    let prev = &price[day - 1];
    row[0] = prev[hour];
    row[1] = price[day - 2][hour];
    row[2] = price[day - 7][hour];
    row[3] = prev.iter().copied().fold(f64::INFINITY, f64::min);
    row[4] = prev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row[5] = prev[HOURS - 1];
    row[6..BASE_COLUMNS].fill(0.0);
    row[6 + frame.weekday(day)] = 1.0;
    let series = frame.exogenous();
    for (k, (idx, _)) in exogenous_for_hour(frame.market(), hour).enumerate() {
        row[BASE_COLUMNS + k] = series[idx].values[day][hour];
    }
}

fn check_hour(hour: usize) -> Result<()> {
    if hour >= HOURS {
        return Err(Error::Design(format!("hour {hour} outside 0..24")));
    }
    Ok(())
}

/// Regressor row for forecasting `(day, hour)`; the price of `day` itself is
/// not used.
pub fn design_row(frame: &HourlyFrame, hour: usize, day: usize) -> Result<Vec<f64>> {
    check_hour(hour)?;
    if day < MAX_LAG || day >= frame.n_days() {
        return Err(Error::Design(format!(
            "day {day} needs {MAX_LAG} days of lags inside a {}-day frame",
            frame.n_days()
        )));
    }
    let mut row = vec![0.0; design_width(frame.market(), hour)];
    fill_row(frame, hour, day, &mut row);
    Ok(row)
}

/// Design matrix and target for `hour` over `days`, one row per day.
///
/// `frame` is expected to hold transformed values already.
pub fn build_design(
    frame: &HourlyFrame,
    hour: usize,
    days: Range<usize>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_hour(hour)?;
    if days.start < MAX_LAG || days.end > frame.n_days() || days.is_empty() {
        return Err(Error::Design(format!(
            "days {days:?} must start at least {MAX_LAG} days into a {}-day frame",
            frame.n_days()
        )));
    }
    let width = design_width(frame.market(), hour);
    let n = days.len();
    let mut x = DMatrix::zeros(n, width);
    let mut y = DVector::zeros(n);
    let mut row = vec![0.0; width];
    for (i, day) in days.enumerate() {
        fill_row(frame, hour, day, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
        y[i] = frame.price()[day][hour];
    }
    Ok((x, y))
}

/// Least-squares fit of one design.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsSolution> {
    least_squares(x, y)
}

/// Fitted model for one delivery hour.
#[derive(Clone, Debug, PartialEq)]
pub struct ArxFit {
    /// Zero-based delivery hour.
    pub hour: usize,
    /// Coefficients in design-column order.
    pub coefficients: Vec<f64>,
    /// First and last calibration day (zero-based, inclusive).
    pub window: (usize, usize),
    pub rss: f64,
}

impl ArxFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }
}

/// Fits all 24 hours on `days` of a transformed frame. `offset` converts
/// frame-relative day numbers to absolute ones for the recorded window.
///
/// The cross-product matrix is accumulated row by row; the weekday block is
/// one-hot, so only its row sums and counts are added. The result equals
/// [`fit_ols`] on [`build_design`] up to rounding.
pub(crate) fn fit_hours(frame: &HourlyFrame, days: Range<usize>, offset: usize) -> Result<Vec<ArxFit>> {
    if days.start < MAX_LAG || days.end > frame.n_days() || days.is_empty() {
        return Err(Error::Design(format!(
            "days {days:?} must start at least {MAX_LAG} days into a {}-day frame",
            frame.n_days()
        )));
    }
    let price = frame.price();
    let summary: Vec<[f64; 3]> = price[days.start - 1..days.end - 1]
        .iter()
        .map(|day| {
            let min = day.iter().copied().fold(f64::INFINITY, f64::min);
            let max = day.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            [min, max, day[HOURS - 1]]
        })
        .collect();
    let weekdays: Vec<usize> = days.clone().map(|d| frame.weekday(d)).collect();
    let series = frame.exogenous();
    (0..HOURS)
        .map(|hour| {
            let exog: Vec<usize> = exogenous_for_hour(frame.market(), hour).map(|(i, _)| i).collect();
            let width = BASE_COLUMNS + exog.len();
            if days.len() < width {
                return Err(Error::Underdetermined {
                    rows: days.len(),
                    cols: width,
                });
            }
            let exog_values: Vec<&[DayValues]> = exog.iter().map(|&e| series[e].values.as_slice()).collect();
            let sys = HourData {
                price,
                summary: &summary,
                weekdays: &weekdays,
                exog: &exog_values,
                hour,
                days: days.clone(),
            };
            let (gram, rhs, yy) = match exog.len() {
                0 => sys.normal_equations::<6>(),
                1 => sys.normal_equations::<7>(),
                2 => sys.normal_equations::<8>(),
                3 => sys.normal_equations::<9>(),
                n => return Err(Error::Design(format!("{n} exogenous columns are not supported"))),
            };
            if gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Fit(format!("non-finite design for hour {hour}")));
            }
            let (beta, _) = solve_normal_equations(gram, &rhs);
            // any least-squares solution has rss = y'y - b'X'y
            let rss = (yy - beta.dot(&rhs)).max(0.0);
            let coefficients: Vec<f64> = beta.iter().copied().collect();
            Ok(ArxFit {
                hour,
                coefficients,
                window: (days.start + offset, days.end - 1 + offset),
                rss,
            })
        })
        .collect()
}

/// Inputs of one hourly regression, read straight from the frame.
struct HourData<'a> {
    price: &'a [DayValues],
    /// Min, max and last hour of the previous day, per design day.
    summary: &'a [[f64; 3]],
    weekdays: &'a [usize],
    exog: &'a [&'a [DayValues]],
    hour: usize,
    days: Range<usize>,
}

impl HourData<'_> {
    /// Cross-products `X'X`, `X'y` and `y'y` for `M` non-indicator columns.
    fn normal_equations<const M: usize>(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let h = self.hour;
        let mut g = [[0.0; M]; M];
        let mut sums = [[0.0; M]; 7];
        let mut xy = [0.0; M];
        let mut counts = [0.0; 7];
        let mut ysum = [0.0; 7];
        let mut yy = 0.0;
        for (i, day) in self.days.clone().enumerate() {
            let mut x = [0.0; M];
            x[0] = self.price[day - 1][h];
            x[1] = self.price[day - 2][h];
            x[2] = self.price[day - 7][h];
            x[3..6].copy_from_slice(&self.summary[i]);
            for (k, e) in self.exog.iter().enumerate() {
                x[6 + k] = e[day][h];
            }
            let y = self.price[day][h];
            let w = self.weekdays[i];
            for a in 0..M {
                for b in a..M {
                    g[a][b] += x[a] * x[b];
                }
                sums[w][a] += x[a];
                xy[a] += x[a] * y;
            }
            counts[w] += 1.0;
            ysum[w] += y;
            yy += y * y;
        }
        // dense columns sit at 0..6 and 13.., indicators at 6..13
        let col = |k: usize| if k < 6 { k } else { k + 7 };
        let width = M + 7;
        let mut gram = DMatrix::zeros(width, width);
        let mut rhs = DVector::zeros(width);
        for a in 0..M {
            for b in a..M {
                gram[(col(a), col(b))] = g[a][b];
                gram[(col(b), col(a))] = g[a][b];
            }
            for w in 0..7 {
                gram[(col(a), 6 + w)] = sums[w][a];
                gram[(6 + w, col(a))] = sums[w][a];
            }
            rhs[col(a)] = xy[a];
        }
        for w in 0..7 {
            gram[(6 + w, 6 + w)] = counts[w];
            rhs[6 + w] = ysum[w];
        }
        (gram, rhs, yy)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Transformed-space prediction for `day` of a transformed frame.
pub(crate) fn predict_transformed(fits: &[ArxFit], frame: &HourlyFrame, day: usize) -> Result<DayValues> {
    let mut out = [0.0; HOURS];
    for fit in fits {
        let row = design_row(frame, fit.hour, day)?;
        if row.len() != fit.coefficients.len() {
            return Err(Error::Forecast(format!(
                "hour {}: model has {} coefficients, design has {}",
                fit.hour,
                fit.coefficients.len(),
                row.len()
            )));
        }
        out[fit.hour] = fit.predict(&row);
    }
    Ok(out)
}

/// Per-variable transforms fitted on one calibration window.
#[derive(Clone, Debug, PartialEq)]
pub struct VstSet {
    pub price: VstMap,
    /// In market schema order.
    pub exog: Vec<VstMap>,
}

impl VstSet {
    /// Fits every variable on `days` of `frame`.
    pub fn fit(frame: &HourlyFrame, days: Range<usize>) -> Result<Self> {
        let flat = |values: &[DayValues]| -> Vec<f64> { values[days.clone()].iter().flatten().copied().collect() };
        Ok(VstSet {
            price: VstMap::fit(&flat(frame.price()))?,
            exog: frame
                .exogenous()
                .iter()
                .map(|s| VstMap::fit(&flat(&s.values)))
                .collect::<Result<_>>()?,
        })
    }

    /// Applies the forward transform to every value of `frame`.
    pub fn transform_frame(&self, frame: &HourlyFrame) -> HourlyFrame {
        let map = |view: VstView<'_>, values: &[DayValues]| -> Vec<DayValues> {
            values.iter().map(|day| day.map(|v| view.forward(v))).collect()
        };
        frame.with_values(
            0,
            map(self.price.as_view(), frame.price()),
            frame
                .exogenous()
                .iter()
                .zip(&self.exog)
                .map(|(s, m)| map(m.as_view(), &s.values))
                .collect(),
        )
    }
}

/// Transforms and fitted hourly models for one (forecast day, window) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub vst: VstSet,
    pub fits: Vec<ArxFit>,
}

/// First usable calibration day for a window of `tau` days ending the day
/// before `forecast_day`: the window start, or the first day with a full
/// set of lags if the window reaches further back.
pub fn design_start(forecast_day: usize, tau: usize) -> usize {
    forecast_day.saturating_sub(tau).max(MAX_LAG)
}

/// Fits transforms on days `[forecast_day - tau, forecast_day - 1]` and the 24
/// hourly models on the same window.
pub fn calibrate(frame: &HourlyFrame, forecast_day: usize, tau: usize) -> Result<Calibration> {
    if tau < 2 || forecast_day < tau || forecast_day > frame.n_days() {
        return Err(Error::Design(format!(
            "window of {tau} days before day {forecast_day} is not inside a {}-day frame",
            frame.n_days()
        )));
    }
    let start = design_start(forecast_day, tau);
    if start >= forecast_day {
        return Err(Error::Design(format!(
            "no calibration day with full lags before day {forecast_day}"
        )));
    }
    let vst = VstSet::fit(frame, forecast_day - tau..forecast_day)?;
    let lo = start - MAX_LAG;
    let tframe = vst.transform_frame(&frame.slice(lo..forecast_day)?);
    let fits = fit_hours(&tframe, start - lo..forecast_day - lo, lo)?;
    Ok(Calibration { vst, fits })
}

/// 24 price forecasts for `day` in original units.
pub fn forecast_day(fits: &[ArxFit], frame: &HourlyFrame, vst: &VstSet, day: usize) -> Result<DayValues> {
    if fits.len() != HOURS {
        return Err(Error::Forecast(format!("expected 24 hourly models, got {}", fits.len())));
    }
    if day < MAX_LAG || day >= frame.n_days() {
        return Err(Error::Forecast(format!(
            "day {day} has no lags or exogenous values in a {}-day frame",
            frame.n_days()
        )));
    }
    let tframe = vst.transform_frame(&frame.slice(day - MAX_LAG..day + 1)?);
    let z = predict_transformed(fits, &tframe, MAX_LAG)?;
    Ok(z.map(|v| vst.price.inverse(v)))
}
