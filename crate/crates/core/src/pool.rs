//! Rolling-window forecast pool.
//!
//! For every forecast day `d` and every window length `τ` the transforms and
//! the 24 hourly models are calibrated on days `[d - τ, d - 1]` and day `d` is
//! forecast. Days are independent and run in parallel on the current rayon
//! pool.
//!
//! Within one day the windows are visited in increasing length. Each longer
//! window adds whole days to the in-sample set, so the sorted sample of every
//! variable is grown by merging instead of re-sorting, and in-sample values
//! get their transformed value from their tie group directly. The results are
//! bit-identical to [`arx::calibrate`] followed by [`arx::forecast_day`].

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;

use crate::arx::{self, design_start, MAX_LAG};
use crate::data::{DayValues, HourlyFrame, HOURS};
use crate::error::{Error, Result};
use crate::vst::{group_quantile, VstView};

/// Forecasts of every window length for a run of consecutive days.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastPool {
    first_day: usize,
    window_lengths: Vec<usize>,
    /// Row `t` (hour of the pool) holds one forecast per window.
    values: Vec<f64>,
    actual: Vec<f64>,
}

impl ForecastPool {
    /// Builds a pool from row-major forecasts (`n_hours × n_windows`).
    pub fn new(first_day: usize, window_lengths: Vec<usize>, values: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        if window_lengths.is_empty() || window_lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("window lengths must be non-empty and strictly increasing".into()));
        }
        if actual.is_empty() || actual.len() % HOURS != 0 {
            return Err(Error::Alignment(format!(
                "pool has {} hourly rows, not a positive multiple of 24",
                actual.len()
            )));
        }
        if values.len() != actual.len() * window_lengths.len() {
            return Err(Error::Alignment(format!(
                "{} forecasts for {} rows and {} windows",
                values.len(),
                actual.len(),
                window_lengths.len()
            )));
        }
        if values.iter().chain(&actual).any(|v| !v.is_finite()) {
            return Err(Error::Alignment("pool contains a non-finite value".into()));
        }
        Ok(ForecastPool {
            first_day,
            window_lengths,
            values,
            actual,
        })
    }

    /// Frame day of the first pool day.
    pub fn first_day(&self) -> usize {
        self.first_day
    }

    /// First hourly index, `24 * first_day`.
    pub fn t0(&self) -> usize {
        self.first_day * HOURS
    }

    pub fn n_days(&self) -> usize {
        self.actual.len() / HOURS
    }

    pub fn n_windows(&self) -> usize {
        self.window_lengths.len()
    }

    pub fn window_lengths(&self) -> &[usize] {
        &self.window_lengths
    }

    /// Column of window length `tau`.
    pub fn column_of(&self, tau: usize) -> Option<usize> {
        self.window_lengths.binary_search(&tau).ok()
    }

    /// Forecasts of all windows for pool row `t` (0-based hour of the pool).
    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.n_windows();
        &self.values[t * w..(t + 1) * w]
    }

    /// Forecasts of all windows for pool day `day`, hour `hour`.
    pub fn cell(&self, day: usize, hour: usize) -> &[f64] {
        self.row(day * HOURS + hour)
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn actual_day(&self, day: usize) -> &[f64] {
        &self.actual[day * HOURS..(day + 1) * HOURS]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pool restricted to pool days `days`.
    pub fn trim_days(&self, days: std::ops::Range<usize>) -> Result<Self> {
        if days.is_empty() || days.end > self.n_days() {
            return Err(Error::Alignment(format!(
                "day range {days:?} outside pool of {} days",
                self.n_days()
            )));
        }
        let w = self.n_windows();
        ForecastPool::new(
            self.first_day + days.start,
            self.window_lengths.clone(),
            self.values[days.start * HOURS * w..days.end * HOURS * w].to_vec(),
            self.actual[days.start * HOURS..days.end * HOURS].to_vec(),
        )
    }

    /// Writes `t,actual,tau_<τ>...` with six decimals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut line = String::from("t,actual");
        for tau in &self.window_lengths {
            line.push_str(&format!(",tau_{tau}"));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        for (i, actual) in self.actual.iter().enumerate() {
            line.clear();
            line.push_str(&format!("{},{actual:.6}", self.t0() + i));
            for v in self.row(i) {
                line.push_str(&format!(",{v:.6}"));
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a pool written by [`ForecastPool::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty pool file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "actual" {
            return Err(parse_err(1, "header must start with `t,actual,tau_...`".into()));
        }
        let windows = cols[2..]
            .iter()
            .map(|c| {
                c.strip_prefix("tau_")
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(1, format!("bad window column `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t0 = None;
        let mut values = Vec::new();
        let mut actual = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != cols.len() {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad hour index `{}`", fields[0])))?;
            let expected = *t0.get_or_insert(t) + actual.len();
            if t != expected {
                return Err(parse_err(line_no, format!("hour index {t}, expected {expected}")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad number `{s}`")))
            };
            actual.push(num(fields[1])?);
            for f in &fields[2..] {
                values.push(num(f)?);
            }
        }
        let t0 = t0.ok_or_else(|| parse_err(2, "pool file has no rows".into()))?;
        if t0 % HOURS != 0 {
            return Err(parse_err(2, format!("first hour index {t0} is not a day boundary")));
        }
        ForecastPool::new(t0 / HOURS, windows, values, actual)
    }
}

/// Mean absolute error of every window over the whole pool.
pub fn mae_by_window(pool: &ForecastPool) -> Vec<f64> {
    let w = pool.n_windows();
    let mut sum = vec![0.0; w];
    for (t, &a) in pool.actual().iter().enumerate() {
        for (s, f) in sum.iter_mut().zip(pool.row(t)) {
            *s += (f - a).abs();
        }
    }
    let n = pool.actual().len() as f64;
    sum.into_iter().map(|s| s / n).collect()
}

/// Parses `56:728`, `56:7:728` (start:step:end) or a comma list.
pub fn parse_windows(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid window set `{spec}`"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let mut windows: Vec<usize> = if spec.contains(':') {
        let parts: Vec<usize> = spec.split(':').map(num).collect::<Result<_>>()?;
        let (start, step, end) = match parts[..] {
            [a, b] => (a, 1, b),
            [a, s, b] => (a, s, b),
            _ => return Err(bad()),
        };
        if step == 0 || start > end {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    windows.sort_unstable();
    if windows.is_empty() || windows.windows(2).any(|w| w[0] == w[1]) || windows[0] < 2 {
        return Err(bad());
    }
    Ok(windows)
}

/// Computes the pool for forecast days `days` (inclusive) of `frame`.
///
/// `windows` must be strictly increasing. Every window must fit inside the
/// frame for the first forecast day.
pub fn run_pool(frame: &HourlyFrame, windows: &[usize], days: RangeInclusive<usize>) -> Result<ForecastPool> {
    if windows.is_empty() || windows.windows(2).any(|w| w[0] >= w[1]) || windows[0] < 2 {
        return Err(Error::Config(
            "window lengths must be at least 2 and strictly increasing".into(),
        ));
    }
    let (first, last) = (*days.start(), *days.end());
    let longest = *windows.last().unwrap();
    if first > last || first < longest || first <= MAX_LAG || last >= frame.n_days() {
        return Err(Error::Design(format!(
            "forecast days {first}..={last} need {longest} days of history inside a {}-day frame",
            frame.n_days()
        )));
    }
    // every sample of window tau holds 24 tau values, on every day
    let untied: Vec<Vec<f64>> = windows
        .par_iter()
        .map(|&tau| {
            let n = tau * HOURS;
            (0..n).map(|k| group_quantile(k + 1, k + 1, n)).collect()
        })
        .collect();
    let per_day: Vec<Vec<f64>> = (first..=last)
        .into_par_iter()
        .map(|d| pool_day(frame, windows, &untied, d))
        .collect::<Result<_>>()?;
    let actual = frame.price()[first..=last].iter().flatten().copied().collect();
    ForecastPool::new(first, windows.to_vec(), per_day.concat(), actual)
}

/// Sorted in-sample values of one variable, with the cell each came from.
struct GrowingSample {
    values: Vec<f64>,
    cells: Vec<u32>,
    /// Transformed value of every in-sample cell, indexed by cell id.
    transformed: Vec<f64>,
}

impl GrowingSample {
    fn new(capacity: usize) -> Self {
        GrowingSample {
            values: Vec::with_capacity(capacity),
            cells: Vec::with_capacity(capacity),
            transformed: vec![0.0; capacity],
        }
    }

    fn merge(&mut self, mut add: Vec<(f64, u32)>) {
        add.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let old_v = std::mem::take(&mut self.values);
        let old_c = std::mem::take(&mut self.cells);
        let n = old_v.len() + add.len();
        self.values.reserve(n);
        self.cells.reserve(n);
        let (mut i, mut j) = (0, 0);
        while i < old_v.len() || j < add.len() {
            let take_old = j == add.len() || (i < old_v.len() && old_v[i].total_cmp(&add[j].0).is_le());
            if take_old {
                self.values.push(old_v[i]);
                self.cells.push(old_c[i]);
                i += 1;
            } else {
                self.values.push(add[j].0);
                self.cells.push(add[j].1);
                j += 1;
            }
        }
    }

    /// Fills `transformed` for every in-sample cell. `untied[k]` is the
    /// quantile of a lone value at 0-based rank `k`.
    fn assign(&mut self, untied: &[f64]) {
        let n = self.values.len();
        debug_assert_eq!(untied.len(), n);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && self.values[j] == self.values[i] {
                j += 1;
            }
            let q = if j == i + 1 { untied[i] } else { group_quantile(i + 1, j, n) };
            for &c in &self.cells[i..j] {
                self.transformed[c as usize] = q;
            }
            i = j;
        }
    }

    fn view(&self) -> VstView<'_> {
        VstView(&self.values)
    }
}

/// All windows for one forecast day, as `24 × n_windows` row-major values.
fn pool_day(frame: &HourlyFrame, windows: &[usize], untied: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    let longest = *windows.last().unwrap();
    let base = d - longest;
    let cell = |day: usize, hour: usize| ((day - base) * HOURS + hour) as u32;
    let n_exog = frame.exogenous().len();
    let series: Vec<&[DayValues]> = std::iter::once(frame.price())
        .chain(frame.exogenous().iter().map(|s| s.values.as_slice()))
        .collect();
    let mut samples: Vec<GrowingSample> = (0..=n_exog).map(|_| GrowingSample::new(longest * HOURS)).collect();
    let mut covered = d;
    let mut out = vec![0.0; HOURS * windows.len()];

    for (w, &tau) in windows.iter().enumerate() {
        let window_start = d - tau;
        for (sample, values) in samples.iter_mut().zip(&series) {
            let add = (window_start..covered)
                .flat_map(|day| (0..HOURS).map(move |h| (values[day][h], cell(day, h))))
                .collect();
            sample.merge(add);
            sample.assign(&untied[w]);
        }
        covered = window_start;

        let start = design_start(d, tau);
        let lo = start - MAX_LAG;
        let transform = |sample: &GrowingSample, values: &[DayValues], day: usize| -> DayValues {
            if day >= window_start && day < d {
                std::array::from_fn(|h| sample.transformed[cell(day, h) as usize])
            } else {
                let view = sample.view();
                values[day].map(|v| view.forward(v))
            }
        };
        let mut price: Vec<DayValues> = (lo..d).map(|day| transform(&samples[0], series[0], day)).collect();
        // the price of the forecast day is never read
        price.push([0.0; HOURS]);
        let exog: Vec<Vec<DayValues>> = (1..=n_exog)
            .map(|k| (lo..=d).map(|day| transform(&samples[k], series[k], day)).collect())
            .collect();
        let tframe = frame.with_values(lo, price, exog);
        let fits = arx::fit_hours(&tframe, start - lo..d - lo, lo)?;
        let z = arx::predict_transformed(&fits, &tframe, d - lo)?;
        let view = samples[0].view();
        for (h, zh) in z.into_iter().enumerate() {
            out[h * windows.len() + w] = view.inverse(zh);
        }
    }
    Ok(out)
}
