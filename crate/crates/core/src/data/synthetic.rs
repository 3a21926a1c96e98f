//! Seeded synthetic market with daily/weekly seasonality, a day-lagged AR
//! structure in the price and a structural break.
//!
//! The random stream is PCG-64 (XSL-RR 128/64, `rand_pcg::Pcg64`) seeded with
//! `seed_from_u64`. A uniform draw is `((x >> 11) + 0.5) * 2^-53` for the next
//! output `x`; a normal draw is Box–Muller on two consecutive uniforms keeping
//! only the cosine branch. Draws are consumed day by day, hour by hour, in the
//! order price noise, load noise, wind noise, after a 28-day burn-in.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate};
use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::{DayValues, Exogenous, HourlyFrame, Market, HOURS};
use crate::error::{Error, Result};

const BURN_IN_DAYS: usize = 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub base_level: f64,
    /// Amplitude of the intraday profile (trough at midnight, peak at noon).
    pub daily_amplitude: f64,
    /// Amplitude of the working-day/weekend profile.
    pub weekly_amplitude: f64,
    /// AR coefficients on the same hour 1, 2 and 7 days back.
    pub ar: [f64; 3],
    /// First zero-based day of the new regime, if any.
    pub break_day: Option<usize>,
    /// Level shift applied from `break_day` on.
    pub break_shift: f64,
    /// AR coefficients from `break_day` on; unchanged when absent.
    pub break_ar: Option<[f64; 3]>,
    pub noise_sd: f64,
    pub load_level: f64,
    /// Load response to the seasonal profile, in load units per price unit.
    pub load_seasonal: f64,
    /// Price impact per unit of load deviation.
    pub load_effect: f64,
    pub wind_level: f64,
    /// Price impact per unit of wind deviation.
    pub wind_effect: f64,
    /// Exogenous noise standard deviations, as multiples of `noise_sd`.
    pub load_noise_ratio: f64,
    pub wind_noise_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_days: 1000,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            base_level: 40.0,
            daily_amplitude: 8.0,
            weekly_amplitude: 5.0,
            ar: [0.45, 0.15, 0.25],
            break_day: Some(600),
            break_shift: 12.0,
            break_ar: Some([0.6, 0.1, 0.15]),
            noise_sd: 3.0,
            load_level: 1000.0,
            load_seasonal: 12.0,
            load_effect: 0.05,
            wind_level: 300.0,
            wind_effect: -0.03,
            load_noise_ratio: 8.0,
            wind_noise_ratio: 20.0,
            seed: 1,
        }
    }
}

struct NormalStream(Pcg64);

impl NormalStream {
    fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

fn daily_shape(hour: usize) -> f64 {
    -(2.0 * PI * hour as f64 / HOURS as f64).cos()
}

fn weekly_shape(weekday: usize) -> f64 {
    // zero mean over the week
    if weekday < 5 {
        0.4
    } else {
        -1.0
    }
}

/// Generates a [`Market::Synth`] frame (price, load, wind).
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<HourlyFrame> {
    if config.n_days == 0 {
        return Err(Error::Config("synthetic n_days must be positive".into()));
    }
    if !(config.noise_sd >= 0.0) {
        return Err(Error::Config("synthetic noise_sd must be nonnegative".into()));
    }
    let mut rng = NormalStream(Pcg64::seed_from_u64(config.seed));
    let total = BURN_IN_DAYS + config.n_days;
    let mut deviation: Vec<DayValues> = vec![[0.0; HOURS]; total];
    let mut price = Vec::with_capacity(config.n_days);
    let mut load = Vec::with_capacity(config.n_days);
    let mut wind = Vec::with_capacity(config.n_days);
    let mut wind_state = 0.0;

    for t in 0..total {
        let in_sample = t.checked_sub(BURN_IN_DAYS);
        let broken = matches!((in_sample, config.break_day), (Some(d), Some(b)) if d >= b);
        let ar = match (broken, config.break_ar) {
            (true, Some(ar)) => ar,
            _ => config.ar,
        };
        let date = config.start_date + Duration::days(t as i64 - BURN_IN_DAYS as i64);
        let weekday = date.weekday().num_days_from_monday() as usize;
        let mut p_day = [0.0; HOURS];
        let mut l_day = [0.0; HOURS];
        let mut w_day = [0.0; HOURS];
        for h in 0..HOURS {
            let lag = |k: usize| t.checked_sub(k).map_or(0.0, |i| deviation[i][h]);
            let eps = rng.normal();
            let eps_load = rng.normal();
            let eps_wind = rng.normal();
            let x = ar[0] * lag(1) + ar[1] * lag(2) + ar[2] * lag(7) + config.noise_sd * eps;
            deviation[t][h] = x;

            let seasonal = config.daily_amplitude * daily_shape(h)
                + config.weekly_amplitude * weekly_shape(weekday);
            let load_dev = config.load_seasonal * seasonal
                + config.noise_sd * config.load_noise_ratio * eps_load;
            wind_state = 0.9 * wind_state + config.noise_sd * config.wind_noise_ratio * eps_wind;
            let shift = if broken { config.break_shift } else { 0.0 };

            p_day[h] = config.base_level
                + seasonal
                + shift
                + x
                + config.load_effect * load_dev
                + config.wind_effect * wind_state;
            l_day[h] = config.load_level + load_dev;
            w_day[h] = config.wind_level + wind_state;
        }
        if in_sample.is_some() {
            price.push(p_day);
            load.push(l_day);
            wind.push(w_day);
        }
    }
    HourlyFrame::new(
        Market::Synth,
        config.start_date,
        price,
        vec![(Exogenous::Load, load), (Exogenous::Wind, wind)],
    )
}
