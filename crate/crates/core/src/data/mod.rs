//! Double-indexed (day, hour) market data.
//!
//! An [`HourlyFrame`] holds the day-ahead price and the day-ahead forecasts of
//! the fundamental variables published for one market. Every series is a dense
//! `n_days × 24` panel; daylight-saving anomalies are repaired on load and the
//! repairs are kept in a [`RepairLog`].

mod csv_io;
mod repair;
mod synthetic;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv};
pub use repair::{repair_hours, HourlyRecord, RepairEntry, RepairKind, RepairLog};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// Hours in a delivery day.
pub const HOURS: usize = 24;

/// The 24 hourly values of one delivery day.
pub type DayValues = [f64; HOURS];

/// Markets with a known exogenous-variable schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Market {
    Epex,
    Np,
    Omie,
    Pjm,
    /// Synthetic data from [`generate_synthetic`].
    Synth,
}

impl Market {
    pub const ALL: [Market; 5] = [
        Market::Epex,
        Market::Np,
        Market::Omie,
        Market::Pjm,
        Market::Synth,
    ];

    /// Exogenous series published for this market, in design-matrix order.
    pub fn exogenous(self) -> &'static [Exogenous] {
        use Exogenous::*;
        match self {
            Market::Epex | Market::Omie => &[Load, Wind, Solar],
            Market::Np => &[Load, Wind],
            Market::Pjm => &[Load, ZonalLoad],
            Market::Synth => &[Load, Wind],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Market::Epex => "epex",
            Market::Np => "np",
            Market::Omie => "omie",
            Market::Pjm => "pjm",
            Market::Synth => "synth",
        }
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Market {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Market::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown market `{s}` (expected one of epex, np, omie, pjm, synth)"
                ))
            })
    }
}

/// Day-ahead fundamental variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Exogenous {
    Load,
    ZonalLoad,
    Wind,
    Solar,
}

impl Exogenous {
    /// Column name in the CSV schema.
    pub fn column(self) -> &'static str {
        match self {
            Exogenous::Load => "load",
            Exogenous::ZonalLoad => "zonal_load",
            Exogenous::Wind => "wind",
            Exogenous::Solar => "solar",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        [
            Exogenous::Load,
            Exogenous::ZonalLoad,
            Exogenous::Wind,
            Exogenous::Solar,
        ]
        .into_iter()
        .find(|e| e.column() == name)
    }

    /// Whether the variable enters the price model for the zero-based hour.
    ///
    /// Solar generation only enters for delivery hours 9 to 17; at night it is
    /// structurally absent rather than zero.
    pub fn enters_hour(self, hour: usize) -> bool {
        match self {
            Exogenous::Solar => (8..=16).contains(&hour),
            _ => true,
        }
    }
}

/// One exogenous series.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub kind: Exogenous,
    pub values: Vec<DayValues>,
}

/// Dense hourly panel for one market.
#[derive(Clone, Debug, PartialEq)]
pub struct HourlyFrame {
    market: Market,
    start_date: NaiveDate,
    price: Vec<DayValues>,
    exog: Vec<Series>,
    repairs: RepairLog,
}

impl HourlyFrame {
    /// Builds a validated frame. Exogenous series are reordered into the
    /// market's schema order; the set must match the schema exactly.
    pub fn new(
        market: Market,
        start_date: NaiveDate,
        price: Vec<DayValues>,
        exog: Vec<(Exogenous, Vec<DayValues>)>,
    ) -> Result<Self> {
        let n_days = price.len();
        if n_days == 0 {
            return Err(Error::Schema("frame has no days".into()));
        }
        let schema = market.exogenous();
        if exog.len() != schema.len() {
            return Err(Error::Schema(format!(
                "market {market} expects exogenous series {:?}, got {:?}",
                schema.iter().map(|e| e.column()).collect::<Vec<_>>(),
                exog.iter().map(|(e, _)| e.column()).collect::<Vec<_>>()
            )));
        }
        let mut ordered = Vec::with_capacity(schema.len());
        for &kind in schema {
            let values = exog
                .iter()
                .find(|(k, _)| *k == kind)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "market {market} requires column `{}`",
                        kind.column()
                    ))
                })?;
            if values.len() != n_days {
                return Err(Error::Schema(format!(
                    "series `{}` has {} days, price has {n_days}",
                    kind.column(),
                    values.len()
                )));
            }
            ordered.push(Series { kind, values });
        }
        let frame = HourlyFrame {
            market,
            start_date,
            price,
            exog: ordered,
            repairs: RepairLog::default(),
        };
        if let Some((day, hour)) = frame.first_non_finite() {
            return Err(Error::Schema(format!(
                "non-finite value at day {day}, hour {hour}"
            )));
        }
        Ok(frame)
    }

    pub(crate) fn with_repairs(mut self, repairs: RepairLog) -> Self {
        self.repairs = repairs;
        self
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        std::iter::once(&self.price)
            .chain(self.exog.iter().map(|s| &s.values))
            .flat_map(|values| values.iter().enumerate())
            .find_map(|(d, day)| day.iter().position(|v| !v.is_finite()).map(|h| (d, h)))
    }

    pub fn market(&self) -> Market {
        self.market
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn n_days(&self) -> usize {
        self.price.len()
    }

    pub fn price(&self) -> &[DayValues] {
        &self.price
    }

    pub fn exogenous(&self) -> &[Series] {
        &self.exog
    }

    pub fn exog(&self, kind: Exogenous) -> Option<&[DayValues]> {
        self.exog
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.values.as_slice())
    }

    pub fn repair_log(&self) -> &RepairLog {
        &self.repairs
    }

    /// Calendar date of zero-based day `day`.
    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }

    /// Zero-based day index of `date`, if it falls inside the frame.
    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.n_days()).then_some(offset as usize)
    }

    /// Weekday of zero-based day `day`, Monday = 0.
    pub fn weekday(&self, day: usize) -> usize {
        self.date(day).weekday().num_days_from_monday() as usize
    }

    /// Sub-frame over `days`, with the start date shifted accordingly.
    pub fn slice(&self, days: Range<usize>) -> Result<Self> {
        if days.start >= days.end || days.end > self.n_days() {
            return Err(Error::Design(format!(
                "day range {days:?} outside frame of {} days",
                self.n_days()
            )));
        }
        Ok(HourlyFrame {
            market: self.market,
            start_date: self.date(days.start),
            price: self.price[days.clone()].to_vec(),
            exog: self
                .exog
                .iter()
                .map(|s| Series {
                    kind: s.kind,
                    values: s.values[days.clone()].to_vec(),
                })
                .collect(),
            repairs: RepairLog::default(),
        })
    }

    /// Frame with the same schema and new values starting at `first_day` of
    /// this frame's calendar. Used for transformed panels.
    pub(crate) fn with_values(&self, first_day: usize, price: Vec<DayValues>, exog: Vec<Vec<DayValues>>) -> Self {
        debug_assert_eq!(exog.len(), self.exog.len());
        HourlyFrame {
            market: self.market,
            start_date: self.date(first_day),
            price,
            exog: self
                .exog
                .iter()
                .zip(exog)
                .map(|(s, values)| Series {
                    kind: s.kind,
                    values,
                })
                .collect(),
            repairs: RepairLog::default(),
        }
    }
}
