use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::repair::{repair_hours, HourlyRecord};
use super::{Exogenous, HourlyFrame, Market, HOURS};
use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
}

/// Loads one market's hourly CSV.
///
/// The header must be `timestamp,price` followed by exactly the exogenous
/// columns of `market` (any order). Timestamps are local market time, one row
/// per hour, sorted; clock-change gaps and duplicates are repaired.
pub fn load_csv(path: impl AsRef<Path>, market: Market) -> Result<HourlyFrame> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 2 || names[0] != "timestamp" || names[1] != "price" {
        return Err(Error::Schema(format!(
            "{}: header must start with `timestamp,price`, got `{}`",
            path.display(),
            names.join(",")
        )));
    }
    let mut exog_columns = Vec::new();
    for name in &names[2..] {
        let kind = Exogenous::from_column(name)
            .filter(|k| market.exogenous().contains(k))
            .ok_or_else(|| {
                Error::Schema(format!(
                    "{}: unknown column `{name}` for market {market}",
                    path.display()
                ))
            })?;
        if exog_columns.contains(&kind) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        exog_columns.push(kind);
    }
    if let Some(missing) = market
        .exogenous()
        .iter()
        .find(|k| !exog_columns.contains(k))
    {
        return Err(Error::Schema(format!(
            "{}: market {market} requires column `{}`",
            path.display(),
            missing.column()
        )));
    }

    let mut stamps: Vec<NaiveDateTime> = Vec::new();
    let mut raw: Vec<(usize, Vec<f64>)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", names.len(), row.len()),
            ));
        }
        let stamp = parse_timestamp(&row[0])
            .ok_or_else(|| parse_err(line, format!("bad timestamp `{}`", &row[0])))?;
        if stamp.minute() != 0 || stamp.second() != 0 {
            return Err(parse_err(line, format!("timestamp `{}` is not on the hour", &row[0])));
        }
        if stamps.last().is_some_and(|prev| stamp < *prev) {
            return Err(parse_err(line, "rows are not sorted by timestamp".into()));
        }
        let values = row
            .iter()
            .skip(1)
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("bad number `{field}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        stamps.push(stamp);
        raw.push((line, values));
    }
    let first = stamps
        .first()
        .ok_or_else(|| Error::Schema(format!("{}: no data rows", path.display())))?
        .date();
    let n_days = (stamps.last().unwrap().date() - first).num_days() as usize + 1;

    let records: Vec<HourlyRecord> = stamps
        .iter()
        .zip(raw)
        .map(|(stamp, (_, values))| HourlyRecord {
            day: (stamp.date() - first).num_days() as usize,
            hour: stamp.hour() as usize,
            values,
        })
        .collect();
    let (mut dense, log) = repair_hours(&records, n_days, names.len() - 1)?;
    let exog: Vec<_> = exog_columns.into_iter().zip(dense.drain(1..)).collect();
    let price = dense.pop().expect("price column");
    Ok(HourlyFrame::new(market, first, price, exog)?.with_repairs(log))
}

/// Writes `frame` in the schema read by [`load_csv`], values with six
/// decimals.
pub fn write_csv(frame: &HourlyFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    let mut header = String::from("timestamp,price");
    for s in frame.exogenous() {
        header.push(',');
        header.push_str(s.kind.column());
    }
    writeln!(out, "{header}").map_err(io)?;
    for day in 0..frame.n_days() {
        let date = frame.date(day);
        for hour in 0..HOURS {
            write!(out, "{}T{hour:02}:00,{:.6}", date.format("%Y-%m-%d"), frame.price()[day][hour])
                .map_err(io)?;
            for s in frame.exogenous() {
                write!(out, ",{:.6}", s.values[day][hour]).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
