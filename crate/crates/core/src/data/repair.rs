use super::{DayValues, HOURS};
use crate::error::{Error, Result};

/// One observed hourly row: zero-based day and hour plus one value per series.
#[derive(Clone, Debug, PartialEq)]
pub struct HourlyRecord {
    pub day: usize,
    pub hour: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepairKind {
    /// Hour absent from the input (spring clock change); filled with the mean
    /// of the nearest observed neighbours.
    MissingFilled,
    /// Hour present twice (autumn clock change); replaced by the mean.
    DoubledAveraged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepairEntry {
    pub day: usize,
    pub hour: usize,
    pub kind: RepairKind,
    /// The rows that were averaged; empty for a filled gap.
    pub original: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RepairLog {
    pub entries: Vec<RepairEntry>,
}

impl RepairLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: RepairKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }
}

/// Densifies sparse hourly records into one `n_days × 24` panel per series.
///
/// A doubled hour becomes the arithmetic mean of its rows. A single missing
/// hour becomes the mean of the observed hours on either side of it; at the
/// start or end of the sample the one available neighbour is copied. Runs of
/// two or more missing hours are rejected.
pub fn repair_hours(
    records: &[HourlyRecord],
    n_days: usize,
    n_series: usize,
) -> Result<(Vec<Vec<DayValues>>, RepairLog)> {
    let n_cells = n_days * HOURS;
    let mut rows: Vec<Vec<&[f64]>> = vec![Vec::new(); n_cells];
    for rec in records {
        if rec.hour >= HOURS || rec.day >= n_days {
            return Err(Error::Schema(format!(
                "record (day {}, hour {}) outside {n_days}-day panel",
                rec.day, rec.hour
            )));
        }
        if rec.values.len() != n_series {
            return Err(Error::Schema(format!(
                "record (day {}, hour {}) has {} values, expected {n_series}",
                rec.day,
                rec.hour,
                rec.values.len()
            )));
        }
        rows[rec.day * HOURS + rec.hour].push(&rec.values);
    }

    let mut log = RepairLog::default();
    let mut flat: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_cells);
    for (cell, obs) in rows.iter().enumerate() {
        match obs.len() {
            0 => flat.push(None),
            1 => flat.push(Some(obs[0].to_vec())),
            k => {
                let mean = (0..n_series)
                    .map(|s| obs.iter().map(|r| r[s]).sum::<f64>() / k as f64)
                    .collect();
                log.entries.push(RepairEntry {
                    day: cell / HOURS,
                    hour: cell % HOURS,
                    kind: RepairKind::DoubledAveraged,
                    original: obs.iter().map(|r| r.to_vec()).collect(),
                });
                flat.push(Some(mean));
            }
        }
    }

    let mut cell = 0;
    while cell < n_cells {
        if flat[cell].is_some() {
            cell += 1;
            continue;
        }
        let run = flat[cell..].iter().take_while(|v| v.is_none()).count();
        if run >= 2 {
            return Err(Error::IrreparableGap {
                day: cell / HOURS,
                hour: cell % HOURS,
                length: run,
            });
        }
        let before = cell.checked_sub(1).and_then(|i| flat[i].as_ref());
        let after = flat.get(cell + 1).and_then(|v| v.as_ref());
        let filled = match (before, after) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect(),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => {
                return Err(Error::IrreparableGap {
                    day: cell / HOURS,
                    hour: cell % HOURS,
                    length: n_cells,
                })
            }
        };
        log.entries.push(RepairEntry {
            day: cell / HOURS,
            hour: cell % HOURS,
            kind: RepairKind::MissingFilled,
            original: Vec::new(),
        });
        flat[cell] = Some(filled);
        cell += 1;
    }
    log.entries.sort_by_key(|e| (e.day, e.hour));

    let mut dense = vec![vec![[0.0; HOURS]; n_days]; n_series];
    for (cell, values) in flat.into_iter().enumerate() {
        let values = values.expect("every cell filled");
        for (s, v) in values.into_iter().enumerate() {
            dense[s][cell / HOURS][cell % HOURS] = v;
        }
    }
    Ok((dense, log))
}
