//! Simple and weighted averages of pool columns.
//!
//! Day arguments are pool days (0 is the first day of the pool).

use crate::data::{DayValues, HOURS};
use crate::error::{Error, Result};
use crate::pool::ForecastPool;

/// Default averaging window in days.
pub const AVERAGING_WINDOW: usize = 182;

/// A fixed set of window lengths to average over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowSubset {
    pub taus: Vec<usize>,
}

impl Default for WindowSubset {
    /// Three short and three long windows.
    fn default() -> Self {
        WindowSubset {
            taus: vec![56, 84, 112, 714, 721, 728],
        }
    }
}

impl WindowSubset {
    pub fn new(taus: Vec<usize>) -> Self {
        WindowSubset { taus }
    }

    /// Parses a comma list such as `56,84,112`.
    pub fn parse(list: &str) -> Result<Self> {
        let taus = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid window `{s}` in subset `{list}`")))
            })
            .collect::<Result<Vec<usize>>>()?;
        if taus.is_empty() {
            return Err(Error::Config("empty window subset".into()));
        }
        Ok(WindowSubset { taus })
    }

    /// Pool columns of the subset.
    pub fn columns(&self, pool: &ForecastPool) -> Result<Vec<usize>> {
        self.columns_in(pool.window_lengths())
    }

    /// Positions of the subset in an increasing list of window lengths.
    pub fn columns_in(&self, windows: &[usize]) -> Result<Vec<usize>> {
        if self.taus.is_empty() {
            return Err(Error::Config("empty window subset".into()));
        }
        self.taus
            .iter()
            .map(|&tau| {
                windows.binary_search(&tau).map_err(|_| {
                    Error::Config(format!(
                        "window {tau} is not in the pool ({}..={})",
                        windows[0],
                        windows[windows.len() - 1]
                    ))
                })
            })
            .collect()
    }
}

fn check_day(pool: &ForecastPool, day: usize) -> Result<()> {
    if day >= pool.n_days() {
        return Err(Error::Alignment(format!(
            "day {day} outside pool of {} days",
            pool.n_days()
        )));
    }
    Ok(())
}

fn weighted(pool: &ForecastPool, day: usize, columns: &[usize], weights: &[f64]) -> DayValues {
    std::array::from_fn(|h| {
        let row = pool.cell(day, h);
        columns.iter().zip(weights).map(|(&c, w)| w * row[c]).sum()
    })
}

/// Mean over all pool columns.
pub fn simple_average(pool: &ForecastPool, day: usize) -> Result<DayValues> {
    check_day(pool, day)?;
    let n = pool.n_windows() as f64;
    Ok(std::array::from_fn(|h| pool.cell(day, h).iter().sum::<f64>() / n))
}

/// Mean over the subset columns.
pub fn aw(pool: &ForecastPool, subset: &WindowSubset, day: usize) -> Result<DayValues> {
    check_day(pool, day)?;
    let columns = subset.columns(pool)?;
    let n = columns.len() as f64;
    Ok(std::array::from_fn(|h| {
        let row = pool.cell(day, h);
        columns.iter().map(|&c| row[c]).sum::<f64>() / n
    }))
}

/// Inverse-MAE weights from the MAEs of the subset columns.
///
/// Columns with zero MAE share all the weight equally.
pub fn inverse_mae_weights(maes: &[f64]) -> Vec<f64> {
    let perfect = maes.iter().filter(|&&m| m == 0.0).count();
    if perfect > 0 {
        return maes
            .iter()
            .map(|&m| if m == 0.0 { 1.0 / perfect as f64 } else { 0.0 })
            .collect();
    }
    let total: f64 = maes.iter().map(|m| 1.0 / m).sum();
    maes.iter().map(|m| (1.0 / m) / total).collect()
}

/// Subset average weighted by inverse MAE over the `window_len` days before
/// `day`. One weight per window length, shared by all hours.
pub fn waw(pool: &ForecastPool, subset: &WindowSubset, day: usize, window_len: usize) -> Result<DayValues> {
    let weights = waw_weights(pool, subset, day, window_len)?;
    Ok(weighted(pool, day, &subset.columns(pool)?, &weights))
}

/// The weights used by [`waw`], in subset order.
pub fn waw_weights(pool: &ForecastPool, subset: &WindowSubset, day: usize, window_len: usize) -> Result<Vec<f64>> {
    check_day(pool, day)?;
    if window_len == 0 || day < window_len {
        return Err(Error::Alignment(format!(
            "day {day} has fewer than {window_len} pool days before it"
        )));
    }
    let columns = subset.columns(pool)?;
    let mut sums = vec![0.0; columns.len()];
    for t in (day - window_len) * HOURS..day * HOURS {
        let row = pool.row(t);
        let a = pool.actual()[t];
        for (s, &c) in sums.iter_mut().zip(&columns) {
            *s += (row[c] - a).abs();
        }
    }
    let n = (window_len * HOURS) as f64;
    let maes: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    Ok(inverse_mae_weights(&maes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pool with `days` days and the given per-window offsets from a
    /// deterministic actual series.
    fn offset_pool(days: usize, windows: Vec<usize>, offsets: &[f64]) -> ForecastPool {
        let actual: Vec<f64> = (0..days * HOURS).map(|t| 40.0 + (t as f64 * 0.7).sin() * 5.0).collect();
        let values = actual
            .iter()
            .flat_map(|&a| offsets.iter().map(move |o| a + o))
            .collect();
        ForecastPool::new(0, windows, values, actual).unwrap()
    }

    #[test]
    fn mean_of_identical_columns() {
        let pool = offset_pool(2, vec![10, 20, 30], &[1.0, 1.0, 1.0]);
        let f = simple_average(&pool, 1).unwrap();
        for h in 0..HOURS {
            assert!((f[h] - pool.cell(1, h)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_mean() {
        let pool = offset_pool(1, vec![10, 20], &[-1.0, 3.0]);
        let f = simple_average(&pool, 0).unwrap();
        for h in 0..HOURS {
            let row = pool.cell(0, h);
            assert!((f[h] - (row[0] + row[1]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aw_reductions() {
        let pool = offset_pool(1, vec![10, 20, 30], &[-1.0, 0.5, 3.0]);
        let all = WindowSubset::new(vec![10, 20, 30]);
        let a = aw(&pool, &all, 0).unwrap();
        let m = simple_average(&pool, 0).unwrap();
        for h in 0..HOURS {
            assert!((a[h] - m[h]).abs() < 1e-12);
        }
        let one = aw(&pool, &WindowSubset::new(vec![20]), 0).unwrap();
        for h in 0..HOURS {
            assert_eq!(one[h], pool.cell(0, h)[1]);
        }
        assert!(matches!(
            aw(&pool, &WindowSubset::new(vec![20, 25]), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn inverse_mae_examples() {
        assert_eq!(inverse_mae_weights(&[1.0, 3.0]), vec![0.75, 0.25]);
        assert_eq!(inverse_mae_weights(&[2.0, 0.0, 1.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(inverse_mae_weights(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn waw_uses_trailing_errors() {
        // offsets 1 and 3 give trailing MAEs 1 and 3
        let pool = offset_pool(10, vec![10, 20], &[1.0, -3.0]);
        let subset = WindowSubset::new(vec![10, 20]);
        let w = waw_weights(&pool, &subset, 5, 5).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12);
        let f = waw(&pool, &subset, 5, 5).unwrap();
        for h in 0..HOURS {
            let row = pool.cell(5, h);
            assert!((f[h] - (0.75 * row[0] + 0.25 * row[1])).abs() < 1e-12);
        }
        assert!(waw(&pool, &subset, 4, 5).is_err());
    }

    #[test]
    fn waw_equal_errors_is_aw() {
        let pool = offset_pool(6, vec![10, 20, 30], &[2.0, -2.0, 2.0]);
        let subset = WindowSubset::new(vec![10, 20, 30]);
        let a = aw(&pool, &subset, 4).unwrap();
        let b = waw(&pool, &subset, 4, 3).unwrap();
        for h in 0..HOURS {
            assert!((a[h] - b[h]).abs() < 1e-12);
        }
    }

    #[test]
    fn subset_parsing() {
        assert_eq!(WindowSubset::parse("56, 84").unwrap().taus, vec![56, 84]);
        assert!(WindowSubset::parse("56,x").is_err());
    }

    fn random_pool(seed: u64, days: usize, windows: usize) -> ForecastPool {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let actual: Vec<f64> = (0..days * HOURS).map(|_| 50.0 * next()).collect();
        let values = (0..days * HOURS * windows).map(|_| 50.0 * next()).collect();
        ForecastPool::new(0, (1..=windows).map(|w| w * 7).collect(), values, actual).unwrap()
    }

    fn shifted(pool: &ForecastPool, c: f64) -> ForecastPool {
        ForecastPool::new(
            pool.first_day(),
            pool.window_lengths().to_vec(),
            pool.values().iter().map(|v| v + c).collect(),
            pool.actual().iter().map(|v| v + c).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(maes in prop::collection::vec(0.0f64..10.0, 1..12)) {
            let w = inverse_mae_weights(&maes);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn translation_equivariant_and_convex(seed in 0u64..1000, c in -100.0f64..100.0) {
            let pool = random_pool(seed, 4, 5);
            let moved = shifted(&pool, c);
            let subset = WindowSubset::new(vec![7, 21, 35]);
            let cols = subset.columns(&pool).unwrap();
            let outputs = [
                (simple_average(&pool, 3).unwrap(), simple_average(&moved, 3).unwrap(), (0..5).collect::<Vec<_>>()),
                (aw(&pool, &subset, 3).unwrap(), aw(&moved, &subset, 3).unwrap(), cols.clone()),
                (waw(&pool, &subset, 3, 3).unwrap(), waw(&moved, &subset, 3, 3).unwrap(), cols.clone()),
            ];
            for (base, moved_out, used) in outputs {
                for h in 0..HOURS {
                    prop_assert!((moved_out[h] - base[h] - c).abs() < 1e-9);
                    let row = pool.cell(3, h);
                    let lo = used.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
                    let hi = used.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(base[h] >= lo - 1e-9 && base[h] <= hi + 1e-9);
                }
            }
        }
    }
}
