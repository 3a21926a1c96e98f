//! Accuracy metrics, the conditional predictive ability test and reports.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::HOURS;
use crate::error::{Error, Result};
use crate::ols::least_squares;

/// Mean absolute error of each day from hourly errors (`24 * n_days` values).
pub fn daily_mae(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() % HOURS != 0 {
        return Err(Error::Alignment(format!(
            "{} hourly errors do not make whole days",
            errors.len()
        )));
    }
    Ok(errors
        .chunks(HOURS)
        .map(|day| day.iter().map(|e| e.abs()).sum::<f64>() / HOURS as f64)
        .collect())
}

/// Percentage change of `mae` relative to `benchmark`; negative is better.
pub fn pct_chng(mae: f64, benchmark: f64) -> Result<f64> {
    if !(benchmark > 0.0) {
        return Err(Error::Undefined(format!(
            "percentage change against a benchmark MAE of {benchmark}"
        )));
    }
    Ok((mae - benchmark) / benchmark * 100.0)
}

/// Mean percentage deviation from the benchmark across markets.
pub fn mpdb(pct_by_market: &[f64]) -> Result<f64> {
    if pct_by_market.is_empty() {
        return Err(Error::Undefined("m.p.d.b. of no markets".into()));
    }
    Ok(pct_by_market.iter().sum::<f64>() / pct_by_market.len() as f64)
}

/// Special cases of the predictive ability test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpaFlag {
    /// The loss differential is identically zero.
    IdenticalForecasts,
    /// The loss differential is a nonzero constant; the regression target has
    /// no variation and the statistic is set to zero.
    DominantButUnconditional,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpaResult {
    pub statistic: f64,
    /// Two-sided p-value, chi-squared with 2 degrees of freedom.
    pub p_value: f64,
    /// `p_value` when method `i` has the lower mean loss, 1 otherwise.
    pub p_value_i_better: f64,
    /// Mean loss differential `mean(mae_i - mae_j)`.
    pub mean_differential: f64,
    pub flag: Option<CpaFlag>,
}

/// Minimum series length accepted by [`cpa_test`].
pub const CPA_MIN_DAYS: usize = 30;

/// Conditional predictive ability test on daily MAE series.
///
/// With `Δ_d = mae_i[d] - mae_j[d]` and instruments `h = [1, Δ_{d-1}]`, the
/// statistic is `n R²` of the regression of 1 on `h Δ_d` without intercept
/// (`n` = days after dropping the first). It is chi-squared with 2 degrees
/// of freedom under equal conditional predictive ability.
pub fn cpa_test(mae_i: &[f64], mae_j: &[f64]) -> Result<CpaResult> {
    if mae_i.len() != mae_j.len() {
        return Err(Error::Alignment(format!(
            "daily MAE series of lengths {} and {}",
            mae_i.len(),
            mae_j.len()
        )));
    }
    if mae_i.len() < CPA_MIN_DAYS {
        return Err(Error::Alignment(format!(
            "predictive ability test needs at least {CPA_MIN_DAYS} days, got {}",
            mae_i.len()
        )));
    }
    let delta: Vec<f64> = mae_i.iter().zip(mae_j).map(|(a, b)| a - b).collect();
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::Alignment("non-finite loss differential".into()));
    }
    let mean = delta.iter().sum::<f64>() / delta.len() as f64;
    let degenerate = |flag| CpaResult {
        statistic: 0.0,
        p_value: 1.0,
        p_value_i_better: 1.0,
        mean_differential: mean,
        flag: Some(flag),
    };
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(degenerate(CpaFlag::IdenticalForecasts));
    }
    if delta.iter().all(|&d| d == delta[0]) {
        return Ok(degenerate(CpaFlag::DominantButUnconditional));
    }
    let n = delta.len() - 1;
    let z = DMatrix::from_fn(n, 2, |r, c| {
        let d = delta[r + 1];
        if c == 0 {
            d
        } else {
            delta[r] * d
        }
    });
    let ones = DVector::from_element(n, 1.0);
    let sol = least_squares(&z, &ones)?;
    // uncentred R² of a regression on a constant target: 1 - rss / n
    let statistic = (n as f64 - sol.rss).max(0.0);
    let p_value = (-statistic / 2.0).exp();
    Ok(CpaResult {
        statistic,
        p_value,
        p_value_i_better: if mean < 0.0 { p_value } else { 1.0 },
        mean_differential: mean,
        flag: None,
    })
}

/// Accuracy summary of a set of methods on a common evaluation period.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<String>,
    /// `daily_mae[d][i]` for day `d` and method `i`.
    pub daily_mae: Vec<Vec<f64>>,
    pub mae: Vec<f64>,
    pub pct_chng: Vec<f64>,
    /// `cpa_pvalues[row][col]`: one-sided p-value for the column method being
    /// more accurate than the row method. The diagonal is 1.
    pub cpa_pvalues: Vec<Vec<f64>>,
    pub benchmark: String,
}

impl EvalReport {
    pub fn index_of(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    /// Daily MAE series of one method.
    pub fn daily(&self, i: usize) -> Vec<f64> {
        self.daily_mae.iter().map(|row| row[i]).collect()
    }
}

/// Builds the report for `forecasts` (label, hourly forecasts) against
/// `actual`; `benchmark` must be one of the labels. The predictive ability
/// matrix is only filled when the period has at least [`CPA_MIN_DAYS`] days
/// (otherwise every entry is NaN except the unit diagonal).
pub fn build_report(actual: &[f64], forecasts: &[(String, Vec<f64>)], benchmark: &str) -> Result<EvalReport> {
    if actual.is_empty() || actual.len() % HOURS != 0 {
        return Err(Error::Alignment(format!(
            "{} actual values do not make whole days",
            actual.len()
        )));
    }
    let bench = forecasts
        .iter()
        .position(|(label, _)| label == benchmark)
        .ok_or_else(|| Error::Config(format!("benchmark `{benchmark}` is not among the evaluated methods")))?;
    let mut columns = Vec::with_capacity(forecasts.len());
    for (label, f) in forecasts {
        if f.len() != actual.len() {
            return Err(Error::Alignment(format!(
                "method `{label}` has {} forecasts for {} actual values",
                f.len(),
                actual.len()
            )));
        }
        let errors: Vec<f64> = f.iter().zip(actual).map(|(p, a)| p - a).collect();
        columns.push(daily_mae(&errors)?);
    }
    let n_days = actual.len() / HOURS;
    let m = forecasts.len();
    let mae: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n_days as f64).collect();
    let pct = mae
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == bench { Ok(0.0) } else { pct_chng(v, mae[bench]) })
        .collect::<Result<Vec<_>>>()?;
    let mut cpa = vec![vec![f64::NAN; m]; m];
    for (row, cells) in cpa.iter_mut().enumerate() {
        for (col, cell) in cells.iter_mut().enumerate() {
            if row == col {
                *cell = 1.0;
            } else if n_days >= CPA_MIN_DAYS {
                *cell = cpa_test(&columns[col], &columns[row])?.p_value_i_better;
            }
        }
    }
    let daily_mae = (0..n_days).map(|d| columns.iter().map(|c| c[d]).collect()).collect();
    Ok(EvalReport {
        methods: forecasts.iter().map(|(l, _)| l.clone()).collect(),
        daily_mae,
        mae,
        pct_chng: pct,
        cpa_pvalues: cpa,
        benchmark: benchmark.to_string(),
    })
}

/// Per-method m.p.d.b. over several markets' reports (methods present in
/// every report, in the order of the first).
pub fn mpdb_table(reports: &[(String, EvalReport)]) -> Result<Vec<(String, Vec<f64>, f64)>> {
    let first = &reports
        .first()
        .ok_or_else(|| Error::Undefined("m.p.d.b. of no markets".into()))?
        .1;
    let mut rows = Vec::new();
    for method in &first.methods {
        let pcts: Option<Vec<f64>> = reports
            .iter()
            .map(|(_, r)| r.index_of(method).map(|i| r.pct_chng[i]))
            .collect();
        if let Some(pcts) = pcts {
            let value = mpdb(&pcts)?;
            rows.push((method.clone(), pcts, value));
        }
    }
    Ok(rows)
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `mae.csv`, `pct_chng.csv`, `daily_mae.csv`, `cpa_pvalues.csv`,
/// `mpdb.csv` and a gnuplot script `cpa_heatmap.gp` for the p-value matrix.
pub fn write_report(report: &EvalReport, market: &str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut mae = String::from("method,mae\n");
    let mut pct = String::from("method,pct_chng\n");
    for (i, m) in report.methods.iter().enumerate() {
        writeln!(mae, "{m},{}", num(report.mae[i])).unwrap();
        writeln!(pct, "{m},{}", num(report.pct_chng[i])).unwrap();
    }
    write_file(&dir.join("mae.csv"), &mae)?;
    write_file(&dir.join("pct_chng.csv"), &pct)?;

    let mut daily = format!("day,{}\n", report.methods.join(","));
    for (d, row) in report.daily_mae.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        writeln!(daily, "{d},{}", cells.join(",")).unwrap();
    }
    write_file(&dir.join("daily_mae.csv"), &daily)?;

    let mut cpa = format!("method,{}\n", report.methods.join(","));
    for (i, row) in report.cpa_pvalues.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        writeln!(cpa, "{},{}", report.methods[i], cells.join(",")).unwrap();
    }
    write_file(&dir.join("cpa_pvalues.csv"), &cpa)?;

    let table = mpdb_table(&[(market.to_string(), report.clone())])?;
    let mut mp = format!("method,{market},mpdb\n");
    for (m, pcts, v) in table {
        writeln!(mp, "{m},{},{}", num(pcts[0]), num(v)).unwrap();
    }
    write_file(&dir.join("mpdb.csv"), &mp)?;
    write_file(&dir.join("cpa_heatmap.gp"), &heatmap_script(&report.methods))
}

/// Gnuplot script drawing `cpa_pvalues.csv` as a heat map, columns (better)
/// on the x axis and rows (worse) on the y axis.
pub fn heatmap_script(methods: &[String]) -> String {
    let n = methods.len();
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 900,800\nset output 'cpa_heatmap.png'\n");
    s.push_str("set datafile separator ','\nset datafile missing 'NA'\n");
    s.push_str("set palette defined (0 'green', 0.05 'yellow', 0.1 'red', 1 'black')\nset cbrange [0:0.1]\n");
    let labels = |axis: &str| -> String {
        let items: Vec<String> = methods.iter().enumerate().map(|(i, m)| format!("'{m}' {i}")).collect();
        format!("set {axis}tics ({}) rotate by 90 right\n", items.join(", "))
    };
    s.push_str(&labels("x"));
    s.push_str(&labels("y").replace(" rotate by 90 right", ""));
    let _ = writeln!(s, "set xrange [-0.5:{}.5]\nset yrange [{}.5:-0.5]", n - 1, n - 1);
    s.push_str("plot 'cpa_pvalues.csv' matrix rowheaders columnheaders using 1:2:3 with image notitle\n");
    s
}
