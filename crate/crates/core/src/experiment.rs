//! End-to-end runs: data, pool, combiners and evaluation, written to an
//! artifact directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml        resolved configuration (replayable)
//! manifest.toml      config hash, version, timeline of every market
//! mpdb.csv           mean percentage deviation from the benchmark
//! <market>/pool.csv
//! <market>/window_mae.csv
//! <market>/forecasts/<method>.csv
//! <market>/mae.csv, pct_chng.csv, daily_mae.csv, cpa_pvalues.csv, ...
//! ```

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arx::MAX_LAG;
use crate::combine::{aw, simple_average, waw, WindowSubset, AVERAGING_WINDOW};
use crate::data::{generate_synthetic, load_csv, DayValues, HourlyFrame, Market, SyntheticConfig, HOURS};
use crate::error::{Error, Result};
use crate::eval::{build_report, mpdb_table, write_report, EvalReport};
use crate::lasso::{self, pool_forecast, pool_problem, Criterion, LambdaConvention, LambdaGrid, LambdaSelector};
use crate::pca::{with_fallback, KSelector, PcDay, K_MAX};
use crate::pool::{mae_by_window, parse_windows, run_pool, ForecastPool};

/// A forecast to produce for every evaluation day.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Mean,
    Aw,
    Waw,
    /// A single pool column.
    Window(usize),
    Lasso(LambdaSelector),
    Pca(KSelector),
    Lpca(LambdaSelector),
    TwoStep(Criterion),
}

/// Accepted method names, for error messages and `--help`.
pub const METHOD_SYNTAX: &str = "mean, aw, waw, tau_<window>, lasso:<ic|lambda>, pca:<ic|K>, \
     lpca:<ic|lambda>, twostep:<ic> (ic is aic, bic or hqc)";

impl Method {
    /// Parses a method name; fixed penalties are read with `convention`.
    pub fn parse(name: &str, convention: LambdaConvention) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown method `{name}`; valid methods are {METHOD_SYNTAX}"
            ))
        };
        let lambda = |arg: &str| -> Result<LambdaSelector> {
            if let Ok(c) = arg.parse::<Criterion>() {
                return Ok(LambdaSelector::Criterion(c));
            }
            match arg.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaSelector::Fixed(v, convention)),
                _ => Err(bad()),
            }
        };
        let name = name.trim();
        match name {
            "mean" => return Ok(Method::Mean),
            "aw" => return Ok(Method::Aw),
            "waw" => return Ok(Method::Waw),
            _ => {}
        }
        if let Some(tau) = name.strip_prefix("tau_") {
            return tau.parse().map(Method::Window).map_err(|_| bad());
        }
        let (kind, arg) = name.split_once(':').ok_or_else(bad)?;
        match kind {
            "lasso" => Ok(Method::Lasso(lambda(arg)?)),
            "lpca" => Ok(Method::Lpca(lambda(arg)?)),
            "pca" => match arg.parse::<Criterion>() {
                Ok(c) => Ok(Method::Pca(KSelector::Criterion(c))),
                Err(_) => match arg.parse::<usize>() {
                    Ok(k) if k > 0 => Ok(Method::Pca(KSelector::Fixed(k))),
                    _ => Err(bad()),
                },
            },
            "twostep" => arg.parse().map(Method::TwoStep).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }

    fn uses_components(self) -> bool {
        matches!(self, Method::Pca(_) | Method::Lpca(_) | Method::TwoStep(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mean => write!(f, "mean"),
            Method::Aw => write!(f, "aw"),
            Method::Waw => write!(f, "waw"),
            Method::Window(tau) => write!(f, "tau_{tau}"),
            Method::Lasso(s) => write!(f, "lasso:{s}"),
            Method::Pca(s) => write!(f, "pca:{s}"),
            Method::Lpca(s) => write!(f, "lpca:{s}"),
            Method::TwoStep(c) => write!(f, "twostep:{c}"),
        }
    }
}

/// One market's data file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketData {
    pub market: String,
    pub path: PathBuf,
}

fn default_windows() -> String {
    "56:728".into()
}
fn default_averaging() -> usize {
    AVERAGING_WINDOW
}
fn default_kmax() -> usize {
    K_MAX
}
fn default_points() -> usize {
    20
}
fn default_ratio() -> f64 {
    1e-4
}
fn default_convention() -> String {
    "paper".into()
}
fn default_methods() -> Vec<String> {
    [
        "mean", "aw", "waw", "lasso:aic", "lasso:bic", "lasso:hqc", "pca:aic", "pca:bic", "pca:hqc",
        "lpca:aic", "lpca:bic", "lpca:hqc", "twostep:bic",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Every setting of a run. Deserialized from TOML; missing keys take their
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Window lengths, `first:last`, `first:step:last` or a comma list.
    #[serde(default = "default_windows")]
    pub windows: String,
    /// Days of pool history used to fit the combiners.
    #[serde(default = "default_averaging")]
    pub averaging_window: usize,
    /// Largest number of principal components.
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_points")]
    pub lambda_points: usize,
    /// Smallest grid penalty as a fraction of the largest.
    #[serde(default = "default_ratio")]
    pub lambda_ratio: f64,
    /// Explicit penalty grid on the solver (`1/2n`) scale; replaces the
    /// log-spaced grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_values: Option<Vec<f64>>,
    /// How fixed penalties in method names are read: `paper` or `scaled`.
    #[serde(default = "default_convention")]
    pub lambda_convention: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Windows averaged by `aw` and `waw`. Defaults to 56, 84, 112 and the
    /// three longest weekly windows of the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    /// Benchmark method for percentage changes; defaults to the longest
    /// window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    /// Evaluate only the last `eval_days` days instead of everything after
    /// the first averaging window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_days: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markets: Vec<MarketData>,
    /// Generator settings; used when no market files are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; does not affect any output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The configuration without the run-local settings (`output`, `jobs`),
    /// as TOML. Identical inputs give identical text.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.jobs = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::canonical_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_toml().as_bytes()))
    }

    pub fn convention(&self) -> Result<LambdaConvention> {
        self.lambda_convention.parse()
    }

    pub fn grid(&self) -> LambdaGrid {
        match &self.lambda_values {
            Some(v) => LambdaGrid::Values(v.clone()),
            None => LambdaGrid::Auto {
                points: self.lambda_points,
                ratio: self.lambda_ratio,
            },
        }
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        let convention = self.convention()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        let methods = self
            .methods
            .iter()
            .map(|m| Method::parse(m, convention))
            .collect::<Result<Vec<_>>>()?;
        for m in &methods {
            if let Method::Pca(KSelector::Fixed(k)) = m {
                if *k > self.kmax {
                    return Err(Error::Config(format!("{m} needs K <= kmax = {}", self.kmax)));
                }
            }
        }
        Ok(methods)
    }

    pub fn window_lengths(&self) -> Result<Vec<usize>> {
        parse_windows(&self.windows)
    }

    pub fn window_subset(&self, windows: &[usize]) -> WindowSubset {
        match &self.subset {
            Some(taus) => WindowSubset::new(taus.clone()),
            None => default_subset(windows),
        }
    }
}

/// 56, 84 and 112 days plus the longest window and the two a week and two
/// weeks shorter, keeping those present in `windows`.
pub fn default_subset(windows: &[usize]) -> WindowSubset {
    let longest = windows.last().copied().unwrap_or(0);
    let mut taus = vec![56, 84, 112];
    taus.extend([14, 7, 0].iter().filter_map(|&k| longest.checked_sub(k)));
    taus.retain(|t| windows.binary_search(t).is_ok());
    taus.dedup();
    WindowSubset::new(taus)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// First pooled day, first evaluated day and number of evaluated days, as
/// frame day indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Timeline {
    pub pool_first: usize,
    pub eval_first: usize,
    pub eval_days: usize,
}

/// Pooling starts once the longest window fits; evaluation starts one
/// averaging window later and runs to the end of the frame, or covers the
/// last `eval_days` days when given.
pub fn timeline(n_days: usize, longest: usize, averaging: usize, eval_days: Option<usize>) -> Result<Timeline> {
    if averaging == 0 {
        return Err(Error::Config("averaging window must be positive".into()));
    }
    let earliest = longest.max(MAX_LAG + 1) + averaging;
    if earliest >= n_days {
        return Err(Error::Design(format!(
            "{n_days} days leave nothing to evaluate after {longest} days of calibration and {averaging} of averaging"
        )));
    }
    let eval_first = match eval_days {
        None => earliest,
        Some(e) if e > 0 && e <= n_days - earliest => n_days - e,
        Some(e) => {
            return Err(Error::Design(format!(
                "{e} evaluation days requested, at most {} available",
                n_days - earliest
            )))
        }
    };
    Ok(Timeline {
        pool_first: eval_first - averaging,
        eval_first,
        eval_days: n_days - eval_first,
    })
}

/// Settings shared by the combiners.
#[derive(Clone, Debug)]
pub struct CombineSettings {
    pub averaging_window: usize,
    pub kmax: usize,
    pub grid: LambdaGrid,
    pub subset: WindowSubset,
}

impl CombineSettings {
    pub fn from_config(config: &RunConfig, windows: &[usize]) -> Self {
        CombineSettings {
            averaging_window: config.averaging_window,
            kmax: config.kmax,
            grid: config.grid(),
            subset: config.window_subset(windows),
        }
    }
}

/// Forecasts of every method for one pool day, in method order. The
/// principal components of the day are extracted once and shared.
pub fn forecast_day(
    pool: &ForecastPool,
    day: usize,
    methods: &[Method],
    settings: &CombineSettings,
) -> Result<Vec<DayValues>> {
    let a = settings.averaging_window;
    let pc = if methods.iter().any(|m| m.uses_components()) {
        Some(PcDay::new(pool, day, a, settings.kmax)?)
    } else {
        None
    };
    // one LASSO problem per day, one path for every criterion
    let problem = if methods.iter().any(|m| matches!(m, Method::Lasso(_))) {
        Some(pool_problem(pool, day, a)?)
    } else {
        None
    };
    let path = if methods.iter().any(|m| matches!(m, Method::Lasso(LambdaSelector::Criterion(_)))) {
        let (x, y) = problem.as_ref().unwrap();
        Some(lasso::fit_path(x, y, &settings.grid)?)
    } else {
        None
    };
    methods
        .iter()
        .map(|&m| match m {
            Method::Mean => simple_average(pool, day),
            Method::Aw => aw(pool, &settings.subset, day),
            Method::Waw => waw(pool, &settings.subset, day, a),
            Method::Window(tau) => {
                let c = pool
                    .column_of(tau)
                    .ok_or_else(|| Error::Config(format!("window {tau} is not in the pool")))?;
                Ok(std::array::from_fn(|h| pool.cell(day, h)[c]))
            }
            Method::Lasso(LambdaSelector::Criterion(c)) => {
                Ok(pool_forecast(pool, day, &lasso::pick(path.clone().unwrap(), c)))
            }
            Method::Lasso(sel) => {
                let (x, y) = problem.as_ref().unwrap();
                Ok(pool_forecast(pool, day, &lasso::select_fit(x, y, &settings.grid, sel)?))
            }
            Method::Pca(sel) => with_fallback(pool, day, pc.as_ref().unwrap(), |pc| pc.pca_fit(sel)),
            Method::Lpca(sel) => with_fallback(pool, day, pc.as_ref().unwrap(), |pc| pc.lpca_fit(sel, &settings.grid)),
            Method::TwoStep(c) => with_fallback(pool, day, pc.as_ref().unwrap(), |pc| pc.two_step_fit(c, &settings.grid)),
        })
        .collect()
}

/// Forecasts of every method for pool days `averaging_window..n_days`,
/// one vector of `24 * days` values per method. Days run in parallel on the
/// current rayon pool.
pub fn combine_pool(pool: &ForecastPool, methods: &[Method], settings: &CombineSettings) -> Result<Vec<Vec<f64>>> {
    let first = settings.averaging_window;
    if first >= pool.n_days() {
        return Err(Error::Design(format!(
            "pool of {} days is not longer than the averaging window {first}",
            pool.n_days()
        )));
    }
    let per_day: Vec<Vec<DayValues>> = (first..pool.n_days())
        .into_par_iter()
        .map(|d| forecast_day(pool, d, methods, settings))
        .collect::<Result<_>>()?;
    Ok((0..methods.len())
        .map(|m| per_day.iter().flat_map(|day| day[m]).collect())
        .collect())
}

/// File name of a method's forecasts.
pub fn forecast_file_name(method: &str) -> String {
    let stem: String = method
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{stem}.csv")
}

/// Writes `t,actual,<method>` rows with six decimals; `t0` is the absolute
/// hour index of the first row.
pub fn write_forecasts(path: &Path, method: &str, t0: usize, actual: &[f64], forecast: &[f64]) -> Result<()> {
    let mut text = format!("t,actual,{method}\n");
    for (i, (a, f)) in actual.iter().zip(forecast).enumerate() {
        let _ = writeln!(text, "{},{a:.6},{f:.6}", t0 + i);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Forecasts read back from [`write_forecasts`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSeries {
    pub method: String,
    pub t0: usize,
    pub actual: Vec<f64>,
    pub forecast: Vec<f64>,
}

pub fn read_forecasts(path: &Path) -> Result<ForecastSeries> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 3 || &headers[0] != "t" || &headers[1] != "actual" {
        return Err(Error::Schema(format!(
            "{}: expected header t,actual,<method>",
            path.display()
        )));
    }
    let mut series = ForecastSeries {
        method: headers[2].to_string(),
        t0: 0,
        actual: Vec::new(),
        forecast: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let field = |j: usize| -> Result<f64> {
            record[j].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("invalid number `{}`", &record[j]),
            })
        };
        let t = field(0)? as usize;
        if i == 0 {
            series.t0 = t;
        } else if t != series.t0 + i {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("hour index {t} out of sequence"),
            });
        }
        series.actual.push(field(1)?);
        series.forecast.push(field(2)?);
    }
    if series.actual.is_empty() || series.actual.len() % HOURS != 0 {
        return Err(Error::Alignment(format!(
            "{}: {} rows do not make whole days",
            path.display(),
            series.actual.len()
        )));
    }
    Ok(series)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Evaluates forecast series that cover the same hours.
pub fn evaluate_series(series: &[ForecastSeries], benchmark: Option<&str>) -> Result<EvalReport> {
    let first = series
        .first()
        .ok_or_else(|| Error::Config("no forecasts to evaluate".into()))?;
    for s in series {
        if s.t0 != first.t0 || s.actual != first.actual {
            return Err(Error::Alignment(format!(
                "`{}` and `{}` cover different hours or actuals",
                s.method, first.method
            )));
        }
    }
    let benchmark = match benchmark {
        Some(b) => b.to_string(),
        None => series
            .iter()
            .filter_map(|s| s.method.strip_prefix("tau_")?.parse::<usize>().ok().map(|t| (t, &s.method)))
            .max()
            .map_or(first.method.clone(), |(_, m)| m.clone()),
    };
    let forecasts: Vec<(String, Vec<f64>)> = series.iter().map(|s| (s.method.clone(), s.forecast.clone())).collect();
    build_report(&first.actual, &forecasts, &benchmark)
}

/// Where a market's frame comes from.
#[derive(Clone, Debug)]
pub enum Source {
    File { market: Market, path: PathBuf },
    Synthetic(SyntheticConfig),
}

impl Source {
    fn label(&self) -> String {
        match self {
            Source::File { market, .. } => market.name().to_string(),
            Source::Synthetic(_) => Market::Synth.name().to_string(),
        }
    }

    fn load(&self) -> Result<HourlyFrame> {
        match self {
            Source::File { market, path } => load_csv(path, *market),
            Source::Synthetic(cfg) => generate_synthetic(cfg),
        }
    }
}

/// Per-market summary written to the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct MarketSummary {
    pub market: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_sha256: Option<String>,
    pub n_days: usize,
    pub repaired_cells: usize,
    pub pool_first_day: usize,
    pub eval_first_day: usize,
    pub eval_days: usize,
    pub eval_start: String,
    pub eval_end: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    poolcast_version: &'a str,
    config_sha256: String,
    methods: Vec<String>,
    benchmark: &'a str,
    markets: &'a [MarketSummary],
}

/// Results of [`run_experiment`], also written under `dir`.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub markets: Vec<MarketSummary>,
    pub reports: Vec<(String, EvalReport)>,
    /// MAE of every window over the evaluation days, per market.
    pub window_mae: Vec<Vec<(usize, f64)>>,
}

impl RunConfig {
    fn sources(&self) -> Result<Vec<Source>> {
        if !self.markets.is_empty() {
            return self
                .markets
                .iter()
                .map(|m| {
                    Ok(Source::File {
                        market: m.market.parse()?,
                        path: m.path.clone(),
                    })
                })
                .collect();
        }
        match &self.synthetic {
            Some(s) => Ok(vec![Source::Synthetic(s.clone())]),
            None => Err(Error::Config("no market data and no synthetic section".into())),
        }
    }
}

/// Runs the whole pipeline and writes the artifacts to `config.output`.
///
/// Everything is first written to a sibling temporary directory that
/// replaces the output directory on success and is removed on failure.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    let out = config
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory".into()))?;
    let jobs = config.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let name = out
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output directory {}", out.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = out.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    match threads.install(|| run_into(config, &tmp)) {
        Ok(mut output) => {
            if out.exists() {
                std::fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            }
            std::fs::rename(&tmp, &out).map_err(|e| Error::io(&out, e))?;
            output.dir = out;
            Ok(output)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

fn run_into(config: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let windows = config.window_lengths()?;
    let longest = *windows.last().expect("parse_windows rejects empty sets");
    let mut methods = config.parsed_methods()?;
    let benchmark = config.benchmark.clone().unwrap_or_else(|| format!("tau_{longest}"));
    if !methods.iter().any(|m| m.to_string() == benchmark) {
        methods.insert(0, Method::parse(&benchmark, config.convention()?)?);
    }
    let labels: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    let settings = CombineSettings::from_config(config, &windows);
    if methods.iter().any(|m| matches!(m, Method::Aw | Method::Waw)) {
        settings.subset.columns_in(&windows)?;
    }

    let mut markets = Vec::new();
    let mut reports = Vec::new();
    let mut window_mae = Vec::new();
    for source in config.sources()? {
        let frame = source.load()?;
        let label = source.label();
        let tl = timeline(frame.n_days(), longest, config.averaging_window, config.eval_days)?;
        let mdir = dir.join(&label);
        let fdir = mdir.join("forecasts");
        std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;

        // stage one: the pool goes to disk and is read back, so a later
        // `combine` on the file sees exactly the same numbers
        let pool_path = mdir.join("pool.csv");
        run_pool(&frame, &windows, tl.pool_first..=frame.n_days() - 1)?.write_csv(&pool_path)?;
        let pool = ForecastPool::read_csv(&pool_path)?;

        let forecasts = combine_pool(&pool, &methods, &settings)?;
        let eval_pool = pool.trim_days(settings.averaging_window..pool.n_days())?;
        for (label, values) in labels.iter().zip(&forecasts) {
            write_forecasts(
                &fdir.join(forecast_file_name(label)),
                label,
                eval_pool.t0(),
                eval_pool.actual(),
                values,
            )?;
        }
        let maes: Vec<(usize, f64)> = windows.iter().copied().zip(mae_by_window(&eval_pool)).collect();
        let mut text = String::from("tau,mae\n");
        for (tau, m) in &maes {
            let _ = writeln!(text, "{tau},{m:.6}");
        }
        let path = mdir.join("window_mae.csv");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let pairs: Vec<(String, Vec<f64>)> = labels.iter().cloned().zip(forecasts).collect();
        let report = build_report(eval_pool.actual(), &pairs, &benchmark)?;
        write_report(&report, &label, &mdir)?;

        let data_sha256 = match &source {
            Source::File { path, .. } => {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                Some(hex(&Sha256::digest(&bytes)))
            }
            Source::Synthetic(_) => None,
        };
        markets.push(MarketSummary {
            market: label.clone(),
            source: match &source {
                Source::File { path, .. } => path.display().to_string(),
                Source::Synthetic(_) => "synthetic".into(),
            },
            data_sha256,
            n_days: frame.n_days(),
            repaired_cells: frame.repair_log().len(),
            pool_first_day: tl.pool_first,
            eval_first_day: tl.eval_first,
            eval_days: tl.eval_days,
            eval_start: frame.date(tl.eval_first).to_string(),
            eval_end: frame.date(frame.n_days() - 1).to_string(),
        });
        reports.push((label, report));
        window_mae.push(maes);
    }

    let mut text = String::from("method");
    for (m, _) in &reports {
        text.push(',');
        text.push_str(m);
    }
    text.push_str(",mpdb\n");
    for (method, pcts, value) in mpdb_table(&reports)? {
        text.push_str(&method);
        for p in pcts {
            let _ = write!(text, ",{p:.6}");
        }
        let _ = writeln!(text, ",{value:.6}");
    }
    write_text(&dir.join("mpdb.csv"), &text)?;
    write_text(&dir.join("config.toml"), &config.canonical_toml())?;
    let manifest = Manifest {
        poolcast_version: env!("CARGO_PKG_VERSION"),
        config_sha256: config.hash(),
        methods: labels,
        benchmark: &benchmark,
        markets: &markets,
    };
    let manifest = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("manifest.toml"), &manifest)?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        markets,
        reports,
        window_mae,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_toml(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in [
            "mean", "aw", "waw", "tau_728", "lasso:bic", "lasso:aic", "pca:5", "pca:hqc", "lpca:bic", "twostep:bic",
        ] {
            let m = Method::parse(name, LambdaConvention::Paper).unwrap();
            assert_eq!(m.to_string(), name);
        }
        let m = Method::parse("lpca:1e-2", LambdaConvention::Paper).unwrap();
        assert_eq!(m, Method::Lpca(LambdaSelector::Fixed(0.01, LambdaConvention::Paper)));
        assert_eq!(m.to_string(), "lpca:1e-2");
    }

    #[test]
    fn unknown_method_lists_valid_ones() {
        for bad in ["median", "lasso:", "lasso:xyz", "pca:0", "twostep:1", "tau_x", "lpca:-1"] {
            match Method::parse(bad, LambdaConvention::Paper) {
                Err(Error::Config(msg)) => assert!(msg.contains("lpca:<ic|lambda>"), "{msg}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
        let config = RunConfig {
            methods: vec!["mean".into(), "magic".into()],
            ..RunConfig::default()
        };
        assert!(matches!(config.parsed_methods(), Err(Error::Config(_))));
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.window_lengths().unwrap().len(), 673);
        assert_eq!(c.averaging_window, 182);
        assert_eq!(c.kmax, 20);
        assert_eq!(c.grid(), LambdaGrid::default());
        assert_eq!(c.convention().unwrap(), LambdaConvention::Paper);
        let w = c.window_lengths().unwrap();
        assert_eq!(c.window_subset(&w).taus, vec![56, 84, 112, 714, 721, 728]);
        assert_eq!(default_subset(&parse_windows("56:7:364").unwrap()).taus, vec![56, 84, 112, 350, 357, 364]);
    }

    #[test]
    fn paper_timeline() {
        let t = timeline(1826, 728, 182, None).unwrap();
        assert_eq!(t, Timeline { pool_first: 728, eval_first: 910, eval_days: 916 });
        let t = timeline(1000, 364, 182, Some(100)).unwrap();
        assert_eq!(t, Timeline { pool_first: 718, eval_first: 900, eval_days: 100 });
        assert!(timeline(1000, 364, 182, Some(455)).is_err());
        assert!(timeline(1000, 364, 182, Some(454)).is_ok());
        assert!(timeline(900, 728, 182, None).is_err());
    }

    #[test]
    fn hash_ignores_run_local_settings() {
        let a = RunConfig::default();
        let b = RunConfig {
            jobs: Some(8),
            output: Some("elsewhere".into()),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { kmax: 5, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        let back = RunConfig::from_toml(&a.canonical_toml()).unwrap();
        assert_eq!(back, a);
        assert!(RunConfig::from_toml("windowz = \"1:2\"").is_err());
    }

    #[test]
    fn forecast_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(forecast_file_name("lasso:bic"));
        assert!(path.ends_with("lasso_bic.csv"));
        let actual: Vec<f64> = (0..48).map(|i| i as f64 * 0.5).collect();
        let forecast: Vec<f64> = actual.iter().map(|a| a + 1.25).collect();
        write_forecasts(&path, "lasso:bic", 240, &actual, &forecast).unwrap();
        let s = read_forecasts(&path).unwrap();
        assert_eq!((s.method.as_str(), s.t0), ("lasso:bic", 240));
        assert_eq!((s.actual, s.forecast), (actual, forecast));
    }
}
