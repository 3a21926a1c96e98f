use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use poolcast::data::{generate_synthetic, load_csv, write_csv, HourlyFrame, SyntheticConfig};
use poolcast::eval::write_report;
use poolcast::experiment::{
    combine_pool, evaluate_series, forecast_file_name, read_forecasts, run_experiment, timeline, write_forecasts,
    CombineSettings, MarketData, RunConfig, METHOD_SYNTAX,
};
use poolcast::pool::{parse_windows, run_pool, ForecastPool};

/// Day-ahead price forecast pooling over many calibration windows.
#[derive(Parser)]
#[command(name = "poolcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic market as CSV.
    Synth {
        #[command(flatten)]
        synthetic: SynthArgs,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the forecast pool of one market.
    Pool {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output pool CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine the forecasts of a pool file.
    Combine {
        /// Pool CSV written by `pool`.
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        combine: CombineArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for one forecast file per method.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate forecast files covering the same hours.
    Evaluate {
        /// Forecast files written by `combine`.
        #[arg(long, num_args = 1.., required = true)]
        forecasts: Vec<PathBuf>,
        /// Benchmark method [default: the longest tau_<window> given].
        #[arg(long)]
        benchmark: Option<String>,
        /// Market label used in mpdb.csv.
        #[arg(long, default_value = "market")]
        market: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run data, pool, combiners and evaluation end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with a [synthetic] section; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of days [default: 1000].
    #[arg(long)]
    days: Option<usize>,
    /// Generator seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
}

impl SynthArgs {
    fn resolve(&self) -> anyhow::Result<SyntheticConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?.synthetic.unwrap_or_default(),
            None => SyntheticConfig::default(),
        };
        if let Some(d) = self.days {
            cfg.n_days = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Market CSV (`timestamp,price,<exogenous>...`).
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Exogenous schema: epex, np, omie, pjm or synth.
    #[arg(long, default_value = "epex")]
    market: String,
    /// Use a generated market instead of a file.
    #[arg(long)]
    synthetic: bool,
    #[command(flatten)]
    generator: SynthArgs,
}

impl InputArgs {
    fn frame(&self) -> anyhow::Result<HourlyFrame> {
        match (&self.data, self.synthetic) {
            (Some(path), _) => Ok(load_csv(path, self.market.parse()?)?),
            (None, true) => Ok(generate_synthetic(&self.generator.resolve()?)?),
            (None, false) => bail!("give --data <file> or --synthetic"),
        }
    }
}

#[derive(Args)]
struct TimingArgs {
    /// Window lengths, first:last, first:step:last or a list [default: 56:728, 673 windows].
    #[arg(long, default_value = "56:728")]
    windows: String,
    /// Averaging window in days [default: 182, about half a year].
    #[arg(long, default_value_t = 182)]
    averaging: usize,
    /// Evaluate only the last N days [default: all days after the first averaging window].
    #[arg(long)]
    eval_days: Option<usize>,
}

#[derive(Args)]
struct CombineArgs {
    /// Comma-separated methods [default: mean, aw, waw and the aic/bic/hqc variants of lasso, pca and lpca, twostep:bic].
    #[arg(long, value_delimiter = ',', help_heading = "Combiners")]
    methods: Option<Vec<String>>,
    /// Averaging window in days [default: 182, about half a year].
    #[arg(long, default_value_t = 182, help_heading = "Combiners")]
    averaging: usize,
    /// Largest number of principal components [default: 20].
    #[arg(long, default_value_t = 20, help_heading = "Combiners")]
    kmax: usize,
    /// Windows for aw and waw [default: 56,84,112 and the three longest weekly windows].
    #[arg(long, value_delimiter = ',', help_heading = "Combiners")]
    subset: Option<Vec<usize>>,
    /// Reading of fixed penalties: paper (unscaled RSS) or scaled (1/2n RSS).
    #[arg(long, default_value = "paper", help_heading = "Combiners")]
    lambda_convention: String,
    /// Points of the log-spaced penalty grid [default: 20].
    #[arg(long, default_value_t = 20, help_heading = "Combiners")]
    lambda_points: usize,
    /// Smallest grid penalty relative to the largest [default: 1e-4].
    #[arg(long, default_value_t = 1e-4, help_heading = "Combiners")]
    lambda_ratio: f64,
}

impl CombineArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(m) = &self.methods {
            config.methods = m.clone();
        }
        config.averaging_window = self.averaging;
        config.kmax = self.kmax;
        if self.subset.is_some() {
            config.subset = self.subset.clone();
        }
        config.lambda_convention = self.lambda_convention.clone();
        config.lambda_points = self.lambda_points;
        config.lambda_ratio = self.lambda_ratio;
    }
}

#[derive(Args)]
struct ReproduceArgs {
    /// TOML run configuration; flags given below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Market CSV; may be repeated together with --market.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Market of each --data file (epex, np, omie, pjm, synth).
    #[arg(long)]
    market: Vec<String>,
    /// Use a generated market.
    #[arg(long)]
    synthetic: bool,
    /// Synthetic days [default: 1000].
    #[arg(long)]
    days: Option<usize>,
    /// Synthetic seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Window lengths [default: 56:728, 673 windows].
    #[arg(long)]
    windows: Option<String>,
    /// Evaluate only the last N days [default: all after the first averaging window].
    #[arg(long)]
    eval_days: Option<usize>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Windows for aw and waw.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// Worker threads; outputs do not depend on it [default: 1].
    #[arg(long)]
    jobs: Option<usize>,
    /// Artifact directory [default: poolcast-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ReproduceArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if !self.data.is_empty() {
            if self.data.len() != self.market.len() {
                bail!("give one --market per --data file");
            }
            c.markets = self
                .data
                .iter()
                .zip(&self.market)
                .map(|(path, market)| MarketData {
                    market: market.clone(),
                    path: path.clone(),
                })
                .collect();
        }
        if self.synthetic {
            c.markets.clear();
            let mut s = c.synthetic.take().unwrap_or_default();
            if let Some(d) = self.days {
                s.n_days = d;
            }
            if let Some(seed) = self.seed {
                s.seed = seed;
            }
            c.synthetic = Some(s);
        }
        if let Some(w) = &self.windows {
            c.windows = w.clone();
        }
        if self.eval_days.is_some() {
            c.eval_days = self.eval_days;
        }
        if let Some(m) = &self.methods {
            c.methods = m.clone();
        }
        if self.subset.is_some() {
            c.subset = self.subset.clone();
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        c.output = Some(self.out.clone().or(c.output).unwrap_or_else(|| "poolcast-out".into()));
        Ok(c)
    }
}

fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn make_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { synthetic, out } => {
            let frame = generate_synthetic(&synthetic.resolve()?)?;
            write_csv(&frame, &out)?;
            eprintln!("wrote {} days to {}", frame.n_days(), out.display());
        }
        Command::Pool {
            input,
            timing,
            jobs,
            out,
        } => {
            let frame = input.frame()?;
            let windows = parse_windows(&timing.windows)?;
            let tl = timeline(frame.n_days(), *windows.last().unwrap(), timing.averaging, timing.eval_days)?;
            let pool = thread_pool(jobs)?.install(|| run_pool(&frame, &windows, tl.pool_first..=frame.n_days() - 1))?;
            pool.write_csv(&out)?;
            eprintln!(
                "pooled {} windows over days {}..={} into {}",
                windows.len(),
                tl.pool_first,
                frame.n_days() - 1,
                out.display()
            );
        }
        Command::Combine {
            pool,
            combine,
            jobs,
            out,
        } => {
            let pool = ForecastPool::read_csv(&pool)?;
            let mut config = RunConfig::default();
            combine.apply(&mut config);
            let methods = config.parsed_methods()?;
            let settings = CombineSettings::from_config(&config, pool.window_lengths());
            let forecasts = thread_pool(jobs)?.install(|| combine_pool(&pool, &methods, &settings))?;
            let eval = pool.trim_days(settings.averaging_window..pool.n_days())?;
            make_dir(&out)?;
            for (m, values) in methods.iter().zip(&forecasts) {
                let label = m.to_string();
                write_forecasts(&out.join(forecast_file_name(&label)), &label, eval.t0(), eval.actual(), values)?;
            }
            eprintln!("wrote {} methods for {} days to {}", methods.len(), eval.n_days(), out.display());
        }
        Command::Evaluate {
            forecasts,
            benchmark,
            market,
            out,
        } => {
            let series = forecasts
                .iter()
                .map(|p| read_forecasts(p))
                .collect::<poolcast::Result<Vec<_>>>()?;
            let report = evaluate_series(&series, benchmark.as_deref())?;
            write_report(&report, &market, &out)?;
            for (m, (mae, pct)) in report.methods.iter().zip(report.mae.iter().zip(&report.pct_chng)) {
                println!("{m:>14}  {mae:10.4}  {pct:+9.3}%");
            }
        }
        Command::Reproduce(args) => {
            let config = args.config()?;
            let output = run_experiment(&config)?;
            for (market, report) in &output.reports {
                println!("{market}: benchmark {}", report.benchmark);
                for (m, (mae, pct)) in report.methods.iter().zip(report.mae.iter().zip(&report.pct_chng)) {
                    println!("{m:>14}  {mae:10.4}  {pct:+9.3}%");
                }
            }
            eprintln!("artifacts in {}", output.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.to_string().contains("unknown method") {
                eprintln!("valid methods: {METHOD_SYNTAX}");
            }
            ExitCode::FAILURE
        }
    }
}
