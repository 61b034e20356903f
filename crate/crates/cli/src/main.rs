use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regime_var::backtest::{read_breaches, write_outputs};
use regime_var::evaluate::merge_results;
use regime_var::market::Period;
use regime_var::synthetic;
use regime_var::*;

mod config;
mod manifest;
mod report;

use config::{load_backtest_config, BacktestOverrides};
use manifest::{file_digest, RunManifest};

/// Exit codes by failure category.
const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
struct CliError {
    code: u8,
    source: anyhow::Error,
}

impl CliError {
    fn config(msg: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_CONFIG,
            source: anyhow::anyhow!("{msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Io => EXIT_OTHER,
        };
        CliError { code, source: e.into() }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(source: anyhow::Error) -> Self {
        CliError {
            code: EXIT_OTHER,
            source,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "regime-var", version, about = "Regime-switching Monte-Carlo Value-at-Risk")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Descriptive statistics of daily and period returns.
    Stats(StatsArgs),
    /// Moving-window VaR backtest.
    Backtest(BacktestArgs),
    /// Compare backtest result sets.
    Compare(CompareArgs),
    /// Simulate horizon returns from a saved model bundle.
    Simulate(SimulateArgs),
    /// Fit one model on the trailing window and save it as a bundle.
    Fit(FitArgs),
    /// Write synthetic regime-switching price data.
    Generate(GenerateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StatsFrequency {
    Daily,
    Weekly,
    Monthly,
    All,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Delimited price file: a date column, then one level column per asset.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Asset columns to use, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    assets: Option<Vec<String>>,
}

impl InputArgs {
    fn load(&self) -> CliResult<ReturnSeries> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::config("delimiter must be a single ASCII character"));
        }
        let schema = PriceSchema {
            delimiter: self.delimiter as u8,
            date_column: None,
            assets: self.assets.clone(),
        };
        let prices = load_price_series(&self.input, &schema)?;
        Ok(compute_returns(&prices)?)
    }
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "all")]
    frequency: StatsFrequency,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also write the report here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// TOML config, or a manifest JSON of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: BacktestOverrides,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// breaches.csv files or result directories.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long, value_enum, default_value = "excess")]
    accounting: AccountingArg,
    /// Compare two runs of the same models (e.g. different windows) and
    /// total the comp values per level and asset class.
    #[arg(long)]
    totals: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SidedArg {
    Two,
    Less,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum AccountingArg {
    Excess,
    Realized,
}

impl From<AccountingArg> for Accounting {
    fn from(a: AccountingArg) -> Self {
        match a {
            AccountingArg::Excess => Accounting::Excess,
            AccountingArg::Realized => Accounting::Realized,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Model bundle written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Price file whose trailing returns replace the stored history.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    levels: Vec<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model id, e.g. classic, hmm, lstm-hmm-reg1.
    #[arg(long)]
    model: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: BacktestOverrides,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Two-regime equity/bond pair.
    EquityBond,
    /// Two-regime single equity.
    Equity,
    /// I.i.d. Gaussian single asset.
    Iid,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "equity-bond")]
    preset: Preset,
    /// Number of daily returns.
    #[arg(long, default_value_t = 3000)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First business day (ISO date).
    #[arg(long, default_value = "2000-01-03")]
    start: chrono::NaiveDate,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon_pool(t) {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let out = match cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Backtest(a) => cmd_backtest(a, cli.threads),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.source);
            ExitCode::from(e.code)
        }
    }
}

fn rayon_pool(threads: usize) -> anyhow::Result<()> {
    if threads == 0 {
        anyhow::bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    let daily = args.input.load()?;
    let mut panels = Vec::new();
    let want = |f: StatsFrequency| args.frequency == f || args.frequency == StatsFrequency::All;
    if want(StatsFrequency::Daily) {
        panels.push(descriptive_stats(&daily)?);
    }
    for (f, p) in [
        (StatsFrequency::Weekly, Period::Weekly),
        (StatsFrequency::Monthly, Period::Monthly),
    ] {
        if want(f) {
            panels.push(descriptive_stats(&aggregate(&daily, p)?.series)?);
        }
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&panels).map_err(anyhow::Error::from)? + "\n",
        Format::Csv => report::stats_csv(&panels),
    };
    print!("{text}");
    if let Some(dir) = args.out_dir {
        let name = match args.format {
            Format::Json => "stats.json",
            Format::Csv => "stats.csv",
        };
        write_file(&dir.join(name), &text)?;
    }
    Ok(())
}

fn cmd_backtest(args: BacktestArgs, threads: Option<usize>) -> CliResult {
    let started = Instant::now();
    let config = load_backtest_config(args.config.as_deref(), &args.overrides)?;
    let data = args.input.load()?;
    let loaded = started.elapsed();

    log::info!("{} days of returns for {} assets", data.len(), data.asset_names().len());
    let result = run_backtest(&data, &config)?;
    let ran = started.elapsed();
    log::info!("backtest finished in {:.1}s", (ran - loaded).as_secs_f64());
    let files = write_outputs(&result, &args.out_dir)?;

    let mut manifest = RunManifest::new(config, threads);
    manifest.add_input(&args.input.input)?;
    for f in &files {
        manifest.add_output(f)?;
    }
    manifest.stage("load", loaded);
    manifest.stage("backtest", ran - loaded);
    manifest.evaluation_dates = result.dates.len();
    manifest.failed_cells = result.failures.len();
    manifest.write(&args.out_dir.join(manifest::MANIFEST_FILE))?;

    println!(
        "{} evaluation dates, {} models, {} breach records, {} failed cells -> {}",
        result.dates.len(),
        result.models.len(),
        result.breaches.len(),
        result.failures.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn breaches_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(backtest::BREACHES_FILE)
    } else {
        p.to_path_buf()
    }
}

fn cmd_compare(args: CompareArgs) -> CliResult {
    let runs = args
        .results
        .iter()
        .map(|p| read_breaches(&breaches_path(p)))
        .collect::<Result<Vec<_>>>()?;
    let sided = match args.sided {
        SidedArg::Two => Sided::Two,
        SidedArg::Less => Sided::Less,
    };
    let outputs: Vec<(&str, String)> = if args.totals {
        let [first, second] = runs.as_slice() else {
            return Err(CliError::config("--totals needs exactly two result sets"));
        };
        let totals = comp_totals(first, second)?;
        match args.format {
            Format::Json => vec![("totals.json", report::json(&totals)?)],
            Format::Csv => vec![("totals.csv", report::totals_csv(&totals))],
        }
    } else {
        let merged = merge_results(runs)?;
        let rep = comparison_report(&merged, args.accounting.into(), sided)?;
        match args.format {
            Format::Json => vec![("report.json", report::json(&rep)?)],
            Format::Csv => vec![
                ("counts.csv", report::counts_csv(&rep)),
                ("matrix.csv", report::matrix_csv(&rep)),
                ("costs.csv", report::costs_csv(&rep)),
            ],
        }
    };
    for (i, (name, text)) in outputs.iter().enumerate() {
        if outputs.len() > 1 {
            if i > 0 {
                println!();
            }
            println!("# {name}");
        }
        print!("{text}");
        if let Some(dir) = &args.out_dir {
            write_file(&dir.join(name), text)?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let bundle = ModelBundle::load(&args.model)?;
    if args.paths == 0 {
        return Err(CliError::config("--paths must be at least 1"));
    }
    if let Some(a) = args.levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::config(format!("level {a} outside (0, 1)")));
    }
    let history = match &args.history {
        Some(path) => {
            let schema = PriceSchema {
                assets: Some(bundle.asset_names.clone()),
                ..PriceSchema::default()
            };
            compute_returns(&load_price_series(path, &schema)?)?.returns().clone()
        }
        None => bundle.history.clone(),
    };
    let sampler = bundle.model.sampler(&history)?;
    if args.paths == 1 {
        let mut path = Matrix::zeros(args.horizon, bundle.asset_names.len());
        sampler.sample_path(&mut rng::stream_rng(args.seed, 0), &mut path);
        print!("{}", report::path_csv(&bundle.asset_names, &path));
        return Ok(());
    }
    let sims = simulate_horizon_returns(sampler.as_ref(), args.horizon, args.paths, args.seed);
    let table = report::QuantileTable::new(&bundle.asset_names, &sims, &args.levels);
    let text = match args.format {
        Format::Json => report::json(&table)?,
        Format::Csv => table.to_csv(),
    };
    print!("{text}");
    Ok(())
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let config = load_backtest_config(args.config.as_deref(), &args.overrides)?;
    let spec: ModelSpec = args.model.parse()?;
    let data = args.input.load()?;
    if data.len() < config.window_days {
        return Err(Error::InsufficientData {
            needed: config.window_days,
            got: data.len(),
        }
        .into());
    }
    let start = data.len() - config.window_days;
    let window = data.returns().slice_rows(start, data.len());
    let last = *data.dates().last().expect("non-empty");
    let fitted = fit_model(&spec, &window, &config.fit, config.seed, &last.to_string())?;
    let bundle = ModelBundle::new(spec.id(), data.asset_names().to_vec(), Some(last), fitted, window)?;
    bundle.save(&args.out)?;
    println!(
        "{} fitted on {} days through {last} -> {}",
        spec.id(),
        config.window_days,
        args.out.display()
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let params = match args.preset {
        Preset::EquityBond => synthetic::equity_bond_regimes(),
        Preset::Equity => synthetic::equity_regimes(),
        Preset::Iid => HmmParams::single(MvGaussian::new(vec![0.0003], vec![0.01])?),
    };
    let (returns, _) = synthetic::generate_returns(&params, args.days, &mut rng_from_seed(args.seed));
    let names = match args.preset {
        Preset::EquityBond => vec!["equity".to_string(), "bond".to_string()],
        _ => vec!["equity".to_string()],
    };
    let prices = synthetic::price_series(&returns, args.start, names)?;
    write_file(&args.out, &report::prices_csv(&prices))?;
    println!(
        "{} rows -> {} (input digest {})",
        prices.len(),
        args.out.display(),
        file_digest(&args.out)?
    );
    Ok(())
}
