//! `leadlag`: statistically validated lead-lag networks from intraday data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leadlag_core::corr::CorrKind;
use leadlag_core::pipeline::{self, RunConfig, SynthRequest};
use leadlag_core::synth::{PlantedSpec, TickSpec, TradeRate};
use leadlag_core::validate::Method;
use leadlag_core::{Error, Result};

#[derive(Parser)]
#[command(name = "leadlag", version, about)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a tick CSV onto an h-minute price grid.
    Ingest {
        #[arg(long)]
        ticks: PathBuf,
        /// Horizon in minutes; must divide 390.
        #[arg(long)]
        horizon: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intraday log returns of a price grid.
    Returns {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Permutation-validated networks for every configured horizon.
    Validate(ConfigArgs),
    /// Summary tables, Epps curve, degree, density, rank-sum and motif outputs.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Network JSON files written by `validate`.
        #[arg(long = "network")]
        networks: Vec<PathBuf>,
    },
    /// Normal-theory correlation threshold and zero-exceedance probability.
    Analytic {
        /// Number of observations T.
        #[arg(long = "t")]
        t: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        q0: f64,
        /// Number of symbols N.
        #[arg(long, default_value_t = 100)]
        n: u64,
        /// Replicates per test k (Q = k N^2).
        #[arg(long)]
        k: Option<u64>,
    },
    /// Synthetic return panels and tick streams.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Edge counts for lags 1..=l-max.
    LagSweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        l_max: usize,
    },
    /// Validate consecutive fixed-length segments and report their union.
    Segment {
        #[command(flatten)]
        config: ConfigArgs,
        /// Lag-aligned rows per segment.
        #[arg(long)]
        t_seg: usize,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// I.i.d. standard normal returns.
    Null {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        horizon: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Factor model with planted lead-lag edges from a TOML spec.
    Planted {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        horizon: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ticks on the latent price path of a return panel.
    Ticks {
        #[arg(long)]
        returns: PathBuf,
        /// Trades per second, or `dense` for one trade every second.
        #[arg(long, default_value = "dense")]
        rate: String,
        #[arg(long, default_value_t = 100.0)]
        start_price: f64,
        /// `SYMBOL_INDEX:DAY_INDEX` pairs without any trades.
        #[arg(long = "silent", value_parser = parse_pair)]
        silent: Vec<(usize, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A TOML config file plus flag overrides.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ticks: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Comma-separated horizons in minutes.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u32>>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    q0: Option<f64>,
    /// Replicates per test (Q = k N^2).
    #[arg(long)]
    k: Option<u64>,
    /// Explicit replicate count Q.
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of bonferroni, fdr, analytic.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// `lagged` or `synchronous`.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<CorrKind>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Seconds between count checkpoints.
    #[arg(long)]
    checkpoint_secs: Option<u64>,
    /// Continue from an existing counts checkpoint.
    #[arg(long)]
    resume: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.ticks {
            c.ticks = Some(v.clone());
            c.returns = None;
        }
        if let Some(v) = &self.returns {
            c.returns = Some(v.clone());
            if self.ticks.is_none() {
                c.ticks = None;
            }
        }
        if let Some(v) = &self.horizons {
            c.horizons = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(lag, q0, k, seed, methods, mode, output, workers);
        if self.replicates.is_some() {
            c.replicates = self.replicates;
        }
        if self.checkpoint_secs.is_some() {
            c.checkpoint_secs = self.checkpoint_secs;
        }
        c.resume |= self.resume;
        Ok(c)
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "bonferroni" => Ok(Method::Bonferroni),
        "fdr" => Ok(Method::Fdr),
        "analytic" => Ok(Method::Analytic),
        _ => Err(format!("unknown method `{s}`")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<CorrKind, String> {
    match s {
        "lagged" => Ok(CorrKind::Lagged),
        "synchronous" | "sync" => Ok(CorrKind::Synchronous),
        _ => Err(format!("unknown mode `{s}`")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected SYMBOL_INDEX:DAY_INDEX")?;
    Ok((
        a.parse().map_err(|_| format!("bad symbol index `{a}`"))?,
        b.parse().map_err(|_| format!("bad day index `{b}`"))?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    let written = match cli.command {
        Command::Ingest { ticks, horizon, out } => pipeline::cmd_ingest(&ticks, horizon, &out)?,
        Command::Returns { grid, out } => pipeline::cmd_returns(&grid, &out)?,
        Command::Validate(args) => pipeline::cmd_validate(&args.resolve()?)?,
        Command::Report { config, networks } => pipeline::cmd_report(&config.resolve()?, &networks)?,
        Command::Analytic { t, q0, n, k } => {
            print!("{}", pipeline::cmd_analytic(t, q0, n, k)?);
            Vec::new()
        }
        Command::Synth(cmd) => {
            let (req, out) = match cmd {
                SynthCommand::Null { n, days, horizon, seed, out } => (
                    SynthRequest::Null { n, days, h: horizon, seed },
                    out,
                ),
                SynthCommand::Planted { spec, days, horizon, out } => {
                    let text = std::fs::read_to_string(&spec).map_err(|e| Error::Io {
                        path: spec.clone(),
                        source: e,
                    })?;
                    let spec = PlantedSpec::from_toml_str(&text)?;
                    (SynthRequest::Planted { spec, days, h: horizon }, out)
                }
                SynthCommand::Ticks { returns, rate, start_price, silent, seed, out } => {
                    let rate = if rate == "dense" {
                        TradeRate::EverySecond
                    } else {
                        TradeRate::Poisson(rate.parse().map_err(|_| {
                            Error::Config(format!("rate must be `dense` or a number, got `{rate}`"))
                        })?)
                    };
                    let spec = TickSpec { rate, start_price, silent, seed };
                    (SynthRequest::Ticks { returns, spec }, out)
                }
            };
            pipeline::cmd_synth(&req, &out)?
        }
        Command::LagSweep { config, l_max } => pipeline::cmd_lag_sweep(&config.resolve()?, l_max)?,
        Command::Segment { config, t_seg } => pipeline::cmd_segment(&config.resolve()?, t_seg)?,
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
