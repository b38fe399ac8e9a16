//! Experiment runner: one binary, subcommand style. Every command resolves
//! the config (file + flag overrides), embeds the resulting fingerprint and
//! seed in each output file, and drives all randomness from the two named
//! seeds so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig};
use crate::drl::{self, Actor, PolicySnapshot};
use crate::env::{fit_exercise_models, EnvError, EnvSetup, TraceRow};
use crate::instruments::OptionKind;
use crate::market::RngStream;
use crate::pricing::{
    binomial_american, bs_digital, bs_european, price_autocallable_mc, Valuation,
};
use crate::risk::{self, PnlSamples, RiskReport};
use crate::strategies::{gamma_ratio, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const SETUP_STREAM: u64 = 9000;
const TRAIN_STREAM: u64 = 1;
const EVAL_EPISODE_STREAM: u64 = 2;
const PROFILE_STREAM: u64 = 7;
const PRICE_STREAM: u64 = 8;

#[derive(Debug, Parser)]
#[command(name = "hedgelab", version, about = "Autocallable-note hedging laboratory")]
struct Cli {
    /// TOML experiment configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides seeds.train with N and seeds.eval with N + 1.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for episode and path parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Value one instrument and print the valuation as JSON.
    Price {
        /// note | european-call | european-put | digital-call | digital-put
        /// | american-call | american-put
        #[arg(long)]
        instrument: String,
        #[arg(long)]
        spot: Option<f64>,
        /// Overrides the market volatility state.
        #[arg(long)]
        vol: Option<f64>,
        #[arg(long)]
        strike: Option<f64>,
        /// Option maturity in years (ignored for the note).
        #[arg(long)]
        maturity: Option<f64>,
        /// Valuation time in years (note only).
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[arg(long, default_value_t = 1.0)]
        cash: f64,
    },
    /// Note value/delta/gamma over a spot sweep at several days before the
    /// first call date.
    GreeksProfile {
        #[arg(long, default_value_t = 70.0)]
        spot_min: f64,
        #[arg(long, default_value_t = 130.0)]
        spot_max: f64,
        #[arg(long, default_value_t = 1.0)]
        spot_step: f64,
        /// Days before the first call date, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [60.0, 5.0, 1.0])]
        days: Vec<f64>,
    },
    /// Roll episodes under a fixed strategy and report the PnL metrics.
    SimulatePnl {
        /// none | delta | delta-gamma | const:<c> | rl:<policy-file>
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
        /// Also write the first episode's step-by-step trace.
        #[arg(long, default_value_t = false)]
        trace: bool,
    },
    /// Fit the American continuation models and write them to JSON.
    FitLsmc,
    /// Train the distributional RL policy.
    Train,
    /// Evaluate a trained policy on held-out episodes.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
    },
    /// Side-by-side metric table from several report JSON files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        compare: Vec<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] drl::TrainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Entry point used by both the binary and the tests. Returns the process
/// exit code: 0 success, 2 config/usage error, 3 runtime error.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };

    let threads = cli.threads;
    let body = || match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };

    match threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(body)
        }
        _ => body(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds.train = seed;
        config.seeds.eval = seed.wrapping_add(1);
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let fingerprint = config.fingerprint();
    std::fs::create_dir_all(&config.output_dir)?;

    match cli.command {
        Command::Price {
            instrument,
            spot,
            vol,
            strike,
            maturity,
            time,
            cash,
        } => cmd_price(
            &config,
            &fingerprint,
            &instrument,
            spot,
            vol,
            strike,
            maturity,
            time,
            cash,
        ),
        Command::GreeksProfile {
            spot_min,
            spot_max,
            spot_step,
            days,
        } => cmd_greeks_profile(&config, &fingerprint, spot_min, spot_max, spot_step, &days),
        Command::SimulatePnl {
            strategy,
            episodes,
            trace,
        } => cmd_simulate_pnl(&config, &fingerprint, &strategy, episodes, trace),
        Command::FitLsmc => cmd_fit_lsmc(&config, &fingerprint),
        Command::Train => cmd_train(&config, &fingerprint),
        Command::Evaluate { policy, episodes } => {
            cmd_evaluate(&config, &fingerprint, &policy, episodes)
        }
        Command::Report { compare } => cmd_report(&config, &fingerprint, &compare),
    }
}

fn file_header(fingerprint: &str, seed: u64) -> String {
    format!("# config_fingerprint={fingerprint} seed={seed}\n")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_price(
    config: &ExperimentConfig,
    fingerprint: &str,
    instrument: &str,
    spot: Option<f64>,
    vol: Option<f64>,
    strike: Option<f64>,
    maturity: Option<f64>,
    time: f64,
    cash: f64,
) -> Result<(), CliError> {
    let spot = spot.unwrap_or(config.market.spot0);
    let vol = vol.unwrap_or(config.market.sigma0);
    let strike = strike.unwrap_or(config.note.initial_price);
    let maturity = maturity.unwrap_or(1.0);
    let rate = config.pricer.rate;
    let seed = config.seeds.eval;

    let valuation: Valuation = match instrument {
        "note" => {
            let market = crate::market::SabrParams {
                sigma0: vol,
                ..config.market
            };
            price_autocallable_mc(
                &config.note,
                spot,
                vol,
                time,
                &market,
                &config.pricer,
                &RngStream::new(seed, PRICE_STREAM),
            )
        }
        "european-call" => bs_european(OptionKind::EuropeanCall, spot, strike, vol, rate, maturity),
        "european-put" => bs_european(OptionKind::EuropeanPut, spot, strike, vol, rate, maturity),
        "digital-call" => {
            bs_digital(OptionKind::DigitalCashCall, spot, strike, vol, rate, maturity, cash)
        }
        "digital-put" => {
            bs_digital(OptionKind::DigitalCashPut, spot, strike, vol, rate, maturity, cash)
        }
        "american-call" | "american-put" => {
            let kind = if instrument == "american-call" {
                OptionKind::AmericanCall
            } else {
                OptionKind::AmericanPut
            };
            let price =
                binomial_american(kind, spot, strike, vol, rate, maturity, config.pricer.binomial_steps);
            Valuation {
                price,
                delta: f64::NAN,
                gamma: f64::NAN,
                std_error: 0.0,
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown instrument '{other}' (expected note, european-call, european-put, digital-call, digital-put, american-call, american-put)"
            )))
        }
    };

    let json = serde_json::json!({
        "config_fingerprint": fingerprint,
        "seed": seed,
        "instrument": instrument,
        "spot": spot,
        "vol": vol,
        "price": valuation.price,
        "delta": valuation.delta,
        "gamma": valuation.gamma,
        "std_error": valuation.std_error,
    });
    let text = serde_json::to_string_pretty(&json).expect("price json");
    println!("{text}");
    write_file(&config.output_dir.join("price.json"), &(text + "\n"))
}

fn cmd_greeks_profile(
    config: &ExperimentConfig,
    fingerprint: &str,
    spot_min: f64,
    spot_max: f64,
    spot_step: f64,
    days: &[f64],
) -> Result<(), CliError> {
    if !(spot_step > 0.0) || spot_max < spot_min {
        return Err(CliError::Usage("invalid spot sweep bounds".into()));
    }
    let seed = config.seeds.eval;
    let first_call = config.note.autocall_frequency_months as f64 / 12.0;
    // One stream for the whole sweep: common random numbers across cells
    // keep the curves comparable.
    let stream = RngStream::new(seed, PROFILE_STREAM);

    let mut rows = Vec::new();
    for &d in days {
        let t = first_call - d / 252.0;
        if t < 0.0 {
            return Err(CliError::Usage(format!(
                "days_before_call {d} precedes issue"
            )));
        }
        let mut spot = spot_min;
        while spot <= spot_max + 1e-9 {
            rows.push((spot, d, t));
            spot += spot_step;
        }
    }

    use rayon::prelude::*;
    let values: Vec<Valuation> = rows
        .par_iter()
        .map(|&(spot, _, t)| {
            price_autocallable_mc(
                &config.note,
                spot,
                config.market.sigma0,
                t,
                &config.market,
                &config.pricer,
                &stream,
            )
        })
        .collect();

    let mut csv = file_header(fingerprint, seed);
    csv.push_str("spot,days_before_call,value,delta,gamma\n");
    for ((spot, d, _), v) in rows.iter().zip(&values) {
        writeln!(csv, "{spot},{d},{},{},{}", v.price, v.delta, v.gamma).unwrap();
    }
    write_file(&config.output_dir.join("greeks_profile.csv"), &csv)
}

/// Outcome of rolling a strategy over a batch of episodes.
pub struct StrategyRun {
    pub samples: PnlSamples,
    pub mean_gamma_ratio: f64,
    pub first_trace: Vec<TraceRow>,
}

/// Shared episode runner: the same eval seed yields pathwise-identical
/// markets for every strategy, so strategies are compared under common
/// random numbers.
pub fn run_strategy_episodes(
    setup: &Arc<EnvSetup>,
    strategy: &Strategy,
    episodes: usize,
    eval_seed: u64,
) -> Result<StrategyRun, EnvError> {
    use rayon::prelude::*;
    let eval_stream = RngStream::new(eval_seed, EVAL_EPISODE_STREAM);
    let results: Vec<Result<(f64, f64, Option<Vec<TraceRow>>), EnvError>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut env = setup.make_env();
            let mut obs = env.reset(eval_stream.substream(i as u64));
            let mut total = 0.0;
            loop {
                let action = strategy.act(&obs, &setup.config);
                let tr = env.step(action)?;
                total += tr.reward;
                obs = tr.next_obs;
                if tr.done {
                    break;
                }
            }
            let ratio = gamma_ratio(env.trace());
            let trace = (i == 0).then(|| env.trace().to_vec());
            Ok((total, ratio, trace))
        })
        .collect();

    let mut values = Vec::with_capacity(episodes);
    let mut ratios = Vec::with_capacity(episodes);
    let mut first_trace = Vec::new();
    for r in results {
        let (pnl, ratio, trace) = r?;
        values.push(pnl);
        ratios.push(ratio);
        if let Some(t) = trace {
            first_trace = t;
        }
    }
    let mean_gamma_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    Ok(StrategyRun {
        samples: PnlSamples::new(values, vec![eval_seed]),
        mean_gamma_ratio,
        first_trace,
    })
}

fn parse_strategy(spec: &str) -> Result<(Strategy, bool), CliError> {
    if let Some(path) = spec.strip_prefix("rl:") {
        let snapshot = PolicySnapshot::load(Path::new(path))?;
        return Ok((Strategy::RlPolicy(snapshot.actor()), false));
    }
    let strategy = Strategy::parse_baseline(spec).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown strategy '{spec}' (expected none, delta, delta-gamma, const:<c>, rl:<file>)"
        ))
    })?;
    let disable_delta_leg = matches!(strategy, Strategy::None);
    Ok((strategy, disable_delta_leg))
}

fn build_setup(config: &ExperimentConfig, disable_delta_leg: bool) -> Result<Arc<EnvSetup>, CliError> {
    let mut env_config = config.env;
    if disable_delta_leg {
        env_config.auto_delta_hedge = false;
    }
    Ok(Arc::new(EnvSetup::new(
        config.market,
        config.note,
        env_config,
        config.pricer,
        RngStream::new(config.seeds.train, SETUP_STREAM),
    )?))
}

fn write_run_outputs(
    config: &ExperimentConfig,
    fingerprint: &str,
    run: &StrategyRun,
    write_trace: bool,
) -> Result<(), CliError> {
    let seed = config.seeds.eval;

    let mut pnl_csv = file_header(fingerprint, seed);
    pnl_csv.push_str("episode,pnl\n");
    for (i, v) in run.samples.values.iter().enumerate() {
        writeln!(pnl_csv, "{i},{v}").unwrap();
    }
    write_file(&config.output_dir.join("pnl.csv"), &pnl_csv)?;

    let mut report = risk::report(&run.samples, run.mean_gamma_ratio)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    report.config_fingerprint = fingerprint.to_string();
    let report_json = serde_json::to_string_pretty(&report).expect("report json");
    write_file(&config.output_dir.join("report.json"), &(report_json + "\n"))?;

    let hist = risk::histogram(&run.samples.values, 50)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut hist_csv = file_header(fingerprint, seed);
    hist_csv.push_str("bin_left,bin_right,count\n");
    for (i, c) in hist.counts.iter().enumerate() {
        writeln!(hist_csv, "{},{},{c}", hist.edges[i], hist.edges[i + 1]).unwrap();
    }
    write_file(&config.output_dir.join("histogram.csv"), &hist_csv)?;

    if write_trace {
        let mut trace_csv = file_header(fingerprint, seed);
        trace_csv
            .push_str("step,time,spot,action,units,reward,portfolio_value,gamma_client,gamma_hedge,done\n");
        for r in &run.first_trace {
            writeln!(
                trace_csv,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.time,
                r.spot,
                r.action,
                r.units,
                r.reward,
                r.portfolio_value,
                r.gamma_client,
                r.gamma_hedge,
                r.done
            )
            .unwrap();
        }
        write_file(&config.output_dir.join("trace.csv"), &trace_csv)?;
    }
    Ok(())
}

fn cmd_simulate_pnl(
    config: &ExperimentConfig,
    fingerprint: &str,
    strategy_spec: &str,
    episodes: usize,
    trace: bool,
) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Usage("episodes must be positive".into()));
    }
    let (strategy, disable_delta_leg) = parse_strategy(strategy_spec)?;
    let setup = build_setup(config, disable_delta_leg)?;
    let run = run_strategy_episodes(&setup, &strategy, episodes, config.seeds.eval)?;
    write_run_outputs(config, fingerprint, &run, trace)
}

fn cmd_fit_lsmc(config: &ExperimentConfig, fingerprint: &str) -> Result<(), CliError> {
    let models = fit_exercise_models(
        &config.market,
        &config.pricer,
        &RngStream::new(config.seeds.train, SETUP_STREAM),
    )?;
    let json = serde_json::json!({
        "config_fingerprint": fingerprint,
        "seed": config.seeds.train,
        "models": models,
    });
    let text = serde_json::to_string_pretty(&json).expect("lsmc json");
    println!(
        "fitted continuation models: call fallback={}, put fallback={}",
        models.call.fallback, models.put.fallback
    );
    write_file(&config.output_dir.join("lsmc_models.json"), &(text + "\n"))
}

fn cmd_train(config: &ExperimentConfig, fingerprint: &str) -> Result<(), CliError> {
    let setup = build_setup(config, false)?;
    let norm = setup.norm;
    let make_env = |_k: usize| setup.make_env();
    let result = drl::train(
        make_env,
        norm,
        &config.trainer,
        RngStream::new(config.seeds.train, TRAIN_STREAM),
        fingerprint,
    )?;

    result
        .snapshot
        .save(&config.output_dir.join("policy.json"))?;
    println!("wrote {}", config.output_dir.join("policy.json").display());

    let mut curve_csv = file_header(fingerprint, config.seeds.train);
    curve_csv.push_str("step,critic_loss,actor_objective,eval_var95\n");
    for p in &result.curve {
        writeln!(
            curve_csv,
            "{},{},{},{}",
            p.episode, p.critic_loss, p.actor_objective, p.eval_var95
        )
        .unwrap();
    }
    write_file(&config.output_dir.join("training_curve.csv"), &curve_csv)
}

fn cmd_evaluate(
    config: &ExperimentConfig,
    fingerprint: &str,
    policy_path: &Path,
    episodes: usize,
) -> Result<(), CliError> {
    let snapshot = PolicySnapshot::load(policy_path)?;
    if snapshot.config_fingerprint != fingerprint {
        eprintln!(
            "warning: policy was trained under fingerprint {} but the current config is {}",
            snapshot.config_fingerprint, fingerprint
        );
    }
    let setup = build_setup(config, false)?;
    let strategy = Strategy::RlPolicy(Actor {
        net: snapshot.actor.clone(),
        gamma_scale: snapshot.gamma_scale,
        tau_scale: snapshot.tau_scale,
    });
    let run = run_strategy_episodes(&setup, &strategy, episodes, config.seeds.eval)?;
    write_run_outputs(config, fingerprint, &run, false)
}

const TABLE_COLUMNS: [&str; 9] = [
    "Strategy",
    "Mean",
    "Std",
    "Mean-Std",
    "5%VaR",
    "5%CVaR",
    "95%VaR",
    "95%CVaR",
    "Gamma Ratio",
];

fn cmd_report(
    config: &ExperimentConfig,
    fingerprint: &str,
    files: &[PathBuf],
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(path)?;
        let report: RiskReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((label, report));
    }

    let mut csv = file_header(fingerprint, config.seeds.eval);
    csv.push_str(&TABLE_COLUMNS.join(","));
    csv.push('\n');
    println!("{}", TABLE_COLUMNS.join(" | "));
    for (label, r) in &rows {
        let cells = [
            format!("{:.2}", r.mean),
            format!("{:.2}", r.std),
            format!("{:.2}", r.mean_minus_1p645_std),
            format!("{:.2}", r.var5),
            format!("{:.2}", r.cvar5),
            format!("{:.2}", r.var95),
            format!("{:.2}", r.cvar95),
            format!("{:.2}", r.gamma_ratio),
        ];
        writeln!(csv, "{label},{}", cells.join(",")).unwrap();
        println!("{label} | {}", cells.join(" | "));
    }
    write_file(&config.output_dir.join("comparison.csv"), &csv)
}
