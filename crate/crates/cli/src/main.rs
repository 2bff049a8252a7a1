use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rulercal::harness::{
    self, paired_sst_comparison, run_calibration_with, run_truncation, simulate_many,
    validate_config, write_replications, write_truncation, ConfigError, OracleKind,
    PairedSettings, RunConfig, Setup, StartPoint, EXIT_BUDGET, EXIT_CONFIG, EXIT_THRESHOLD,
};
use rulercal::synthetic::{hcv_like_problem, interior_target_problem, TargetSpec};
use rulercal::{MtSchedule, StopReason};

#[derive(Parser)]
#[command(name = "rulercal", version, about = "Stochastic ruler calibration of simulation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optional truncation, then the stochastic ruler search.
    Calibrate(CalibrateArgs),
    /// Run only the solution-space truncation passes.
    Truncate(CommonArgs),
    /// Run ABM replications at one parameter vector.
    Simulate(SimulateArgs),
    /// Paired comparison of search with and without truncation on the
    /// synthetic benchmark.
    Bench(BenchArgs),
    /// Check a configuration and list every violation.
    Validate(ConfigArg),
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchProblem {
    /// Targets at the mean of the central lattice point.
    Interior,
    /// Paper targets on the HCV-shaped affine means.
    HcvLike,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Abm,
    Synthetic,
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<OracleArg>,
    /// Replicates per objective evaluation.
    #[arg(short = 'k', long)]
    replicates: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Replicates per truncation evaluation.
    #[arg(long)]
    sst_replicates: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, conflicts_with = "estimate_b")]
    b: Option<f64>,
    /// Estimate b from the extremes even if the config sets it.
    #[arg(long)]
    estimate_b: bool,
    /// Stopping threshold; repeat for several result rows.
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_parser = parse_schedule)]
    mt_form: Option<MtSchedule>,
    /// `xl`, `xr` or an index vector such as `1,4,0`.
    #[arg(long)]
    start: Option<StartPoint>,
    #[arg(long)]
    sst: Option<Toggle>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Calibration parameters `x1,x2,x3`; the model defaults when omitted.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    replications: u64,
    #[arg(long)]
    horizon_days: Option<u32>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    pairs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BenchProblem::Interior)]
    problem: BenchProblem,
    /// Outcome noise standard deviation as a fraction of each target.
    #[arg(long, default_value_t = 0.02)]
    noise_frac: f64,
    #[arg(long = "delta", default_values_t = [0.45, 0.375, 0.3])]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    budget: u64,
    #[arg(short = 'k', long, default_value_t = 5)]
    replicates: usize,
    #[arg(long)]
    sst_replicates: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_schedule(s: &str) -> Result<MtSchedule, String> {
    s.parse()
}

fn load(arg: &ConfigArg) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &arg.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    Ok(cfg)
}

fn apply_common(cfg: &mut RunConfig, c: &CommonArgs) {
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(o) = c.oracle {
        cfg.oracle = match o {
            OracleArg::Abm => OracleKind::Abm,
            OracleArg::Synthetic => OracleKind::Synthetic,
        };
    }
    if let Some(k) = c.replicates {
        cfg.replicates = k;
    }
    if let Some(p) = c.parallelism {
        cfg.parallelism = p;
    }
    if c.sst_replicates.is_some() {
        cfg.sst.replicates = c.sst_replicates;
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn calibrate(args: CalibrateArgs) -> Result<i32> {
    let mut cfg = load(&args.common.config)?;
    apply_common(&mut cfg, &args.common);
    let r = &mut cfg.ruler;
    if let Some(a) = args.a {
        r.a = a;
    }
    if args.estimate_b {
        r.b = None;
    } else if args.b.is_some() {
        r.b = args.b;
    }
    if !args.deltas.is_empty() {
        r.deltas = args.deltas;
    }
    if let Some(t) = args.budget {
        r.budget = t;
    }
    if let Some(m) = args.mt_form {
        r.mt_form = m;
    }
    if let Some(s) = args.start {
        r.start = s;
    }
    if let Some(t) = args.sst {
        cfg.sst.enabled = matches!(t, Toggle::On);
    }
    cfg.validate()?;
    let setup = Setup::new(&cfg)?;
    let outcome = run_calibration_with(&cfg, &setup)?;
    outcome.write_artifacts(&cfg.output_dir, &setup.space, setup.targets.len())?;
    harness_write_config(&cfg)?;
    print!("{}", outcome.summary_text());
    println!("results written to {}", cfg.output_dir.display());
    Ok(match outcome.stop_reason() {
        StopReason::Threshold => EXIT_THRESHOLD,
        StopReason::Budget => EXIT_BUDGET,
    })
}

fn harness_write_config(cfg: &RunConfig) -> Result<()> {
    let path = cfg.output_dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()).with_context(|| format!("writing {}", path.display()))
}

fn truncate_cmd(args: CommonArgs) -> Result<i32> {
    let mut cfg = load(&args.config)?;
    apply_common(&mut cfg, &args);
    cfg.sst.enabled = true;
    let setup = Setup::new(&cfg)?;
    let report = run_truncation(&cfg, &setup)?;
    write_truncation(&cfg.output_dir, &report, &setup.space)?;
    harness_write_config(&cfg)?;
    println!(
        "{} of {} points survive; new x_l {:?} {:?}; new x_r {:?} {:?}; {} evaluations",
        report.surviving_count(),
        report.original_size,
        report.new_x_l,
        report.new_x_l_values,
        report.new_x_r,
        report.new_x_r_values,
        report.oracle_calls
    );
    println!("results written to {}", cfg.output_dir.display());
    Ok(0)
}

fn simulate(args: SimulateArgs) -> Result<i32> {
    let cfg = load(&args.config)?;
    let mut params = cfg.model.clone();
    if let Some(x) = &args.x {
        params = params.with_calibration(x)?;
    }
    if let Some(h) = args.horizon_days {
        params.horizon_days = h;
    }
    if let Some(n) = args.population {
        params.population_size = n;
    }
    params.validate()?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.replications).collect();
    let records = simulate_many(&params, &seeds)?;
    println!("seed,y1,y2,y3,runtime_ms");
    for r in &records {
        println!("{},{:.4},{:.4},{:.4},{}", r.seed, r.y1, r.y2, r.y3, r.runtime_ms);
    }
    if let Some(out) = args.out.or_else(|| std::env::var(harness::ENV_OUT).ok().map(PathBuf::from)) {
        write_replications(&out, &records)?;
        println!("records written to {}", out.display());
    }
    Ok(0)
}

fn bench(args: BenchArgs) -> Result<i32> {
    let problem = match args.problem {
        BenchProblem::Interior => interior_target_problem(args.noise_frac)?,
        BenchProblem::HcvLike => {
            let targets = [3.6, 2.6, 0.1];
            let noise = targets.iter().map(|t| t * args.noise_frac).collect();
            hcv_like_problem(noise, TargetSpec::Values(targets.to_vec()))?
        }
    };
    let space = &problem.space;
    let h_l = problem.true_objective(&space.lower_corner())?;
    let h_r = problem.true_objective(&space.upper_corner())?;
    let settings = PairedSettings {
        a: 0.0,
        b: h_l.max(h_r),
        deltas: args.deltas.clone(),
        budget: args.budget,
        schedule: MtSchedule::Text,
        replicates: args.replicates,
        sst_replicates: args.sst_replicates.unwrap_or(args.replicates),
    };
    let seeds: Vec<u64> = (args.seed..args.seed + args.pairs).collect();
    let pairs = paired_sst_comparison(&problem, &settings, &seeds)?;
    let no_slower = pairs.iter().filter(|p| p.sst_no_slower()).count();
    let fmt = |h: &[Option<u64>]| {
        h.iter()
            .map(|v| v.map_or("-".to_string(), |t| t.to_string()))
            .collect::<Vec<_>>()
            .join("/")
    };
    println!("true optimum {:?} h = {:.6}", problem.true_optimum.0, problem.true_optimum.1);
    println!("seed  plain  truncated  truncation_calls  surviving");
    for p in &pairs {
        println!(
            "{:<5} {:<6} {:<10} {:<17} {}",
            p.seed,
            fmt(&p.plain_hits),
            fmt(&p.sst_hits),
            p.truncation_calls,
            p.surviving
        );
    }
    println!(
        "truncated search no slower in {no_slower} of {} pairs (thresholds {:?})",
        pairs.len(),
        args.deltas
    );
    if let Some(out) = args.out {
        create_dir(&out)?;
        let path = out.join("bench.json");
        std::fs::write(&path, serde_json::to_string_pretty(&pairs)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn validate(args: ConfigArg) -> Result<i32> {
    let cfg = load(&args)?;
    let v = validate_config(&cfg);
    if v.is_empty() {
        println!("configuration is valid");
        return Ok(0);
    }
    for violation in &v {
        println!("{violation}");
    }
    Ok(EXIT_CONFIG)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Truncate(a) => truncate_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Validate(a) => validate(a),
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml_string());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<harness::HarnessError>(),
                    Some(harness::HarnessError::Config(_))
                );
            ExitCode::from(if config { EXIT_CONFIG as u8 } else { 1 })
        }
    }
}
