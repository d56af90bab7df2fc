//! Command-line front end: predictive histograms, single detections with
//! driver-state persistence, the Monte Carlo study, and synthetic GPS logs.
//!
//! The `detect` exit status encodes the ternary decision for scripting:
//! 0 accepts `H0`, 2 flags `H1`, 3 is an erasure; other failures exit
//! nonzero with a diagnostic on stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chargecheck::config::{write_atomic, AppConfig, DriverState, DriverStateFile, KvMap};
use chargecheck::{
    generate_trip_log, predict_xc, run_mc_study, update_prior, weighted_bonus, Decision, Detector,
    EmpiricalDist, Hypothesis, PhysicsConstants, Season, SocPair, StudyConfig, TripGenConfig,
    TripLog, UndeclaredModel,
};

#[derive(Parser)]
#[command(
    name = "chargecheck",
    about = "Detects undeclared EV charging events from GPS trip records",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Monte Carlo predictive histogram of battery draw for a GPS log
    Predict(PredictArgs),
    /// Classify an observed differential state of charge against the prediction
    Detect(DetectArgs),
    /// Run the Monte Carlo detection study described by a study config file
    Study(StudyArgs),
    /// Generate a synthetic GPS trip log
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Application config file (key = value lines)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Monte Carlo sample count override
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Histogram bin width override (kWh)
    #[arg(long, value_name = "KWH")]
    bin_width: Option<f64>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<AppConfig> {
        let mut cfg = match &self.config {
            Some(path) => AppConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => AppConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(samples) = self.samples {
            cfg.samples = samples;
        }
        if let Some(bw) = self.bin_width {
            cfg.bin_width_kwh = bw;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PredictArgs {
    /// GPS CSV file (header: trip,timestamp,speed_mps,altitude_m)
    gps: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Season of the interval, or `auto` to infer from timestamps
    #[arg(long, default_value = "auto")]
    season: String,
    /// Output directory for the histogram CSV
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// GPS CSV file for the certified interval
    gps: PathBuf,
    /// SoC right after the previous certified charge (kWh)
    #[arg(long, value_name = "KWH")]
    x0: f64,
    /// SoC at the current plug-in (kWh)
    #[arg(long, value_name = "KWH")]
    x1: f64,
    /// Driver identifier for state persistence
    #[arg(long, value_name = "ID")]
    driver: String,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "auto")]
    season: String,
    /// Prior probability of undeclared charging; overrides the stored state
    #[arg(long, value_name = "P")]
    p1: Option<f64>,
    /// Forgetting factor applied when propagating the posterior
    #[arg(long, value_name = "L")]
    lambda: Option<f64>,
    /// Maximal compliance bonus; when set the report includes the weighted bonus
    #[arg(long, value_name = "G")]
    bonus_max: Option<f64>,
    /// Driver-state file (defaults to the config's driver_state_path,
    /// falling back to ./driver_state.kv)
    #[arg(long, value_name = "PATH")]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Study config file (key = value lines)
    study_config: PathBuf,
    /// Master seed override
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for reports
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Season the generated interval falls in
    #[arg(long)]
    season: Season,
    /// Trip generator config file; flags below override it
    #[arg(long, value_name = "PATH")]
    trip_config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    trips: Option<usize>,
    /// Driving seconds per trip
    #[arg(long, value_name = "S")]
    duration: Option<u32>,
    #[arg(long, value_name = "MPS")]
    cruise: Option<f64>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Predict(args) => cmd_predict(args).map(|()| ExitCode::SUCCESS),
        Command::Detect(args) => cmd_detect(args),
        Command::Study(args) => cmd_study(args).map(|()| ExitCode::SUCCESS),
        Command::Simulate(args) => cmd_simulate(args).map(|()| ExitCode::SUCCESS),
    }
}

fn load_log(path: &Path, cfg: &AppConfig, season_flag: &str) -> Result<TripLog> {
    let log = TripLog::from_csv_path(path, &cfg.month_map)
        .with_context(|| format!("parsing GPS log {}", path.display()))?;
    match season_flag {
        "auto" => Ok(log),
        other => {
            let season: Season = other.parse().map_err(|e: String| anyhow!(e))?;
            Ok(log.with_season(season))
        }
    }
}

fn build_predictor(log: &TripLog, cfg: &AppConfig) -> Result<EmpiricalDist> {
    let consts = PhysicsConstants::default();
    Ok(predict_xc(
        log,
        &cfg.ev,
        &consts,
        log.season(),
        &cfg.mass,
        &cfg.aux,
        cfg.samples,
        cfg.bin_width_kwh,
        cfg.seed,
    )?)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let log = load_log(&args.gps, &cfg, &args.season)?;
    let dist = build_predictor(&log, &cfg)?;
    let stats = dist.stats();

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let hist_path = args.out.join("xc_histogram.csv");
    write_atomic(&hist_path, dist.to_csv_string().as_bytes())
        .with_context(|| format!("writing {}", hist_path.display()))?;

    let mut out = String::new();
    writeln!(out, "season = {}", log.season())?;
    writeln!(out, "trips = {}", log.trip_count())?;
    writeln!(out, "duration_s = {}", log.total_duration_s())?;
    writeln!(out, "samples = {}", dist.sample_count())?;
    writeln!(out, "bin_width_kwh = {}", dist.bin_width_kwh())?;
    writeln!(out, "mean_kwh = {}", stats.mean_kwh)?;
    writeln!(out, "variance_kwh2 = {}", stats.variance_kwh2)?;
    writeln!(out, "mode_kwh = {}", stats.mode_kwh)?;
    writeln!(out, "support_min_kwh = {}", dist.origin_kwh())?;
    writeln!(out, "support_max_kwh = {}", dist.left_edge_kwh(stats.max_bin + 1))?;
    writeln!(out, "histogram = {}", hist_path.display())?;
    print!("{out}");
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<ExitCode> {
    let cfg = args.common.resolve()?;
    let log = load_log(&args.gps, &cfg, &args.season)?;
    let soc = SocPair::new(args.x0, args.x1, cfg.ev.e_max_kwh)?;

    let state_path = args
        .state
        .clone()
        .or_else(|| cfg.driver_state_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("driver_state.kv"));
    let mut state_file = DriverStateFile::load(&state_path)
        .with_context(|| format!("loading driver state {}", state_path.display()))?;

    let p1 = args
        .p1
        .or(cfg.p1)
        .or_else(|| state_file.get(&args.driver).map(|s| s.p1))
        .ok_or_else(|| {
            anyhow!(
                "no prior for driver `{}`: pass --p1 or create a state row in {}",
                args.driver,
                state_path.display()
            )
        })?;

    let x_u_max = cfg.x_u_max_effective();
    if x_u_max > cfg.ev.e_max_kwh {
        bail!(
            "x_u_max_kwh {x_u_max} exceeds the battery capacity {}",
            cfg.ev.e_max_kwh
        );
    }
    let undeclared = UndeclaredModel::new(p1, cfg.x_u_min_kwh, x_u_max)?;
    let dist = build_predictor(&log, &cfg)?;
    let detector = Detector::new(dist, &undeclared, cfg.thresholds)?;
    let output = detector.classify(soc.xd_kwh());

    let lambda = args.lambda.unwrap_or(cfg.lambda);
    let p1_next = update_prior(output.posterior_h1, lambda);
    let last_sample_ts = log
        .samples()
        .last()
        .expect("validated log is nonempty")
        .timestamp;
    state_file.set(
        &args.driver,
        DriverState {
            p1: p1_next,
            last_certified_soc_kwh: args.x1,
            last_certified_timestamp: last_sample_ts,
        },
    );
    state_file
        .save(&state_path)
        .with_context(|| format!("writing driver state {}", state_path.display()))?;

    let mut report = String::new();
    writeln!(report, "posterior = {}", output.posterior_h1)?;
    writeln!(report, "decision = {}", output.decision)?;
    writeln!(report, "f_h0 = {}", output.f_h0_at_xd)?;
    writeln!(report, "f_h1 = {}", output.f_h1_at_xd)?;
    writeln!(report, "xd_bin = {}", output.xd_bin_index)?;
    writeln!(report, "flag = {}", output.support_flag)?;
    writeln!(report, "p1_used = {p1}")?;
    writeln!(report, "p1_next = {p1_next}")?;
    if let Some(g_max) = args.bonus_max {
        writeln!(report, "bonus = {}", weighted_bonus(output.posterior_h1, g_max))?;
    }
    print!("{report}");

    Ok(match output.decision {
        Decision::H0 => ExitCode::SUCCESS,
        Decision::H1 => ExitCode::from(2),
        Decision::Erasure => ExitCode::from(3),
    })
}

fn cmd_study(args: StudyArgs) -> Result<()> {
    let kv = KvMap::load(&args.study_config)
        .with_context(|| format!("loading study config {}", args.study_config.display()))?;
    let mut cfg = StudyConfig::from_kv(&kv)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let params = match kv.get("ev_params_path") {
        Some(path) => {
            let resolved = args
                .study_config
                .parent()
                .map(|d| d.join(path))
                .unwrap_or_else(|| PathBuf::from(path));
            chargecheck::EvParams::load(&resolved)?
        }
        None => chargecheck::EvParams::kia_soul_ev_2020(),
    };
    let consts = PhysicsConstants::default();
    let reports = run_mc_study(&cfg, &params, &consts)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut summary = String::new();
    for report in &reports {
        let season = report.season;
        write_atomic(
            &args.out.join(format!("confusion_{season}.csv")),
            report.confusion.to_csv_string().as_bytes(),
        )?;
        for (truth, label) in [(Hypothesis::H0, "h0"), (Hypothesis::H1, "h1")] {
            let mut csv = String::from("bin_left,bin_right,probability\n");
            for (lo, hi, p) in report.posterior_histogram(truth, 50) {
                writeln!(csv, "{lo},{hi},{p:.15e}")?;
            }
            write_atomic(
                &args.out.join(format!("posterior_{label}_{season}.csv")),
                csv.as_bytes(),
            )?;
        }
        summary.push_str(&report.render_summary());
        summary.push('\n');
    }
    write_atomic(&args.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    println!("reports written to {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut trip = match &args.trip_config {
        Some(path) => {
            let kv = KvMap::load(path)
                .with_context(|| format!("loading trip config {}", path.display()))?;
            // Reuse the study-config keys for the generator block.
            StudyConfig::from_kv(&kv)?.trip
        }
        None => TripGenConfig::default(),
    };
    if let Some(trips) = args.trips {
        trip.n_trips = trips;
    }
    if let Some(duration) = args.duration {
        trip.mean_trip_duration_s = duration;
    }
    if let Some(cruise) = args.cruise {
        trip.cruise_speed_mps = cruise;
    }
    if let Some(seed) = args.seed {
        trip.seed = seed;
    }
    let mut rng = chargecheck::sim::trip_gen_rng(trip.seed);
    let log = generate_trip_log(&trip, args.season, &mut rng)?;
    let csv = log.to_csv_string();
    match &args.out {
        Some(path) => {
            write_atomic(path, csv.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} samples to {}", log.samples().len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
