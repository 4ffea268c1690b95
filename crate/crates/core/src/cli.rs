//! Command-line front end.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::campaign::{ablate, run_matrix, simulate_with, summary_text, RunLog, TrialSetup};
use crate::error::{Error, Result};
use crate::injector::campaign_specs_for;
use crate::io::csv as out;
use crate::io::{load_scenario, RunConfig};
use crate::types::{AnomalyKind, AnomalySpec, MeasDim, SensorId};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "I2V_DETECT_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "i2v-detect",
    version,
    about = "RSU data tampering detection with a masked multi-sensor EKF"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write residual, mask, track and event CSVs.
    Run(RunArgs),
    /// Run the 50-fault detection campaign over several seeds.
    Campaign(CampaignArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario configuration (TOML).
    pub scenario: PathBuf,
    /// Inject a fault of this kind (instant, bias, drift) in addition to
    /// those listed in the file.
    #[arg(long)]
    pub kind: Option<AnomalyKind>,
    /// Fault magnitude; per second for drift.
    #[arg(long, requires = "kind")]
    pub magnitude: Option<f64>,
    /// Fault onset, seconds.
    #[arg(long, requires = "kind")]
    pub start: Option<f64>,
    /// Fault duration, seconds. Defaults to one sample.
    #[arg(long, requires = "kind")]
    pub duration: Option<f64>,
    #[arg(long, default_value = "rsu", requires = "kind")]
    pub sensor: SensorId,
    #[arg(long, default_value = "x", requires = "kind")]
    pub dimension: MeasDim,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $I2V_DETECT_OUT or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Optional configuration (TOML); defaults to the reference setup.
    pub config: Option<PathBuf>,
    /// Comma-separated sensors to switch off, e.g. `radar,lidar`.
    #[arg(long, value_delimiter = ',')]
    pub ablate: Vec<SensorId>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory [default: $I2V_DETECT_OUT or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Anomaly described by the `run` flags, if any.
pub fn cli_anomaly(args: &RunArgs, dt: f64) -> Result<Option<AnomalySpec>> {
    let Some(kind) = args.kind else {
        return Ok(None);
    };
    let magnitude = args
        .magnitude
        .ok_or_else(|| Error::invalid("--magnitude", "required with --kind"))?;
    let t_start = args
        .start
        .ok_or_else(|| Error::invalid("--start", "required with --kind"))?;
    let duration = match (kind, args.duration) {
        (_, Some(d)) => d,
        (AnomalyKind::Instant, None) => dt,
        (_, None) => return Err(Error::invalid("--duration", "required for bias and drift")),
    };
    let spec = AnomalySpec {
        kind,
        sensor: args.sensor,
        dimension: args.dimension,
        magnitude,
        t_start,
        t_end: t_start + duration,
    };
    spec.validate(dt)?;
    Ok(Some(spec))
}

/// Writes the `run` outputs into `dir`.
pub fn write_run(dir: &Path, config: &RunConfig, log: &RunLog) -> Result<()> {
    make_dir(dir)?;
    let alpha = |s: SensorId, i: usize| config.detector.alpha[s][i];
    out::write_residuals(create(dir, "residuals.csv")?, log, alpha)?;
    out::write_masks(create(dir, "masks.csv")?, log)?;
    out::write_track(create(dir, "track.csv")?, log)?;
    out::write_truth(create(dir, "truth.csv")?, log)?;
    out::write_events(create(dir, "events.csv")?, &log.events)?;
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<String> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    if let Some(spec) = cli_anomaly(args, config.detector.dt)? {
        config.anomalies.push(spec);
    }
    let enabled: BTreeSet<SensorId> = SensorId::ALL.into_iter().collect();
    let log = simulate_with(
        &config.scenario,
        &config.noise,
        &config.detector,
        &config.anomalies,
        &enabled,
    )?;
    let dir = out_dir(&args.out);
    write_run(&dir, &config, &log)?;

    let mut msg = format!(
        "{} ticks, {} detection event(s), outputs in {}\n",
        log.ticks.len(),
        log.events.len(),
        dir.display()
    );
    for e in &log.events {
        let clear = e
            .clear
            .map(|c| format!("{c} s"))
            .unwrap_or_else(|| "end".into());
        msg.push_str(&format!(
            "  {}.{}: {} s .. {clear}\n",
            e.sensor, e.dimension, e.onset
        ));
    }
    let rejected: usize = log.ticks.iter().map(|t| t.report.rejected.len()).sum();
    if rejected > 0 {
        msg.push_str(&format!("  {rejected} measurement(s) rejected\n"));
    }
    Ok(msg)
}

pub fn campaign(args: &CampaignArgs) -> Result<String> {
    let config = match &args.config {
        Some(p) => load_scenario(p)?,
        None => RunConfig::default(),
    };
    let mut settings = config.campaign.clone();
    if let Some(seeds) = &args.seeds {
        settings.seeds = seeds.clone();
    }
    if let Some(w) = args.workers {
        settings.workers = w;
    }
    if settings.seeds.is_empty() {
        return Err(Error::invalid("--seeds", "at least one seed is required"));
    }
    if settings.workers == 0 {
        return Err(Error::invalid("--workers", "must be >= 1"));
    }
    settings.validate(config.scenario.duration)?;
    if args.ablate.contains(&settings.sensor) {
        return Err(Error::invalid(
            "--ablate",
            format!("cannot switch off the attacked sensor {}", settings.sensor),
        ));
    }
    let enabled = ablate(&args.ablate);
    let setup = TrialSetup {
        scenario: config.scenario.clone(),
        noise: config.noise.clone(),
        config: config.detector.clone(),
    };
    let specs = campaign_specs_for(
        settings.sensor,
        settings.dimension,
        settings.onset,
        config.detector.dt,
    );
    let report = run_matrix(&setup, &specs, &enabled, &settings.seeds, settings.workers)?;
    let summary = summary_text(&report);

    let dir = out_dir(&args.out);
    make_dir(&dir)?;
    out::write_campaign(create(&dir, "campaign.csv")?, &report)?;
    std::fs::write(dir.join("summary.txt"), &summary)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.join("summary.txt").display())))?;
    Ok(summary)
}

/// Parses `argv` and runs the selected command. Returns the process exit
/// code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Campaign(a) => campaign(a),
    };
    match result {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
