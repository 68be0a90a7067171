//! Command-line front end. `run` parses arguments, executes one subcommand and
//! returns the process exit code: 0 success, 1 configuration error, 2 runtime
//! failure.
//!
//! `PLVIWO_OUT` and `PLVIWO_THREADS` supply the output directory and thread
//! count when the corresponding flag is absent.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{load_json, Calibration, ConfigError, PipelineFlags};
use crate::io::{self, IoError};
use crate::metrics::ate_rmse;
use crate::pipeline::{run_viwo, Setup, TrajectoryPoint};
use crate::sim::scenario::{
    refinement_orderings, run_init_study, run_refinement_study, summarize, InitStudyConfig, RefineStudyConfig,
};
use crate::sim::viwo::{paired_study, report, ViwoReport};
use crate::sim::world::{simulate_world, SimOutput, WorldSpec};
use crate::RunError;

pub const ENV_OUT: &str = "PLVIWO_OUT";
pub const ENV_THREADS: &str = "PLVIWO_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "plviwo",
    version,
    about = "Point/line visual-inertial-wheel odometry toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for trial parallelism (0 = all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare the three line initializers over the four scenarios.
    SimLineInit {
        #[command(flatten)]
        common: Common,
    },
    /// Refinement study over residual types 1-4.
    SimLineRefine {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of residual types.
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<u8>>,
        /// Check the expected orderings and fail if any does not hold.
        #[arg(long)]
        check: bool,
    },
    /// Simulate a planar drive and run the estimator, or a paired-seed study.
    SimViwo {
        #[command(flatten)]
        common: Common,
    },
    /// Run the estimator on recorded IMU, wheel and feature-track files.
    RunTracks {
        #[command(flatten)]
        common: Common,
    },
}

/// `sim-viwo` configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimViwoConfig {
    pub world: WorldSpec,
    pub flags: PipelineFlags,
    /// Also write the sensor streams, tracks and calibration for `run-tracks`.
    pub export: bool,
    /// Paired-seed comparison instead of a single run.
    pub study: Option<PairedStudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairedStudyConfig {
    pub seeds: usize,
    pub candidate: PipelineFlags,
    pub baseline: PipelineFlags,
}

impl Default for PairedStudyConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            candidate: PipelineFlags::default(),
            baseline: PipelineFlags::points_only_no_wheel(),
        }
    }
}

/// `run-tracks` configuration. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracksConfig {
    pub calibration: PathBuf,
    pub imu: PathBuf,
    #[serde(default)]
    pub wheel: Option<PathBuf>,
    pub points: PathBuf,
    #[serde(default)]
    pub lines: Option<PathBuf>,
    /// TUM ground truth for evaluation.
    #[serde(default)]
    pub groundtruth: Option<PathBuf>,
    #[serde(default)]
    pub flags: PipelineFlags,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => CliError::Config(c),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<plviwo_core::Error> for CliError {
    fn from(e: plviwo_core::Error) -> Self {
        CliError::Runtime(format!("estimator: {e}"))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn env_or<T: std::str::FromStr>(flag: Option<T>, var: &str) -> Result<Option<T>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(var) {
        Ok(v) if !v.is_empty() => v
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Invalid(format!("{var}: cannot parse {v:?}"))),
        _ => Ok(None),
    }
}

struct Context {
    out: PathBuf,
    pool: rayon::ThreadPool,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let out = env_or(common.out.clone(), ENV_OUT)?.unwrap_or_else(|| PathBuf::from("."));
        let threads = env_or(common.threads, ENV_THREADS)?.unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
        Ok(Self { out, pool })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn load_or_default<T: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T, ConfigError> {
    match path {
        Some(p) => load_json(p),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SimLineInit { common } => sim_line_init(&common),
        Command::SimLineRefine { common, types, check } => sim_line_refine(&common, types, check),
        Command::SimViwo { common } => sim_viwo(&common),
        Command::RunTracks { common } => run_tracks(&common),
    }
}

fn sim_line_init(common: &Common) -> Result<(), CliError> {
    let mut cfg: InitStudyConfig = load_or_default(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(ConfigError::Invalid)?;
    let ctx = Context::new(common)?;
    let rows = ctx.pool.install(|| run_init_study(&cfg))?;
    io::write_init_results(&ctx.path("init_study.csv"), &rows)?;
    io::write_summary(&ctx.path("init_summary.csv"), &summarize(&rows))?;
    info!("{} trials written to {}", rows.len(), ctx.out.display());
    Ok(())
}

fn sim_line_refine(common: &Common, types: Option<Vec<u8>>, check: bool) -> Result<(), CliError> {
    let mut cfg: RefineStudyConfig = load_or_default(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = types {
        cfg.types = t;
    }
    cfg.validate().map_err(ConfigError::Invalid)?;
    let ctx = Context::new(common)?;
    let rows = ctx.pool.install(|| run_refinement_study(&cfg))?;
    let cells = summarize(&rows);
    io::write_results(&ctx.path("refine_study.csv"), &rows)?;
    io::write_summary(&ctx.path("refine_summary.csv"), &cells)?;
    if check {
        let checks = refinement_orderings(&cells);
        let mut all = true;
        for c in &checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            all &= c.passed;
        }
        if !all {
            return Err(CliError::Runtime("ordering check failed".into()));
        }
    }
    Ok(())
}

fn truth_trajectory(sim: &SimOutput) -> Vec<TrajectoryPoint> {
    sim.truth
        .frames
        .iter()
        .map(|s| TrajectoryPoint {
            t: s.t,
            r_gi: s.r_gi,
            p: s.p,
        })
        .collect()
}

fn sim_viwo(common: &Common) -> Result<(), CliError> {
    let mut cfg: SimViwoConfig = load_or_default(&common.config)?;
    if let Some(s) = common.seed {
        cfg.world.seed = s;
    }
    cfg.world.validate()?;
    let ctx = Context::new(common)?;
    if let Some(study) = &cfg.study {
        if study.seeds == 0 {
            return Err(ConfigError::Invalid("study.seeds must be positive".into()).into());
        }
        let seeds: Vec<u64> = (0..study.seeds as u64).map(|i| cfg.world.seed + i).collect();
        let (results, summary) = ctx
            .pool
            .install(|| paired_study(&cfg.world, &seeds, study.candidate, study.baseline))?;
        let mut w =
            csv::Writer::from_path(ctx.path("paired_study.csv")).map_err(|e| CliError::Runtime(e.to_string()))?;
        for r in &results {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        write_json(&ctx.path("paired_summary.json"), &summary)?;
        println!(
            "{} beats {} on {}/{} seeds (win rate {:.2})",
            summary.candidate, summary.baseline, summary.wins, summary.seeds, summary.win_rate
        );
        return Ok(());
    }
    let sim = simulate_world(&cfg.world)?;
    let setup = Setup::from_calibration(&sim.calibration)?;
    let run = run_viwo(&sim.log, &setup, cfg.flags)?;
    let rep = report(&sim, &run, &cfg.flags, cfg.world.seed);
    io::write_tum(&ctx.path("trajectory.tum"), &run.trajectory)?;
    io::write_tum(&ctx.path("groundtruth.tum"), &truth_trajectory(&sim))?;
    write_json(&ctx.path("report.json"), &rep)?;
    if cfg.export {
        io::write_imu(&ctx.path("imu.csv"), &sim.log.imu)?;
        io::write_wheel(&ctx.path("wheel.csv"), &sim.log.wheel)?;
        io::write_points(&ctx.path("points.csv"), &sim.log.frames)?;
        io::write_lines(&ctx.path("lines.csv"), &sim.log.frames)?;
        write_json(&ctx.path("calib.json"), &sim.calibration)?;
        let tracks = TracksConfig {
            calibration: "calib.json".into(),
            imu: "imu.csv".into(),
            wheel: Some("wheel.csv".into()),
            points: "points.csv".into(),
            lines: Some("lines.csv".into()),
            groundtruth: Some("groundtruth.tum".into()),
            flags: cfg.flags,
        };
        write_json(&ctx.path("tracks.json"), &tracks)?;
    }
    println!("{}: ATE {:.6} m over {} frames", rep.pipeline, rep.ate, rep.frames);
    Ok(())
}

fn run_tracks(common: &Common) -> Result<(), CliError> {
    let Some(config_path) = &common.config else {
        return Err(ConfigError::Invalid("run-tracks requires --config".into()).into());
    };
    let cfg: TracksConfig = load_json(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Path| base.join(p);
    let calib: Calibration = load_json(&resolve(&cfg.calibration))?;
    let setup = Setup::from_calibration(&calib)?;
    let ctx = Context::new(common)?;
    let mut flags = cfg.flags;

    let imu = io::read_imu(&resolve(&cfg.imu))?;
    let wheel = match &cfg.wheel {
        Some(p) if resolve(p).exists() => io::read_wheel(&resolve(p))?,
        Some(p) => {
            warn!(
                "wheel file {} not found; running without wheel odometry",
                resolve(p).display()
            );
            Vec::new()
        }
        None => {
            warn!("no wheel file configured; running without wheel odometry");
            Vec::new()
        }
    };
    if wheel.is_empty() {
        flags.wheel = false;
    }
    let points = io::read_points(&resolve(&cfg.points))?;
    let lines = match &cfg.lines {
        Some(p) => io::read_lines(&resolve(p))?,
        None => Default::default(),
    };
    if lines.is_empty() && flags.lines {
        info!("no line segments; running the point-only pipeline");
        flags.lines = false;
    }
    if let Some(first) = imu.first().filter(|s| s.t > setup.initial_t + 1e-9) {
        return Err(CliError::Runtime(format!(
            "IMU starts at {} after the initial state at {}",
            first.t, setup.initial_t
        )));
    }
    let log = io::assemble_log(imu, wheel, points, lines, setup.camera_rate);
    let run = run_viwo(&log, &setup, flags)?;
    io::write_tum(&ctx.path("trajectory.tum"), &run.trajectory)?;
    let mut rep = ViwoReport {
        pipeline: flags.label(),
        seed: 0,
        frames: run.trajectory.len(),
        ate: f64::NAN,
        ate_unaligned: f64::NAN,
        points_accepted: run.stats.points.accepted,
        points_gated: run.stats.points.gated,
        lines_accepted: run.stats.lines.accepted,
        lines_gated: run.stats.lines.gated,
        mcc_rejected: run.stats.mcc_rejected,
        wheel_updates: run.stats.wheel_updates,
    };
    if let Some(gt) = &cfg.groundtruth {
        let gt: Vec<_> = io::read_tum(&resolve(gt))?.iter().map(|p| (p.t, p.p)).collect();
        let est: Vec<_> = run.trajectory.iter().map(|p| (p.t, p.p)).collect();
        rep.ate = ate_rmse(&est, &gt, true).unwrap_or(f64::NAN);
        rep.ate_unaligned = ate_rmse(&est, &gt, false).unwrap_or(f64::NAN);
        println!("{}: ATE {:.6} m over {} frames", rep.pipeline, rep.ate, rep.frames);
    }
    write_json(&ctx.path("report.json"), &rep)?;
    Ok(())
}
