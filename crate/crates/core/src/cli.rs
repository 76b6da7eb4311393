//! `uavloc` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or schema error, 3 numerical or
//! degenerate-geometry error, 4 total experiment failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::crlb::{crlb_report, BoundMode};
use crate::error::Error;
use crate::estimators::{EstimatorKind, Locator, SearchGrid};
use crate::exec::{set_thread_limit, Execution};
use crate::model::{hexagon_scenario, synthesize, Scenario, ScenarioFile, Vec3};
use crate::montecarlo::{
    cep_csv, cep_map, run_batch, sweep_csv, sweep_gamma, sweep_sigma, to_json, MissStats,
    SweepConfig, TrialBatch,
};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_TOTAL_FAILURE: u8 = 4;

/// Name of the built-in hexagon scenario.
pub const BUILTIN_HEXAGON: &str = "hexagon";

/// Environment variable for the default output directory of `sweep`.
pub const OUT_DIR_ENV: &str = "UAVLOC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "uavloc",
    version,
    about = "Trajectory-aided RSS localization of a UAV"
)]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a normalized scenario file from a built-in name or an existing file.
    Scenario {
        /// `hexagon` or a path to a scenario JSON file.
        source: String,
        /// Write the normalized file here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize measurements and run one estimator.
    Estimate(EstimateArgs),
    /// Joint Cramér-Rao bound at the scenario's true position.
    Crlb(CrlbArgs),
    /// Monte Carlo experiments.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Known altitude, horizontal search.
    #[value(name = "2d")]
    Planar,
    /// Full 3D search.
    #[value(name = "3d")]
    Volumetric,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// `hexagon` or a path to a scenario JSON file.
    #[arg(long, default_value = BUILTIN_HEXAGON)]
    pub scenario: String,
    /// Override the path-loss exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Use only the first K trajectory samples.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Grid spacing in meters.
    #[arg(long, default_value_t = 10.0)]
    pub grid_step: f64,
    /// Side of the square area of interest in meters, centered on the origin.
    #[arg(long, default_value_t = 2000.0)]
    pub aoi: f64,
    /// Search mode.
    #[arg(long, value_enum, default_value = "2d")]
    pub mode: Mode,
    /// Vertical half-extent of the 3D search box, meters.
    #[arg(long, default_value_t = 50.0)]
    pub z_extent: f64,
    /// Re-search ±1 step around each minimum at a tenth of the step.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "joint")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the shadowing standard deviation (dB, 0 for noiseless).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Run this many trials with child seeds and report statistics.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CrlbArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Shadowing standard deviation in dB; defaults to the scenario's.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "2d")]
    pub mode: Mode,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: $UAVLOC_OUT_DIR or `results`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate trials on a single thread.
    #[arg(long)]
    pub serial: bool,
}

impl ExperimentArgs {
    fn config(
        &self,
        scenario: &Scenario,
        estimators: Vec<EstimatorKind>,
    ) -> Result<SweepConfig, CliError> {
        Ok(SweepConfig {
            grid: build_grid(&self.grid, scenario)?,
            estimators,
            n_trials: self.trials,
            seed: self.seed,
            execution: if self.serial {
                Execution::Serial
            } else {
                Execution::Parallel
            },
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// Average miss distance versus σ.
    Sigma {
        #[command(flatten)]
        common: ExperimentArgs,
        /// σ values in dB.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "joint,bst,tbs,baseline")]
        estimator: Vec<EstimatorKind>,
    },
    /// Average miss distance versus γ.
    Gamma {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Path-loss exponents to sweep.
        #[arg(
            long = "gammas",
            value_delimiter = ',',
            default_value = "2,2.25,2.5,2.75,3,3.25,3.5,3.75,4,4.25,4.5,4.75,5"
        )]
        gammas: Vec<f64>,
        /// σ in dB.
        #[arg(long, default_value_t = 6.0)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', default_value = "joint,bst,tbs,baseline")]
        estimator: Vec<EstimatorKind>,
    },
    /// Joint-estimator CEP over a (σ, γ) grid.
    Cep {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        sigma: Vec<f64>,
        #[arg(
            long = "gammas",
            value_delimiter = ',',
            default_value = "2,2.25,2.5,2.75,3,3.25,3.5,3.75,4,4.25,4.5,4.75,5"
        )]
        gammas: Vec<f64>,
        /// CEP threshold in meters.
        #[arg(long, default_value_t = 100.0)]
        threshold: f64,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn load_scenario(source: &str) -> Result<Scenario, CliError> {
    if source == BUILTIN_HEXAGON {
        return Ok(hexagon_scenario());
    }
    let text = fs::read_to_string(source)
        .map_err(|e| CliError::usage(format!("cannot read `{source}`: {e}")))?;
    Ok(ScenarioFile::from_json(&text)?.into_scenario()?)
}

fn resolve_scenario(args: &ScenarioArgs) -> Result<Scenario, CliError> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(g) = args.gamma {
        scenario = scenario.with_gamma(g)?;
    }
    if let Some(k) = args.samples {
        scenario = scenario.truncated(k)?;
    }
    Ok(scenario)
}

pub fn build_grid(args: &GridArgs, scenario: &Scenario) -> Result<SearchGrid, CliError> {
    let altitude = scenario.true_u1.z;
    let half = args.aoi / 2.0;
    let grid = match args.mode {
        Mode::Planar => SearchGrid::planar(Vec3::new(0.0, 0.0, altitude), half, args.grid_step)?,
        Mode::Volumetric => SearchGrid::volumetric(
            Vec3::new(0.0, 0.0, altitude),
            Vec3::new(half, half, args.z_extent),
            Vec3::new(args.grid_step, args.grid_step, args.grid_step),
        )?,
    };
    Ok(grid.with_refinement(args.refine))
}

fn bound_mode(mode: Mode) -> BoundMode {
    match mode {
        Mode::Planar => BoundMode::Planar,
        Mode::Volumetric => BoundMode::Volumetric,
    }
}

fn cmd_scenario(source: &str, out: Option<&Path>) -> Result<(), CliError> {
    let scenario = load_scenario(source)?;
    let text = ScenarioFile::from_scenario(&scenario).to_json();
    let mut derived = String::from("k  dx_m  dy_m  dz_m  | virtual base stations [x, y, z] m\n");
    for (k, d) in scenario.trajectory.displacements().iter().enumerate() {
        let virtual_bs: Vec<String> = scenario
            .base_stations
            .iter()
            .map(|bs| {
                let v = *bs - *d;
                format!("[{:.1}, {:.1}, {:.1}]", v.x, v.y, v.z)
            })
            .collect();
        derived.push_str(&format!(
            "{k} {} {} {} | {}\n",
            d.x,
            d.y,
            d.z,
            virtual_bs.join(" ")
        ));
    }
    match out {
        Some(path) => {
            fs::write(path, &text)?;
            print!("{derived}");
        }
        None => {
            print!("{text}");
            eprint!("{derived}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    estimator: EstimatorKind,
    seed: u64,
    sigma_db: Option<f64>,
    gamma: f64,
    scenario_hash: String,
    grid: &'a SearchGrid,
    true_u1: Vec3,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<crate::estimators::EstimateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    miss_distance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeat: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<MissStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crlb_m: Option<f64>,
    generated_at_unix_s: u64,
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(s) = args.sigma {
        scenario = scenario.with_sigma(s)?;
    }
    let grid = build_grid(&args.grid, &scenario)?;
    if args.repeat == 0 {
        return Err(CliError::usage("--repeat must be at least 1"));
    }
    let mut out = EstimateOutput {
        estimator: args.estimator,
        seed: args.seed,
        sigma_db: scenario.noise.homogeneous_sigma(),
        gamma: scenario.path_loss.gamma,
        scenario_hash: crate::montecarlo::scenario_hash(&scenario),
        grid: &grid,
        true_u1: scenario.true_u1,
        report: None,
        miss_distance_m: None,
        repeat: None,
        stats: None,
        crlb_m: None,
        generated_at_unix_s: unix_now(),
    };

    if args.repeat == 1 {
        let rss = synthesize(&scenario, args.seed)?;
        let report =
            Locator::new(scenario.knowledge(), grid.clone()).estimate(args.estimator, &rss)?;
        out.miss_distance_m = Some(report.u1_hat.distance(scenario.true_u1));
        out.report = Some(report);
    } else {
        let batch = TrialBatch {
            scenario: scenario.clone(),
            estimator: args.estimator,
            grid: grid.clone(),
            n_trials: args.repeat,
            master_seed: args.seed,
        };
        let result = run_batch(&batch, Execution::Parallel)?;
        let stats = result.stats();
        if stats.n_ok == 0 {
            return Err(CliError {
                code: EXIT_TOTAL_FAILURE,
                message: format!(
                    "all {} trials failed: {}",
                    args.repeat, result.failures[0].error
                ),
            });
        }
        out.repeat = Some(args.repeat);
        out.stats = Some(stats);
        out.crlb_m = out.sigma_db.and_then(|s| {
            crlb_report(
                scenario.true_u1,
                &scenario.knowledge(),
                s,
                bound_mode(args.grid.mode),
            )
            .ok()
            .map(|r| r.miss_distance_bound)
        });
    }
    print!("{}", to_json(&out));
    Ok(())
}

fn cmd_crlb(args: &CrlbArgs) -> Result<(), CliError> {
    let scenario = resolve_scenario(&args.scenario)?;
    let sigma = match args.sigma {
        Some(s) => s,
        None => scenario
            .noise
            .homogeneous_sigma()
            .ok_or_else(|| CliError::usage("scenario noise is heterogeneous; pass --sigma"))?,
    };
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(CliError::usage("--sigma must be positive"));
    }
    let report = crlb_report(
        scenario.true_u1,
        &scenario.knowledge(),
        sigma,
        bound_mode(args.mode),
    )?;
    print!("{}", to_json(&report));
    Ok(())
}

fn output_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn write_outputs(dir: &Path, stem: &str, csv: &str, json: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    eprintln!("wrote {}/{stem}.{{csv,json}}", dir.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn cmd_sweep(kind: &SweepKind) -> Result<(), CliError> {
    match kind {
        SweepKind::Sigma {
            common,
            sigma: values,
            estimator,
        }
        | SweepKind::Gamma {
            common,
            gammas: values,
            estimator,
            ..
        } => {
            let is_sigma = matches!(kind, SweepKind::Sigma { .. });
            let mut scenario = resolve_scenario(&common.scenario)?;
            if let SweepKind::Gamma { sigma, .. } = kind {
                scenario = scenario.with_sigma(*sigma)?;
            }
            let config = common.config(&scenario, estimator.clone())?;
            let mut result = if is_sigma {
                sweep_sigma(&scenario, values, &config)?
            } else {
                sweep_gamma(&scenario, values, &config)?
            };
            result.metadata.generated_at_unix_s = Some(unix_now());
            let stem = if is_sigma {
                "sweep_sigma"
            } else {
                "sweep_gamma"
            };
            write_outputs(
                &output_dir(&common.out),
                stem,
                &sweep_csv(&result),
                &to_json(&result),
            )?;

            println!(
                "{:>8} {:>9} {:>10} {:>9} {:>10} {:>9}",
                result.axis.column(),
                "estimator",
                "mean_m",
                "se_m",
                "rms_m",
                "crlb_m"
            );
            for p in &result.points {
                for e in &p.estimators {
                    println!(
                        "{:>8} {:>9} {:>10} {:>9} {:>10} {:>9}",
                        p.axis_value,
                        e.estimator.name(),
                        fmt_opt(e.stats.mean),
                        fmt_opt(e.stats.stderr),
                        fmt_opt(e.stats.rms),
                        fmt_opt(p.crlb_m)
                    );
                }
            }
            if result.total_failure() {
                return Err(CliError {
                    code: EXIT_TOTAL_FAILURE,
                    message: "every trial in every cell failed".into(),
                });
            }
        }
        SweepKind::Cep {
            common,
            sigma,
            gammas,
            threshold,
        } => {
            let scenario = resolve_scenario(&common.scenario)?;
            let config = common.config(&scenario, vec![EstimatorKind::Joint])?;
            let mut map = cep_map(&scenario, sigma, gammas, *threshold, &config)?;
            map.metadata.generated_at_unix_s = Some(unix_now());
            write_outputs(
                &output_dir(&common.out),
                "cep_map",
                &cep_csv(&map),
                &to_json(&map),
            )?;

            print!("{:>8}", "σ \\ γ");
            for g in gammas {
                print!(" {g:>8}");
            }
            println!();
            for (i, s) in sigma.iter().enumerate() {
                print!("{s:>8}");
                for j in 0..gammas.len() {
                    let c = map.cell(i, j);
                    let mark = if c.below_threshold { '*' } else { ' ' };
                    print!(" {:>7}{mark}", fmt_opt(c.cep_m));
                }
                println!();
            }
            println!("* CEP < {threshold} m");
            if map.total_failure() {
                return Err(CliError {
                    code: EXIT_TOTAL_FAILURE,
                    message: "every trial in every cell failed".into(),
                });
            }
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        set_thread_limit(t);
    }
    match &cli.command {
        Command::Scenario { source, out } => cmd_scenario(source, out.as_deref()),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Crlb(args) => cmd_crlb(args),
        Command::Sweep { kind } => cmd_sweep(kind),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.message, "exit_code": e.code });
            eprintln!("{body}");
            ExitCode::from(e.code)
        }
    }
}
