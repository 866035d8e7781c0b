//! `pih` — compliant peg-in-hole insertion experiments.
//!
//! Subcommands cover the full experimental cycle: synthesize a
//! demonstration, collect contact-wrench data under the accommodation
//! controller, train the wrench-to-misalignment models, evaluate the
//! corrective insertion policy, sweep the controller's steady-state law,
//! and dump tidy plot data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{Vector2, Vector3};
use rand::Rng as _;

use pih_core::config::ExperimentConfig;
use pih_core::contact::{ContactSim, SpringWall};
use pih_core::dmp::{self, DmpParams};
use pih_core::gac::{
    gac_step, run_to_steady_state, steady_state_force, GacConfig, GacState, SteadyStateDetector,
    TraceRow,
};
use pih_core::io;
use pih_core::pipeline::{self, ErrorSampler, TrainedModels};
use pih_core::rng::derive_seed;

#[derive(Parser)]
#[command(name = "pih", version, about = "Learning-based compliant peg-in-hole insertion")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment configuration file (flat `key = value`; defaults
    /// reproduce the reference experiment).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; omit to draw one from entropy (it is printed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic demonstration trajectory CSV.
    Demo {
        #[arg(long, default_value = "demo.csv")]
        out: PathBuf,
        /// Override the demonstration duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Collect a misalignment/wrench dataset under the accommodation
    /// controller.
    Collect {
        #[arg(short = 'n', long, default_value_t = 1200)]
        trials: usize,
        /// Demonstration CSV to fit the movement primitive from
        /// (default: the synthetic demonstration).
        #[arg(long)]
        demo: Option<PathBuf>,
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
    },
    /// Fit the misalignment regressors and direction classifiers.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        demo: Option<PathBuf>,
        #[arg(long, default_value = "models.json")]
        out: PathBuf,
    },
    /// Run insertion episodes with the corrective policy and the
    /// demonstration-only baseline.
    Insert {
        #[arg(long)]
        models: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        episodes: usize,
        /// Goal-estimate error source: `annulus` or `camera`.
        #[arg(long, default_value = "annulus")]
        error_mode: String,
        /// Camera-mode constant bias, mm.
        #[arg(long, default_value_t = 2.0)]
        bias_x: f64,
        #[arg(long, default_value_t = 1.5)]
        bias_y: f64,
        /// Camera-mode noise standard deviation, mm.
        #[arg(long, default_value_t = 0.5)]
        error_sigma: f64,
        /// Output directory for the report and per-episode CSVs.
        #[arg(long, default_value = "campaign")]
        out: PathBuf,
    },
    /// Sweep the controller grid and compare measured steady-state force
    /// against the closed form.
    Sweep {
        #[arg(long, default_value = "0.3,0.5,0.65,0.9", value_delimiter = ',')]
        gammas: Vec<f64>,
        /// Accommodation gains, mm/N.
        #[arg(long, default_value = "0.0005,0.001,0.002", value_delimiter = ',')]
        accommodations: Vec<f64>,
        /// Reference speeds, mm per control step.
        #[arg(long, default_value = "0.005,0.01", value_delimiter = ',')]
        velocities: Vec<f64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Emit tidy CSVs for the standard plots.
    Plotdata {
        #[command(subcommand)]
        kind: PlotKind,
    },
}

#[derive(Subcommand)]
enum PlotKind {
    /// Wrench versus time for one contact episode.
    Trace {
        /// Injected misalignment, mm.
        #[arg(long, default_value_t = 0.0)]
        dx: f64,
        #[arg(long, default_value_t = 5.0)]
        dy: f64,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Steady wrench versus y-misalignment at fixed x (noise off).
    Wrench {
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 35)]
        points: usize,
        #[arg(long, default_value = "wrench_sweep.csv")]
        out: PathBuf,
    },
    /// Held-out misalignment RMSE by |d| bucket over resampled splits.
    Rmse {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 50)]
        splits: usize,
        #[arg(long, default_value = "rmse_buckets.csv")]
        out: PathBuf,
    },
}

/// Usage and configuration problems exit with 1, runtime failures with 2.
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

/// `--seed` wins; otherwise a nonzero config seed; otherwise entropy,
/// printed so the run can be reproduced.
fn effective_seed(global: &GlobalArgs, cfg: &ExperimentConfig) -> u64 {
    if let Some(s) = global.seed {
        return s;
    }
    if cfg.seed != 0 {
        return cfg.seed;
    }
    let s: u64 = rand::rng().random();
    println!("seed: {s}");
    s
}

fn init_jobs(global: &GlobalArgs) -> Result<(), CliError> {
    if let Some(jobs) = global.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn fit_primitive(
    cfg: &ExperimentConfig,
    demo_path: &Option<PathBuf>,
) -> Result<DmpParams, CliError> {
    let demo = match demo_path {
        Some(p) => io::read_demo_csv(p)?,
        None => pipeline::synthetic_demo(cfg),
    };
    Ok(dmp::fit(&demo, cfg.dmp.n_basis, cfg.dmp.alpha)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.global.config)?;
    init_jobs(&cli.global)?;
    let seed = effective_seed(&cli.global, &cfg);

    match cli.command {
        Command::Demo { out, duration } => cmd_demo(&cfg, duration, &out),
        Command::Collect { trials, demo, out } => cmd_collect(&cfg, seed, trials, &demo, &out),
        Command::Train { dataset, demo, out } => cmd_train(&cfg, seed, &dataset, &demo, &out),
        Command::Insert {
            models,
            episodes,
            error_mode,
            bias_x,
            bias_y,
            error_sigma,
            out,
        } => cmd_insert(
            &cfg, seed, &models, episodes, &error_mode, bias_x, bias_y, error_sigma, &out,
        ),
        Command::Sweep {
            gammas,
            accommodations,
            velocities,
            out,
        } => cmd_sweep(&cfg, &gammas, &accommodations, &velocities, &out),
        Command::Plotdata { kind } => match kind {
            PlotKind::Trace { dx, dy, out } => cmd_plot_trace(&cfg, seed, dx, dy, &out),
            PlotKind::Wrench { x, points, out } => cmd_plot_wrench(&cfg, x, points, &out),
            PlotKind::Rmse {
                dataset,
                splits,
                out,
            } => cmd_plot_rmse(&cfg, seed, &dataset, splits, &out),
        },
    }
}

fn cmd_demo(
    cfg: &ExperimentConfig,
    duration: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(d) = duration {
        if d <= 0.0 {
            return Err(usage("--duration must be positive"));
        }
        cfg.policy.approach_duration = d;
    }
    let demo = pipeline::synthetic_demo(&cfg);
    io::write_demo_csv(out, &demo)?;
    println!(
        "demo: {} rows at {} Hz -> {}",
        demo.len(),
        cfg.gac.control_rate,
        out.display()
    );
    Ok(())
}

fn cmd_collect(
    cfg: &ExperimentConfig,
    seed: u64,
    trials: usize,
    demo: &Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let primitive = fit_primitive(cfg, demo)?;
    let rows = pipeline::collect_dataset(cfg, &primitive, trials, derive_seed(seed, 0xC0))?;
    let converged = rows.iter().filter(|r| r.converged).count();
    io::write_dataset_csv(out, &rows)?;
    println!(
        "collected {} trials ({} converged) -> {}",
        rows.len(),
        converged,
        out.display()
    );
    Ok(())
}

fn cmd_train(
    cfg: &ExperimentConfig,
    seed: u64,
    dataset: &Path,
    demo: &Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    let rows = io::read_dataset_csv(dataset)?;
    let primitive = fit_primitive(cfg, demo)?;
    let (mut models, report) = pipeline::train_models(cfg, &rows, derive_seed(seed, 0x7A))?;
    models.dmp = primitive;
    io::save_models(out, &models)?;
    let metrics_path = out.with_extension("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "trained on {} rows, held out {}: sign accuracy x {:.4} y {:.4}, rmse x {:.3} mm y {:.3} mm",
        report.n_train,
        report.n_test,
        report.sign_accuracy_x,
        report.sign_accuracy_y,
        report.rmse_x,
        report.rmse_y
    );
    println!("models -> {}", out.display());
    println!("metrics -> {}", metrics_path.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct CampaignSummary {
    episodes: usize,
    successes: usize,
    success_rate: f64,
    baseline_successes: usize,
    outcomes: Vec<(String, usize)>,
    attempts_histogram: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_insert(
    cfg: &ExperimentConfig,
    seed: u64,
    models_path: &Path,
    episodes: usize,
    error_mode: &str,
    bias_x: f64,
    bias_y: f64,
    error_sigma: f64,
    out: &Path,
) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let sampler = match error_mode {
        "annulus" => ErrorSampler::Annulus,
        "camera" => ErrorSampler::BiasedCamera {
            bias_x,
            bias_y,
            sigma: error_sigma,
        },
        other => return Err(usage(format!("unknown error mode `{other}`"))),
    };
    let models: TrainedModels = io::load_models(models_path)?;
    let report =
        pipeline::evaluate_campaign(cfg, &models, &sampler, episodes, derive_seed(seed, 0x1E))?;

    std::fs::create_dir_all(out)?;
    io::write_episodes_csv(&out.join("episodes.csv"), &report.episodes)?;
    io::write_episodes_csv(&out.join("baseline.csv"), &report.baseline)?;
    let summary = CampaignSummary {
        episodes: report.episodes.len(),
        successes: report.successes(),
        success_rate: report.success_rate(),
        baseline_successes: report.baseline_successes(),
        outcomes: report
            .outcome_counts()
            .iter()
            .map(|(o, c)| (o.to_string(), *c))
            .collect(),
        attempts_histogram: report.attempt_histogram(cfg.policy.max_attempts),
    };
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "corrective: {}/{} succeeded ({:.1}%), baseline: {}/{}",
        summary.successes,
        summary.episodes,
        100.0 * summary.success_rate,
        summary.baseline_successes,
        summary.episodes
    );
    println!("report -> {}", out.join("report.json").display());
    Ok(())
}

fn cmd_sweep(
    cfg: &ExperimentConfig,
    gammas: &[f64],
    accommodations: &[f64],
    velocities: &[f64],
    out: &Path,
) -> Result<(), CliError> {
    if gammas.is_empty() || accommodations.is_empty() || velocities.is_empty() {
        return Err(usage("sweep grid must not be empty"));
    }
    let stiffness_z = cfg.gac.stiffness.z;
    let rate = cfg.gac.control_rate;
    let steps = (30.0 * rate).round() as usize;

    let mut csv = String::from(
        "gamma,k_a_mm_per_N,v_mm_per_step,predicted_N,measured_N,steps_to_converge,flag\n",
    );
    for &gamma in gammas {
        for &k_a in accommodations {
            for &v in velocities {
                let predicted = steady_state_force(v, gamma, k_a)
                    .map_err(|e| usage(e.to_string()))?;
                let gac = GacConfig {
                    accommodation: Vector3::new(0.0, 0.0, k_a),
                    gamma,
                    ..cfg.gac.clone()
                };
                gac.validate().map_err(|e| usage(e.to_string()))?;
                let reference = descent_reference(1.0, v, steps, rate);
                let mut wall = SpringWall::new(stiffness_z, 0.0);
                let detector = SteadyStateDetector::new(rate.round() as usize, 1e-3, 1e-2);
                match run_to_steady_state(&reference, &gac, &mut wall, detector) {
                    Ok(run) => {
                        let measured = run.steady_wrench.fz;
                        let peak = run
                            .trace
                            .iter()
                            .map(|r| r.wrench.fz)
                            .fold(0.0_f64, f64::max);
                        let flag = if peak > 1.5 * predicted {
                            "oscillatory"
                        } else {
                            "ok"
                        };
                        csv.push_str(&format!(
                            "{gamma},{k_a},{v},{predicted},{measured},{},{flag}\n",
                            run.converged_at.map_or(-1, |k| k as i64),
                        ));
                    }
                    Err(_) => {
                        csv.push_str(&format!(
                            "{gamma},{k_a},{v},{predicted},nan,-1,oscillatory\n"
                        ));
                    }
                }
            }
        }
    }
    std::fs::write(out, csv)?;
    println!("sweep -> {}", out.display());
    Ok(())
}

fn descent_reference(
    start_z: f64,
    v_per_step: f64,
    steps: usize,
    rate: f64,
) -> pih_core::dmp::Trajectory {
    let positions = (0..steps)
        .map(|k| Vector3::new(0.0, 0.0, start_z - v_per_step * k as f64))
        .collect();
    pih_core::dmp::Trajectory::from_rate(rate, positions).expect("valid reference")
}

/// Full closed-loop trace of one contact episode at a forced misalignment:
/// approach along the primitive, then the constant-velocity press.
fn cmd_plot_trace(
    cfg: &ExperimentConfig,
    seed: u64,
    dx: f64,
    dy: f64,
    out: &Path,
) -> Result<(), CliError> {
    let primitive = fit_primitive(cfg, &None)?;
    let d = Vector2::new(dx, dy);
    let believed = cfg.contact.hole_center - d;
    let goal = Vector3::new(
        believed.x,
        believed.y,
        cfg.contact.surface_height - cfg.scene.insert_depth,
    );
    let rate = cfg.gac.control_rate;
    let dt = 1.0 / rate;
    let approach = dmp::rollout(
        &primitive,
        cfg.scene.start,
        goal,
        dt,
        cfg.policy.approach_duration,
    )?;

    let mut contact = cfg.contact.clone();
    contact.rng_seed = derive_seed(seed, 0x3C);
    let mut sim = ContactSim::new(contact, cfg.gac.stiffness, cfg.scene.start)?;
    let mut state = GacState::at(cfg.scene.start);
    let mut wrench = sim.resolve_equilibrium(&state.commanded)?.1;
    let mut trace: Vec<TraceRow> = Vec::new();

    let positions = approach.positions();
    let press_steps = (cfg.press.max_duration * rate).round() as usize;
    let total = positions.len() - 1 + press_steps;
    let mut reference_z = positions[0].z;
    for k in 1..=total {
        let delta = if k < positions.len() {
            positions[k] - positions[k - 1]
        } else {
            Vector3::new(0.0, 0.0, -cfg.press.velocity_per_step)
        };
        reference_z += delta.z;
        state = gac_step(&state, &delta, &wrench.force(), &cfg.gac);
        wrench = sim.resolve_equilibrium(&state.commanded)?.1;
        trace.push(TraceRow {
            step: k,
            time_s: k as f64 * dt,
            reference_z,
            commanded_z: state.commanded.z,
            actual_z: sim.state().position.z,
            wrench,
        });
        if sim.state().inserted {
            break;
        }
    }
    io::write_trace_csv(out, &trace)?;
    println!("trace: {} steps -> {}", trace.len(), out.display());
    Ok(())
}

/// Quasi-steady wrench across a y-misalignment sweep at fixed x, noise
/// off: the signature plot behind the wrench-vs-misalignment figure.
fn cmd_plot_wrench(
    cfg: &ExperimentConfig,
    x: f64,
    points: usize,
    out: &Path,
) -> Result<(), CliError> {
    if points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let mut quiet = cfg.clone();
    quiet.contact.wrench_noise_sigma = [0.0; 6];
    let primitive = fit_primitive(&quiet, &None)?;
    let lo = quiet.contact.clearance() + 0.25;
    let hi = quiet.contact.peg_radius - 0.25;

    let mut csv = String::from("dy_mm,fx_N,fy_N,fz_N,mx_Nmm,my_Nmm,mz_Nmm\n");
    for i in 0..points {
        let dy = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let row = pipeline::collect_trial(&quiet, &primitive, Vector2::new(x, dy), i, 7)?;
        let w = row.wrench;
        csv.push_str(&format!(
            "{dy},{},{},{},{},{},{}\n",
            w.fx, w.fy, w.fz, w.mx, w.my, w.mz
        ));
    }
    std::fs::write(out, csv)?;
    println!("wrench sweep: {points} points -> {}", out.display());
    Ok(())
}

fn cmd_plot_rmse(
    cfg: &ExperimentConfig,
    seed: u64,
    dataset: &Path,
    splits: usize,
    out: &Path,
) -> Result<(), CliError> {
    if splits == 0 {
        return Err(usage("--splits must be at least 1"));
    }
    let rows = io::read_dataset_csv(dataset)?;
    let stats = pipeline::rmse_by_bucket(cfg, &rows, splits, 5, derive_seed(seed, 0xF6))?;
    let mut csv = String::from("bucket_lo_mm,bucket_hi_mm,mean_rmse_mm,std_rmse_mm,mean_count\n");
    for s in &stats {
        if s.mean_rmse.is_finite() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.lo, s.hi, s.mean_rmse, s.std_rmse, s.mean_count
            ));
        }
    }
    std::fs::write(out, csv)?;
    println!("rmse buckets ({splits} splits) -> {}", out.display());
    Ok(())
}
