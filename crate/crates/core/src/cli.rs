//! `nrc` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 unusable configuration.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::config::{AlgorithmKind, ConfigError, ExperimentConfig};
use crate::engine::{self, mass_audit, EngineError, Network, RanrcProtocol, Simulator, SweepParameter, TrajectoryRecord};
use crate::oracle::{newton_minimize, NewtonOptions, OracleError, OracleResult};

/// Default epsilon sweep values.
pub const EPSILON_SWEEP: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
/// Default loss probability sweep values.
pub const LOSS_SWEEP: [f64; 4] = [0.0, 0.2, 0.4, 0.6];

#[derive(Debug, Parser)]
#[command(name = "nrc", about = "Asynchronous Newton-Raphson consensus simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Output directory.
    #[arg(short, long, env = "NRC_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single simulation; writes the trajectory CSV and a manifest.
    Run(CommonArgs),
    /// One raNRC run per epsilon in `sweep.values` (default 1e-4..1e-1).
    SweepEps(CommonArgs),
    /// One raNRC run per loss probability in `sweep.values` (default 0..0.6).
    SweepLoss(CommonArgs),
    /// Grid both algorithms and keep the best run of each.
    Compare(CommonArgs),
    /// Centralized Newton solve only.
    Oracle(CommonArgs),
    /// raNRC run with a mass-conservation check after every event.
    Audit(CommonArgs),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("writing {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Build(_)) => 1,
            CliError::Config(_) => 2,
            CliError::Engine(EngineError::Config(ConfigError::Build(_))) => 1,
            CliError::Engine(EngineError::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let (Command::Run(common)
    | Command::SweepEps(common)
    | Command::SweepLoss(common)
    | Command::Compare(common)
    | Command::Oracle(common)
    | Command::Audit(common)) = command;
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    std::fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    let out = common.out.as_path();
    match command {
        Command::Run(_) => cmd_run(&cfg, out),
        Command::SweepEps(_) => cmd_sweep(&cfg, out, SweepParameter::Epsilon, &EPSILON_SWEEP),
        Command::SweepLoss(_) => cmd_sweep(&cfg, out, SweepParameter::LossP, &LOSS_SWEEP),
        Command::Compare(_) => cmd_compare(&cfg, out),
        Command::Oracle(_) => cmd_oracle(&cfg, out).map(|_| ()),
        Command::Audit(_) => cmd_audit(&cfg, out),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.to_owned(), reason: e.to_string() }
}

/// Writes `contents` to a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents).map_err(|e| io_err(path, e))
}

fn solve_oracle(cfg: &ExperimentConfig, network: &Network) -> Result<OracleResult, CliError> {
    let x0 = DVector::from_element(network.dimension(), cfg.run.x0);
    let opts = NewtonOptions { tol: cfg.run.oracle_tol, ..Default::default() };
    Ok(newton_minimize(&network.cost_refs(), &x0, &opts)?)
}

fn cmd_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<OracleResult, CliError> {
    let network = cfg.build_network()?;
    let res = solve_oracle(cfg, &network)?;
    write(&out.join("oracle.txt"), &res.to_record())?;
    print!("{}", res.to_record());
    Ok(res)
}

struct ManifestEntry {
    file: String,
    cfg: ExperimentConfig,
    record_final: f64,
    diverged_at: Option<u64>,
}

fn manifest_text(entries: &[ManifestEntry]) -> String {
    let mut s = String::from("file,config_hash,algorithm,epsilon,alpha,loss,loss_p,scheduler,seed,events,final_mean_err,diverged_at\n");
    for e in entries {
        let c = &e.cfg;
        let _ = writeln!(
            s,
            "{},{},{:?},{:e},{:e},{:?},{:e},{:?},{},{},{:.16e},{}",
            e.file,
            c.hash(),
            c.algorithm.kind,
            c.algorithm.epsilon,
            c.algorithm.alpha,
            c.loss.kind,
            c.loss.p,
            c.scheduler.kind,
            c.run.seed,
            c.run.events,
            e.record_final,
            e.diverged_at.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    s
}

/// Writes the trajectory and the config it came from; returns the CSV name.
fn emit_run(out: &Path, cfg: &ExperimentConfig, record: &TrajectoryRecord) -> Result<ManifestEntry, CliError> {
    let hash = cfg.hash();
    let file = format!("trajectory_{hash}.csv");
    write(&out.join(&file), &record.to_csv())?;
    write(&out.join(format!("config_{hash}.toml")), &cfg.to_toml())?;
    Ok(ManifestEntry {
        file,
        cfg: cfg.clone(),
        record_final: record.final_mean_error(),
        diverged_at: record.diverged_at,
    })
}

fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let network = cfg.build_network()?;
    let oracle = solve_oracle(cfg, &network)?;
    write(&out.join("oracle.txt"), &oracle.to_record())?;
    let record = engine::run_on(cfg, &network, &oracle.x_star)?;
    let entry = emit_run(out, cfg, &record)?;
    println!("{} final_mean_err={:e}", entry.file, entry.record_final);
    write(&out.join("manifest.csv"), &manifest_text(&[entry]))
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, parameter: SweepParameter, defaults: &[f64]) -> Result<(), CliError> {
    let values = if cfg.sweep.values.is_empty() { defaults.to_vec() } else { cfg.sweep.values.clone() };
    let network = cfg.build_network()?;
    let oracle = solve_oracle(cfg, &network)?;
    write(&out.join("oracle.txt"), &oracle.to_record())?;
    let records = engine::sweep(cfg, &network, parameter, &values, &oracle.x_star)?;
    let mut entries = Vec::new();
    for (v, rec) in values.iter().zip(&records) {
        let run_cfg = engine::with_parameter(cfg, parameter, *v);
        let entry = emit_run(out, &run_cfg, rec)?;
        println!("{:?}={v:e} {} final_mean_err={:e}", parameter, entry.file, entry.record_final);
        entries.push(entry);
    }
    write(&out.join("manifest.csv"), &manifest_text(&entries))
}

/// Index of the smallest final mean error; non-finite errors rank last.
pub fn best_run(records: &[TrajectoryRecord]) -> Option<usize> {
    let key = |r: &TrajectoryRecord| {
        let e = r.final_mean_error();
        if e.is_finite() { e } else { f64::INFINITY }
    };
    (0..records.len()).min_by(|&a, &b| key(&records[a]).total_cmp(&key(&records[b])))
}

pub struct CompareOutcome {
    pub best_epsilon: f64,
    pub best_alpha: f64,
    pub ranrc: TrajectoryRecord,
    pub subgradient: TrajectoryRecord,
    pub epsilon_records: Vec<TrajectoryRecord>,
    pub alpha_records: Vec<TrajectoryRecord>,
}

/// Grids epsilon (raNRC) and alpha (subgradient) at the config's loss and
/// budget and keeps each algorithm's lowest final mean error.
pub fn compare(
    cfg: &ExperimentConfig,
    network: &Network,
    optimum: &DVector<f64>,
) -> Result<CompareOutcome, EngineError> {
    let eps_grid = &cfg.compare.epsilon_grid;
    let alpha_grid = &cfg.compare.alpha_grid;
    let epsilon_records = engine::sweep(cfg, network, SweepParameter::Epsilon, eps_grid, optimum)?;
    let alpha_records = engine::sweep(cfg, network, SweepParameter::Alpha, alpha_grid, optimum)?;
    let ie = best_run(&epsilon_records).ok_or(EngineError::EmptySweep)?;
    let ia = best_run(&alpha_records).ok_or(EngineError::EmptySweep)?;
    Ok(CompareOutcome {
        best_epsilon: eps_grid[ie],
        best_alpha: alpha_grid[ia],
        ranrc: epsilon_records[ie].clone(),
        subgradient: alpha_records[ia].clone(),
        epsilon_records,
        alpha_records,
    })
}

fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let network = cfg.build_network()?;
    let oracle = solve_oracle(cfg, &network)?;
    write(&out.join("oracle.txt"), &oracle.to_record())?;
    let outcome = compare(cfg, &network, &oracle.x_star)?;
    let ranrc_cfg = engine::with_parameter(cfg, SweepParameter::Epsilon, outcome.best_epsilon);
    let sg_cfg = engine::with_parameter(cfg, SweepParameter::Alpha, outcome.best_alpha);
    let mut entries = vec![emit_run(out, &ranrc_cfg, &outcome.ranrc)?, emit_run(out, &sg_cfg, &outcome.subgradient)?];
    let grid_rows = cfg
        .compare
        .epsilon_grid
        .iter()
        .zip(&outcome.epsilon_records)
        .map(|(v, r)| (engine::with_parameter(cfg, SweepParameter::Epsilon, *v), r))
        .chain(
            cfg.compare
                .alpha_grid
                .iter()
                .zip(&outcome.alpha_records)
                .map(|(v, r)| (engine::with_parameter(cfg, SweepParameter::Alpha, *v), r)),
        );
    for (c, r) in grid_rows {
        if c == ranrc_cfg || c == sg_cfg {
            continue;
        }
        entries.push(ManifestEntry {
            file: String::new(),
            cfg: c,
            record_final: r.final_mean_error(),
            diverged_at: r.diverged_at,
        });
    }
    write(&out.join("manifest.csv"), &manifest_text(&entries))?;
    let summary = format!(
        "ranrc epsilon={:e} final_mean_err={:e} ({}); subgradient alpha={:e} final_mean_err={:e} ({})\n",
        outcome.best_epsilon,
        outcome.ranrc.final_mean_error(),
        entries[0].file,
        outcome.best_alpha,
        outcome.subgradient.final_mean_error(),
        entries[1].file,
    );
    write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_audit(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.algorithm.kind != AlgorithmKind::Ranrc {
        return Err(ConfigError::Invalid {
            key: "algorithm.kind".into(),
            reason: "audit needs the ranrc algorithm".into(),
        }
        .into());
    }
    let network = cfg.build_network()?;
    let spec = cfg.run_spec();
    let x0 = [DVector::from_element(network.dimension(), cfg.run.x0)];
    let mut sim = Simulator::new(&network, RanrcProtocol(cfg.ranrc_params()?), &x0, &spec)?;
    let mut csv = String::from("t,y_residual,z_residual\n");
    let (mut worst_y, mut worst_z) = mass_audit(sim.states(), &network.graph);
    let _ = writeln!(csv, "0,{worst_y:.16e},{worst_z:.16e}");
    for _ in 0..spec.events {
        sim.step()?;
        let (ry, rz) = mass_audit(sim.states(), &network.graph);
        worst_y = worst_y.max(ry);
        worst_z = worst_z.max(rz);
        let _ = writeln!(csv, "{},{ry:.16e},{rz:.16e}", sim.events_done());
    }
    write(&out.join(format!("audit_{}.csv", cfg.hash())), &csv)?;
    println!("max_y_residual={worst_y:e} max_z_residual={worst_z:e}");
    if worst_y <= 1e-9 && worst_z <= 1e-9 {
        Ok(())
    } else {
        Err(CliError::Failed("mass conservation residual above 1e-9".into()))
    }
}
